use std::path::Path;

use proptest::prelude::*;
use zsar_core::captioner::*;
use zsar_core::observers::*;
use zsar_core::text::{Origin, Sentence};

const WORDS: &[&str] = &["a", "man", "runs", "on", "grass", "the", "dog", "jumps"];

fn caption(obs: usize, video: usize) -> String {
    let n = 2 + (obs + video) % 4;
    (0..n)
        .map(|k| WORDS[(obs * 3 + video + k) % WORDS.len()])
        .collect::<Vec<_>>()
        .join(" ")
        + "."
}

fn write_fixture(dir: &Path, observers: usize, videos: usize) -> Vec<String> {
    let ids: Vec<String> = (0..videos).map(|v| format!("vid{v:03}")).collect();
    for o in 1..=observers {
        let records: Vec<CaptionRecord> = ids
            .iter()
            .enumerate()
            .map(|(v, id)| CaptionRecord {
                video_id: id.clone(),
                observer_id: format!("OB{o}"),
                sentence: caption(o, v),
            })
            .collect();
        write_caption_records(&dir.join(format!("OB{o}.jsonl")), &records).unwrap();
    }
    ids
}

#[test]
fn file_backed_passthrough_and_missing_video() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("OB1.jsonl");
    write_caption_records(
        &path,
        &[CaptionRecord {
            video_id: "v1".into(),
            observer_id: "OB1".into(),
            sentence: "a man fences".into(),
        }],
    )
    .unwrap();
    let obs = Observer::new(ObserverSpec::file_backed("OB1", &path), AccessLog::default());
    assert_eq!(obs.describe("v1").unwrap().text(), "a man fences");
    let err = obs.describe("v2").unwrap_err().to_string();
    assert!(err.contains("v2") && err.contains("OB1"), "{err}");
}

#[test]
fn empty_caption_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("OB1.jsonl");
    write_caption_records(
        &path,
        &[CaptionRecord {
            video_id: "v1".into(),
            observer_id: "OB1".into(),
            sentence: "  ".into(),
        }],
    )
    .unwrap();
    let obs = Observer::new(ObserverSpec::file_backed("OB1", &path), AccessLog::default());
    assert!(obs.describe("v1").is_err());
}

#[test]
fn hundred_videos_five_observers() {
    let dir = tempfile::tempdir().unwrap();
    let ids = write_fixture(dir.path(), 5, 100);
    let set = ObserverSet::from_caption_dir(dir.path()).unwrap();
    assert_eq!(set.ids(), vec!["OB1", "OB2", "OB3", "OB4", "OB5"]);
    for id in set.ids() {
        let obs = set.get(&id).unwrap();
        for v in &ids {
            assert!(!obs.describe(v).unwrap().is_empty());
        }
    }
    let all = set.observer_subset(&ids, &set.ids()).unwrap();
    assert_eq!(all.len(), 100);
    for f in &all {
        assert_eq!(f.parts.len(), 5);
        let sum: usize = f.parts.iter().map(|(_, s)| s.word_count()).sum();
        assert_eq!(f.sentence.word_count(), sum);
    }
}

#[test]
fn subsets_are_canonical_and_isolated() {
    let dir = tempfile::tempdir().unwrap();
    let ids = write_fixture(dir.path(), 5, 10);
    let set = ObserverSet::from_caption_dir(dir.path()).unwrap();
    let a = set.observer_subset(&ids, &["OB1", "OB3"]).unwrap();
    let b = set.observer_subset(&ids, &["OB3", "OB1"]).unwrap();
    assert_eq!(a, b);
    let mut log = set.access_log().entries();
    log.sort();
    assert_eq!(log, vec!["OB1", "OB3"]);

    let single = set.observer_subset(&ids, &["OB1"]).unwrap();
    for (f, v) in single.iter().zip(&ids) {
        assert_eq!(f.sentence.text(), set.get("OB1").unwrap().describe(v).unwrap().text());
    }
    assert!(set.observer_subset(&ids, &["OB9"]).is_err());
    assert!(set.observer_subset::<&str>(&ids, &[]).is_err());
}

#[test]
fn duplicate_observer_ids_rejected() {
    let specs = vec![
        ObserverSpec::file_backed("OB1", "a"),
        ObserverSpec::file_backed("OB1", "b"),
    ];
    assert!(ObserverSet::new(specs).is_err());
}

#[test]
fn fused_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ids = write_fixture(dir.path(), 3, 4);
    let set = ObserverSet::from_caption_dir(dir.path()).unwrap();
    let fused = set.observer_subset(&ids, &set.ids()).unwrap();
    let out = dir.path().join("fused.out");
    write_fused(&out, &fused).unwrap();
    assert_eq!(read_fused(&out).unwrap(), fused);
}

#[test]
fn toy_observer_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synthetic_caption_corpus(2, 8, None, 3, 1).unwrap();
    let config = CaptionerConfig {
        d_model: 16,
        heads: 2,
        d_ff: 32,
        d_visual: 8,
        ..CaptionerConfig::default()
    };
    let model = Captioner::new(config, build_caption_vocabulary(&corpus)).unwrap();
    let trained = train_captioner(model, &corpus, &TrainSchedule::default())
        .unwrap()
        .model;
    let model_path = dir.path().join("ob.json");
    trained.save(&model_path).unwrap();
    for (video, _) in &corpus {
        video
            .visual
            .save(&feature_path(dir.path(), video.video_id(), Modality::Visual))
            .unwrap();
    }
    let spec = ObserverSpec {
        observer_id: "OB1".into(),
        kind: ObserverKind::ToyTransformer,
        source: model_path.clone(),
        features: Some(dir.path().to_path_buf()),
        asm_modality: Modality::Audio,
        max_len: 12,
    };
    let a = Observer::new(spec.clone(), AccessLog::default());
    let b = Observer::new(spec.clone(), AccessLog::default());
    for (video, cap) in &corpus {
        let s = a.describe(video.video_id()).unwrap();
        assert_eq!(s, b.describe(video.video_id()).unwrap());
        assert_eq!(s.text(), cap.text());
        assert_eq!(s.origin(), Origin::Observer);
    }
    let wrong = Observer::new(
        ObserverSpec {
            kind: ObserverKind::ToyBmt,
            ..spec
        },
        AccessLog::default(),
    );
    assert!(wrong.describe(corpus[0].0.video_id()).is_err());
}

fn part_strategy() -> impl Strategy<Value = Vec<(String, String)>> {
    prop::collection::vec(("OB[1-9]", "[a-z]{1,5}( [a-z]{1,5}){0,4}\\.?"), 1..6)
}

proptest! {
    #[test]
    fn fusion_is_associative_under_canonical_order(parts in part_strategy(), cut in 0usize..6) {
        let mut parts = parts;
        parts.sort_by(|a, b| canonical_order(&a.0, &b.0));
        parts.dedup_by(|a, b| a.0 == b.0);
        let cut = cut.min(parts.len());
        let to_sentences = |p: &[(String, String)]| -> Vec<(String, Sentence)> {
            p.iter().map(|(o, t)| (o.clone(), Sentence::new(t, Origin::Observer))).collect()
        };
        let whole = fuse("v", to_sentences(&parts)).unwrap();
        let (left, right) = parts.split_at(cut);
        let mut joined = Vec::new();
        if !left.is_empty() {
            joined.push(fuse("v", to_sentences(left)).unwrap().sentence.text().to_string());
        }
        if !right.is_empty() {
            joined.push(fuse("v", to_sentences(right)).unwrap().sentence.text().to_string());
        }
        prop_assert_eq!(whole.sentence.text(), joined.join(" "));
    }
}
