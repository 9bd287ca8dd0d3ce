use std::collections::BTreeMap;

use proptest::prelude::*;
use zsar_core::classifier::{
    batch_classify, build_joint_space, classify, classify_vector, classify_with, confusion_matrix, validate_disjoint,
    Aggregation, ClassifyOptions, JointSpace, SpaceEntry, VideoRepresentation,
};
use zsar_core::embedder::{BagOfWordsProvider, EmbeddingVector, TableProvider};
use zsar_core::evaluation::truze_classes;
use zsar_core::observers::{fuse, FusedDescription};
use zsar_core::text::{build_label_prototype, Origin, PrototypeSet, Sentence};

fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Exhaustive scan over every prototype; the first strictly larger
/// similarity wins, scanning classes in label order.
fn oracle(query: &[f64], protos: &[(String, Vec<f64>)]) -> (String, f64) {
    let mut sorted: Vec<&(String, Vec<f64>)> = protos.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let mut best: Option<(String, f64)> = None;
    for (c, v) in sorted {
        let s = oracle_cosine(query, v);
        if best.as_ref().is_none_or(|(_, b)| s > *b) {
            best = Some((c.clone(), s));
        }
    }
    best.unwrap()
}

fn space(protos: &[(String, Vec<f64>)]) -> JointSpace {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let entries = protos
        .iter()
        .enumerate()
        .map(|(i, (c, v))| {
            let k = counts.entry(c).or_default();
            *k += 1;
            SpaceEntry {
                class_label: c.clone(),
                prototype_index: *k - 1,
                text: format!("p{i}"),
                vector: EmbeddingVector::new(v.clone(), "t").unwrap(),
            }
        })
        .collect();
    JointSpace::new(entries).unwrap()
}

fn nonzero(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, dim).prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<(String, Vec<f64>)>)> {
    (2usize..6).prop_flat_map(|dim| {
        (
            nonzero(dim),
            prop::collection::vec((0usize..5, nonzero(dim)), 1..16).prop_map(|ps| {
                ps.into_iter()
                    .map(|(c, v)| (format!("class{c}"), v))
                    .collect::<Vec<_>>()
            }),
        )
    })
}

proptest! {
    #[test]
    fn matches_exhaustive_scan((query, protos) in instance()) {
        let r = classify_vector("v", &EmbeddingVector::new(query.clone(), "t").unwrap(), &space(&protos), Aggregation::Max).unwrap();
        let (label, sim) = oracle(&query, &protos);
        prop_assert_eq!(&r.predicted, &label);
        prop_assert!((r.best_similarity - sim).abs() < 1e-12);
        let best = r.per_class_best.values().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(r.per_class_best[&r.predicted], best);
    }

    #[test]
    fn positive_scaling_keeps_labels((query, protos) in instance(), k in 1e-3f64..1e3) {
        let s = space(&protos);
        let scaled: Vec<(String, Vec<f64>)> = protos.iter().map(|(c, v)| (c.clone(), v.iter().map(|x| x * k).collect())).collect();
        let q = EmbeddingVector::new(query, "t").unwrap();
        let a = classify_vector("v", &q, &s, Aggregation::Max).unwrap();
        let b = classify_vector("v", &q.scaled(k).unwrap(), &space(&scaled), Aggregation::Max).unwrap();
        prop_assert_eq!(a.predicted, b.predicted);
    }

    #[test]
    fn removing_a_non_nearest_prototype((query, protos) in instance(), pick in 0usize..16) {
        let s = space(&protos);
        let q = EmbeddingVector::new(query, "t").unwrap();
        let before = classify_vector("v", &q, &s, Aggregation::Max).unwrap();
        let entry = &s.entries()[pick % s.len()];
        prop_assume!(!(entry.class_label == before.predicted && entry.prototype_index == before.nearest_prototype_index));
        prop_assume!(s.entries().iter().filter(|e| e.class_label == entry.class_label).count() > 1);
        let after = classify_vector("v", &q, &s.without(&entry.class_label, entry.prototype_index).unwrap(), Aggregation::Max).unwrap();
        for (c, v) in &before.per_class_best {
            if *c == entry.class_label {
                prop_assert!(after.per_class_best[c] <= *v);
            } else {
                prop_assert_eq!(after.per_class_best[c], *v);
            }
        }
    }

    #[test]
    fn disjointness_is_symmetric(a in prop::collection::vec("[a-c]{1,2}", 0..5), b in prop::collection::vec("[a-c]{1,2}", 0..5)) {
        prop_assert_eq!(validate_disjoint(&a, &b), validate_disjoint(&b, &a));
    }
}

#[test]
fn tie_goes_to_smallest_label() {
    let protos = vec![
        ("zeta".to_string(), vec![1.0, 0.0]),
        ("alpha".to_string(), vec![2.0, 0.0]),
    ];
    let r = classify_vector(
        "v",
        &EmbeddingVector::new(vec![1.0, 1.0], "t").unwrap(),
        &space(&protos),
        Aggregation::Max,
    )
    .unwrap();
    assert_eq!(r.predicted, "alpha");
}

#[test]
fn mean_aggregation_differs_from_max() {
    let protos = vec![
        ("a".to_string(), vec![1.0, 0.0]),
        ("a".to_string(), vec![-1.0, 0.0]),
        ("b".to_string(), vec![1.0, 1.0]),
    ];
    let q = EmbeddingVector::new(vec![1.0, 0.0], "t").unwrap();
    let s = space(&protos);
    assert_eq!(classify_vector("v", &q, &s, Aggregation::Max).unwrap().predicted, "a");
    assert_eq!(classify_vector("v", &q, &s, Aggregation::Mean).unwrap().predicted, "b");
}

fn fused(id: &str, texts: &[&str]) -> FusedDescription {
    fuse(
        id,
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| (format!("OB{}", i + 1), Sentence::new(t, Origin::Observer)))
            .collect(),
    )
    .unwrap()
}

#[test]
fn identical_text_gives_similarity_one() {
    let bow = BagOfWordsProvider::default();
    let sets = vec![
        build_label_prototype("Riding").unwrap(),
        build_label_prototype("CakeCutting").unwrap(),
    ];
    let s = build_joint_space(&sets, &bow).unwrap();
    let r = classify(&fused("v", &["cake cutting"]), &s, &bow).unwrap();
    assert_eq!(r.predicted, "CakeCutting");
    assert!((r.best_similarity - 1.0).abs() < 1e-12);
}

#[test]
fn single_class_space_always_wins() {
    let bow = BagOfWordsProvider::default();
    let s = build_joint_space(&[build_label_prototype("Archery").unwrap()], &bow).unwrap();
    let r = classify(&fused("v", &["a dog jumps over a fence"]), &s, &bow).unwrap();
    assert_eq!(r.predicted, "Archery");
}

#[test]
fn provider_mismatch_and_zero_vectors_are_errors() {
    let bow = BagOfWordsProvider::default();
    let s = build_joint_space(&[build_label_prototype("Archery").unwrap()], &bow).unwrap();
    let other = BagOfWordsProvider::new(8);
    assert!(classify(&fused("v", &["arrow"]), &s, &other).is_err());

    let mut table = TableProvider::new("t", 2);
    table.insert("archery", vec![1.0, 0.0]).unwrap();
    table.insert("nothing", vec![0.0, 0.0]).unwrap();
    let s = build_joint_space(&[build_label_prototype("Archery").unwrap()], &table).unwrap();
    assert!(classify(&fused("v", &["nothing"]), &s, &table).is_err());
}

#[test]
fn observer_mean_averages_unit_vectors() {
    let mut table = TableProvider::new("t", 2);
    table.insert("left", vec![10.0, 0.0]).unwrap();
    table.insert("up", vec![0.0, 1.0]).unwrap();
    table.insert("left up", vec![10.0, 1.0]).unwrap();
    let s = space(&[("diag".into(), vec![1.0, 1.0]), ("x".into(), vec![1.0, 0.05])]);
    let s = JointSpace::new(
        s.entries()
            .iter()
            .map(|e| SpaceEntry {
                vector: EmbeddingVector::new(e.vector.values().to_vec(), "t").unwrap(),
                ..e.clone()
            })
            .collect(),
    )
    .unwrap();
    let f = fused("v", &["left", "up"]);
    assert_eq!(classify(&f, &s, &table).unwrap().predicted, "x");
    let opts = ClassifyOptions {
        representation: VideoRepresentation::ObserverMean,
        ..Default::default()
    };
    let r = classify_with(&f, &s, &table, opts).unwrap();
    assert_eq!(r.predicted, "diag");
    assert!((r.best_similarity - 1.0).abs() < 1e-12);
}

#[test]
fn parallel_batch_equals_sequential() {
    let bow = BagOfWordsProvider::default();
    let labels = [
        "HorseRiding",
        "CakeCutting",
        "WallClimbing",
        "BallKicking",
        "GuitarPlaying",
    ];
    let sets: Vec<PrototypeSet> = labels.iter().map(|l| build_label_prototype(l).unwrap()).collect();
    let s = build_joint_space(&sets, &bow).unwrap();
    let words = [
        "horse", "riding", "cake", "cutting", "wall", "climbing", "ball", "kicking", "guitar", "playing", "a", "man",
    ];
    let videos: Vec<FusedDescription> = (0..200)
        .map(|i| {
            let a = words[i % words.len()];
            let b = words[(i * 7 + 3) % words.len()];
            let c = words[(i * 5 + 1) % words.len()];
            fused(&format!("v{i:03}"), &[&format!("{a} {b}"), &format!("{c} {a}")])
        })
        .collect();
    let par = batch_classify(&videos, &s, &bow, ClassifyOptions::default()).unwrap();
    let seq: Vec<_> = videos.iter().map(|v| classify(v, &s, &bow).unwrap()).collect();
    assert_eq!(par, seq);
    assert!(batch_classify(&[], &s, &bow, ClassifyOptions::default())
        .unwrap()
        .is_empty());
}

#[test]
fn truze_lists_pass_against_empty_seen_set() {
    for dataset in ["ucf101", "hmdb51"] {
        let unseen = truze_classes(dataset).unwrap();
        let seen: Vec<String> = Vec::new();
        assert!(validate_disjoint(&seen, &unseen).passed());
    }
    let r = validate_disjoint(&["Horse_Riding"], &["horse riding", "Archery"]);
    assert_eq!(r.overlap.len(), 1);
}

#[test]
fn confusion_rows_sum_to_class_counts() {
    let bow = BagOfWordsProvider::default();
    let sets = vec![
        build_label_prototype("Archery").unwrap(),
        build_label_prototype("Bowling").unwrap(),
    ];
    let s = build_joint_space(&sets, &bow).unwrap();
    let videos = vec![
        fused("a1", &["archery"]),
        fused("a2", &["bowling"]),
        fused("a3", &["archery range"]),
        fused("b1", &["bowling alley"]),
    ];
    let results = batch_classify(&videos, &s, &bow, ClassifyOptions::default()).unwrap();
    let truth: BTreeMap<String, String> = [
        ("a1", "Archery"),
        ("a2", "Archery"),
        ("a3", "Archery"),
        ("b1", "Bowling"),
    ]
    .into_iter()
    .map(|(a, b)| (a.to_string(), b.to_string()))
    .collect();
    let m = confusion_matrix(&results, &truth).unwrap();
    assert_eq!((m.row_sum(0), m.row_sum(1)), (3, 1));
    assert_eq!(m.count("Archery", "Bowling"), 1);
    assert_eq!(m.per_class_accuracy()["Archery"], Some(2.0 / 3.0));
    let swapped = m.reorder(&["Bowling", "Archery"]).unwrap();
    assert_eq!(swapped.count("Archery", "Bowling"), 1);
    let mut partial = truth.clone();
    partial.remove("b1");
    assert!(confusion_matrix(&results, &partial).is_err());
}
