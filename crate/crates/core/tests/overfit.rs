use zsar_core::captioner::*;

fn config(arch: Architecture) -> CaptionerConfig {
    CaptionerConfig {
        arch,
        d_model: 32,
        heads: 4,
        d_ff: 64,
        d_visual: 16,
        d_asm: 8,
        seed: 1,
        ..CaptionerConfig::default()
    }
}

fn train(arch: Architecture, pairs: usize) -> (TrainedCaptioner, Vec<(VideoFeatures, zsar_core::text::Sentence)>) {
    let asm = (arch == Architecture::Bmt).then_some(8);
    let corpus = synthetic_caption_corpus(pairs, 16, asm, 4, 5).unwrap();
    let model = Captioner::new(config(arch), build_caption_vocabulary(&corpus)).unwrap();
    (
        train_captioner(model, &corpus, &TrainSchedule::default()).unwrap(),
        corpus,
    )
}

#[test]
fn single_pair_is_reproduced_exactly() {
    for arch in [Architecture::Transformer, Architecture::Bmt] {
        let (out, corpus) = train(arch, 1);
        assert!(out.history.epochs.len() <= 300);
        let caption = out.model.generate(&corpus[0].0, 20).unwrap();
        assert_eq!(caption.text(), corpus[0].1.text(), "{arch:?}");
    }
}

#[test]
fn twenty_pairs_reach_high_bleu() {
    for arch in [Architecture::Transformer, Architecture::Bmt] {
        let (out, _) = train(arch, 20);
        let h = &out.history;
        let best = &h.epochs[h.best_epoch - 1];
        assert!(best.bleu4 >= 0.9 && best.epoch < 300, "{arch:?}: {best:?}");
        assert!(h.epochs.iter().all(|e| e.loss.is_finite()));
    }
}

#[test]
fn training_is_deterministic() {
    let (a, corpus) = train(Architecture::Transformer, 3);
    let (b, _) = train(Architecture::Transformer, 3);
    assert_eq!(a.history, b.history);
    assert_eq!(a.model.params(), b.model.params());
    assert_eq!(
        a.model.generate(&corpus[1].0, 10).unwrap(),
        b.model.generate(&corpus[1].0, 10).unwrap()
    );
}

#[test]
fn early_stopping_and_external_monitor() {
    let corpus = synthetic_caption_corpus(2, 16, None, 4, 5).unwrap();
    let model = Captioner::new(config(Architecture::Transformer), build_caption_vocabulary(&corpus)).unwrap();
    // external score improves for three epochs, then plateaus
    let scores: Vec<f64> = (0..40).map(|e| (e.min(2) as f64) / 10.0).collect();
    let schedule = TrainSchedule {
        max_epochs: 40,
        min_epochs: 0,
        monitor: Monitor::External(scores),
        ..TrainSchedule::default()
    };
    let out = train_captioner(model.clone(), &corpus, &schedule).unwrap();
    assert_eq!(out.history.best_epoch, 3);
    assert_eq!(out.history.epochs.len(), 3 + 10);
    assert!(out.history.stopped_early);
    assert_eq!(out.history.epochs[0].external, Some(0.0));

    let short = TrainSchedule {
        max_epochs: 5,
        monitor: Monitor::External(vec![0.1; 2]),
        ..TrainSchedule::default()
    };
    assert!(train_captioner(model, &corpus, &short).is_err());
}

#[test]
fn default_schedule() {
    let s = TrainSchedule::default();
    assert_eq!(s.patience, 10);
    assert_eq!(s.dropout, 0.1);
    assert_eq!(s.smoothing, 0.1);
    assert_eq!(s.clip_norm, 1.0);
    assert_eq!(s.monitor, Monitor::Bleu4);
}
