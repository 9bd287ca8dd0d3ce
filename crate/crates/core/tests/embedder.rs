use proptest::prelude::*;
use zsar_core::embedder::{
    cosine_similarity, embed, train_classification_objective, train_regression_objective, train_triplet_objective,
    EmbedderConfig, EmbeddingProvider, EmbeddingVector, Objective, TableProvider, ToyEncoder, TrainingExample,
};
use zsar_core::tensor::Matrix;
use zsar_core::text::{Origin, Sentence};
use zsar_core::vocab::Vocabulary;

fn s(t: &str) -> Sentence {
    Sentence::new(t, Origin::Document)
}

fn encoder(objective: Objective, words: &str, n_s: usize, seed: u64) -> ToyEncoder {
    let config = EmbedderConfig {
        n_s,
        objective,
        k_labels: 3,
        seed,
        ..EmbedderConfig::default()
    };
    ToyEncoder::new("toy", Vocabulary::build([words]), config).unwrap()
}

fn relative_gradient_error(model: &ToyEncoder, batch: &[TrainingExample]) -> f64 {
    let (_, grads) = model.loss_and_gradients(batch).unwrap();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for idx in 0..model.params().len() {
        let p = model.params().get(idx);
        let analytic = grads
            .get(&idx)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(p.rows(), p.cols()));
        let numeric: Vec<f64> = (0..p.data().len())
            .map(|k| {
                let mut plus = model.clone();
                plus.params_mut().get_mut(idx).data_mut()[k] += h;
                let mut minus = model.clone();
                minus.params_mut().get_mut(idx).data_mut()[k] -= h;
                (plus.loss(batch).unwrap() - minus.loss(batch).unwrap()) / (2.0 * h)
            })
            .collect();
        let diff = analytic
            .data()
            .iter()
            .zip(&numeric)
            .map(|(a, n)| (a - n).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale = analytic.squared_norm().sqrt() + numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
        if scale > 1e-8 {
            worst = worst.max(diff / scale);
        }
    }
    worst
}

fn classification_batch() -> Vec<TrainingExample> {
    vec![
        TrainingExample::Classification {
            a: s("red fox"),
            b: s("blue fox jumps"),
            label: 0,
        },
        TrainingExample::Classification {
            a: s("dog"),
            b: s("red dog runs"),
            label: 2,
        },
        TrainingExample::Classification {
            a: s("blue runs"),
            b: s("jumps"),
            label: 1,
        },
    ]
}

fn regression_batch() -> Vec<TrainingExample> {
    vec![
        TrainingExample::Regression {
            a: s("red fox"),
            b: s("blue fox jumps"),
            target: 0.8,
        },
        TrainingExample::Regression {
            a: s("dog"),
            b: s("red dog runs"),
            target: -0.3,
        },
        TrainingExample::Regression {
            a: s("blue runs"),
            b: s("jumps"),
            target: 0.1,
        },
    ]
}

fn triplet_batch() -> Vec<TrainingExample> {
    vec![
        TrainingExample::Triplet {
            anchor: s("red fox"),
            positive: s("red fox jumps"),
            negative: s("blue dog"),
        },
        TrainingExample::Triplet {
            anchor: s("dog runs"),
            positive: s("dog"),
            negative: s("fox jumps"),
        },
    ]
}

const WORDS: &str = "red blue fox dog jumps runs";

#[test]
fn classification_gradients() {
    let e = relative_gradient_error(
        &encoder(Objective::Classification, WORDS, 4, 3),
        &classification_batch(),
    );
    assert!(e < 1e-4, "relative error {e}");
}

#[test]
fn regression_gradients() {
    let e = relative_gradient_error(&encoder(Objective::Regression, WORDS, 4, 3), &regression_batch());
    assert!(e < 1e-4, "relative error {e}");
}

#[test]
fn triplet_gradients() {
    let model = encoder(Objective::Triplet, WORDS, 4, 3);
    let batch = triplet_batch();
    assert!(
        model.loss(&batch).unwrap() > 0.0,
        "hinge must be active for a meaningful check"
    );
    let e = relative_gradient_error(&model, &batch);
    assert!(e < 1e-4, "relative error {e}");
}

#[test]
fn five_parameter_encoder_gradients() {
    // one word plus four reserved rows, one dimension; cosine is flat in 1-d so only the triplet loss is checked
    let model = encoder(Objective::Triplet, "w", 1, 1);
    assert_eq!(model.params().get(0).data().len(), 5);
    let batch = vec![TrainingExample::Triplet {
        anchor: s("w"),
        positive: s("w zz"),
        negative: s("zz"),
    }];
    let e = relative_gradient_error(&model, &batch);
    assert!(e < 1e-4, "relative error {e}");
}

#[test]
fn regression_loss_matches_residual_oracle() {
    let model = encoder(Objective::Regression, WORDS, 4, 9);
    let batch = regression_batch();
    let mut sum = 0.0;
    for ex in &batch {
        let TrainingExample::Regression { a, b, target } = ex else {
            unreachable!()
        };
        let c = cosine_similarity(&embed(a, &model).unwrap(), &embed(b, &model).unwrap()).unwrap();
        sum += (c - target).powi(2);
    }
    assert!((model.loss(&batch).unwrap() - sum / batch.len() as f64).abs() < 1e-12);
}

#[test]
fn perfect_regression_targets_give_zero_gradient() {
    let model = encoder(Objective::Regression, WORDS, 4, 9);
    let (a, b) = (s("red fox"), s("dog runs"));
    let target = cosine_similarity(&embed(&a, &model).unwrap(), &embed(&b, &model).unwrap()).unwrap();
    let batch = vec![TrainingExample::Regression { a, b, target }];
    let (loss, grads) = model.loss_and_gradients(&batch).unwrap();
    assert!(loss.abs() < 1e-20);
    assert!(grads.values().all(|g| g.data().iter().all(|x| x.abs() < 1e-9)));
}

#[test]
fn triplet_hinge_values() {
    let model = encoder(Objective::Triplet, WORDS, 4, 2);
    let same = vec![TrainingExample::Triplet {
        anchor: s("red"),
        positive: s("fox"),
        negative: s("fox"),
    }];
    assert!((model.loss(&same).unwrap() - 1.0).abs() < 1e-12);
    let degenerate = vec![TrainingExample::Triplet {
        anchor: s("red"),
        positive: s("red"),
        negative: s("red"),
    }];
    assert!((model.loss(&degenerate).unwrap() - 1.0).abs() < 1e-12);

    let vocab = Vocabulary::build(["near far"]);
    let mut table = Matrix::zeros(vocab.len(), 2);
    table.row_mut(vocab.id("near").unwrap()).copy_from_slice(&[0.0, 0.0]);
    table.row_mut(vocab.id("far").unwrap()).copy_from_slice(&[1.5, 0.0]);
    let mut params = zsar_core::tensor::ParamSet::new();
    params.push("token_embeddings", table);
    let config = EmbedderConfig {
        n_s: 2,
        objective: Objective::Triplet,
        ..EmbedderConfig::default()
    };
    let model = ToyEncoder::from_parts("t", config, vocab, params).unwrap();
    let far = vec![TrainingExample::Triplet {
        anchor: s("near"),
        positive: s("near"),
        negative: s("far"),
    }];
    assert_eq!(model.loss(&far).unwrap(), 0.0);
}

#[test]
fn identical_pairs_overfit_classification() {
    let words = [
        "apple", "river", "stone", "cloud", "green", "quick", "table", "light", "north", "sound",
    ];
    let pairs: Vec<(Sentence, Sentence, usize)> = (0..200)
        .map(|i| {
            let t = format!("{} {}", words[i % 10], words[(i / 10) % 10]);
            (s(&t), s(&t), 0)
        })
        .collect();
    let config = EmbedderConfig {
        n_s: 8,
        k_labels: 2,
        epochs: 30,
        ..EmbedderConfig::default()
    };
    let trained = train_classification_objective(&pairs, &config).unwrap();
    let last = *trained.history.last().unwrap();
    assert!(last < 0.1, "final loss {last}");
    assert!(last < trained.history[0]);
    let logits = trained.encoder.logits(&s("apple river"), &s("stone")).unwrap();
    assert_eq!(logits.len(), 2);
    let bad = vec![(s("a"), s("b"), 5)];
    assert!(train_classification_objective(&bad, &config).is_err());
}

fn cluster_sentence(cluster: usize, i: usize) -> String {
    let vocab = [
        ["lion", "tiger", "zebra", "hyena"],
        ["piano", "violin", "drums", "flute"],
        ["pasta", "bread", "curry", "salad"],
    ];
    let w = &vocab[cluster];
    format!("{} {} {}", w[i % 4], w[(i / 4) % 4], w[(i / 16 + 1) % 4])
}

#[test]
fn regression_overfits_synthetic_pairs() {
    let pairs: Vec<(Sentence, Sentence, f64)> = (0..100)
        .map(|i| {
            let (c1, c2) = (i % 3, (i / 3) % 3);
            let target = if c1 == c2 { 0.9 } else { -0.2 };
            (s(&cluster_sentence(c1, i)), s(&cluster_sentence(c2, i * 7 + 1)), target)
        })
        .collect();
    let config = EmbedderConfig {
        n_s: 8,
        epochs: 200,
        learning_rate: 1.0,
        ..EmbedderConfig::default()
    };
    let trained = train_regression_objective(&pairs, &config).unwrap();
    let last = *trained.history.last().unwrap();
    assert!(last < 0.05, "final MSE {last}");
    assert!(train_regression_objective(&[(s("a"), s("b"), 1.5)], &config).is_err());
}

#[test]
fn triplets_separate_held_out_clusters() {
    let triplet = |i: usize| {
        let c = i % 3;
        let other = (c + 1 + (i / 3) % 2) % 3;
        (
            s(&cluster_sentence(c, i)),
            s(&cluster_sentence(c, i * 5 + 3)),
            s(&cluster_sentence(other, i * 3 + 1)),
        )
    };
    let train: Vec<_> = (0..60).map(triplet).collect();
    let held_out: Vec<_> = (60..160).map(triplet).collect();
    let config = EmbedderConfig {
        n_s: 8,
        epochs: 60,
        ..EmbedderConfig::default()
    };
    let trained = train_triplet_objective(&train, &config).unwrap();
    let ok = held_out
        .iter()
        .filter(|(a, p, n)| {
            let e = &trained.encoder;
            e.embedding_distance(a.text(), p.text()).unwrap() < e.embedding_distance(a.text(), n.text()).unwrap()
        })
        .count();
    assert!(ok as f64 / held_out.len() as f64 >= 0.95, "{ok} of {}", held_out.len());
}

#[test]
fn training_is_deterministic() {
    let pairs: Vec<(Sentence, Sentence, f64)> = (0..20)
        .map(|i| {
            (
                s(&cluster_sentence(i % 3, i)),
                s(&cluster_sentence((i + 1) % 3, i)),
                0.0,
            )
        })
        .collect();
    let config = EmbedderConfig {
        n_s: 4,
        epochs: 5,
        ..EmbedderConfig::default()
    };
    let a = train_regression_objective(&pairs, &config).unwrap();
    let b = train_regression_objective(&pairs, &config).unwrap();
    assert_eq!(a.encoder, b.encoder);
    assert_eq!(a.history, b.history);
}

#[test]
fn cosine_examples() {
    let v = |x: Vec<f64>| EmbeddingVector::new(x, "t").unwrap();
    assert!((cosine_similarity(&v(vec![1.0, 0.0]), &v(vec![0.0, 1.0])).unwrap()).abs() < 1e-15);
    assert!(
        (cosine_similarity(&v(vec![1.0, 0.0]), &v(vec![1.0, 1.0])).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs()
            < 1e-8
    );
    assert!(cosine_similarity(&v(vec![0.0, 0.0]), &v(vec![1.0, 1.0])).is_err());
}

#[test]
fn table_round_trip_of_a_thousand_entries() {
    let records: Vec<(String, Vec<f64>)> = (0..1000)
        .map(|i| {
            (
                format!("sentence number {i}"),
                (0..5).map(|k| ((i * 7 + k) as f64).sin() / 3.0).collect(),
            )
        })
        .collect();
    let text = TableProvider::render("ext", 5, &records).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.tsv");
    std::fs::write(&path, &text).unwrap();
    let table = TableProvider::load(&path).unwrap();
    assert_eq!(table.len(), 1000);
    for (t, v) in &records {
        assert_eq!(table.embed_text(t).unwrap().values(), v.as_slice());
    }
    assert!(table.embed_text("absent").unwrap_err().to_string().contains("absent"));
    std::fs::write(&path, "#dim=2 id=x\na\t1\t2\nb\t1\n").unwrap();
    assert!(TableProvider::load(&path).is_err());
}

proptest! {
    #[test]
    fn cosine_is_scale_invariant_and_symmetric(
        a in prop::collection::vec(-10.0f64..10.0, 4),
        b in prop::collection::vec(-10.0f64..10.0, 4),
        alpha in 1e-3f64..1e3,
        beta in 1e-3f64..1e3,
    ) {
        prop_assume!(a.iter().any(|x| x.abs() > 1e-3) && b.iter().any(|x| x.abs() > 1e-3));
        let va = EmbeddingVector::new(a.clone(), "t").unwrap();
        let vb = EmbeddingVector::new(b.clone(), "t").unwrap();
        let c = cosine_similarity(&va, &vb).unwrap();
        prop_assert!((c - cosine_similarity(&vb, &va).unwrap()).abs() < 1e-15);
        let sa = va.scaled(alpha).unwrap();
        let sb = vb.scaled(beta).unwrap();
        prop_assert!((cosine_similarity(&sa, &sb).unwrap() - c).abs() < 1e-9);
        prop_assert!(c.abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn toy_mean_pooling_is_idempotent_on_repeats(n in 1usize..5, seed in 0u64..50) {
        let model = encoder(Objective::Regression, WORDS, 3, seed);
        let once = model.embed_text("fox").unwrap();
        let many = model.embed_text(&vec!["fox"; n].join(" ")).unwrap();
        for (x, y) in once.values().iter().zip(many.values()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}
