use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use zsar_core::captioner::*;
use zsar_core::tensor::Matrix;
use zsar_core::text::{Origin, Sentence};
use zsar_core::vocab::{Vocabulary, BOS};

fn small_vocab() -> Vocabulary {
    // 4 reserved + 8 words = 12
    Vocabulary::build(["a man dog is riding running horse fast"])
}

fn small_config(arch: Architecture) -> CaptionerConfig {
    CaptionerConfig {
        arch,
        d_model: 8,
        heads: 2,
        d_ff: 16,
        encoder_layers: 2,
        decoder_layers: 2,
        d_visual: 5,
        d_asm: 4,
        dropout: 0.0,
        seed: 7,
    }
}

fn stack(id: &str, modality: Modality, n_c: usize, dim: usize, seed: u64) -> FeatureStack {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FeatureStack::new(id, modality, Matrix::random_normal(n_c, dim, 1.0, &mut rng)).unwrap()
}

fn video(arch: Architecture, seed: u64) -> VideoFeatures {
    let v = stack("v", Modality::Visual, 3, 5, seed);
    match arch {
        Architecture::Transformer => VideoFeatures::visual(v),
        Architecture::Bmt => VideoFeatures::bimodal(v, stack("v", Modality::Audio, 3, 4, seed + 100)),
    }
}

fn gradient_check(arch: Architecture) {
    let vocab = small_vocab();
    assert_eq!(vocab.len(), 12);
    let model = Captioner::new(small_config(arch), vocab.clone()).unwrap();
    let batch = vec![
        CaptionExample {
            video: video(arch, 1),
            caption: vocab.encode_strict("a man is riding").unwrap(),
        },
        CaptionExample {
            video: video(arch, 2),
            caption: vocab.encode_strict("dog running fast").unwrap(),
        },
    ];
    let (_, grads) = model.loss_and_gradients(&batch, 0.1, None).unwrap();
    let h = 1e-5;
    for idx in 0..model.params().len() {
        let analytic = grads.get(&idx).cloned().unwrap_or_else(|| {
            let p = model.params().get(idx);
            Matrix::zeros(p.rows(), p.cols())
        });
        let mut numeric = vec![0.0; analytic.data().len()];
        for (k, slot) in numeric.iter_mut().enumerate() {
            let mut plus = model.clone();
            plus.params_mut().get_mut(idx).data_mut()[k] += h;
            let mut minus = model.clone();
            minus.params_mut().get_mut(idx).data_mut()[k] -= h;
            *slot = (plus.loss(&batch, 0.1).unwrap() - minus.loss(&batch, 0.1).unwrap()) / (2.0 * h);
        }
        let diff: f64 = analytic
            .data()
            .iter()
            .zip(&numeric)
            .map(|(a, n)| (a - n).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale: f64 = analytic.squared_norm().sqrt() + numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
        let rel = if scale < 1e-12 { 0.0 } else { diff / scale };
        assert!(
            rel < 1e-3,
            "{:?} {}: relative error {rel}",
            arch,
            model.params().name(idx)
        );
    }
}

#[test]
fn transformer_gradients_match_finite_differences() {
    gradient_check(Architecture::Transformer);
}

#[test]
fn bmt_gradients_match_finite_differences() {
    gradient_check(Architecture::Bmt);
}

#[test]
fn attention_rows_sum_to_one_everywhere() {
    for arch in [Architecture::Transformer, Architecture::Bmt] {
        let vocab = small_vocab();
        let model = Captioner::new(small_config(arch), vocab.clone()).unwrap();
        let mut prefix = vec![BOS];
        prefix.extend(vocab.encode_strict("a man is").unwrap());
        let maps = model.attention_maps(&video(arch, 3), &prefix).unwrap();
        let sites: std::collections::BTreeSet<_> = maps.iter().map(|m| m.site.clone()).collect();
        let expected_sites = match arch {
            Architecture::Transformer => 2 + 2 * 2,
            Architecture::Bmt => 2 * 4 + 2 * 3,
        };
        assert_eq!(sites.len(), expected_sites, "{sites:?}");
        for m in &maps {
            for r in 0..m.weights.rows() {
                let s: f64 = m.weights.row(r).iter().sum();
                assert!((s - 1.0).abs() < 1e-6, "{} head {} row {r}: {s}", m.site, m.head);
            }
        }
    }
}

#[test]
fn decoder_is_causal() {
    for arch in [Architecture::Transformer, Architecture::Bmt] {
        let vocab = small_vocab();
        let model = Captioner::new(small_config(arch), vocab.clone()).unwrap();
        let enc = model.encode(&video(arch, 4)).unwrap();
        let short = vec![BOS, 5, 6];
        let base = model.decode_distributions(&short, &enc).unwrap();
        for suffix in [vec![7], vec![8, 9], vec![11, 4, 10]] {
            let mut long = short.clone();
            long.extend(suffix);
            let full = model.decode_distributions(&long, &enc).unwrap();
            for r in 0..short.len() {
                assert_eq!(full.row(r), base.row(r), "{arch:?} row {r}");
            }
        }
        let step = model.decode_step(&short, &enc).unwrap();
        assert!((step.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn zero_generator_gives_uniform_distribution() {
    let vocab = small_vocab();
    let mut model = Captioner::new(small_config(Architecture::Transformer), vocab).unwrap();
    for name in ["generator.w", "generator.b"] {
        let i = model.params().index_of(name).unwrap();
        model.params_mut().get_mut(i).data_mut().fill(0.0);
    }
    let enc = model.encode(&video(Architecture::Transformer, 5)).unwrap();
    for p in model.decode_step(&[BOS, 4], &enc).unwrap() {
        assert!((p - 1.0 / 12.0).abs() < 1e-12);
    }
}

#[test]
fn prefix_and_length_errors() {
    let vocab = small_vocab();
    let model = Captioner::new(small_config(Architecture::Transformer), vocab).unwrap();
    let v = video(Architecture::Transformer, 6);
    let enc = model.encode(&v).unwrap();
    assert!(model.decode_step(&[4, 5], &enc).is_err());
    assert!(model.decode_step(&[], &enc).is_err());
    assert!(model.decode_step(&[BOS, 99], &enc).is_err());
    assert!(model.generate(&v, 0).is_err());
    let one = model.generate(&v, 1).unwrap();
    assert!(one.word_count() <= 1);
    assert_eq!(one.origin(), Origin::Observer);
    assert_eq!(model.generate(&v, 5).unwrap(), model.generate(&v, 5).unwrap());
}

#[test]
fn encoder_output_shapes() {
    let vocab = small_vocab();
    let t = Captioner::new(small_config(Architecture::Transformer), vocab.clone()).unwrap();
    let m = t.transformer_encode(&stack("v", Modality::Visual, 3, 5, 1)).unwrap();
    assert_eq!(m.shape(), (3, 8));
    let b = Captioner::new(small_config(Architecture::Bmt), vocab).unwrap();
    let (v, a) = b
        .bmt_encode(
            &stack("v", Modality::Visual, 3, 5, 1),
            &stack("v", Modality::Audio, 6, 4, 2),
        )
        .unwrap();
    assert_eq!(v.shape(), (3, 8));
    assert_eq!(a.shape(), (6, 8));
    assert!(b
        .bmt_encode(
            &stack("v", Modality::Visual, 3, 5, 1),
            &stack("v", Modality::Visual, 3, 4, 2)
        )
        .is_err());
    assert!(t
        .bmt_encode(
            &stack("v", Modality::Visual, 3, 5, 1),
            &stack("v", Modality::Audio, 3, 4, 2)
        )
        .is_err());
}

#[test]
fn bridge_takes_both_cross_attention_outputs() {
    let model = Captioner::new(small_config(Architecture::Bmt), small_vocab()).unwrap();
    let bridge = model.feed_forward_weights("dec0.bridge").unwrap();
    assert_eq!(bridge.w1.rows(), 2 * 8);
    assert_eq!(bridge.w2.cols(), 8);
}

#[test]
fn singleton_asm_row_gets_full_cross_attention() {
    let model = Captioner::new(small_config(Architecture::Bmt), small_vocab()).unwrap();
    let v = VideoFeatures::bimodal(
        stack("v", Modality::Visual, 4, 5, 1),
        stack("v", Modality::Audio, 1, 4, 2),
    );
    let maps = model.attention_maps(&v, &[BOS]).unwrap();
    let cross: Vec<_> = maps.iter().filter(|m| m.site.ends_with("v_cross")).collect();
    assert!(!cross.is_empty());
    for m in cross {
        assert_eq!(m.weights.shape(), (4, 1));
        assert!(m.weights.data().iter().all(|&w| w == 1.0));
    }
}

#[test]
fn bmt_stream_swap_with_tied_parameters() {
    let mut config = small_config(Architecture::Bmt);
    config.d_asm = config.d_visual;
    let mut model = Captioner::new(config, small_vocab()).unwrap();
    // tie the audio-side weights to the visual-side ones
    let names: Vec<String> = (0..model.params().len())
        .map(|i| model.params().name(i).to_string())
        .collect();
    for name in &names {
        let twin = if name.starts_with("input.asm.") {
            name.replacen("input.asm.", "input.visual.", 1)
        } else if name.contains(".a.") {
            name.replacen(".a.", ".v.", 1)
        } else if name.contains(".a_") {
            name.replacen(".a_", ".v_", 1)
        } else {
            continue;
        };
        let src = model.params().get(model.params().index_of(&twin).unwrap()).clone();
        let dst = model.params().index_of(name).unwrap();
        *model.params_mut().get_mut(dst) = src;
    }
    let x = stack("v", Modality::Visual, 3, 5, 11);
    let y = stack("v", Modality::Visual, 4, 5, 12);
    let relabel = |s: &FeatureStack, m: Modality| FeatureStack::new("v", m, s.features().clone()).unwrap();
    let (xy_v, xy_a) = model.bmt_encode(&x, &relabel(&y, Modality::Audio)).unwrap();
    let (yx_v, yx_a) = model.bmt_encode(&y, &relabel(&x, Modality::Audio)).unwrap();
    for (p, q) in [(&xy_v, &yx_a), (&xy_a, &yx_v)] {
        assert_eq!(p.shape(), q.shape());
        for (a, b) in p.data().iter().zip(q.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn feed_forward_is_position_independent() {
    let model = Captioner::new(small_config(Architecture::Transformer), small_vocab()).unwrap();
    let ffn = model.feed_forward_weights("enc0.ffn").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let u = Matrix::random_normal(5, 8, 1.0, &mut rng);
    let perm = [3, 0, 4, 1, 2];
    let out = feed_forward(&u, &ffn).unwrap();
    let out_perm = feed_forward(&u.select_rows(&perm), &ffn).unwrap();
    assert_eq!(out_perm, out.select_rows(&perm));
}

#[test]
fn save_load_round_trip() {
    let model = Captioner::new(small_config(Architecture::Bmt), small_vocab()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    model.save(&path).unwrap();
    let loaded = Captioner::load(&path).unwrap();
    let v = video(Architecture::Bmt, 9);
    assert_eq!(loaded.encode(&v).unwrap(), model.encode(&v).unwrap());
}

#[test]
fn out_of_vocabulary_caption_is_an_error() {
    let model = Captioner::new(small_config(Architecture::Transformer), small_vocab()).unwrap();
    let corpus = vec![(
        video(Architecture::Transformer, 1),
        Sentence::new("a zebra", Origin::Observer),
    )];
    assert!(train_captioner(model, &corpus, &TrainSchedule::default()).is_err());
}

#[test]
fn label_smoothing_targets() {
    let (t, w) = smoothed_targets(&[5, 0], 12, 0.1);
    assert_eq!(w, vec![1.0, 0.0]);
    assert!((t.row(0).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(t[(0, 0)], 0.0);
    assert!((t[(0, 5)] - 0.9).abs() < 1e-12);
    assert!((t[(0, 3)] - 0.01).abs() < 1e-12);
    assert!(t.row(1).iter().all(|&x| x == 0.0));
}
