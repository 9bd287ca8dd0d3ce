//! Trainable toy sentence encoder: a token-embedding table with mean
//! pooling, shared by both branches of a Siamese pair.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EmbeddingProvider, EmbeddingVector};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Matrix, ParamSet, Sgd, Var};
use crate::text::Sentence;
use crate::vocab::{tokenize, Vocabulary, UNK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Softmax over `[u_a, u_b, |u_a - u_b|] · W_t`, cross-entropy loss.
    Classification,
    /// Squared error between `cos(u_a, u_b)` and a target in `[-1, 1]`.
    Regression,
    /// `max(‖s_a − s_p‖ − ‖s_a − s_n‖ + ε, 0)` with Euclidean distance.
    Triplet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderConfig {
    /// Upper bound on vocabulary entries, reserved tokens included.
    pub vocabulary_size: usize,
    pub n_s: usize,
    pub pooling: Pooling,
    pub objective: Objective,
    pub k_labels: usize,
    pub margin_epsilon: f64,
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            vocabulary_size: 5000,
            n_s: 16,
            pooling: Pooling::Mean,
            objective: Objective::Regression,
            k_labels: 3,
            margin_epsilon: 1.0,
            seed: 0,
            epochs: 50,
            learning_rate: 0.5,
            batch_size: 8,
        }
    }
}

impl EmbedderConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_s == 0 {
            return fail("n_s must be positive");
        }
        if self.vocabulary_size <= 4 {
            return fail("vocabulary_size must leave room beyond the 4 reserved tokens");
        }
        if self.objective == Objective::Classification && self.k_labels < 2 {
            return fail("classification needs k_labels >= 2");
        }
        if !(self.margin_epsilon > 0.0) {
            return fail("margin_epsilon must be positive");
        }
        if self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return fail("batch_size and learning_rate must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainingExample {
    Classification {
        a: Sentence,
        b: Sentence,
        label: usize,
    },
    Regression {
        a: Sentence,
        b: Sentence,
        target: f64,
    },
    Triplet {
        anchor: Sentence,
        positive: Sentence,
        negative: Sentence,
    },
}

impl TrainingExample {
    fn objective(&self) -> Objective {
        match self {
            Self::Classification { .. } => Objective::Classification,
            Self::Regression { .. } => Objective::Regression,
            Self::Triplet { .. } => Objective::Triplet,
        }
    }

    fn texts(&self) -> Vec<&str> {
        match self {
            Self::Classification { a, b, .. } | Self::Regression { a, b, .. } => {
                vec![a.text(), b.text()]
            }
            Self::Triplet {
                anchor,
                positive,
                negative,
            } => vec![anchor.text(), positive.text(), negative.text()],
        }
    }
}

const TOKEN_TABLE: usize = 0;
const CLASSIFIER: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyEncoder {
    id: String,
    config: EmbedderConfig,
    vocab: Vocabulary,
    params: ParamSet,
}

impl ToyEncoder {
    /// Randomly initialized encoder over `vocab`.
    pub fn new(id: impl Into<String>, vocab: Vocabulary, config: EmbedderConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamSet::new();
        let std = 1.0 / (config.n_s as f64).sqrt();
        params.push(
            "token_embeddings",
            Matrix::random_normal(vocab.len(), config.n_s, std, &mut rng),
        );
        if config.objective == Objective::Classification {
            params.push("classifier", Matrix::xavier(3 * config.n_s, config.k_labels, &mut rng));
        }
        Ok(Self {
            id: id.into(),
            config,
            vocab,
            params,
        })
    }

    /// Encoder with caller-supplied parameters, for tests and tools.
    pub fn from_parts(
        id: impl Into<String>,
        config: EmbedderConfig,
        vocab: Vocabulary,
        params: ParamSet,
    ) -> Result<Self> {
        config.validate()?;
        let table = params.get(TOKEN_TABLE);
        if table.shape() != (vocab.len(), config.n_s) {
            return Err(Error::Dimension(format!(
                "token table is {:?}, expected ({}, {})",
                table.shape(),
                vocab.len(),
                config.n_s
            )));
        }
        if config.objective == Objective::Classification
            && (params.len() < 2 || params.get(CLASSIFIER).shape() != (3 * config.n_s, config.k_labels))
        {
            return Err(Error::Dimension("classifier must be 3·n_s × k_labels".into()));
        }
        Ok(Self {
            id: id.into(),
            config,
            vocab,
            params,
        })
    }

    pub fn config(&self) -> &EmbedderConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let enc: Self = serde_json::from_str(&text)?;
        Self::from_parts(enc.id, enc.config, enc.vocab, enc.params)
    }

    fn token_ids(&self, text: &str) -> Result<Vec<usize>> {
        let ids = self.vocab.encode_lossy(text);
        if ids.is_empty() {
            return Err(Error::EmptyInput(format!("no tokens in {text:?}")));
        }
        Ok(ids)
    }

    fn encode(&self, g: &mut Graph, ids: &[usize]) -> Var {
        let table = g.param(&self.params, TOKEN_TABLE);
        let rows = g.gather(table, ids);
        g.mean_rows(rows)
    }

    /// Classification logits for a sentence pair, one per label.
    pub fn logits(&self, a: &Sentence, b: &Sentence) -> Result<Vec<f64>> {
        if self.config.objective != Objective::Classification {
            return Err(Error::Config("encoder has no classification head".into()));
        }
        let mut g = Graph::new();
        let ids_a = self.token_ids(a.text())?;
        let ids_b = self.token_ids(b.text())?;
        let logits = self.pair_logits(&mut g, &ids_a, &ids_b);
        Ok(g.value(logits).data().to_vec())
    }

    fn pair_logits(&self, g: &mut Graph, ids_a: &[usize], ids_b: &[usize]) -> Var {
        let ua = self.encode(g, ids_a);
        let ub = self.encode(g, ids_b);
        let diff = g.sub(ua, ub);
        let abs = g.abs(diff);
        let features = g.concat_cols(&[ua, ub, abs]);
        let w = g.param(&self.params, CLASSIFIER);
        g.matmul(features, w)
    }

    fn cosine(g: &mut Graph, a: Var, b: Var) -> Var {
        let ab = g.mul(a, b);
        let dot = g.sum_all(ab);
        let aa = g.mul(a, a);
        let aa = g.sum_all(aa);
        let bb = g.mul(b, b);
        let bb = g.sum_all(bb);
        let denom = g.mul(aa, bb);
        let denom = g.sqrt(denom);
        g.div(dot, denom)
    }

    fn distance(g: &mut Graph, a: Var, b: Var) -> Var {
        let d = g.sub(a, b);
        let sq = g.mul(d, d);
        let sum = g.sum_all(sq);
        g.sqrt(sum)
    }

    fn check_example(&self, ex: &TrainingExample) -> Result<()> {
        if ex.objective() != self.config.objective {
            return Err(Error::Config(format!(
                "{:?} example given to a {:?} encoder",
                ex.objective(),
                self.config.objective
            )));
        }
        match ex {
            TrainingExample::Classification { label, .. } if *label >= self.config.k_labels => Err(Error::Data(
                format!("label {label} out of range for k_labels={}", self.config.k_labels),
            )),
            TrainingExample::Regression { target, .. } if !(-1.0..=1.0).contains(target) => {
                Err(Error::Data(format!("regression target {target} outside [-1, 1]")))
            }
            _ => Ok(()),
        }
    }

    fn build_loss(&self, g: &mut Graph, batch: &[TrainingExample]) -> Result<Var> {
        if batch.is_empty() {
            return Err(Error::EmptyInput("empty training batch".into()));
        }
        let weight = 1.0 / batch.len() as f64;
        let mut total: Option<Var> = None;
        for ex in batch {
            self.check_example(ex)?;
            let term = match ex {
                TrainingExample::Classification { a, b, label } => {
                    let ids_a = self.token_ids(a.text())?;
                    let ids_b = self.token_ids(b.text())?;
                    let logits = self.pair_logits(g, &ids_a, &ids_b);
                    let mut target = Matrix::zeros(1, self.config.k_labels);
                    target[(0, *label)] = 1.0;
                    g.soft_target_loss(logits, target, vec![weight])
                }
                TrainingExample::Regression { a, b, target } => {
                    let ids_a = self.token_ids(a.text())?;
                    let ids_b = self.token_ids(b.text())?;
                    let ua = self.encode(g, &ids_a);
                    let ub = self.encode(g, &ids_b);
                    let cos = Self::cosine(g, ua, ub);
                    let residual = g.add_scalar(cos, -target);
                    let sq = g.mul(residual, residual);
                    g.scale(sq, weight)
                }
                TrainingExample::Triplet {
                    anchor,
                    positive,
                    negative,
                } => {
                    let sa = self.encode(g, &self.token_ids(anchor.text())?);
                    let sp = self.encode(g, &self.token_ids(positive.text())?);
                    let sn = self.encode(g, &self.token_ids(negative.text())?);
                    let dp = Self::distance(g, sa, sp);
                    let dn = Self::distance(g, sa, sn);
                    let gap = g.sub(dp, dn);
                    let shifted = g.add_scalar(gap, self.config.margin_epsilon);
                    let hinge = g.relu(shifted);
                    g.scale(hinge, weight)
                }
            };
            total = Some(match total {
                Some(t) => g.add(t, term),
                None => term,
            });
        }
        Ok(total.expect("non-empty batch"))
    }

    /// Mean objective over `batch`.
    pub fn loss(&self, batch: &[TrainingExample]) -> Result<f64> {
        let mut g = Graph::new();
        let out = self.build_loss(&mut g, batch)?;
        Ok(g.scalar(out))
    }

    /// Mean objective and its gradient for every parameter that affected it.
    pub fn loss_and_gradients(&self, batch: &[TrainingExample]) -> Result<(f64, BTreeMap<usize, Matrix>)> {
        let mut g = Graph::new();
        let out = self.build_loss(&mut g, batch)?;
        Ok((g.scalar(out), g.backward(out)))
    }

    /// Euclidean distance between two sentence embeddings.
    pub fn embedding_distance(&self, a: &str, b: &str) -> Result<f64> {
        let va = self.embed_text(a)?;
        let vb = self.embed_text(b)?;
        Ok(va
            .values()
            .iter()
            .zip(vb.values())
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt())
    }
}

impl EmbeddingProvider for ToyEncoder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.config.n_s
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        let ids = self.token_ids(text)?;
        let table = self.params.get(TOKEN_TABLE);
        let mut sum = vec![0.0; self.config.n_s];
        for &id in &ids {
            for (s, v) in sum.iter_mut().zip(table.row(id)) {
                *s += v;
            }
        }
        let n = ids.len() as f64;
        EmbeddingVector::new(sum.into_iter().map(|s| s / n).collect(), self.id.clone())
    }
}

/// A trained encoder and its full-training-set loss, initial value first,
/// then one entry per epoch.
#[derive(Debug, Clone)]
pub struct TrainedEmbedder {
    pub encoder: ToyEncoder,
    pub history: Vec<f64>,
}

/// Vocabulary of the most frequent tokens in `texts`, capped at
/// `vocabulary_size` entries; ties go to the lexicographically smaller token.
pub fn build_capped_vocabulary<'a>(texts: impl IntoIterator<Item = &'a str>, vocabulary_size: usize) -> Vocabulary {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for t in texts {
        for tok in tokenize(t) {
            *counts.entry(tok).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(vocabulary_size.saturating_sub(UNK + 1));
    Vocabulary::build(ranked.iter().map(|(t, _)| t.as_str()))
}

/// Builds a vocabulary from the examples and trains with mini-batch SGD.
pub fn train(examples: &[TrainingExample], config: &EmbedderConfig) -> Result<TrainedEmbedder> {
    config.validate()?;
    if examples.is_empty() {
        return Err(Error::EmptyInput("no training examples".into()));
    }
    let vocab = build_capped_vocabulary(examples.iter().flat_map(TrainingExample::texts), config.vocabulary_size);
    let mut encoder = ToyEncoder::new(
        format!("toy-{:?}", config.objective).to_lowercase(),
        vocab,
        config.clone(),
    )?;
    for ex in examples {
        encoder.check_example(ex)?;
    }
    let sgd = Sgd::new(config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut history = vec![encoder.loss(examples)?];
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<TrainingExample> = chunk.iter().map(|&i| examples[i].clone()).collect();
            let (_, grads) = encoder.loss_and_gradients(&batch)?;
            sgd.step(&mut encoder.params, &grads);
        }
        history.push(encoder.loss(examples)?);
    }
    Ok(TrainedEmbedder { encoder, history })
}

pub fn train_classification_objective(
    pairs: &[(Sentence, Sentence, usize)],
    config: &EmbedderConfig,
) -> Result<TrainedEmbedder> {
    if let Some((_, _, label)) = pairs.iter().find(|(_, _, l)| *l >= config.k_labels) {
        return Err(Error::Config(format!(
            "data has label {label} but k_labels={}",
            config.k_labels
        )));
    }
    let examples: Vec<_> = pairs
        .iter()
        .map(|(a, b, label)| TrainingExample::Classification {
            a: a.clone(),
            b: b.clone(),
            label: *label,
        })
        .collect();
    train(
        &examples,
        &EmbedderConfig {
            objective: Objective::Classification,
            ..config.clone()
        },
    )
}

pub fn train_regression_objective(
    pairs: &[(Sentence, Sentence, f64)],
    config: &EmbedderConfig,
) -> Result<TrainedEmbedder> {
    let examples: Vec<_> = pairs
        .iter()
        .map(|(a, b, target)| TrainingExample::Regression {
            a: a.clone(),
            b: b.clone(),
            target: *target,
        })
        .collect();
    train(
        &examples,
        &EmbedderConfig {
            objective: Objective::Regression,
            ..config.clone()
        },
    )
}

pub fn train_triplet_objective(
    triplets: &[(Sentence, Sentence, Sentence)],
    config: &EmbedderConfig,
) -> Result<TrainedEmbedder> {
    let examples: Vec<_> = triplets
        .iter()
        .map(|(anchor, positive, negative)| TrainingExample::Triplet {
            anchor: anchor.clone(),
            positive: positive.clone(),
            negative: negative.clone(),
        })
        .collect();
    train(
        &examples,
        &EmbedderConfig {
            objective: Objective::Triplet,
            ..config.clone()
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::Origin;

    fn s(t: &str) -> Sentence {
        Sentence::new(t, Origin::Document)
    }

    /// Hand-set 3-dim table: w1 = (1, 2, 3), w2 = (3, 0, -1).
    fn hand_encoder() -> ToyEncoder {
        let vocab = Vocabulary::build(["w1 w2"]);
        let mut table = Matrix::zeros(vocab.len(), 3);
        table.row_mut(vocab.id("w1").unwrap()).copy_from_slice(&[1.0, 2.0, 3.0]);
        table
            .row_mut(vocab.id("w2").unwrap())
            .copy_from_slice(&[3.0, 0.0, -1.0]);
        let mut params = ParamSet::new();
        params.push("token_embeddings", table);
        let config = EmbedderConfig {
            n_s: 3,
            ..EmbedderConfig::default()
        };
        ToyEncoder::from_parts("hand", config, vocab, params).unwrap()
    }

    #[test]
    fn mean_pooling_examples() {
        let enc = hand_encoder();
        assert_eq!(enc.embed_text("w1").unwrap().values(), &[1.0, 2.0, 3.0]);
        assert_eq!(
            enc.embed_text("w1 w1").unwrap().values(),
            enc.embed_text("w1").unwrap().values()
        );
        assert_eq!(enc.embed_text("w1 w2").unwrap().values(), &[2.0, 1.0, 1.0]);
    }

    #[test]
    fn unknown_words_use_unk_and_empty_fails() {
        let enc = hand_encoder();
        assert_eq!(enc.embed_text("zzz").unwrap().values(), enc.params().get(0).row(UNK));
        assert!(matches!(enc.embed_text("   "), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn classification_logits_shape_and_identical_pair_diff() {
        let config = EmbedderConfig {
            objective: Objective::Classification,
            k_labels: 4,
            n_s: 5,
            ..EmbedderConfig::default()
        };
        let enc = ToyEncoder::new("c", Vocabulary::build(["a man runs"]), config).unwrap();
        assert_eq!(enc.logits(&s("a man"), &s("runs")).unwrap().len(), 4);
        let u = enc.embed_text("a man runs").unwrap();
        let v = enc.embed_text("a man runs").unwrap();
        assert!(u.values().iter().zip(v.values()).all(|(x, y)| (x - y).abs() == 0.0));
    }

    #[test]
    fn label_out_of_range_rejected() {
        let config = EmbedderConfig {
            k_labels: 2,
            ..EmbedderConfig::default()
        };
        let err = train_classification_objective(&[(s("a"), s("b"), 2)], &config).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn regression_target_range_checked() {
        let err = train_regression_objective(&[(s("a"), s("b"), 1.5)], &EmbedderConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn config_validation() {
        let bad = EmbedderConfig {
            margin_epsilon: 0.0,
            ..EmbedderConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = EmbedderConfig {
            objective: Objective::Classification,
            k_labels: 1,
            ..EmbedderConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn capped_vocabulary_keeps_frequent_tokens() {
        let v = build_capped_vocabulary(["b b b a a c"], 6);
        assert_eq!(&v.tokens()[4..], ["a", "b"]);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("enc.json");
        let enc = hand_encoder();
        enc.save(&path).unwrap();
        assert_eq!(ToyEncoder::load(&path).unwrap(), enc);
    }
}
