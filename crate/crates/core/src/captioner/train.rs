//! Captioner training: label-smoothed KL loss, clipped SGD, Bleu monitoring
//! and early stopping.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bleu::bleu_tokens;
use super::features::VideoFeatures;
use super::model::{CaptionExample, Captioner};
use crate::error::{Error, Result};
use crate::tensor::{ParamSet, Sgd};
use crate::text::Sentence;
use crate::vocab::Vocabulary;

/// Metric watched for early stopping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monitor {
    Bleu3,
    Bleu4,
    /// Per-epoch scores from an external scorer (e.g. Meteor), one per epoch.
    External(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub max_epochs: usize,
    /// Early stopping is not considered before this many epochs.
    pub min_epochs: usize,
    pub patience: usize,
    pub smoothing: f64,
    pub dropout: f64,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub monitor: Monitor,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            max_epochs: 300,
            min_epochs: 100,
            patience: 10,
            smoothing: 0.1,
            dropout: 0.1,
            learning_rate: 0.3,
            clip_norm: 1.0,
            batch_size: 4,
            seed: 0,
            monitor: Monitor::Bleu4,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("max_epochs and batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.smoothing) {
            return Err(Error::Config(format!("smoothing {} outside [0, 1)", self.smoothing)));
        }
        if !(self.learning_rate > 0.0 && self.clip_norm > 0.0) {
            return Err(Error::Config("learning rate and clip norm must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub bleu3: f64,
    pub bleu4: f64,
    pub external: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

#[derive(Debug, Clone)]
pub struct TrainedCaptioner {
    pub model: Captioner,
    pub history: TrainingHistory,
}

/// Vocabulary over every caption in the corpus.
pub fn build_caption_vocabulary(corpus: &[(VideoFeatures, Sentence)]) -> Vocabulary {
    Vocabulary::build(corpus.iter().map(|(_, s)| s.text()))
}

/// Token ids for every caption; unknown tokens are an error.
pub fn encode_corpus(vocab: &Vocabulary, corpus: &[(VideoFeatures, Sentence)]) -> Result<Vec<CaptionExample>> {
    corpus
        .iter()
        .map(|(video, caption)| {
            Ok(CaptionExample {
                video: video.clone(),
                caption: vocab
                    .encode_strict(caption.text())
                    .map_err(|e| e.context(format!("caption of {}", video.video_id())))?,
            })
        })
        .collect()
}

/// Greedy-decoded Bleu@3 and Bleu@4 of the model on `examples`.
pub fn evaluate_bleu(model: &Captioner, examples: &[CaptionExample]) -> Result<(f64, f64)> {
    let max_len = examples.iter().map(|e| e.caption.len()).max().unwrap_or(0) + 2;
    let mut cands = Vec::with_capacity(examples.len());
    let mut refs = Vec::with_capacity(examples.len());
    for ex in examples {
        cands.push(model.generate_ids(&ex.video, max_len)?);
        refs.push(ex.caption.clone());
    }
    let as_text = |ids: &Vec<Vec<usize>>| -> Vec<Vec<String>> {
        ids.iter().map(|s| s.iter().map(usize::to_string).collect()).collect()
    };
    let (c, r) = (as_text(&cands), as_text(&refs));
    Ok((bleu_tokens(&c, &r, 3)?, bleu_tokens(&c, &r, 4)?))
}

/// Trains `model` on `corpus` and returns the parameters of the best epoch
/// under the monitored metric.
pub fn train_captioner(
    mut model: Captioner,
    corpus: &[(VideoFeatures, Sentence)],
    schedule: &TrainSchedule,
) -> Result<TrainedCaptioner> {
    schedule.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyInput("empty captioning corpus".into()));
    }
    let examples = encode_corpus(model.vocab(), corpus)?;
    model.set_dropout(schedule.dropout)?;
    let sgd = Sgd::new(schedule.learning_rate).with_clip(schedule.clip_norm);
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut history = TrainingHistory::default();
    let mut best: Option<(f64, ParamSet)> = None;
    let mut since_best = 0;

    for epoch in 1..=schedule.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(schedule.batch_size) {
            let batch: Vec<CaptionExample> = chunk.iter().map(|&i| examples[i].clone()).collect();
            let (loss, grads) = model.loss_and_gradients(&batch, schedule.smoothing, Some(rng.gen()))?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss at epoch {epoch}")));
            }
            loss_sum += loss * chunk.len() as f64;
            sgd.step(model.params_mut(), &grads);
        }
        let (bleu3, bleu4) = evaluate_bleu(&model, &examples)?;
        let external = match &schedule.monitor {
            Monitor::External(scores) => Some(*scores.get(epoch - 1).ok_or_else(|| {
                Error::Config(format!("external scores cover {} epochs, need {epoch}", scores.len()))
            })?),
            _ => None,
        };
        let score = match schedule.monitor {
            Monitor::Bleu3 => bleu3,
            Monitor::Bleu4 => bleu4,
            Monitor::External(_) => external.expect("set above"),
        };
        history.epochs.push(EpochRecord {
            epoch,
            loss: loss_sum / examples.len() as f64,
            bleu3,
            bleu4,
            external,
        });
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, model.params().clone()));
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= schedule.patience && epoch >= schedule.min_epochs {
                history.stopped_early = true;
                break;
            }
        }
    }
    let (_, params) = best.expect("at least one epoch ran");
    *model.params_mut() = params;
    Ok(TrainedCaptioner { model, history })
}
