use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::Sentence;

/// Dense sentence representation tagged with the embedder that produced it.
///
/// Vectors are stored unnormalized; [`cosine_similarity`] normalizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    embedder_id: String,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>, embedder_id: impl Into<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Dimension("embedding has no components".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("embedding component {i} is not finite")));
        }
        Ok(Self {
            values,
            embedder_id: embedder_id.into(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Same direction, every component multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.values.iter().map(|v| v * factor).collect(),
            self.embedder_id.clone(),
        )
    }
}

/// Anything that maps sentence text to a fixed-dimension vector.
///
/// Implementations must be deterministic: the same text always yields the
/// same vector.
pub trait EmbeddingProvider: Send + Sync {
    fn id(&self) -> &str;

    fn dim(&self) -> usize;

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector>;
}

pub fn embed(sentence: &Sentence, provider: &dyn EmbeddingProvider) -> Result<EmbeddingVector> {
    if sentence.text().trim().is_empty() {
        return Err(Error::EmptyInput("cannot embed an empty sentence".into()));
    }
    provider.embed_text(sentence.text())
}

pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    cosine_slices(a.values(), b.values())
}

pub(crate) fn cosine_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "cosine between {}-dim and {}-dim vectors",
            a.len(),
            b.len()
        )));
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm(
            "cosine similarity is undefined for a zero vector".into(),
        ));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}
