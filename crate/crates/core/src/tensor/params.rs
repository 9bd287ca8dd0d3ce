use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;

/// Named, ordered collection of trainable matrices.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Matrix>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Matrix) -> usize {
        self.names.push(name.into());
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, index: usize) -> &Matrix {
        &self.values[index]
    }

    pub fn get_mut(&mut self, index: usize) -> &mut Matrix {
        &mut self.values[index]
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(|m| m.data().len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }
}

/// Fixed-step gradient descent with global-norm clipping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sgd {
    pub learning_rate: f64,
    /// Gradients whose global L2 norm exceeds this are rescaled to it.
    pub clip_norm: Option<f64>,
}

impl Sgd {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            clip_norm: None,
        }
    }

    pub fn with_clip(mut self, clip_norm: f64) -> Self {
        self.clip_norm = Some(clip_norm);
        self
    }

    /// Applies one update and returns the pre-clipping gradient norm.
    pub fn step(&self, params: &mut ParamSet, grads: &BTreeMap<usize, Matrix>) -> f64 {
        let norm = grads.values().map(Matrix::squared_norm).sum::<f64>().sqrt();
        let mut scale = self.learning_rate;
        if let Some(max) = self.clip_norm {
            if norm > max {
                scale *= max / norm;
            }
        }
        for (&idx, g) in grads {
            let p = params.get_mut(idx);
            for (w, d) in p.data_mut().iter_mut().zip(g.data()) {
                *w -= scale * d;
            }
        }
        norm
    }
}
