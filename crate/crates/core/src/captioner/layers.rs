//! Plain-matrix forms of the transformer building blocks.
//!
//! The trainable model runs the same computations on the autodiff tape;
//! these versions are used for inspection and as references in tests.

use crate::error::{Error, Result};
use crate::tensor::{softmax_rows, Matrix};

/// Sinusoidal position code: `sin` on even entries, `cos` on odd ones, with
/// wavelength `10000^(2i/d_model)` for pair `i`.
pub fn positional_encoding(pos: usize, d_model: usize) -> Result<Vec<f64>> {
    if d_model == 0 || !d_model.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "positional encoding needs an even d_model, got {d_model}"
        )));
    }
    let mut out = vec![0.0; d_model];
    for i in 0..d_model / 2 {
        let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / d_model as f64);
        out[2 * i] = angle.sin();
        out[2 * i + 1] = angle.cos();
    }
    Ok(out)
}

/// Position codes for positions `0..len` stacked as rows.
pub fn positional_encoding_matrix(len: usize, d_model: usize) -> Result<Matrix> {
    let rows = (0..len)
        .map(|p| positional_encoding(p, d_model))
        .collect::<Result<Vec<_>>>()?;
    if rows.is_empty() {
        return Ok(Matrix::zeros(0, d_model));
    }
    Matrix::from_rows(&rows)
}

/// Row-stochastic attention matrix: one row per query position.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights(pub Matrix);

impl AttentionWeights {
    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    /// Largest `|Σ_j w_ij − 1|` over rows.
    pub fn max_row_error(&self) -> f64 {
        row_sum_error(&self.0)
    }
}

pub(crate) fn row_sum_error(m: &Matrix) -> f64 {
    (0..m.rows())
        .map(|r| (m.row(r).iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max)
}

/// `softmax(Q·Kᵀ / √d_k) · V`.
pub fn scaled_dot_product_attention(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    d_k: usize,
) -> Result<(Matrix, AttentionWeights)> {
    if k.rows() != v.rows() {
        return Err(Error::Dimension(format!("{} keys but {} values", k.rows(), v.rows())));
    }
    if q.cols() != d_k || k.cols() != d_k {
        return Err(Error::Dimension(format!(
            "queries have {} and keys {} columns, d_k is {d_k}",
            q.cols(),
            k.cols()
        )));
    }
    if k.rows() == 0 {
        return Err(Error::EmptyInput("attention over zero keys".into()));
    }
    let mut scores = q.matmul_transposed(k)?;
    scores.scale_assign(1.0 / (d_k as f64).sqrt());
    let weights = softmax_rows(&scores, false);
    let out = weights.matmul(v)?;
    Ok((out, AttentionWeights(weights)))
}

/// Projection weights of one multi-head attention block. Head `i` uses
/// columns `i·d_k .. (i+1)·d_k` of `w_q`, `w_k` and `w_v`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadWeights {
    pub heads: usize,
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub w_o: Matrix,
}

impl MultiHeadWeights {
    pub fn new(heads: usize, w_q: Matrix, w_k: Matrix, w_v: Matrix, w_o: Matrix) -> Result<Self> {
        let d_model = w_q.cols();
        if heads == 0 || !d_model.is_multiple_of(heads) {
            return Err(Error::Config(format!(
                "d_model {d_model} is not divisible by {heads} heads"
            )));
        }
        if w_k.cols() != d_model || w_v.cols() != d_model || w_o.shape() != (d_model, d_model) {
            return Err(Error::Dimension("inconsistent attention projection shapes".into()));
        }
        Ok(Self {
            heads,
            w_q,
            w_k,
            w_v,
            w_o,
        })
    }

    pub fn d_model(&self) -> usize {
        self.w_q.cols()
    }

    pub fn d_k(&self) -> usize {
        self.d_model() / self.heads
    }
}

/// `[head_1, …, head_h] · W^O` with `head_i = Att(Q·W_i^Q, K·W_i^K, V·W_i^V)`.
pub fn multi_head_attention(q: &Matrix, k: &Matrix, v: &Matrix, weights: &MultiHeadWeights) -> Result<Matrix> {
    Ok(multi_head_attention_with_weights(q, k, v, weights)?.0)
}

/// Like [`multi_head_attention`], also returning each head's weights.
pub fn multi_head_attention_with_weights(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    weights: &MultiHeadWeights,
) -> Result<(Matrix, Vec<AttentionWeights>)> {
    let d_k = weights.d_k();
    let qp = q.matmul(&weights.w_q)?;
    let kp = k.matmul(&weights.w_k)?;
    let vp = v.matmul(&weights.w_v)?;
    let mut heads = Vec::with_capacity(weights.heads);
    let mut maps = Vec::with_capacity(weights.heads);
    for h in 0..weights.heads {
        let (out, w) = scaled_dot_product_attention(
            &qp.slice_cols(h * d_k, d_k),
            &kp.slice_cols(h * d_k, d_k),
            &vp.slice_cols(h * d_k, d_k),
            d_k,
        )?;
        heads.push(out);
        maps.push(w);
    }
    let refs: Vec<&Matrix> = heads.iter().collect();
    Ok((Matrix::concat_cols(&refs)?.matmul(&weights.w_o)?, maps))
}

/// Multi-head attention with `Q = K = V = x`.
pub fn self_attention(x: &Matrix, weights: &MultiHeadWeights) -> Result<Matrix> {
    multi_head_attention(x, x, x, weights)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedForwardWeights {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

/// `max(0, u·W_1 + b_1)·W_2 + b_2`, row by row.
pub fn feed_forward(u: &Matrix, w: &FeedForwardWeights) -> Result<Matrix> {
    if u.cols() != w.w1.rows() || w.b1.len() != w.w1.cols() || w.w2.rows() != w.w1.cols() || w.b2.len() != w.w2.cols() {
        return Err(Error::Dimension(format!(
            "feed-forward input has {} columns, W_1 is {}x{}",
            u.cols(),
            w.w1.rows(),
            w.w1.cols()
        )));
    }
    let mut hidden = u.matmul(&w.w1)?;
    for r in 0..hidden.rows() {
        for (h, b) in hidden.row_mut(r).iter_mut().zip(&w.b1) {
            *h = (*h + b).max(0.0);
        }
    }
    let mut out = hidden.matmul(&w.w2)?;
    for r in 0..out.rows() {
        for (o, b) in out.row_mut(r).iter_mut().zip(&w.b2) {
            *o += b;
        }
    }
    Ok(out)
}
