//! Reverse-mode automatic differentiation over [`Matrix`] values.
//!
//! A [`Graph`] is rebuilt for every forward pass. Parameters enter through
//! [`Graph::param`], which remembers the [`ParamSet`] slot so that
//! [`Graph::backward`] can hand back one gradient per parameter.

use std::collections::{BTreeMap, HashMap};

use super::matrix::{softmax_rows, Matrix};
use super::params::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    /// Adds a `1 x n` row to every row of an `m x n` matrix.
    AddRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Abs(Var),
    Sqrt(Var),
    Softmax(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        normalized: Matrix,
        inv_std: Vec<f64>,
    },
    Gather(Var, Vec<usize>),
    MeanRows(Var),
    SumAll(Var),
    Dropout(Var, Vec<f64>),
    SoftTargetLoss {
        logits: Var,
        targets: Matrix,
        row_weights: Vec<f64>,
        probs: Matrix,
    },
}

struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<usize, Var>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Leaf bound to `params[index]`; repeated calls return the same node.
    pub fn param(&mut self, params: &ParamSet, index: usize) -> Var {
        if let Some(&v) = self.params.get(&index) {
            return v;
        }
        let v = self.push(params.get(index).clone(), Op::Param);
        self.params.insert(index, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b)).expect("matmul shape mismatch");
        self.push(value, Op::MatMul(a, b))
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let value = self
            .value(a)
            .matmul_transposed(self.value(b))
            .expect("matmul_t shape mismatch");
        self.push(value, Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y).expect("add shape");
        self.push(value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y).expect("sub shape");
        self.push(value, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y).expect("mul shape");
        self.push(value, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x / y).expect("div shape");
        self.push(value, Op::Div(a, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row);
        assert_eq!(r.rows(), 1, "add_row expects a row vector");
        let mut value = self.value(a).clone();
        assert_eq!(value.cols(), r.cols(), "add_row width");
        for i in 0..value.rows() {
            for (x, b) in value.row_mut(i).iter_mut().zip(r.data()) {
                *x += b;
            }
        }
        self.push(value, Op::AddRow(a, row))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|x| x * s);
        self.push(value, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|x| x + s);
        self.push(value, Op::AddScalar(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        self.push(value, Op::Relu(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::abs);
        self.push(value, Op::Abs(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::sqrt);
        self.push(value, Op::Sqrt(a))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Var {
        let value = softmax_rows(self.value(a), false);
        self.push(value, Op::Softmax(a))
    }

    /// Row-wise softmax where row `i` only sees columns `0..=i`.
    pub fn causal_softmax(&mut self, a: Var) -> Var {
        let value = softmax_rows(self.value(a), true);
        self.push(value, Op::Softmax(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let mats: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Matrix::concat_cols(&mats).expect("concat rows");
        self.push(value, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let value = self.value(a).slice_cols(start, len);
        self.push(value, Op::SliceCols(a, start))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Var {
        let input = self.value(x);
        let n = input.cols() as f64;
        let mut normalized = Matrix::zeros(input.rows(), input.cols());
        let mut inv_std = Vec::with_capacity(input.rows());
        for r in 0..input.rows() {
            let row = input.row(r);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let inv = 1.0 / (var + eps).sqrt();
            for (o, v) in normalized.row_mut(r).iter_mut().zip(row) {
                *o = (v - mean) * inv;
            }
            inv_std.push(inv);
        }
        let g = self.value(gain);
        let b = self.value(bias);
        let mut value = normalized.clone();
        for r in 0..value.rows() {
            for ((o, gv), bv) in value.row_mut(r).iter_mut().zip(g.data()).zip(b.data()) {
                *o = *o * gv + bv;
            }
        }
        self.push(
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            },
        )
    }

    /// Rows of `table` picked by `ids`, in order.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Var {
        let value = self.value(table).select_rows(ids);
        self.push(value, Op::Gather(table, ids.to_vec()))
    }

    /// Column-wise mean over rows, as a `1 x n` row.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let mut out = vec![0.0; m.cols()];
        for r in 0..m.rows() {
            for (o, v) in out.iter_mut().zip(m.row(r)) {
                *o += v;
            }
        }
        let n = m.rows() as f64;
        for o in &mut out {
            *o /= n;
        }
        self.push(Matrix::row_vector(out), Op::MeanRows(a))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        self.push(value, Op::SumAll(a))
    }

    /// Inverted dropout with a precomputed keep mask (entries `0` or `1/(1-p)`).
    pub fn dropout(&mut self, a: Var, mask: Vec<f64>) -> Var {
        let m = self.value(a);
        assert_eq!(mask.len(), m.data().len());
        let mut value = m.clone();
        for (v, k) in value.data_mut().iter_mut().zip(&mask) {
            *v *= k;
        }
        self.push(value, Op::Dropout(a, mask))
    }

    /// `Σ_r w_r · KL(targets_r ‖ softmax(logits_r))`, a scalar.
    ///
    /// With one-hot targets this is the cross-entropy. Rows with weight 0
    /// contribute neither loss nor gradient.
    pub fn soft_target_loss(&mut self, logits: Var, targets: Matrix, row_weights: Vec<f64>) -> Var {
        let l = self.value(logits);
        assert_eq!(l.shape(), targets.shape());
        assert_eq!(row_weights.len(), l.rows());
        let probs = softmax_rows(l, false);
        let mut loss = 0.0;
        for r in 0..l.rows() {
            let w = row_weights[r];
            if w == 0.0 {
                continue;
            }
            let row = l.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let log_z = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            let mut kl = 0.0;
            for (t, z) in targets.row(r).iter().zip(row) {
                if *t > 0.0 {
                    kl += t * (t.ln() - (z - log_z));
                }
            }
            loss += w * kl;
        }
        self.push(
            Matrix::scalar(loss),
            Op::SoftTargetLoss {
                logits,
                targets,
                row_weights,
                probs,
            },
        )
    }

    /// Gradients of the scalar `output` with respect to every parameter
    /// that entered the graph, keyed by parameter index.
    pub fn backward(&self, output: Var) -> BTreeMap<usize, Matrix> {
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        let out = &self.nodes[output.0].value;
        grads[output.0] = Some(Matrix::filled(out.rows(), out.cols(), 1.0));

        for idx in (0..=output.0).rev() {
            let Some(grad) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Param => {
                    grads[idx] = Some(grad);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    accumulate(&mut grads, *a, grad.matmul_transposed(bv).unwrap());
                    accumulate(&mut grads, *b, av.transposed_matmul(&grad).unwrap());
                }
                Op::MatMulT(a, b) => {
                    // out = a·bᵀ: da = g·b, db = gᵀ·a
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    accumulate(&mut grads, *a, grad.matmul(bv).unwrap());
                    accumulate(&mut grads, *b, grad.transposed_matmul(av).unwrap());
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, grad.clone());
                    accumulate(&mut grads, *b, grad);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, grad.clone());
                    accumulate(&mut grads, *b, grad.map(|g| -g));
                }
                Op::Mul(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    accumulate(&mut grads, *a, grad.zip_map(bv, |g, y| g * y).unwrap());
                    accumulate(&mut grads, *b, grad.zip_map(av, |g, x| g * x).unwrap());
                }
                Op::Div(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    accumulate(&mut grads, *a, grad.zip_map(bv, |g, y| g / y).unwrap());
                    let q = av.zip_map(bv, |x, y| x / (y * y)).unwrap();
                    accumulate(&mut grads, *b, grad.zip_map(&q, |g, q| -g * q).unwrap());
                }
                Op::AddRow(a, row) => {
                    let mut rg = vec![0.0; grad.cols()];
                    for r in 0..grad.rows() {
                        for (o, g) in rg.iter_mut().zip(grad.row(r)) {
                            *o += g;
                        }
                    }
                    accumulate(&mut grads, *row, Matrix::row_vector(rg));
                    accumulate(&mut grads, *a, grad);
                }
                Op::Scale(a, s) => {
                    let s = *s;
                    accumulate(&mut grads, *a, grad.map(|g| g * s));
                }
                Op::AddScalar(a) => accumulate(&mut grads, *a, grad),
                Op::Relu(a) => {
                    let x = self.value(*a);
                    let g = grad.zip_map(x, |g, x| if x > 0.0 { g } else { 0.0 }).unwrap();
                    accumulate(&mut grads, *a, g);
                }
                Op::Abs(a) => {
                    let x = self.value(*a);
                    let g = grad.zip_map(x, |g, x| g * sign(x)).unwrap();
                    accumulate(&mut grads, *a, g);
                }
                Op::Sqrt(a) => {
                    // subgradient 0 at the origin
                    let g = grad
                        .zip_map(&node.value, |g, y| if y > 0.0 { g / (2.0 * y) } else { 0.0 })
                        .unwrap();
                    accumulate(&mut grads, *a, g);
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let mut dx = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let yr = y.row(r);
                        let gr = grad.row(r);
                        let inner: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                        for ((o, y), g) in dx.row_mut(r).iter_mut().zip(yr).zip(gr) {
                            *o = y * (g - inner);
                        }
                    }
                    accumulate(&mut grads, *a, dx);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let w = self.value(*p).cols();
                        accumulate(&mut grads, *p, grad.slice_cols(offset, w));
                        offset += w;
                    }
                }
                Op::SliceCols(a, start) => {
                    let src = self.value(*a);
                    let mut g = Matrix::zeros(src.rows(), src.cols());
                    for r in 0..grad.rows() {
                        g.row_mut(r)[*start..*start + grad.cols()].copy_from_slice(grad.row(r));
                    }
                    accumulate(&mut grads, *a, g);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    normalized,
                    inv_std,
                } => {
                    let gv = self.value(*gain);
                    let cols = grad.cols();
                    let n = cols as f64;
                    let mut dgain = vec![0.0; cols];
                    let mut dbias = vec![0.0; cols];
                    let mut dx = Matrix::zeros(grad.rows(), cols);
                    for r in 0..grad.rows() {
                        let gr = grad.row(r);
                        let xh = normalized.row(r);
                        let mut dxh = vec![0.0; cols];
                        for c in 0..cols {
                            dgain[c] += gr[c] * xh[c];
                            dbias[c] += gr[c];
                            dxh[c] = gr[c] * gv.data()[c];
                        }
                        let sum_d: f64 = dxh.iter().sum();
                        let sum_dx: f64 = dxh.iter().zip(xh).map(|(d, x)| d * x).sum();
                        for (c, o) in dx.row_mut(r).iter_mut().enumerate() {
                            *o = inv_std[r] / n * (n * dxh[c] - sum_d - xh[c] * sum_dx);
                        }
                    }
                    accumulate(&mut grads, *gain, Matrix::row_vector(dgain));
                    accumulate(&mut grads, *bias, Matrix::row_vector(dbias));
                    accumulate(&mut grads, *x, dx);
                }
                Op::Gather(table, ids) => {
                    let t = self.value(*table);
                    let mut g = Matrix::zeros(t.rows(), t.cols());
                    for (r, &id) in ids.iter().enumerate() {
                        for (o, v) in g.row_mut(id).iter_mut().zip(grad.row(r)) {
                            *o += v;
                        }
                    }
                    accumulate(&mut grads, *table, g);
                }
                Op::MeanRows(a) => {
                    let src = self.value(*a);
                    let n = src.rows() as f64;
                    let mut g = Matrix::zeros(src.rows(), src.cols());
                    for r in 0..src.rows() {
                        for (o, v) in g.row_mut(r).iter_mut().zip(grad.data()) {
                            *o = v / n;
                        }
                    }
                    accumulate(&mut grads, *a, g);
                }
                Op::SumAll(a) => {
                    let src = self.value(*a);
                    let g = Matrix::filled(src.rows(), src.cols(), grad.data()[0]);
                    accumulate(&mut grads, *a, g);
                }
                Op::Dropout(a, mask) => {
                    let mut g = grad;
                    for (v, k) in g.data_mut().iter_mut().zip(mask) {
                        *v *= k;
                    }
                    accumulate(&mut grads, *a, g);
                }
                Op::SoftTargetLoss {
                    logits,
                    targets,
                    row_weights,
                    probs,
                } => {
                    let upstream = grad.data()[0];
                    let mut g = Matrix::zeros(probs.rows(), probs.cols());
                    for r in 0..probs.rows() {
                        let w = row_weights[r] * upstream;
                        if w == 0.0 {
                            continue;
                        }
                        let t_sum: f64 = targets.row(r).iter().sum();
                        for ((o, p), t) in g.row_mut(r).iter_mut().zip(probs.row(r)).zip(targets.row(r)) {
                            *o = w * (t_sum * p - t);
                        }
                    }
                    accumulate(&mut grads, *logits, g);
                }
            }
        }

        self.params
            .iter()
            .filter_map(|(&index, &v)| grads[v.0].take().map(|g| (index, g)))
            .collect()
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Central differences over every parameter entry.
    fn check(params: &mut ParamSet, f: impl Fn(&mut Graph, &ParamSet) -> Var) {
        let mut g = Graph::new();
        let out = f(&mut g, params);
        let analytic = g.backward(out);
        let h = 1e-6;
        for idx in 0..params.len() {
            for k in 0..params.get(idx).data().len() {
                let orig = params.get(idx).data()[k];
                params.get_mut(idx).data_mut()[k] = orig + h;
                let mut g1 = Graph::new();
                let o1 = f(&mut g1, params);
                let plus = g1.scalar(o1);
                params.get_mut(idx).data_mut()[k] = orig - h;
                let mut g2 = Graph::new();
                let o2 = f(&mut g2, params);
                let minus = g2.scalar(o2);
                params.get_mut(idx).data_mut()[k] = orig;
                let numeric = (plus - minus) / (2.0 * h);
                let a = analytic.get(&idx).map_or(0.0, |m| m.data()[k]);
                let denom = a.abs().max(numeric.abs()).max(1e-8);
                assert!(
                    (a - numeric).abs() / denom < 1e-5 || (a - numeric).abs() < 1e-9,
                    "param {idx}[{k}]: analytic {a} vs numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn elementwise_and_matmul_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = ParamSet::new();
        p.push("a", Matrix::random_normal(3, 4, 1.0, &mut rng));
        p.push("b", Matrix::random_normal(4, 2, 1.0, &mut rng));
        p.push("c", Matrix::random_normal(3, 4, 1.0, &mut rng));
        p.push("row", Matrix::random_normal(1, 2, 1.0, &mut rng));
        check(&mut p, |g, p| {
            let a = g.param(p, 0);
            let b = g.param(p, 1);
            let c = g.param(p, 2);
            let row = g.param(p, 3);
            let ab = g.matmul(a, b);
            let cb = g.matmul(c, b);
            let s = g.sub(ab, cb);
            let s = g.add_row(s, row);
            let r = g.relu(s);
            let m = g.mul(r, ab);
            let t = g.matmul_t(a, c);
            let t = g.abs(t);
            let t = g.sum_all(t);
            let m = g.sum_all(m);
            let sum = g.add(m, t);
            g.scale(sum, 0.5)
        });
    }

    #[test]
    fn softmax_layernorm_loss_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = ParamSet::new();
        p.push("x", Matrix::random_normal(3, 5, 1.0, &mut rng));
        p.push("gain", Matrix::random_normal(1, 5, 1.0, &mut rng));
        p.push("bias", Matrix::random_normal(1, 5, 1.0, &mut rng));
        p.push("table", Matrix::random_normal(4, 5, 1.0, &mut rng));
        let targets = Matrix::from_rows(&[
            vec![0.7, 0.1, 0.1, 0.1, 0.0],
            vec![0.0, 0.0, 1.0, 0.0, 0.0],
            vec![0.2, 0.2, 0.2, 0.2, 0.2],
        ])
        .unwrap();
        check(&mut p, move |g, p| {
            let x = g.param(p, 0);
            let gain = g.param(p, 1);
            let bias = g.param(p, 2);
            let table = g.param(p, 3);
            let e = g.gather(table, &[1, 3, 1]);
            let x = g.add(x, e);
            let ln = g.layer_norm(x, gain, bias, 1e-5);
            let sm = g.causal_softmax(ln);
            let sm2 = g.softmax(ln);
            let prod = g.mul(sm, sm2);
            let mixed = g.add(ln, prod);
            let half = g.slice_cols(mixed, 1, 2);
            let rest = g.slice_cols(mixed, 3, 2);
            let first = g.slice_cols(mixed, 0, 1);
            let cat = g.concat_cols(&[rest, first, half]);
            g.soft_target_loss(cat, targets.clone(), vec![0.5, 0.0, 1.0])
        });
    }

    #[test]
    fn cosine_style_scalar_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = ParamSet::new();
        p.push("a", Matrix::random_normal(2, 3, 1.0, &mut rng));
        p.push("b", Matrix::random_normal(1, 3, 1.0, &mut rng));
        check(&mut p, |g, p| {
            let a = g.param(p, 0);
            let b = g.param(p, 1);
            let u = g.mean_rows(a);
            let dot = g.mul(u, b);
            let dot = g.sum_all(dot);
            let uu = g.mul(u, u);
            let uu = g.sum_all(uu);
            let bb = g.mul(b, b);
            let bb = g.sum_all(bb);
            let nn = g.mul(uu, bb);
            let nn = g.sqrt(nn);
            let cos = g.div(dot, nn);
            let shifted = g.add_scalar(cos, -0.3);
            g.mul(shifted, shifted)
        });
    }
}
