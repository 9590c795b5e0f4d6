//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! Every operation appends a node holding its value and enough state for
//! the backward pass. Parameters enter through [`Tape::param`], which caches
//! one node per parameter so gradients accumulate in one place.

use ndarray::{s, Array1, Array2, Axis};

use super::params::{BufferId, ParamId, ParamStore};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Row-sparse matrix used for neighborhood aggregation: output row `i` is
/// `Σ w · x[j]` over `rows[i]`.
#[derive(Debug, Clone, Default)]
pub struct Sparse {
    pub rows: Vec<Vec<(usize, f64)>>,
}

enum Op {
    Input,
    Param(ParamId),
    Linear { x: Var, w: Var, b: Var },
    Add(Var, Var),
    Sub(Var, Var),
    Relu(Var),
    Tanh(Var),
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Array2<f64>, inv_std: Array1<f64>, batch: bool },
    ConcatCols(Vec<Var>),
    SliceCols { x: Var, start: usize },
    GatherRows { x: Var, idx: Vec<usize> },
    ConcatRows(Vec<Var>),
    Aggregate { x: Var, map: Sparse },
    SegmentMax { x: Var, argmax: Array2<usize> },
    SoftmaxCe { logits: Var, targets: Vec<usize>, probs: Array2<f64>, scale: f64 },
    Mse { x: Var, target: Array2<f64>, scale: f64 },
    WeightedSum(Vec<(Var, f64)>),
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

/// Batch statistics observed by a training-mode batch norm; the unbiased
/// variance is what the running average consumes.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub mean: BufferId,
    pub var: BufferId,
    pub batch_mean: Array1<f64>,
    pub batch_var_unbiased: Array1<f64>,
}

pub struct Tape {
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
    first_non_finite: Option<String>,
    /// ReLU masks and max-pool winners, in execution order. Two forward
    /// passes with equal signatures are on the same smooth piece.
    signature: Vec<u64>,
    pub bn_stats: Vec<BatchStats>,
}

impl Tape {
    pub fn new(store: &ParamStore) -> Self {
        Self {
            nodes: Vec::new(),
            param_vars: vec![None; store.len()],
            first_non_finite: None,
            signature: Vec::new(),
            bn_stats: Vec::new(),
        }
    }

    fn push(&mut self, value: Array2<f64>, op: Op, label: &str) -> Var {
        if self.first_non_finite.is_none() && !value.iter().all(|v| v.is_finite()) {
            self.first_non_finite = Some(label.to_string());
        }
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn signature(&self) -> &[u64] {
        &self.signature
    }

    /// Error naming the first tensor that became non-finite, if any.
    pub fn check_finite(&self) -> Result<()> {
        match &self.first_non_finite {
            Some(label) => Err(Error::NonFinite { tensor: label.clone() }),
            None => Ok(()),
        }
    }

    pub fn input(&mut self, value: Array2<f64>, label: &str) -> Var {
        self.push(value, Op::Input, label)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param(id), store.name(id));
        self.param_vars[id.0] = Some(v);
        v
    }

    /// `x · w + b` with `w` of shape `(in, out)` and `b` of shape `(1, out)`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var, label: &str) -> Var {
        let value = self.value(x).dot(self.value(w)) + self.value(b);
        self.push(value, Op::Linear { x, w, b }, label)
    }

    pub fn add(&mut self, a: Var, b: Var, label: &str) -> Var {
        let value = self.value(a) + self.value(b);
        self.push(value, Op::Add(a, b), label)
    }

    pub fn sub(&mut self, a: Var, b: Var, label: &str) -> Var {
        let value = self.value(a) - self.value(b);
        self.push(value, Op::Sub(a, b), label)
    }

    pub fn relu(&mut self, x: Var, label: &str) -> Var {
        let value = self.value(x).mapv(|v| v.max(0.0));
        let mut word = 0u64;
        for (k, v) in self.value(x).iter().enumerate() {
            if *v > 0.0 {
                word ^= (k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            }
        }
        self.signature.push(word);
        self.push(value, Op::Relu(x), label)
    }

    pub fn tanh(&mut self, x: Var, label: &str) -> Var {
        let value = self.value(x).mapv(f64::tanh);
        self.push(value, Op::Tanh(x), label)
    }

    /// Batch normalization over rows. With `batch` the current rows supply
    /// the statistics (recorded in `bn_stats`); otherwise the running
    /// buffers do.
    pub fn batch_norm(
        &mut self,
        store: &ParamStore,
        x: Var,
        gamma: Var,
        beta: Var,
        running: (BufferId, BufferId),
        batch: bool,
        label: &str,
    ) -> Var {
        let n = self.value(x).nrows();
        let (mean, var) = if batch && n > 0 {
            let xv = self.value(x);
            let mean = xv.mean_axis(Axis(0)).expect("non-empty batch");
            let var = (xv - &mean).mapv(|v| v * v).mean_axis(Axis(0)).expect("non-empty batch");
            let unbiased = if n > 1 { &var * (n as f64 / (n as f64 - 1.0)) } else { var.clone() };
            self.bn_stats.push(BatchStats {
                mean: running.0,
                var: running.1,
                batch_mean: mean.clone(),
                batch_var_unbiased: unbiased,
            });
            (mean, var)
        } else {
            (store.buffer(running.0).row(0).to_owned(), store.buffer(running.1).row(0).to_owned())
        };
        let xv = self.value(x);
        let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
        let xhat = (xv - &mean) * &inv_std;
        let value = &xhat * self.value(gamma) + self.value(beta);
        let batch = batch && n > 0;
        self.push(value, Op::BatchNorm { x, gamma, beta, xhat, inv_std, batch }, label)
    }

    pub fn concat_cols(&mut self, parts: &[Var], label: &str) -> Var {
        let views: Vec<_> = parts.iter().map(|v| self.value(*v).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("row counts agree");
        self.push(value, Op::ConcatCols(parts.to_vec()), label)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize, label: &str) -> Var {
        let value = self.value(x).slice(s![.., start..end]).to_owned();
        self.push(value, Op::SliceCols { x, start }, label)
    }

    pub fn gather_rows(&mut self, x: Var, idx: &[usize], label: &str) -> Var {
        let value = self.value(x).select(Axis(0), idx);
        self.push(value, Op::GatherRows { x, idx: idx.to_vec() }, label)
    }

    pub fn concat_rows(&mut self, parts: &[Var], label: &str) -> Var {
        let views: Vec<_> = parts.iter().map(|v| self.value(*v).view()).collect();
        let value = ndarray::concatenate(Axis(0), &views).expect("column counts agree");
        self.push(value, Op::ConcatRows(parts.to_vec()), label)
    }

    pub fn aggregate(&mut self, x: Var, map: Sparse, label: &str) -> Var {
        let xv = self.value(x);
        let mut value = Array2::zeros((map.rows.len(), xv.ncols()));
        for (i, row) in map.rows.iter().enumerate() {
            let mut out = value.row_mut(i);
            for &(j, w) in row {
                out.scaled_add(w, &xv.row(j));
            }
        }
        self.push(value, Op::Aggregate { x, map }, label)
    }

    /// Column-wise max over each contiguous row segment. Ties go to the
    /// first row.
    pub fn segment_max(&mut self, x: Var, segments: &[(usize, usize)], label: &str) -> Var {
        let xv = self.value(x);
        let c = xv.ncols();
        let mut value = Array2::zeros((segments.len(), c));
        let mut argmax = Array2::zeros((segments.len(), c));
        for (b, &(lo, hi)) in segments.iter().enumerate() {
            for k in 0..c {
                let mut best = lo;
                for r in lo + 1..hi {
                    if xv[[r, k]] > xv[[best, k]] {
                        best = r;
                    }
                }
                value[[b, k]] = xv[[best, k]];
                argmax[[b, k]] = best;
            }
        }
        let mut word = 0u64;
        for (k, a) in argmax.iter().enumerate() {
            word = word.rotate_left(7) ^ ((*a as u64) << 20 ^ k as u64);
        }
        self.signature.push(word);
        self.push(value, Op::SegmentMax { x, argmax }, label)
    }

    /// `scale · Σ_i −log softmax(logits_i)[targets_i]` as a 1×1 value.
    pub fn softmax_ce(&mut self, logits: Var, targets: &[usize], scale: f64, label: &str) -> Var {
        let lv = self.value(logits);
        let mut probs = lv.clone();
        let mut total = 0.0;
        for (i, mut row) in probs.rows_mut().into_iter().enumerate() {
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            row.mapv_inplace(|v| (v - m).exp());
            let z = row.sum();
            row.mapv_inplace(|v| v / z);
            total -= (lv[[i, targets[i]]] - m - z.ln()) * scale;
        }
        let op = Op::SoftmaxCe { logits, targets: targets.to_vec(), probs, scale };
        self.push(Array2::from_elem((1, 1), total), op, label)
    }

    /// `scale · Σ (x − target)²` as a 1×1 value.
    pub fn mse(&mut self, x: Var, target: Array2<f64>, scale: f64, label: &str) -> Var {
        let total = (self.value(x) - &target).mapv(|v| v * v).sum() * scale;
        self.push(Array2::from_elem((1, 1), total), Op::Mse { x, target, scale }, label)
    }

    pub fn weighted_sum(&mut self, terms: &[(Var, f64)], label: &str) -> Var {
        let total = terms.iter().map(|(v, w)| self.scalar(*v) * w).sum::<f64>();
        self.push(Array2::from_elem((1, 1), total), Op::WeightedSum(terms.to_vec()), label)
    }

    /// Back-propagates from the scalar `root` and adds parameter gradients
    /// into `grads` (one array per parameter, shaped like it).
    pub fn backward(&self, root: Var, grads: &mut [Array2<f64>]) -> Result<()> {
        self.check_finite()?;
        let mut adj: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[root.0] = Some(Array2::ones((1, 1)));
        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            let mut send = |v: Var, d: Array2<f64>| match &mut adj[v.0] {
                Some(acc) => *acc += &d,
                slot => *slot = Some(d),
            };
            match &node.op {
                Op::Input => {}
                Op::Param(id) => grads[id.0] += &g,
                Op::Linear { x, w, b } => {
                    send(*x, g.dot(&self.value(*w).t()));
                    send(*w, self.value(*x).t().dot(&g));
                    send(*b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                Op::Add(a, b) => {
                    send(*a, g.clone());
                    send(*b, g);
                }
                Op::Sub(a, b) => {
                    send(*b, -&g);
                    send(*a, g);
                }
                Op::Relu(x) => {
                    let mut d = g;
                    ndarray::Zip::from(&mut d).and(self.value(*x)).for_each(|d, &v| {
                        if v <= 0.0 {
                            *d = 0.0;
                        }
                    });
                    send(*x, d);
                }
                Op::Tanh(x) => {
                    let _ = x;
                    let d = &g * &node.value.mapv(|y| 1.0 - y * y);
                    send(*x, d);
                }
                Op::BatchNorm { x, gamma, beta, xhat, inv_std, batch } => {
                    send(*beta, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    send(*gamma, (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                    let dxhat = &g * self.value(*gamma);
                    let dx = if *batch {
                        let n = g.nrows() as f64;
                        let sum = dxhat.sum_axis(Axis(0));
                        let dot = (&dxhat * xhat).sum_axis(Axis(0));
                        ((&dxhat * n) - &sum - &(xhat * &dot)) * &(inv_std / n)
                    } else {
                        dxhat * inv_std
                    };
                    send(*x, dx);
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        send(*p, g.slice(s![.., start..start + w]).to_owned());
                        start += w;
                    }
                }
                Op::SliceCols { x, start } => {
                    let xv = self.value(*x);
                    let mut d = Array2::zeros(xv.raw_dim());
                    d.slice_mut(s![.., *start..*start + g.ncols()]).assign(&g);
                    send(*x, d);
                }
                Op::GatherRows { x, idx } => {
                    let mut d = Array2::zeros(self.value(*x).raw_dim());
                    for (r, &j) in idx.iter().enumerate() {
                        let mut row = d.row_mut(j);
                        row += &g.row(r);
                    }
                    send(*x, d);
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let h = self.value(*p).nrows();
                        send(*p, g.slice(s![start..start + h, ..]).to_owned());
                        start += h;
                    }
                }
                Op::Aggregate { x, map } => {
                    let mut d = Array2::zeros(self.value(*x).raw_dim());
                    for (i, row) in map.rows.iter().enumerate() {
                        for &(j, w) in row {
                            d.row_mut(j).scaled_add(w, &g.row(i));
                        }
                    }
                    send(*x, d);
                }
                Op::SegmentMax { x, argmax } => {
                    let mut d = Array2::zeros(self.value(*x).raw_dim());
                    for ((b, k), &r) in argmax.indexed_iter() {
                        d[[r, k]] += g[[b, k]];
                    }
                    send(*x, d);
                }
                Op::SoftmaxCe { logits, targets, probs, scale } => {
                    let mut d = probs.clone();
                    for (i, &t) in targets.iter().enumerate() {
                        d[[i, t]] -= 1.0;
                    }
                    send(*logits, d * (scale * g[[0, 0]]));
                }
                Op::Mse { x, target, scale } => {
                    send(*x, (self.value(*x) - target) * (2.0 * scale * g[[0, 0]]));
                }
                Op::WeightedSum(terms) => {
                    for (v, w) in terms {
                        send(*v, Array2::from_elem((1, 1), w * g[[0, 0]]));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn store_with(values: Vec<Array2<f64>>) -> (ParamStore, Vec<ParamId>) {
        let mut store = ParamStore::default();
        let ids = values.into_iter().enumerate().map(|(i, v)| store.add(&format!("p{i}"), v)).collect();
        (store, ids)
    }

    #[test]
    fn linear_gradient_by_hand() {
        let (store, ids) = store_with(vec![array![[1.0, 2.0], [3.0, 4.0]], array![[0.5, -0.5]]]);
        let mut tape = Tape::new(&store);
        let x = tape.input(array![[1.0, -1.0]], "x");
        let w = tape.param(&store, ids[0]);
        let b = tape.param(&store, ids[1]);
        let y = tape.linear(x, w, b, "y");
        assert_eq!(tape.value(y), &array![[-1.5, -2.5]]);
        let loss = tape.mse(y, Array2::zeros((1, 2)), 1.0, "loss");
        let mut grads = store.zero_grads();
        tape.backward(loss, &mut grads).unwrap();
        // dL/dy = 2y = [-3, -5]; dW = x^T dy
        assert_eq!(grads[0], array![[-3.0, -5.0], [3.0, 5.0]]);
        assert_eq!(grads[1], array![[-3.0, -5.0]]);
    }

    #[test]
    fn max_pool_routes_to_argmax() {
        let (store, ids) = store_with(vec![array![[1.0, 5.0], [3.0, 2.0], [0.0, 7.0]]]);
        let mut tape = Tape::new(&store);
        let x = tape.param(&store, ids[0]);
        let m = tape.segment_max(x, &[(0, 2), (2, 3)], "max");
        assert_eq!(tape.value(m), &array![[3.0, 5.0], [0.0, 7.0]]);
        let loss = tape.mse(m, Array2::zeros((2, 2)), 0.5, "loss");
        let mut grads = store.zero_grads();
        tape.backward(loss, &mut grads).unwrap();
        assert_eq!(grads[0], array![[0.0, 5.0], [3.0, 0.0], [0.0, 7.0]]);
    }

    #[test]
    fn softmax_ce_of_confident_logits_is_zero() {
        let (store, _) = store_with(vec![]);
        let mut tape = Tape::new(&store);
        let l = tape.input(array![[800.0, 0.0, 0.0], [0.0, 0.0, 800.0]], "logits");
        let ce = tape.softmax_ce(l, &[0, 2], 1.0, "ce");
        assert_eq!(tape.scalar(ce), 0.0);
    }

    #[test]
    fn non_finite_is_named() {
        let (store, _) = store_with(vec![]);
        let mut tape = Tape::new(&store);
        let x = tape.input(array![[f64::NAN]], "bad input");
        let y = tape.mse(x, Array2::zeros((1, 1)), 1.0, "loss");
        match tape.backward(y, &mut []) {
            Err(Error::NonFinite { tensor }) => assert_eq!(tensor, "bad input"),
            other => panic!("{other:?}"),
        }
    }
}
