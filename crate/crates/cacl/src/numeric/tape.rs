//! Reverse-mode differentiation over a fixed set of matrix operators.
//!
//! A [`Tape`] records one forward computation as a flat list of nodes; calling
//! [`Tape::backward`] on a 1x1 result node fills gradients for every recorded
//! node, and [`Tape::accumulate_param_grads`] adds the leaf gradients into a
//! [`ParamStore`]. Tapes are cheap and single-use: build, backward, drop.

use std::rc::Rc;

use crate::{CaclError, Result};

use super::matrix::{sigmoid_scalar, LEAKY_SLOPE};
use super::{Matrix, ParamId, ParamStore};

/// Norm floor in `normalize_rows`; rows at or below it divide by the floor
/// instead, keeping the backward pass finite for zero rows.
const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TapeId(usize);

/// Sparse row-to-row linear map: `out[o] += w * in[i]` for each `(o, i, w)`.
#[derive(Debug, Clone)]
pub struct SparseMap {
    pub n_out: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

#[derive(Debug)]
enum Op {
    Const,
    Param(ParamId),
    MatMul(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Hadamard(usize, usize),
    ConcatCols(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    LeakyRelu(usize),
    Sigmoid(usize),
    Exp(usize),
    Ln(usize),
    Clamp(usize, f64, f64),
    NormalizeRows(usize),
    RowSums(usize),
    Sum(usize),
    MeanAgg(usize, Rc<Vec<Vec<usize>>>),
    WeightedAgg(usize, Rc<SparseMap>),
    PairDots(usize, Rc<Vec<(usize, usize)>>),
    SoftmaxCrossEntropy(usize, Rc<Vec<Option<usize>>>),
}

struct Node {
    value: Rc<Matrix>,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Matrix>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Matrix, op: Op) -> TapeId {
        self.push_rc(Rc::new(value), op)
    }

    fn push_rc(&mut self, value: Rc<Matrix>, op: Op) -> TapeId {
        let (r, c) = value.shape();
        self.nodes.push(Node { value, op });
        self.grads.push(Matrix::zeros(r, c));
        TapeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: TapeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    /// Value of a 1x1 node.
    pub fn scalar(&self, id: TapeId) -> f64 {
        debug_assert_eq!(self.value(id).shape(), (1, 1));
        self.value(id).get(0, 0)
    }

    pub fn grad(&self, id: TapeId) -> &Matrix {
        &self.grads[id.0]
    }

    pub fn constant(&mut self, m: Matrix) -> TapeId {
        self.push(m, Op::Const)
    }

    pub fn constant_shared(&mut self, m: Rc<Matrix>) -> TapeId {
        self.push_rc(m, Op::Const)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> TapeId {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: TapeId, b: TapeId) -> Result<TapeId> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a.0, b.0)))
    }

    pub fn transpose(&mut self, a: TapeId) -> TapeId {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a.0))
    }

    pub fn add(&mut self, a: TapeId, b: TapeId) -> Result<TapeId> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(v, Op::Add(a.0, b.0)))
    }

    pub fn sub(&mut self, a: TapeId, b: TapeId) -> Result<TapeId> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.push(v, Op::Sub(a.0, b.0)))
    }

    pub fn hadamard(&mut self, a: TapeId, b: TapeId) -> Result<TapeId> {
        let v = self.value(a).hadamard(self.value(b))?;
        Ok(self.push(v, Op::Hadamard(a.0, b.0)))
    }

    pub fn concat_cols(&mut self, a: TapeId, b: TapeId) -> Result<TapeId> {
        let (ra, ca) = self.value(a).shape();
        let (rb, cb) = self.value(b).shape();
        if ra != rb {
            return Err(CaclError::Shape(format!(
                "concat_cols row mismatch: {ra} vs {rb}"
            )));
        }
        let mut v = Matrix::zeros(ra, ca + cb);
        for i in 0..ra {
            v.row_mut(i)[..ca].copy_from_slice(self.value(a).row(i));
            v.row_mut(i)[ca..].copy_from_slice(self.value(b).row(i));
        }
        Ok(self.push(v, Op::ConcatCols(a.0, b.0)))
    }

    pub fn scale(&mut self, a: TapeId, c: f64) -> TapeId {
        let v = self.value(a).scale(c);
        self.push(v, Op::Scale(a.0, c))
    }

    pub fn add_scalar(&mut self, a: TapeId, c: f64) -> TapeId {
        let v = self.value(a).map(|x| x + c);
        self.push(v, Op::AddScalar(a.0))
    }

    pub fn leaky_relu(&mut self, a: TapeId) -> TapeId {
        let v = self.value(a).leaky_relu();
        self.push(v, Op::LeakyRelu(a.0))
    }

    pub fn sigmoid(&mut self, a: TapeId) -> TapeId {
        let v = self.value(a).sigmoid();
        self.push(v, Op::Sigmoid(a.0))
    }

    pub fn exp(&mut self, a: TapeId) -> TapeId {
        let v = self.value(a).map(f64::exp);
        self.push(v, Op::Exp(a.0))
    }

    /// Natural log; callers must keep inputs positive (clamp first).
    pub fn ln(&mut self, a: TapeId) -> TapeId {
        let v = self.value(a).map(f64::ln);
        self.push(v, Op::Ln(a.0))
    }

    pub fn clamp(&mut self, a: TapeId, lo: f64, hi: f64) -> TapeId {
        let v = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(v, Op::Clamp(a.0, lo, hi))
    }

    /// Divides each row by max(its Euclidean norm, a small floor).
    pub fn normalize_rows(&mut self, a: TapeId) -> TapeId {
        let x = self.value(a);
        let mut v = Matrix::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            let n = x.row_norm(i).max(NORM_EPS);
            for (o, xv) in v.row_mut(i).iter_mut().zip(x.row(i)) {
                *o = xv / n;
            }
        }
        self.push(v, Op::NormalizeRows(a.0))
    }

    /// Column vector of row sums.
    pub fn row_sums(&mut self, a: TapeId) -> TapeId {
        let x = self.value(a);
        let mut v = Matrix::zeros(x.rows(), 1);
        for i in 0..x.rows() {
            v.set(i, 0, x.row(i).iter().sum());
        }
        self.push(v, Op::RowSums(a.0))
    }

    pub fn sum(&mut self, a: TapeId) -> TapeId {
        let s = self.value(a).sum();
        let v = Matrix::from_vec(1, 1, vec![s]).expect("1x1");
        self.push(v, Op::Sum(a.0))
    }

    /// Row `g` of the output is the mean of input rows `groups[g]`; empty
    /// groups produce zero rows.
    pub fn mean_agg(&mut self, a: TapeId, groups: Rc<Vec<Vec<usize>>>) -> Result<TapeId> {
        let x = self.value(a);
        let mut v = Matrix::zeros(groups.len(), x.cols());
        for (g, members) in groups.iter().enumerate() {
            if members.is_empty() {
                continue;
            }
            for &m in members {
                if m >= x.rows() {
                    return Err(CaclError::Shape(format!(
                        "mean_agg index {m} out of {} rows",
                        x.rows()
                    )));
                }
                for (o, xv) in v.row_mut(g).iter_mut().zip(x.row(m)) {
                    *o += xv;
                }
            }
            let inv = 1.0 / members.len() as f64;
            v.row_mut(g).iter_mut().for_each(|o| *o *= inv);
        }
        Ok(self.push(v, Op::MeanAgg(a.0, groups)))
    }

    pub fn weighted_agg(&mut self, a: TapeId, map: Rc<SparseMap>) -> Result<TapeId> {
        let x = self.value(a);
        let mut v = Matrix::zeros(map.n_out, x.cols());
        for &(o, i, w) in &map.entries {
            if o >= map.n_out || i >= x.rows() {
                return Err(CaclError::Shape(format!(
                    "weighted_agg entry ({o},{i}) out of bounds"
                )));
            }
            for (ov, xv) in v.row_mut(o).iter_mut().zip(x.row(i)) {
                *ov += w * xv;
            }
        }
        Ok(self.push(v, Op::WeightedAgg(a.0, map)))
    }

    /// Column vector of dot products between row pairs of one matrix.
    pub fn pair_dots(&mut self, a: TapeId, pairs: Rc<Vec<(usize, usize)>>) -> Result<TapeId> {
        let x = self.value(a);
        let mut v = Matrix::zeros(pairs.len(), 1);
        for (p, &(i, j)) in pairs.iter().enumerate() {
            if i >= x.rows() || j >= x.rows() {
                return Err(CaclError::Shape(format!(
                    "pair_dots pair ({i},{j}) out of {} rows",
                    x.rows()
                )));
            }
            v.set(p, 0, super::matrix::dot(x.row(i), x.row(j)));
        }
        Ok(self.push(v, Op::PairDots(a.0, pairs)))
    }

    /// Mean softmax cross-entropy over rows with `Some(label)`; rows with
    /// `None` contribute nothing. Log-sum-exp is max-shifted for stability.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: TapeId,
        labels: Rc<Vec<Option<usize>>>,
    ) -> Result<TapeId> {
        let x = self.value(logits);
        if labels.len() != x.rows() {
            return Err(CaclError::Shape(format!(
                "labels length {} vs {} logit rows",
                labels.len(),
                x.rows()
            )));
        }
        let mut count = 0usize;
        let mut total = 0.0;
        for (i, lab) in labels.iter().enumerate() {
            let Some(y) = lab else { continue };
            if *y >= x.cols() {
                return Err(CaclError::InvalidArgument(format!(
                    "label {y} out of range for {} classes",
                    x.cols()
                )));
            }
            let row = x.row(i);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            total += lse - row[*y];
            count += 1;
        }
        if count == 0 {
            return Err(CaclError::InvalidArgument(
                "softmax_cross_entropy: no labeled rows".into(),
            ));
        }
        let v = Matrix::from_vec(1, 1, vec![total / count as f64]).expect("1x1");
        Ok(self.push(v, Op::SoftmaxCrossEntropy(logits.0, labels)))
    }

    /// Backpropagates from a 1x1 `root` (seed gradient 1).
    pub fn backward(&mut self, root: TapeId) -> Result<()> {
        if self.value(root).shape() != (1, 1) {
            return Err(CaclError::Shape(format!(
                "backward root must be 1x1, got {:?}",
                self.value(root).shape()
            )));
        }
        self.grads[root.0].set(0, 0, 1.0);
        for idx in (0..=root.0).rev() {
            let g = std::mem::take(&mut self.grads[idx]);
            if g.data().iter().all(|&x| x == 0.0) {
                self.grads[idx] = g;
                continue;
            }
            match &self.nodes[idx].op {
                Op::Const | Op::Param(_) => {}
                Op::MatMul(a, b) => {
                    let (a, b) = (*a, *b);
                    let da = g.matmul_nt(&self.nodes[b].value)?;
                    let db = self.nodes[a].value.matmul_tn(&g)?;
                    self.grads[a].add_scaled(&da, 1.0)?;
                    self.grads[b].add_scaled(&db, 1.0)?;
                }
                Op::Transpose(a) => {
                    let a = *a;
                    let gt = g.transpose();
                    self.grads[a].add_scaled(&gt, 1.0)?;
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    self.grads[a].add_scaled(&g, 1.0)?;
                    self.grads[b].add_scaled(&g, 1.0)?;
                }
                Op::Sub(a, b) => {
                    let (a, b) = (*a, *b);
                    self.grads[a].add_scaled(&g, 1.0)?;
                    self.grads[b].add_scaled(&g, -1.0)?;
                }
                Op::Hadamard(a, b) => {
                    let (a, b) = (*a, *b);
                    let da = g.hadamard(&self.nodes[b].value)?;
                    let db = g.hadamard(&self.nodes[a].value)?;
                    self.grads[a].add_scaled(&da, 1.0)?;
                    self.grads[b].add_scaled(&db, 1.0)?;
                }
                Op::ConcatCols(a, b) => {
                    let (a, b) = (*a, *b);
                    let ca = self.nodes[a].value.cols();
                    let mut da = Matrix::zeros(g.rows(), ca);
                    let mut db = Matrix::zeros(g.rows(), g.cols() - ca);
                    for i in 0..g.rows() {
                        da.row_mut(i).copy_from_slice(&g.row(i)[..ca]);
                        db.row_mut(i).copy_from_slice(&g.row(i)[ca..]);
                    }
                    self.grads[a].add_scaled(&da, 1.0)?;
                    self.grads[b].add_scaled(&db, 1.0)?;
                }
                Op::Scale(a, c) => {
                    let (a, c) = (*a, *c);
                    self.grads[a].add_scaled(&g, c)?;
                }
                Op::AddScalar(a) => {
                    let a = *a;
                    self.grads[a].add_scaled(&g, 1.0)?;
                }
                Op::LeakyRelu(a) => {
                    let a = *a;
                    let da = g.zip_map(&self.nodes[a].value, |gv, xv| {
                        if xv >= 0.0 {
                            gv
                        } else {
                            LEAKY_SLOPE * gv
                        }
                    })?;
                    self.grads[a].add_scaled(&da, 1.0)?;
                }
                Op::Sigmoid(a) => {
                    let a = *a;
                    let da = g.zip_map(&self.nodes[idx].value, |gv, yv| gv * yv * (1.0 - yv))?;
                    self.grads[a].add_scaled(&da, 1.0)?;
                }
                Op::Exp(a) => {
                    let a = *a;
                    let da = g.hadamard(&self.nodes[idx].value)?;
                    self.grads[a].add_scaled(&da, 1.0)?;
                }
                Op::Ln(a) => {
                    let a = *a;
                    let da = g.zip_map(&self.nodes[a].value, |gv, xv| gv / xv)?;
                    self.grads[a].add_scaled(&da, 1.0)?;
                }
                Op::Clamp(a, lo, hi) => {
                    let (a, lo, hi) = (*a, *lo, *hi);
                    let da = g.zip_map(&self.nodes[a].value, |gv, xv| {
                        if xv > lo && xv < hi {
                            gv
                        } else {
                            0.0
                        }
                    })?;
                    self.grads[a].add_scaled(&da, 1.0)?;
                }
                Op::NormalizeRows(a) => {
                    let a = *a;
                    let x = Rc::clone(&self.nodes[a].value);
                    let y = Rc::clone(&self.nodes[idx].value);
                    let mut da = Matrix::zeros(x.rows(), x.cols());
                    for i in 0..x.rows() {
                        let n = x.row_norm(i).max(NORM_EPS);
                        let yg = super::matrix::dot(y.row(i), g.row(i));
                        for ((d, gv), yv) in
                            da.row_mut(i).iter_mut().zip(g.row(i)).zip(y.row(i))
                        {
                            *d = (gv - yv * yg) / n;
                        }
                    }
                    self.grads[a].add_scaled(&da, 1.0)?;
                }
                Op::RowSums(a) => {
                    let a = *a;
                    let mut da = Matrix::zeros(self.nodes[a].value.rows(), self.nodes[a].value.cols());
                    for i in 0..da.rows() {
                        let gi = g.get(i, 0);
                        da.row_mut(i).iter_mut().for_each(|d| *d = gi);
                    }
                    self.grads[a].add_scaled(&da, 1.0)?;
                }
                Op::Sum(a) => {
                    let a = *a;
                    let gv = g.get(0, 0);
                    let (r, c) = self.nodes[a].value.shape();
                    let mut da = Matrix::zeros(r, c);
                    da.fill(gv);
                    self.grads[a].add_scaled(&da, 1.0)?;
                }
                Op::MeanAgg(a, groups) => {
                    let a = *a;
                    let groups = Rc::clone(groups);
                    let mut da =
                        Matrix::zeros(self.nodes[a].value.rows(), self.nodes[a].value.cols());
                    for (gi, members) in groups.iter().enumerate() {
                        if members.is_empty() {
                            continue;
                        }
                        let inv = 1.0 / members.len() as f64;
                        for &m in members {
                            for (d, gv) in da.row_mut(m).iter_mut().zip(g.row(gi)) {
                                *d += inv * gv;
                            }
                        }
                    }
                    self.grads[a].add_scaled(&da, 1.0)?;
                }
                Op::WeightedAgg(a, map) => {
                    let a = *a;
                    let map = Rc::clone(map);
                    let mut da =
                        Matrix::zeros(self.nodes[a].value.rows(), self.nodes[a].value.cols());
                    for &(o, i, w) in &map.entries {
                        for (d, gv) in da.row_mut(i).iter_mut().zip(g.row(o)) {
                            *d += w * gv;
                        }
                    }
                    self.grads[a].add_scaled(&da, 1.0)?;
                }
                Op::PairDots(a, pairs) => {
                    let a = *a;
                    let pairs = Rc::clone(pairs);
                    let x = Rc::clone(&self.nodes[a].value);
                    let mut da = Matrix::zeros(x.rows(), x.cols());
                    for (p, &(i, j)) in pairs.iter().enumerate() {
                        let gp = g.get(p, 0);
                        for (d, xv) in da.row_mut(i).iter_mut().zip(x.row(j)) {
                            *d += gp * xv;
                        }
                        for (d, xv) in da.row_mut(j).iter_mut().zip(x.row(i)) {
                            *d += gp * xv;
                        }
                    }
                    self.grads[a].add_scaled(&da, 1.0)?;
                }
                Op::SoftmaxCrossEntropy(a, labels) => {
                    let a = *a;
                    let labels = Rc::clone(labels);
                    let x = Rc::clone(&self.nodes[a].value);
                    let count = labels.iter().flatten().count() as f64;
                    let gv = g.get(0, 0);
                    let mut da = Matrix::zeros(x.rows(), x.cols());
                    for (i, lab) in labels.iter().enumerate() {
                        let Some(y) = lab else { continue };
                        let row = x.row(i);
                        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let denom: f64 = row.iter().map(|v| (v - m).exp()).sum();
                        for (j, d) in da.row_mut(i).iter_mut().enumerate() {
                            let p = (row[j] - m).exp() / denom;
                            *d = gv * (p - if j == *y { 1.0 } else { 0.0 }) / count;
                        }
                    }
                    self.grads[a].add_scaled(&da, 1.0)?;
                }
            }
            self.grads[idx] = g;
        }
        Ok(())
    }

    /// Adds every param leaf's gradient into the store. Leaves sharing one
    /// [`ParamId`] accumulate into the same slot.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore) -> Result<()> {
        for (node, grad) in self.nodes.iter().zip(&self.grads) {
            if let Op::Param(id) = node.op {
                store.grad_mut(id).add_scaled(grad, 1.0)?;
            }
        }
        Ok(())
    }
}

// Convenience wrappers for plain (untracked) use of the same numerics.

/// Mean softmax cross-entropy over rows with `Some(label)`.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[Option<usize>]) -> Result<f64> {
    let mut tape = Tape::new();
    let l = tape.constant(logits.clone());
    let out = tape.softmax_cross_entropy(l, Rc::new(labels.to_vec()))?;
    Ok(tape.scalar(out))
}

/// Untracked sigmoid of a dot product, the edge score used for link
/// prediction.
pub fn edge_score(hi: &[f64], hj: &[f64]) -> f64 {
    sigmoid_scalar(super::matrix::dot(hi, hj))
}
