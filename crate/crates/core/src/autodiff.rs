//! Reverse-mode differentiation over a linear tape.
//!
//! A [`Tape`] records every primitive applied to its [`Var`] handles in
//! execution order, so the record is topologically sorted by construction.
//! [`Tape::backward`] consumes the tape and returns [`Gradients`] for every
//! leaf.

use std::sync::Arc;

use crate::error::{shape_err, Error, Result};
use crate::mask::{softmax_gathered, AttentionMask};
use crate::tensor::{dot, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Relu(Var),
    Gather { table: Var, indices: Vec<usize> },
    SliceCols { input: Var, start: usize },
    ConcatCols(Vec<Var>),
    SoftmaxMasked { input: Var, mask: Arc<AttentionMask> },
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Tensor },
    SparseAttention(Box<SparseSaved>),
}

#[derive(Debug, Clone)]
struct SparseSaved {
    q: Var,
    k: Var,
    v: Var,
    mask: Arc<AttentionMask>,
    scale: f64,
    probs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Ordered record of primitive operations.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).mul(self.value(b))?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a).scale(factor);
        self.push(out, Op::Scale(a, factor))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v.max(0.0));
        self.push(out, Op::Relu(a))
    }

    /// Embedding lookup: rows of `table` selected by `indices`.
    pub fn gather(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let out = self.value(table).gather_rows(indices)?;
        Ok(self.push(
            out,
            Op::Gather {
                table,
                indices: indices.to_vec(),
            },
        ))
    }

    pub fn slice_cols(&mut self, input: Var, start: usize, len: usize) -> Result<Var> {
        let out = self.value(input).slice_cols(start, len)?;
        Ok(self.push(out, Op::SliceCols { input, start }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let tensors: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Tensor::concat_cols(&tensors)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn softmax_masked(&mut self, input: Var, mask: Arc<AttentionMask>) -> Result<Var> {
        let out = crate::mask::softmax_masked(self.value(input), &mask)?;
        Ok(self.push(out, Op::SoftmaxMasked { input, mask }))
    }

    /// Mean token cross-entropy of row-wise `logits` against `targets`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let lg = self.value(logits);
        if lg.rows() != targets.len() {
            return Err(shape_err(
                "cross_entropy",
                format!("{} rows vs {} targets", lg.rows(), targets.len()),
            ));
        }
        if lg.rows() == 0 {
            return Err(shape_err("cross_entropy", "no targets"));
        }
        let mut probs = Tensor::zeros(lg.rows(), lg.cols());
        let mut loss = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            if t >= lg.cols() {
                return Err(shape_err(
                    "cross_entropy",
                    format!("target {t} outside {} classes", lg.cols()),
                ));
            }
            let row = lg.row(r);
            let p = softmax_gathered(row, None).map_err(|_| Error::Numeric("cross_entropy".into()))?;
            loss -= p[t].ln();
            probs.row_mut(r).copy_from_slice(&p);
        }
        let out = Tensor::scalar(loss / targets.len() as f64);
        Ok(self.push(
            out,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        ))
    }

    /// Attention that evaluates only the cells in `mask`:
    /// `out[i] = Σ_j softmax_j(scale · q_i·k_j) v_j` over `j ∈ mask.row(i)`.
    ///
    /// Returns the output and the number of score cells evaluated.
    pub fn sparse_attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        mask: Arc<AttentionMask>,
        scale: f64,
    ) -> Result<(Var, usize)> {
        let (out, probs) =
            sparse_attention_forward(self.value(q), self.value(k), self.value(v), &mask, scale)?;
        let cells = mask.cell_count();
        let saved = SparseSaved {
            q,
            k,
            v,
            mask,
            scale,
            probs,
        };
        Ok((self.push(out, Op::SparseAttention(Box::new(saved))), cells))
    }

    /// Reverse pass from a scalar `loss`. Consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got {}x{}",
                shape.0, shape.1
            )));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor>> = vec![None; n];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let da = g.matmul_t(&self.nodes[b.0].value)?;
                    let db = self.nodes[a.0].value.transpose().matmul(&g)?;
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.transpose()),
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let da = g.mul(&self.nodes[b.0].value)?;
                    let db = g.mul(&self.nodes[a.0].value)?;
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Scale(a, f) => accumulate(&mut grads, *a, g.scale(*f)),
                Op::Sum(a) => {
                    let (r, c) = self.nodes[a.0].value.shape();
                    accumulate(&mut grads, *a, Tensor::full(r, c, g.item()?));
                }
                Op::Relu(a) => {
                    let mut d = g;
                    for (dv, &x) in d.data_mut().iter_mut().zip(self.nodes[a.0].value.data()) {
                        if x <= 0.0 {
                            *dv = 0.0;
                        }
                    }
                    accumulate(&mut grads, *a, d);
                }
                Op::Gather { table, indices } => {
                    let (r, c) = self.nodes[table.0].value.shape();
                    let mut d = Tensor::zeros(r, c);
                    for (src, &dst) in indices.iter().enumerate() {
                        for (o, gv) in d.row_mut(dst).iter_mut().zip(g.row(src)) {
                            *o += gv;
                        }
                    }
                    accumulate(&mut grads, *table, d);
                }
                Op::SliceCols { input, start } => {
                    let (r, c) = self.nodes[input.0].value.shape();
                    let mut d = Tensor::zeros(r, c);
                    for row in 0..r {
                        d.row_mut(row)[*start..*start + g.cols()].copy_from_slice(g.row(row));
                    }
                    accumulate(&mut grads, *input, d);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let w = self.nodes[p.0].value.cols();
                        accumulate(&mut grads, *p, g.slice_cols(offset, w)?);
                        offset += w;
                    }
                }
                Op::SoftmaxMasked { input, mask } => {
                    let p = &node.value;
                    let mut d = Tensor::zeros(p.rows(), p.cols());
                    for q in 0..p.rows() {
                        let keys = mask.row(q);
                        let inner: f64 = keys.iter().map(|&k| p.get(q, k) * g.get(q, k)).sum();
                        for &k in keys {
                            d.set(q, k, p.get(q, k) * (g.get(q, k) - inner));
                        }
                    }
                    accumulate(&mut grads, *input, d);
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    probs,
                } => {
                    let factor = g.item()? / targets.len() as f64;
                    let mut d = probs.clone();
                    for (r, &t) in targets.iter().enumerate() {
                        let v = d.get(r, t);
                        d.set(r, t, v - 1.0);
                    }
                    accumulate(&mut grads, *logits, d.scale(factor));
                }
                Op::SparseAttention(saved) => {
                    let (dq, dk, dv) = sparse_attention_backward(
                        &self.nodes[saved.q.0].value,
                        &self.nodes[saved.k.0].value,
                        &self.nodes[saved.v.0].value,
                        saved,
                        &g,
                    );
                    accumulate(&mut grads, saved.q, dq);
                    accumulate(&mut grads, saved.k, dk);
                    accumulate(&mut grads, saved.v, dv);
                }
            }
        }

        for (i, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) {
                if grads[i].is_none() {
                    let (r, c) = node.value.shape();
                    grads[i] = Some(Tensor::zeros(r, c));
                }
            } else {
                grads[i] = None;
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], target: Var, delta: Tensor) {
    match &mut grads[target.0] {
        Some(existing) => existing.add_assign(&delta),
        slot @ None => *slot = Some(delta),
    }
}

/// Gradients of every leaf on a consumed tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of a leaf; zeros when the loss does not depend on it.
    /// Returns `None` for non-leaf handles.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

pub(crate) fn sparse_attention_forward(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    mask: &AttentionMask,
    scale: f64,
) -> Result<(Tensor, Vec<Vec<f64>>)> {
    if q.cols() != k.cols() || k.rows() != v.rows() {
        return Err(shape_err(
            "sparse_attention",
            format!("q {:?}, k {:?}, v {:?}", q.shape(), k.shape(), v.shape()),
        ));
    }
    if mask.n_queries() != q.rows() || mask.n_keys() != k.rows() {
        return Err(shape_err(
            "sparse_attention",
            format!(
                "mask {}x{} vs {} queries, {} keys",
                mask.n_queries(),
                mask.n_keys(),
                q.rows(),
                k.rows()
            ),
        ));
    }
    let mut out = Tensor::zeros(q.rows(), v.cols());
    let mut all_probs = Vec::with_capacity(q.rows());
    for i in 0..q.rows() {
        let keys = mask.row(i);
        let qi = q.row(i);
        let scores: Vec<f64> = keys.iter().map(|&j| dot(qi, k.row(j)) * scale).collect();
        let probs =
            softmax_gathered(&scores, mask.soft_row(i)).map_err(|_| Error::EmptyRow { row: i })?;
        let dst = out.row_mut(i);
        for (&j, &p) in keys.iter().zip(&probs) {
            for (o, &x) in dst.iter_mut().zip(v.row(j)) {
                *o += p * x;
            }
        }
        all_probs.push(probs);
    }
    Ok((out, all_probs))
}

fn sparse_attention_backward(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    saved: &SparseSaved,
    g: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let mut dq = Tensor::zeros(q.rows(), q.cols());
    let mut dk = Tensor::zeros(k.rows(), k.cols());
    let mut dv = Tensor::zeros(v.rows(), v.cols());
    for i in 0..q.rows() {
        let keys = saved.mask.row(i);
        let probs = &saved.probs[i];
        let gi = g.row(i);
        let dp: Vec<f64> = keys.iter().map(|&j| dot(gi, v.row(j))).collect();
        let inner: f64 = probs.iter().zip(&dp).map(|(p, d)| p * d).sum();
        for (pos, &j) in keys.iter().enumerate() {
            let p = probs[pos];
            let ds = p * (dp[pos] - inner) * saved.scale;
            for (o, &x) in dv.row_mut(j).iter_mut().zip(gi) {
                *o += p * x;
            }
            if ds != 0.0 {
                for (o, &x) in dq.row_mut(i).iter_mut().zip(k.row(j)) {
                    *o += ds * x;
                }
                for (o, &x) in dk.row_mut(j).iter_mut().zip(q.row(i)) {
                    *o += ds * x;
                }
            }
        }
    }
    (dq, dk, dv)
}

/// Compares the tape gradient of `f` at `x` with central finite differences.
///
/// Returns `max |analytic − numeric| / max(1, |analytic|, |numeric|)` over all
/// elements of `x`.
pub fn finite_difference_check<F>(f: F, x: &Tensor, step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    if step <= 0.0 || !step.is_finite() {
        return Err(Error::Parameter(format!("step must be positive, got {step}")));
    }
    let eval = |point: Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let xv = tape.leaf(point);
        let out = f(&mut tape, xv)?;
        let v = tape.value(out).item()?;
        if !v.is_finite() {
            return Err(Error::Numeric("finite_difference_check evaluation".into()));
        }
        Ok(v)
    };

    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let out = f(&mut tape, xv)?;
    tape.value(out).ensure_finite("finite_difference_check evaluation")?;
    let grads = tape.backward(out)?;
    let analytic = grads.get(xv).expect("leaf gradient").clone();

    let mut worst: f64 = 0.0;
    for idx in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[idx] += step;
        let mut minus = x.clone();
        minus.data_mut()[idx] -= step;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * step);
        let a = analytic.data()[idx];
        let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn grad_of_sum_is_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::randn(3, 4, 1.0, &mut rng(0)));
        let loss = tape.sum(x);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap(), &Tensor::ones(3, 4));
    }

    #[test]
    fn unused_leaf_gets_zeros() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::randn(2, 2, 1.0, &mut rng(1)));
        let y = tape.leaf(Tensor::randn(3, 1, 1.0, &mut rng(2)));
        let loss = tape.sum(x);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(y).unwrap(), &Tensor::zeros(3, 1));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(2, 2));
        assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn softmax_dot_constant_matches_fd() {
        let c = Tensor::randn(3, 5, 1.0, &mut rng(3));
        let x = Tensor::randn(3, 5, 0.1, &mut rng(4));
        let mask = Arc::new(AttentionMask::full(3, 5));
        let err = finite_difference_check(
            |t, x| {
                let p = t.softmax_masked(x, mask.clone())?;
                let cv = t.leaf(c.clone());
                let prod = t.mul(p, cv)?;
                Ok(t.sum(prod))
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn quadratic_exact() {
        let x = Tensor::from_rows(&[&[1.0, 2.0]]);
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let sq = tape.mul(xv, xv).unwrap();
        let loss = tape.sum(sq);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(xv).unwrap().data(), &[2.0, 4.0]);
        let err = finite_difference_check(
            |t, x| {
                let sq = t.mul(x, x)?;
                Ok(t.sum(sq))
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn constant_function_zero_error() {
        let x = Tensor::randn(2, 3, 1.0, &mut rng(5));
        let err = finite_difference_check(
            |t, x| {
                let z = t.scale(x, 0.0);
                Ok(t.sum(z))
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn bad_step_rejected() {
        let x = Tensor::zeros(1, 1);
        assert!(finite_difference_check(|t, x| Ok(t.sum(x)), &x, 0.0).is_err());
    }

    #[test]
    fn non_finite_evaluation_propagates() {
        let x = Tensor::full(1, 1, 1.0);
        let err = finite_difference_check(|t, x| Ok(t.scale(x, f64::INFINITY)), &x, 1e-5);
        assert!(matches!(err, Err(Error::Numeric(_))));
    }

    fn check_primitive(f: impl Fn(&mut Tape, Var) -> Result<Var>, x: Tensor) {
        let err = finite_difference_check(f, &x, 1e-5).unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn every_primitive_matches_fd() {
        let mut r = rng(6);
        let w = Tensor::randn(5, 4, 1.0, &mut r);
        let c = Tensor::randn(6, 4, 1.0, &mut r);
        let x = Tensor::randn(6, 5, 1.0, &mut r);

        check_primitive(
            |t, x| {
                let wv = t.leaf(w.clone());
                let y = t.matmul(x, wv)?;
                let cv = t.leaf(c.clone());
                let y = t.mul(y, cv)?;
                Ok(t.sum(y))
            },
            x.clone(),
        );
        check_primitive(
            |t, x| {
                let xt = t.transpose(x);
                let y = t.matmul(xt, x)?;
                let y = t.relu(y);
                Ok(t.sum(y))
            },
            x.clone(),
        );
        check_primitive(
            |t, x| {
                let a = t.slice_cols(x, 1, 3)?;
                let b = t.slice_cols(x, 0, 2)?;
                let cat = t.concat_cols(&[b, a])?;
                let sq = t.mul(cat, cat)?;
                let s = t.scale(sq, 0.5);
                Ok(t.sum(s))
            },
            x.clone(),
        );
        check_primitive(
            |t, x| {
                let g = t.gather(x, &[0, 3, 3, 5])?;
                let logits = t.scale(g, 2.0);
                t.cross_entropy(logits, &[1, 0, 4, 2])
            },
            x.clone(),
        );
        let mask = Arc::new(
            AttentionMask::from_weighted_rows(
                4,
                vec![
                    vec![(0, 1.0), (2, 0.3)],
                    vec![(1, 1.0)],
                    vec![(0, 0.5), (1, 1.0), (3, 0.8)],
                ],
            )
            .unwrap(),
        );
        let kv = Tensor::randn(4, 5, 1.0, &mut r);
        let vv = Tensor::randn(4, 2, 1.0, &mut r);
        let q = Tensor::randn(3, 5, 1.0, &mut r);
        check_primitive(
            |t, q| {
                let k = t.leaf(kv.clone());
                let v = t.leaf(vv.clone());
                let (o, _) = t.sparse_attention(q, k, v, mask.clone(), 0.7)?;
                let o2 = t.mul(o, o)?;
                Ok(t.sum(o2))
            },
            q.clone(),
        );
        check_primitive(
            |t, k| {
                let qv = t.leaf(q.clone());
                let v = t.leaf(vv.clone());
                let (o, _) = t.sparse_attention(qv, k, v, mask.clone(), 0.7)?;
                let o2 = t.mul(o, o)?;
                Ok(t.sum(o2))
            },
            kv.clone(),
        );
        check_primitive(
            |t, v| {
                let qv = t.leaf(q.clone());
                let k = t.leaf(kv.clone());
                let (o, _) = t.sparse_attention(qv, k, v, mask.clone(), 0.7)?;
                let o2 = t.mul(o, o)?;
                Ok(t.sum(o2))
            },
            vv.clone(),
        );
    }

    #[test]
    fn replay_is_deterministic() {
        let run = || {
            let mut r = rng(42);
            let mut tape = Tape::new();
            let x = tape.leaf(Tensor::randn(4, 4, 1.0, &mut r));
            let y = tape.matmul(x, x).unwrap();
            let l = tape.cross_entropy(y, &[0, 1, 2, 3]).unwrap();
            tape.value(l).item().unwrap()
        };
        assert_eq!(run().to_bits(), run().to_bits());
    }
}
