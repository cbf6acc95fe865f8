use std::sync::Arc;

use super::{sparse_attention, AttentionInputs, KernelOutput};
use crate::autodiff::{Tape, Var};
use crate::error::{param_err, shape_err, Error, Result};
use crate::mask::AttentionMask;
use crate::patterns::{hepos_keys, hepos_mask};
use crate::tensor::Tensor;

/// Head-wise positional strides for encoder-decoder attention: head `h`
/// attends encoder keys `h mod stride, h mod stride + stride, …`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeposSpec {
    pub stride: usize,
    pub heads: usize,
}

impl HeposSpec {
    pub fn new(stride: usize, heads: usize) -> Self {
        Self { stride, heads }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.heads == 0 {
            return Err(param_err("need at least one head"));
        }
        if self.stride == 0 {
            return Err(param_err("stride must be >= 1"));
        }
        if self.stride > n {
            return Err(Error::EmptyRow { row: 0 });
        }
        Ok(())
    }

    /// Score cells evaluated by head `h` for `m` queries over `n` keys.
    pub fn head_cells(&self, m: usize, n: usize, h: usize) -> usize {
        m * hepos_keys(n, h, self.stride).len()
    }

    pub fn total_cells(&self, m: usize, n: usize) -> usize {
        (0..self.heads).map(|h| self.head_cells(m, n, h)).sum()
    }
}

pub(crate) fn head_dims(d_k: usize, d_v: usize, heads: usize) -> Result<(usize, usize)> {
    if heads == 0 || d_k % heads != 0 || d_v % heads != 0 {
        return Err(shape_err(
            "hepos_attention",
            format!("{heads} heads must divide d_k={d_k} and d_v={d_v}"),
        ));
    }
    Ok((d_k / heads, d_v / heads))
}

/// Multi-head strided encoder-decoder attention. Columns of Q/K and of V are
/// split evenly across heads; each head gathers only its strided keys and
/// values, and the head outputs are concatenated.
pub fn hepos_attention(inputs: &AttentionInputs, spec: &HeposSpec) -> Result<KernelOutput> {
    inputs.validate()?;
    let n = inputs.n_keys();
    let m = inputs.n_queries();
    spec.validate(n)?;
    let (dk, dv) = head_dims(inputs.d_k(), inputs.v.cols(), spec.heads)?;
    let mut heads = Vec::with_capacity(spec.heads);
    let mut cells = 0;
    for h in 0..spec.heads {
        let keys = hepos_keys(n, h, spec.stride);
        let head = AttentionInputs {
            q: inputs.q.slice_cols(h * dk, dk)?,
            k: inputs.k.slice_cols(h * dk, dk)?.gather_rows(&keys)?,
            v: inputs.v.slice_cols(h * dv, dv)?.gather_rows(&keys)?,
        };
        let out = sparse_attention(&head, &AttentionMask::full(m, keys.len()))?;
        cells += out.score_cells;
        heads.push(out.output);
    }
    let refs: Vec<&Tensor> = heads.iter().collect();
    Ok(KernelOutput {
        output: Tensor::concat_cols(&refs)?,
        score_cells: cells,
    })
}

/// Differentiable form of [`hepos_attention`].
pub fn hepos_attention_tape(
    tape: &mut Tape,
    q: Var,
    k: Var,
    v: Var,
    spec: &HeposSpec,
) -> Result<(Var, usize)> {
    let (m, d_k) = tape.value(q).shape();
    let (n, d_v) = tape.value(v).shape();
    spec.validate(n)?;
    let (dk, dv) = head_dims(d_k, d_v, spec.heads)?;
    let scale = 1.0 / (dk as f64).sqrt();
    let mut outs = Vec::with_capacity(spec.heads);
    let mut cells = 0;
    for h in 0..spec.heads {
        let mask = Arc::new(hepos_mask(m, n, h, spec.stride)?);
        let qh = tape.slice_cols(q, h * dk, dk)?;
        let kh = tape.slice_cols(k, h * dk, dk)?;
        let vh = tape.slice_cols(v, h * dv, dv)?;
        let (o, c) = tape.sparse_attention(qh, kh, vh, mask, scale)?;
        outs.push(o);
        cells += c;
    }
    Ok((tape.concat_cols(&outs)?, cells))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{full_attention, masked_attention_reference};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn inputs(m: usize, n: usize, d: usize, seed: u64) -> AttentionInputs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AttentionInputs::new(
            Tensor::randn(m, d, 1.0, &mut rng),
            Tensor::randn(n, d, 1.0, &mut rng),
            Tensor::randn(n, d, 1.0, &mut rng),
        )
        .unwrap()
    }

    fn head_slice(x: &AttentionInputs, h: usize, heads: usize) -> AttentionInputs {
        let dk = x.d_k() / heads;
        let dv = x.v.cols() / heads;
        AttentionInputs {
            q: x.q.slice_cols(h * dk, dk).unwrap(),
            k: x.k.slice_cols(h * dk, dk).unwrap(),
            v: x.v.slice_cols(h * dv, dv).unwrap(),
        }
    }

    #[test]
    fn unit_stride_heads_are_full() {
        let x = inputs(5, 7, 8, 1);
        let spec = HeposSpec::new(1, 4);
        let out = hepos_attention(&x, &spec).unwrap();
        for h in 0..4 {
            let hx = head_slice(&x, h, 4);
            let full = full_attention(&hx).unwrap().output;
            let got = out.output.slice_cols(h * 2, 2).unwrap();
            assert!(got.max_abs_diff(&full).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn per_head_oracle_and_cells() {
        let x = inputs(3, 12, 8, 2);
        let spec = HeposSpec::new(4, 4);
        let out = hepos_attention(&x, &spec).unwrap();
        for h in 0..4 {
            let mask = hepos_mask(3, 12, h, 4).unwrap();
            let oracle = masked_attention_reference(&head_slice(&x, h, 4), &mask).unwrap();
            let got = out.output.slice_cols(h * 2, 2).unwrap();
            assert!(got.max_abs_diff(&oracle).unwrap() <= 1e-10);
        }
        assert_eq!(hepos_mask(3, 12, 2, 4).unwrap().row(0), &[2, 6, 10]);
        assert_eq!(spec.head_cells(3, 12, 2), 9);
        assert_eq!(out.score_cells, 4 * 9);
    }

    #[test]
    fn toy_figure_layout() {
        for h in 0..4 {
            let expect: &[usize] = if h % 2 == 0 { &[0, 2] } else { &[1, 3] };
            assert_eq!(hepos_mask(4, 4, h, 2).unwrap().row(0), expect);
        }
    }

    #[test]
    fn tape_matches_plain() {
        let x = inputs(4, 9, 6, 3);
        let spec = HeposSpec::new(2, 3);
        let mut tape = Tape::new();
        let q = tape.leaf(x.q.clone());
        let k = tape.leaf(x.k.clone());
        let v = tape.leaf(x.v.clone());
        let (o, cells) = hepos_attention_tape(&mut tape, q, k, v, &spec).unwrap();
        let plain = hepos_attention(&x, &spec).unwrap();
        assert!(tape.value(o).max_abs_diff(&plain.output).unwrap() <= 1e-12);
        assert_eq!(cells, plain.score_cells);
    }

    #[test]
    fn errors() {
        let x = inputs(2, 3, 4, 4);
        assert_eq!(
            hepos_attention(&x, &HeposSpec::new(4, 2)).unwrap_err(),
            Error::EmptyRow { row: 0 }
        );
        assert!(hepos_attention(&x, &HeposSpec::new(2, 3)).is_err());
        assert!(hepos_attention(&x, &HeposSpec::new(2, 0)).is_err());
    }
}
