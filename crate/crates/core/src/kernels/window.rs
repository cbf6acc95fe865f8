use std::sync::Arc;

use super::{AttentionInputs, KernelOutput};
use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::mask::softmax_gathered;
use crate::patterns::{check_window, window_mask};
use crate::tensor::{dot, Tensor};

/// Banded self-attention: query `i` scores only keys in `[i − w/2, i + w/2]`.
/// Never materializes more than `n(w+1)` score cells.
pub fn windowed_attention(inputs: &AttentionInputs, w: usize) -> Result<KernelOutput> {
    inputs.validate()?;
    inputs.require_self_attention("windowed_attention")?;
    check_window(w)?;
    let n = inputs.n_keys();
    let half = w / 2;
    let scale = inputs.scale();
    let mut output = Tensor::zeros(n, inputs.v.cols());
    let mut cells = 0;
    let mut band = Vec::with_capacity(w + 1);
    for i in 0..n {
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(n - 1);
        band.clear();
        band.extend((lo..=hi).map(|j| dot(inputs.q.row(i), inputs.k.row(j)) * scale));
        cells += band.len();
        let probs = softmax_gathered(&band, None).expect("band contains the query itself");
        let dst = output.row_mut(i);
        for (j, p) in (lo..=hi).zip(probs) {
            for (o, &x) in dst.iter_mut().zip(inputs.v.row(j)) {
                *o += p * x;
            }
        }
    }
    Ok(KernelOutput {
        output,
        score_cells: cells,
    })
}

/// Differentiable windowed attention.
pub fn windowed_attention_tape(tape: &mut Tape, q: Var, k: Var, v: Var, w: usize) -> Result<(Var, usize)> {
    let n = tape.value(k).rows();
    let d = tape.value(q).cols();
    let mask = Arc::new(window_mask(n, w)?);
    tape.sparse_attention(q, k, v, mask, 1.0 / (d as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{full_attention, masked_attention_reference};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn inputs(n: usize, d: usize, seed: u64) -> AttentionInputs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AttentionInputs::new(
            Tensor::randn(n, d, 1.0, &mut rng),
            Tensor::randn(n, d, 1.0, &mut rng),
            Tensor::randn(n, d, 1.0, &mut rng),
        )
        .unwrap()
    }

    #[test]
    fn matches_oracle() {
        for (n, w) in [(8, 2), (16, 4), (64, 8)] {
            let x = inputs(n, 4, n as u64);
            let out = windowed_attention(&x, w).unwrap();
            let oracle = masked_attention_reference(&x, &window_mask(n, w).unwrap()).unwrap();
            assert!(out.output.max_abs_diff(&oracle).unwrap() <= 1e-10);
            assert!(out.score_cells <= n * (w + 1));
        }
    }

    #[test]
    fn wide_window_is_full() {
        let x = inputs(9, 3, 1);
        let out = windowed_attention(&x, 16).unwrap();
        let full = full_attention(&x).unwrap();
        assert!(out.output.max_abs_diff(&full.output).unwrap() <= 1e-12);
    }

    #[test]
    fn rejects_cross_attention_and_odd_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = AttentionInputs::new(
            Tensor::randn(3, 2, 1.0, &mut rng),
            Tensor::randn(5, 2, 1.0, &mut rng),
            Tensor::randn(5, 2, 1.0, &mut rng),
        )
        .unwrap();
        assert!(windowed_attention(&x, 2).is_err());
        assert!(windowed_attention(&inputs(5, 2, 3), 3).is_err());
    }
}
