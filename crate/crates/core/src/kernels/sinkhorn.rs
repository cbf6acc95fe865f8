use super::{sparse_attention, AttentionInputs, KernelOutput};
use crate::error::{param_err, shape_err, Result};
use crate::mask::AttentionMask;
use crate::tensor::Tensor;

/// Block-sorting configuration: the sequence is cut into blocks of `block`
/// tokens and `sort_logits[i][j]` scores pairing block `i` with block `j`.
#[derive(Debug, Clone)]
pub struct SinkhornSpec {
    pub block: usize,
    pub sort_logits: Tensor,
    pub iters: usize,
    pub temperature: f64,
}

impl SinkhornSpec {
    pub fn new(block: usize, sort_logits: Tensor) -> Self {
        Self {
            block,
            sort_logits,
            iters: 8,
            temperature: 1.0,
        }
    }

    /// Logits that pair every block with its right neighbour (cyclically).
    pub fn neighbour_logits(n_blocks: usize, strength: f64) -> Tensor {
        let mut t = Tensor::zeros(n_blocks, n_blocks);
        for b in 0..n_blocks {
            t.set(b, (b + 1) % n_blocks, strength);
        }
        t
    }

    pub fn n_blocks(&self) -> usize {
        self.sort_logits.rows()
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.block == 0 || n % self.block != 0 {
            return Err(param_err(format!("block size {} must divide {n}", self.block)));
        }
        let blocks = n / self.block;
        if self.sort_logits.shape() != (blocks, blocks) {
            return Err(shape_err(
                "sinkhorn",
                format!("need {blocks}x{blocks} sort logits, got {:?}", self.sort_logits.shape()),
            ));
        }
        if self.iters == 0 {
            return Err(param_err("sinkhorn iterations must be >= 1"));
        }
        if !(self.temperature > 0.0) {
            return Err(param_err("temperature must be positive"));
        }
        self.sort_logits.ensure_finite("sinkhorn sort logits")
    }
}

/// Alternating row/column normalization of `exp((logits − max)/temperature)`.
pub fn sinkhorn_normalize(logits: &Tensor, iters: usize, temperature: f64) -> Result<Tensor> {
    logits.ensure_finite("sinkhorn sort logits")?;
    let max = logits.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p = logits.map(|v| ((v - max) / temperature).exp());
    let (rows, cols) = p.shape();
    for _ in 0..iters {
        for r in 0..rows {
            let s: f64 = p.row(r).iter().sum();
            for v in p.row_mut(r) {
                *v /= s;
            }
        }
        for c in 0..cols {
            let s: f64 = (0..rows).map(|r| p.get(r, c)).sum();
            for r in 0..rows {
                let v = p.get(r, c);
                p.set(r, c, v / s);
            }
        }
    }
    p.ensure_finite("sinkhorn normalization")?;
    Ok(p)
}

/// Hard block assignment: block `i` (in order) takes the highest-scoring
/// column not yet taken, lowest index on ties.
pub fn sinkhorn_assignment(doubly_stochastic: &Tensor) -> Vec<usize> {
    let n = doubly_stochastic.rows();
    let mut taken = vec![false; doubly_stochastic.cols()];
    (0..n)
        .map(|r| {
            let mut best: Option<(f64, usize)> = None;
            for (c, &v) in doubly_stochastic.row(r).iter().enumerate() {
                if !taken[c] && best.map_or(true, |(bv, _)| v > bv) {
                    best = Some((v, c));
                }
            }
            let (_, c) = best.expect("square matrix has a free column");
            taken[c] = true;
            c
        })
        .collect()
}

/// Each query attends its own block plus its block's partner.
pub fn sinkhorn_mask(n: usize, spec: &SinkhornSpec) -> Result<AttentionMask> {
    spec.validate(n)?;
    let p = sinkhorn_normalize(&spec.sort_logits, spec.iters, spec.temperature)?;
    let partner = sinkhorn_assignment(&p);
    let b = spec.block;
    let rows = (0..n)
        .map(|i| {
            let own = i / b;
            let mut keys: Vec<usize> = (own * b..(own + 1) * b).collect();
            keys.extend(partner[own] * b..(partner[own] + 1) * b);
            keys
        })
        .collect();
    AttentionMask::from_rows(n, rows)
}

/// Sorted-block self-attention.
pub fn sinkhorn_attention(inputs: &AttentionInputs, spec: &SinkhornSpec) -> Result<KernelOutput> {
    inputs.validate()?;
    inputs.require_self_attention("sinkhorn_attention")?;
    let mask = sinkhorn_mask(inputs.n_keys(), spec)?;
    sparse_attention(inputs, &mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;
    use crate::kernels::masked_attention_reference;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn diagonal_logits_pair_with_self() {
        let mut logits = Tensor::zeros(4, 4);
        for b in 0..4 {
            logits.set(b, b, 20.0);
        }
        let spec = SinkhornSpec::new(3, logits);
        let mask = sinkhorn_mask(12, &spec).unwrap();
        for q in 0..12 {
            assert_eq!(mask.row(q).len(), 3);
            assert!(mask.row(q).iter().all(|&k| k / 3 == q / 3));
        }
    }

    #[test]
    fn off_diagonal_logits_swap_blocks() {
        let logits = Tensor::from_rows(&[&[0.0, 20.0], &[20.0, 0.0]]);
        let spec = SinkhornSpec::new(4, logits);
        let mask = sinkhorn_mask(8, &spec).unwrap();
        for q in 0..8 {
            assert_eq!(mask.row(q).len(), 8);
        }
        assert_eq!(sinkhorn_assignment(&sinkhorn_normalize(&spec.sort_logits, 8, 1.0).unwrap()), vec![1, 0]);
    }

    #[test]
    fn normalization_is_near_doubly_stochastic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = sinkhorn_normalize(&Tensor::randn(5, 5, 1.0, &mut rng), 50, 1.0).unwrap();
        for i in 0..5 {
            let row: f64 = p.row(i).iter().sum();
            let col: f64 = (0..5).map(|r| p.get(r, i)).sum();
            assert!((row - 1.0).abs() < 1e-6);
            assert!((col - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn assignment_is_a_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = sinkhorn_normalize(&Tensor::randn(7, 7, 2.0, &mut rng), 8, 0.5).unwrap();
        let mut a = sinkhorn_assignment(&p);
        a.sort();
        assert_eq!(a, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn matches_oracle_with_bounded_cells() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (n, b) = (24, 4);
        let x = AttentionInputs::new(
            Tensor::randn(n, 3, 1.0, &mut rng),
            Tensor::randn(n, 3, 1.0, &mut rng),
            Tensor::randn(n, 3, 1.0, &mut rng),
        )
        .unwrap();
        let spec = SinkhornSpec::new(b, Tensor::randn(n / b, n / b, 1.0, &mut rng));
        let out = sinkhorn_attention(&x, &spec).unwrap();
        let oracle = masked_attention_reference(&x, &sinkhorn_mask(n, &spec).unwrap()).unwrap();
        assert!(out.output.max_abs_diff(&oracle).unwrap() <= 1e-10);
        assert!(out.score_cells <= 2 * n * b);
    }

    #[test]
    fn neighbour_logits_give_two_blocks() {
        let spec = SinkhornSpec::new(2, SinkhornSpec::neighbour_logits(4, 10.0));
        assert_eq!(sinkhorn_mask(8, &spec).unwrap().cell_count(), 2 * 8 * 2);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut logits = Tensor::zeros(2, 2);
        logits.set(0, 1, f64::NAN);
        let x = AttentionInputs::new(Tensor::zeros(4, 2), Tensor::zeros(4, 2), Tensor::zeros(4, 2)).unwrap();
        assert!(matches!(
            sinkhorn_attention(&x, &SinkhornSpec::new(2, logits)),
            Err(Error::Numeric(_))
        ));
        assert!(sinkhorn_mask(5, &SinkhornSpec::new(2, Tensor::zeros(2, 2))).is_err());
        assert!(sinkhorn_mask(4, &SinkhornSpec::new(2, Tensor::zeros(3, 3))).is_err());
    }
}
