use super::{full_attention_tape, masked_attention_reference, AttentionInputs, KernelOutput};
use crate::autodiff::{Tape, Var};
use crate::error::{param_err, shape_err, Result};
use crate::mask::AttentionMask;
use crate::tensor::Tensor;

/// Low-rank projections of keys (`e`) and values (`f`) from length `n` down
/// to `k`.
#[derive(Debug, Clone)]
pub struct LowRankSpec {
    pub e: Tensor,
    pub f: Tensor,
}

impl LowRankSpec {
    pub fn new(e: Tensor, f: Tensor) -> Result<Self> {
        let spec = Self { e, f };
        if spec.e.shape() != spec.f.shape() {
            return Err(shape_err(
                "LowRankSpec",
                format!("E {:?} vs F {:?}", spec.e.shape(), spec.f.shape()),
            ));
        }
        if spec.k() == 0 || spec.k() > spec.n() {
            return Err(param_err(format!("projected length {} must be in 1..={}", spec.k(), spec.n())));
        }
        spec.e.ensure_finite("key projection")?;
        spec.f.ensure_finite("value projection")?;
        Ok(spec)
    }

    /// Identity projections (`k == n`).
    pub fn identity(n: usize) -> Self {
        Self {
            e: Tensor::identity(n),
            f: Tensor::identity(n),
        }
    }

    pub fn k(&self) -> usize {
        self.e.rows()
    }

    pub fn n(&self) -> usize {
        self.e.cols()
    }

    /// Parameters introduced by the two projections: `2kn`.
    pub fn new_params(&self) -> usize {
        self.e.len() + self.f.len()
    }

    fn check(&self, inputs: &AttentionInputs) -> Result<()> {
        if self.n() != inputs.n_keys() {
            return Err(shape_err(
                "linformer",
                format!("projection expects {} keys, got {}", self.n(), inputs.n_keys()),
            ));
        }
        Ok(())
    }
}

/// `softmax(Q (E K)ᵀ / √d_k) (F V)`; score cells `m·k`.
fn project_and_attend(inputs: &AttentionInputs, spec: &LowRankSpec) -> Result<KernelOutput> {
    inputs.validate()?;
    spec.check(inputs)?;
    let projected = AttentionInputs {
        q: inputs.q.clone(),
        k: spec.e.matmul(&inputs.k)?,
        v: spec.f.matmul(&inputs.v)?,
    };
    let mask = AttentionMask::full(inputs.n_queries(), spec.k());
    let output = masked_attention_reference(&projected, &mask)?;
    Ok(KernelOutput {
        output,
        score_cells: inputs.n_queries() * spec.k(),
    })
}

/// Low-rank self-attention.
pub fn linformer_attention(inputs: &AttentionInputs, spec: &LowRankSpec) -> Result<KernelOutput> {
    inputs.require_self_attention("linformer_attention")?;
    project_and_attend(inputs, spec)
}

/// Low-rank encoder-decoder attention: `m` decoder queries against projected
/// encoder keys and values.
pub fn linformer_encdec_attention(inputs: &AttentionInputs, spec: &LowRankSpec) -> Result<KernelOutput> {
    project_and_attend(inputs, spec)
}

/// Differentiable low-rank attention; `e` and `f` are tape variables so they
/// can be trained.
pub fn linformer_attention_tape(
    tape: &mut Tape,
    q: Var,
    k: Var,
    v: Var,
    e: Var,
    f: Var,
) -> Result<(Var, usize)> {
    let pk = tape.matmul(e, k)?;
    let pv = tape.matmul(f, v)?;
    full_attention_tape(tape, q, pk, pv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::full_attention;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn identity_projection_is_full() {
        let mut r = rng(1);
        let x = AttentionInputs::new(
            Tensor::randn(8, 4, 1.0, &mut r),
            Tensor::randn(8, 4, 1.0, &mut r),
            Tensor::randn(8, 4, 1.0, &mut r),
        )
        .unwrap();
        let out = linformer_attention(&x, &LowRankSpec::identity(8)).unwrap();
        let full = full_attention(&x).unwrap();
        assert!(out.output.max_abs_diff(&full.output).unwrap() <= 1e-12);
    }

    #[test]
    fn matches_two_step_composition() {
        let mut r = rng(2);
        let (n, k, d) = (8, 2, 3);
        let x = AttentionInputs::new(
            Tensor::randn(n, d, 1.0, &mut r),
            Tensor::randn(n, d, 1.0, &mut r),
            Tensor::randn(n, d, 1.0, &mut r),
        )
        .unwrap();
        let spec = LowRankSpec::new(Tensor::randn(k, n, 0.5, &mut r), Tensor::randn(k, n, 0.5, &mut r)).unwrap();
        let out = linformer_attention(&x, &spec).unwrap();
        assert_eq!(out.score_cells, n * k);

        // hand-composed: project, then per-row softmax over k columns
        let pk = spec.e.matmul(&x.k).unwrap();
        let pv = spec.f.matmul(&x.v).unwrap();
        for i in 0..n {
            let s: Vec<f64> = (0..k)
                .map(|j| (0..d).map(|c| x.q.get(i, c) * pk.get(j, c)).sum::<f64>() / (d as f64).sqrt())
                .collect();
            let z: f64 = s.iter().map(|v| v.exp()).sum();
            for c in 0..d {
                let expect: f64 = (0..k).map(|j| s[j].exp() / z * pv.get(j, c)).sum();
                assert!((out.output.get(i, c) - expect).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn encdec_single_query() {
        let mut r = rng(3);
        let (n, k, d) = (6, 3, 2);
        let q = Tensor::randn(1, d, 1.0, &mut r);
        let keys = Tensor::randn(n, d, 1.0, &mut r);
        let vals = Tensor::randn(n, d, 1.0, &mut r);
        let spec = LowRankSpec::new(Tensor::randn(k, n, 0.5, &mut r), Tensor::randn(k, n, 0.5, &mut r)).unwrap();
        let x = AttentionInputs::new(q.clone(), keys.clone(), vals.clone()).unwrap();
        let out = linformer_encdec_attention(&x, &spec).unwrap();
        assert_eq!(out.score_cells, k);

        let pk = spec.e.matmul(&keys).unwrap();
        let pv = spec.f.matmul(&vals).unwrap();
        let logits: Vec<f64> = (0..k)
            .map(|j| (q.get(0, 0) * pk.get(j, 0) + q.get(0, 1) * pk.get(j, 1)) / 2f64.sqrt())
            .collect();
        let z: f64 = logits.iter().map(|v| v.exp()).sum();
        for c in 0..d {
            let expect: f64 = (0..k).map(|j| logits[j].exp() / z * pv.get(j, c)).sum();
            assert!((out.output.get(0, c) - expect).abs() <= 1e-12);
        }
        let ident = linformer_encdec_attention(&x, &LowRankSpec::identity(n)).unwrap();
        assert!(ident.output.max_abs_diff(&full_attention(&x).unwrap().output).unwrap() <= 1e-12);
    }

    #[test]
    fn new_params_and_validation() {
        let mut r = rng(4);
        let spec = LowRankSpec::new(Tensor::randn(256, 1024, 1.0, &mut r), Tensor::randn(256, 1024, 1.0, &mut r)).unwrap();
        assert_eq!(spec.new_params(), 524_288);
        assert!(LowRankSpec::new(Tensor::zeros(3, 2), Tensor::zeros(3, 2)).is_err());
        assert!(LowRankSpec::new(Tensor::zeros(2, 3), Tensor::zeros(2, 4)).is_err());
        let x = AttentionInputs::new(Tensor::zeros(5, 2), Tensor::zeros(5, 2), Tensor::zeros(5, 2)).unwrap();
        assert!(linformer_attention(&x, &LowRankSpec::identity(4)).is_err());
    }
}
