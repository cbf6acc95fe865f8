//! Forward attention kernels and the dense masked reference they are checked
//! against.
//!
//! Every kernel reports how many (query, key) score cells it evaluated so the
//! complexity ledger can compare measured cost with closed forms.

mod hepos;
mod linformer;
mod lsh;
mod sinkhorn;
mod window;

use std::sync::Arc;

pub use hepos::{hepos_attention, hepos_attention_tape, HeposSpec};
pub use linformer::{
    linformer_attention, linformer_attention_tape, linformer_encdec_attention, LowRankSpec,
};
pub use lsh::{lsh_attention, lsh_buckets, lsh_round_mask, lsh_union_mask, LshCombine, LshSpec};
pub use sinkhorn::{
    sinkhorn_assignment, sinkhorn_attention, sinkhorn_mask, sinkhorn_normalize, SinkhornSpec,
};
pub use window::{windowed_attention, windowed_attention_tape};

use crate::autodiff::{sparse_attention_forward, Tape, Var};
use crate::error::{shape_err, Result};
use crate::mask::{softmax_masked, AttentionMask};
use crate::patterns::PatternSpec;
use crate::tensor::Tensor;

/// Query, key and value matrices for one attention call.
#[derive(Debug, Clone)]
pub struct AttentionInputs {
    pub q: Tensor,
    pub k: Tensor,
    pub v: Tensor,
}

impl AttentionInputs {
    pub fn new(q: Tensor, k: Tensor, v: Tensor) -> Result<Self> {
        let inputs = Self { q, k, v };
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.q.rows() == 0 || self.k.rows() == 0 {
            return Err(shape_err("attention", "need at least one query and one key"));
        }
        if self.q.cols() != self.k.cols() {
            return Err(shape_err(
                "attention",
                format!("query dim {} vs key dim {}", self.q.cols(), self.k.cols()),
            ));
        }
        if self.k.rows() != self.v.rows() {
            return Err(shape_err(
                "attention",
                format!("{} keys vs {} values", self.k.rows(), self.v.rows()),
            ));
        }
        if self.q.cols() == 0 {
            return Err(shape_err("attention", "key dimension must be >= 1"));
        }
        Ok(())
    }

    pub fn n_queries(&self) -> usize {
        self.q.rows()
    }

    pub fn n_keys(&self) -> usize {
        self.k.rows()
    }

    pub fn d_k(&self) -> usize {
        self.q.cols()
    }

    /// `1/√d_k`.
    pub fn scale(&self) -> f64 {
        1.0 / (self.d_k() as f64).sqrt()
    }

    pub(crate) fn require_self_attention(&self, op: &'static str) -> Result<()> {
        if self.n_queries() != self.n_keys() {
            return Err(shape_err(
                op,
                format!("self-attention needs m == n, got {} and {}", self.n_queries(), self.n_keys()),
            ));
        }
        Ok(())
    }
}

/// Kernel result plus the number of score cells it evaluated.
#[derive(Debug, Clone)]
pub struct KernelOutput {
    pub output: Tensor,
    pub score_cells: usize,
}

/// Dense oracle: `softmax_mask(QKᵀ/√d_k) V`, materializing the whole score
/// matrix and restricting the softmax to each row's attended keys.
pub fn masked_attention_reference(inputs: &AttentionInputs, mask: &AttentionMask) -> Result<Tensor> {
    inputs.validate()?;
    let scores = inputs.q.matmul(&inputs.k.transpose())?.scale(inputs.scale());
    let probs = softmax_masked(&scores, mask)?;
    probs.matmul(&inputs.v)
}

/// Standard dense attention.
pub fn full_attention(inputs: &AttentionInputs) -> Result<KernelOutput> {
    let mask = AttentionMask::full(inputs.n_queries(), inputs.n_keys());
    let output = masked_attention_reference(inputs, &mask)?;
    Ok(KernelOutput {
        output,
        score_cells: inputs.n_queries() * inputs.n_keys(),
    })
}

/// Dense attention on a tape: matmul, scale, masked softmax, matmul.
pub fn full_attention_tape(tape: &mut Tape, q: Var, k: Var, v: Var) -> Result<(Var, usize)> {
    let (m, d) = tape.value(q).shape();
    let n = tape.value(k).rows();
    let kt = tape.transpose(k);
    let scores = tape.matmul(q, kt)?;
    let scaled = tape.scale(scores, 1.0 / (d as f64).sqrt());
    let probs = tape.softmax_masked(scaled, Arc::new(AttentionMask::full(m, n)))?;
    Ok((tape.matmul(probs, v)?, m * n))
}

/// Attention that evaluates only the cells of `mask`.
pub fn sparse_attention(inputs: &AttentionInputs, mask: &AttentionMask) -> Result<KernelOutput> {
    inputs.validate()?;
    let (output, _) = sparse_attention_forward(&inputs.q, &inputs.k, &inputs.v, mask, inputs.scale())?;
    Ok(KernelOutput {
        output,
        score_cells: mask.cell_count(),
    })
}

/// Builds `pattern` for the input lengths and runs [`sparse_attention`] on it.
/// Covers window, adaptive span, global, stride and random-block variants.
pub fn pattern_attention(inputs: &AttentionInputs, pattern: &PatternSpec) -> Result<KernelOutput> {
    let mask = pattern.build(inputs.n_keys(), inputs.n_queries())?;
    sparse_attention(inputs, &mask)
}
