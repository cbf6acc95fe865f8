//! Builders for fixed sparsity patterns and head-wise strided cross-attention.
//!
//! All indices are 0-based. A self-attention pattern over `n` tokens yields an
//! `n×n` mask; the strided cross-attention pattern yields `m×n` (decoder
//! queries by encoder keys).

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{param_err, Error, Result};
use crate::mask::AttentionMask;

/// Default adaptive-span ramp width.
pub const DEFAULT_RAMP: usize = 32;

/// Query `i` attends `[i − w/2, i + w/2]` clipped to the sequence, self included.
pub fn window_mask(n: usize, w: usize) -> Result<AttentionMask> {
    check_window(w)?;
    let half = w / 2;
    let rows = (0..n)
        .map(|i| (i.saturating_sub(half)..=(i + half).min(n.saturating_sub(1))).collect())
        .collect();
    AttentionMask::from_rows(n, rows)
}

pub(crate) fn check_window(w: usize) -> Result<()> {
    if w < 2 || w % 2 != 0 {
        return Err(param_err(format!("window width must be even and >= 2, got {w}")));
    }
    Ok(())
}

/// Makes the first `g` tokens global: every query attends them and they
/// attend every key.
pub fn add_global(mask: &AttentionMask, g: usize) -> Result<AttentionMask> {
    let n = mask.n_keys();
    if g > n || g > mask.n_queries() {
        return Err(param_err(format!("{g} global tokens exceed sequence length {n}")));
    }
    let mut out = mask.clone();
    let globals: Vec<usize> = (0..g).collect();
    let all: Vec<usize> = (0..n).collect();
    for q in 0..out.n_queries() {
        out.extend_row(q, if q < g { &all } else { &globals });
    }
    Ok(out)
}

/// Every query additionally attends keys `0, s, 2s, …`.
pub fn add_stride(mask: &AttentionMask, s: usize) -> Result<AttentionMask> {
    if s == 0 {
        return Err(param_err("stride must be >= 1"));
    }
    let strided: Vec<usize> = (0..mask.n_keys()).step_by(s).collect();
    let mut out = mask.clone();
    for q in 0..out.n_queries() {
        out.extend_row(q, &strided);
    }
    Ok(out)
}

/// Splits the sequence into blocks of `block` tokens (the last one may be
/// shorter) and lets each query block attend one other block chosen by a
/// seeded RNG.
pub fn add_random_blocks(mask: &AttentionMask, block: usize, seed: u64) -> Result<AttentionMask> {
    let n = mask.n_keys();
    if block == 0 || block > n {
        return Err(param_err(format!("block size {block} invalid for length {n}")));
    }
    let partners = random_block_partners(n, block, seed);
    let mut out = mask.clone();
    for q in 0..out.n_queries().min(n) {
        if let Some(p) = partners[q / block] {
            let keys: Vec<usize> = (p * block..((p + 1) * block).min(n)).collect();
            out.extend_row(q, &keys);
        }
    }
    Ok(out)
}

/// Partner block for each query block; `None` when there is only one block.
pub fn random_block_partners(n: usize, block: usize, seed: u64) -> Vec<Option<usize>> {
    let n_blocks = n.div_ceil(block);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_blocks)
        .map(|b| {
            if n_blocks < 2 {
                return None;
            }
            let pick = rng.gen_range(0..n_blocks - 1);
            Some(if pick >= b { pick + 1 } else { pick })
        })
        .collect()
}

/// Soft mask for a fixed adaptive span `span` with ramp width `ramp`.
///
/// Weight at distance `d = |i − j|` is `clamp((ramp + span − d) / ramp, 0, 1)`;
/// the hard support is `d ≤ span + ramp`.
pub fn adaptive_span_mask(n: usize, span: usize, max_span: usize, ramp: usize) -> Result<AttentionMask> {
    if span > max_span {
        return Err(param_err(format!("span {span} exceeds maximum {max_span}")));
    }
    if ramp == 0 {
        return Err(param_err("ramp width must be >= 1"));
    }
    let reach = span + ramp;
    let rows = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(reach);
            let hi = (i + reach).min(n.saturating_sub(1));
            (lo..=hi)
                .map(|j| {
                    let d = i.abs_diff(j) as f64;
                    let w = ((ramp as f64 + span as f64 - d) / ramp as f64).clamp(0.0, 1.0);
                    (j, w)
                })
                .collect()
        })
        .collect();
    AttentionMask::from_weighted_rows(n, rows)
}

/// Whether key `i` belongs to head `h` under stride `stride`:
/// `(i − (h mod stride)) mod stride == 0`.
pub fn hepos_membership(i: usize, h: usize, stride: usize) -> bool {
    if stride == 0 {
        return false;
    }
    let offset = h % stride;
    i >= offset && (i - offset) % stride == 0
}

/// Keys attended by head `h`: `h mod stride, h mod stride + stride, …`.
pub fn hepos_keys(n: usize, h: usize, stride: usize) -> Vec<usize> {
    if stride == 0 {
        return Vec::new();
    }
    (h % stride..n).step_by(stride).collect()
}

/// `m×n` cross-attention mask for head `h`: every decoder query attends the
/// head's strided key subset.
pub fn hepos_mask(m: usize, n: usize, h: usize, stride: usize) -> Result<AttentionMask> {
    if stride == 0 {
        return Err(param_err("stride must be >= 1"));
    }
    let keys = hepos_keys(n, h, stride);
    if stride > n || keys.is_empty() {
        return Err(Error::EmptyRow { row: 0 });
    }
    AttentionMask::from_rows(n, vec![keys; m])
}

/// Base of a pattern before augmentation.
#[derive(Debug, Clone, PartialEq)]
pub enum PatternKind {
    /// No cells; only meaningful with augmentations.
    Empty,
    Full,
    Window { w: usize },
    AdaptiveSpan { span: usize, max_span: usize, ramp: usize },
    Hepos { stride: usize, head: usize },
}

/// Extra keys layered on top of a self-attention base pattern.
#[derive(Debug, Clone, PartialEq)]
pub enum Augmentation {
    Global { g: usize },
    Stride { s: usize },
    RandomBlocks { block: usize, seed: u64 },
}

/// Declarative attention pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternSpec {
    pub kind: PatternKind,
    pub augments: Vec<Augmentation>,
}

impl PatternSpec {
    pub fn new(kind: PatternKind) -> Self {
        Self {
            kind,
            augments: Vec::new(),
        }
    }

    pub fn full() -> Self {
        Self::new(PatternKind::Full)
    }

    pub fn window(w: usize) -> Self {
        Self::new(PatternKind::Window { w })
    }

    pub fn adaptive_span(span: usize, max_span: usize, ramp: usize) -> Self {
        Self::new(PatternKind::AdaptiveSpan {
            span,
            max_span,
            ramp,
        })
    }

    pub fn hepos(stride: usize, head: usize) -> Self {
        Self::new(PatternKind::Hepos { stride, head })
    }

    pub fn empty() -> Self {
        Self::new(PatternKind::Empty)
    }

    pub fn with_global(mut self, g: usize) -> Self {
        self.augments.push(Augmentation::Global { g });
        self
    }

    pub fn with_stride(mut self, s: usize) -> Self {
        self.augments.push(Augmentation::Stride { s });
        self
    }

    pub fn with_random_blocks(mut self, block: usize, seed: u64) -> Self {
        self.augments.push(Augmentation::RandomBlocks { block, seed });
        self
    }

    pub fn is_cross_attention(&self) -> bool {
        matches!(self.kind, PatternKind::Hepos { .. })
    }

    /// Builds the mask. Self-attention patterns ignore `m` and produce
    /// `n×n`; the strided cross-attention pattern produces `m×n`.
    pub fn build(&self, n: usize, m: usize) -> Result<AttentionMask> {
        if n == 0 {
            return Err(param_err("sequence length must be >= 1"));
        }
        let mut mask = match &self.kind {
            PatternKind::Empty => AttentionMask::empty(n, n),
            PatternKind::Full => AttentionMask::full(n, n),
            PatternKind::Window { w } => window_mask(n, *w)?,
            PatternKind::AdaptiveSpan {
                span,
                max_span,
                ramp,
            } => adaptive_span_mask(n, *span, *max_span, *ramp)?,
            PatternKind::Hepos { stride, head } => {
                if !self.augments.is_empty() {
                    return Err(param_err("strided cross-attention takes no augmentations"));
                }
                return hepos_mask(m, n, *head, *stride);
            }
        };
        if mask.is_soft() && !self.augments.is_empty() {
            return Err(param_err("soft masks cannot be augmented"));
        }
        for aug in &self.augments {
            mask = match *aug {
                Augmentation::Global { g } => add_global(&mask, g)?,
                Augmentation::Stride { s } => add_stride(&mask, s)?,
                Augmentation::RandomBlocks { block, seed } => add_random_blocks(&mask, block, seed)?,
            };
        }
        mask.check_non_empty()?;
        Ok(mask)
    }
}

impl fmt::Display for PatternSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            PatternKind::Empty => write!(f, "none")?,
            PatternKind::Full => write!(f, "full")?,
            PatternKind::Window { w } => write!(f, "window(w={w})")?,
            PatternKind::AdaptiveSpan {
                span,
                max_span,
                ramp,
            } => write!(f, "adaptive_span(z={span} max={max_span} R={ramp})")?,
            PatternKind::Hepos { stride, head } => write!(f, "hepos(sh={stride} h={head})")?,
        }
        for aug in &self.augments {
            match aug {
                Augmentation::Global { g } => write!(f, "+global(g={g})")?,
                Augmentation::Stride { s } => write!(f, "+stride(s={s})")?,
                Augmentation::RandomBlocks { block, seed } => {
                    write!(f, "+random(r={block} seed={seed})")?
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    #[test]
    fn window_row_three() {
        let mask = window_mask(8, 2).unwrap();
        assert_eq!(mask.row(3), &[2, 3, 4]);
        assert_eq!(mask.row(0), &[0, 1]);
        assert_eq!(mask.row(7), &[6, 7]);
    }

    #[test]
    fn wide_window_is_full() {
        assert_eq!(window_mask(9, 16).unwrap(), AttentionMask::full(9, 9));
    }

    #[test]
    fn odd_window_rejected() {
        assert!(window_mask(8, 3).is_err());
        assert!(window_mask(8, 0).is_err());
    }

    #[test]
    fn window_cell_bound() {
        let mask = window_mask(1024, 256).unwrap();
        assert!(mask.cell_count() <= 1024 * 257);
        assert_eq!(1024 * 257, 263_168);
    }

    #[test]
    fn global_on_empty_base() {
        let mask = add_global(&AttentionMask::empty(8, 8), 2).unwrap();
        for q in 0..2 {
            assert_eq!(mask.row(q), &(0..8).collect::<Vec<_>>()[..]);
        }
        for q in 2..8 {
            assert_eq!(mask.row(q), &[0, 1]);
        }
        assert!(mask.cell_count() <= 2 * 8 * 2);
    }

    #[test]
    fn zero_globals_is_identity() {
        let base = window_mask(10, 4).unwrap();
        assert_eq!(add_global(&base, 0).unwrap(), base);
        assert!(add_global(&base, 11).is_err());
    }

    #[test]
    fn stride_three() {
        let mask = add_stride(&AttentionMask::empty(8, 8), 3).unwrap();
        for q in 0..8 {
            assert_eq!(mask.row(q), &[0, 3, 6]);
        }
        assert_eq!(mask.cell_count(), 8 * 8usize.div_ceil(3));
        assert_eq!(
            add_stride(&AttentionMask::empty(5, 5), 1).unwrap(),
            AttentionMask::full(5, 5)
        );
        assert!(add_stride(&AttentionMask::empty(5, 5), 0).is_err());
    }

    #[test]
    fn random_blocks_single_block_unchanged() {
        let base = AttentionMask::empty(6, 6);
        assert_eq!(add_random_blocks(&base, 6, 3).unwrap(), base);
        assert!(add_random_blocks(&base, 7, 3).is_err());
    }

    #[test]
    fn random_blocks_deterministic_and_sized() {
        let base = AttentionMask::empty(8, 8);
        let a = add_random_blocks(&base, 2, 7).unwrap();
        let b = add_random_blocks(&base, 2, 7).unwrap();
        assert_eq!(a, b);
        for q in 0..8 {
            assert_eq!(a.row(q).len(), 2);
            let own = q / 2;
            assert!(a.row(q).iter().all(|&k| k / 2 != own));
            // both keys come from the same block
            assert_eq!(a.row(q)[0] / 2, a.row(q)[1] / 2);
        }
    }

    #[test]
    fn adaptive_span_ramp_value() {
        let mask = adaptive_span_mask(10, 2, 4, 2).unwrap();
        let dense = mask.to_dense();
        assert_eq!(dense.get(5, 8), 0.5);
        assert_eq!(dense.get(5, 5), 1.0);
        assert_eq!(dense.get(5, 7), 1.0);
        assert_eq!(mask.row(5), &[1, 2, 3, 4, 5, 6, 7, 8, 9]);
        assert!(adaptive_span_mask(10, 5, 4, 2).is_err());
        assert!(adaptive_span_mask(10, 1, 4, 0).is_err());
    }

    #[test]
    fn adaptive_span_large_is_full() {
        let n = 7;
        let ramp = 3;
        let mask = adaptive_span_mask(n, n - 1 + ramp, 20, ramp).unwrap();
        assert_eq!(mask.to_dense(), crate::Tensor::ones(n, n));
    }

    #[test]
    fn adaptive_span_support_bound() {
        let (span, max_span, ramp) = (3, 5, 2);
        let mask = adaptive_span_mask(40, span, max_span, ramp).unwrap();
        for q in 0..40 {
            assert!(mask.row(q).len() <= 2 * (span + ramp) + 1);
            assert!(mask.row(q).len() <= 2 * (max_span + ramp) + 1);
        }
    }

    #[test]
    fn membership_examples() {
        let even: Vec<usize> = (0..8).filter(|&i| hepos_membership(i, 0, 2)).collect();
        let odd: Vec<usize> = (0..8).filter(|&i| hepos_membership(i, 1, 2)).collect();
        assert_eq!(even, vec![0, 2, 4, 6]);
        assert_eq!(odd, vec![1, 3, 5, 7]);
        assert!((0..20).all(|i| hepos_membership(i, 3, 1)));
        assert!(hepos_membership(2, 6, 4));
        assert!(!hepos_membership(3, 6, 4));
    }

    #[test]
    fn hepos_rows() {
        let mask = hepos_mask(5, 8, 1, 4).unwrap();
        for q in 0..5 {
            assert_eq!(mask.row(q), &[1, 5]);
        }
        let big = hepos_mask(2, 1024, 0, 4).unwrap();
        assert_eq!(big.row(0).len(), 256);
        assert_eq!(hepos_mask(512, 1024, 3, 4).unwrap().cell_count(), 512 * 256);
        assert_eq!(hepos_mask(3, 4, 0, 5).unwrap_err(), Error::EmptyRow { row: 0 });
    }

    #[test]
    fn spec_build_composes() {
        let spec = PatternSpec::window(4).with_global(2).with_stride(5);
        let built = spec.build(20, 20).unwrap();
        let manual = add_stride(&add_global(&window_mask(20, 4).unwrap(), 2).unwrap(), 5).unwrap();
        assert_eq!(built, manual);
        assert_eq!(spec.to_string(), "window(w=4)+global(g=2)+stride(s=5)");
        assert!(PatternSpec::empty().build(4, 4).is_err());
        assert!(PatternSpec::hepos(2, 0).with_global(1).build(4, 4).is_err());
    }

    fn brute_window(n: usize, w: usize) -> Vec<BTreeSet<usize>> {
        (0..n)
            .map(|i| (0..n).filter(|&j| i.abs_diff(j) <= w / 2).collect())
            .collect()
    }

    proptest! {
        #[test]
        fn composed_equals_union_of_parts(
            n in 1usize..=64,
            half in 1usize..8,
            g in 0usize..6,
            s in 1usize..9,
            block in 1usize..9,
            seed in 0u64..100,
        ) {
            let w = 2 * half;
            let g = g.min(n);
            let block = block.min(n);
            let composed = PatternSpec::window(w)
                .with_global(g)
                .with_stride(s)
                .with_random_blocks(block, seed)
                .build(n, n)
                .unwrap();
            let win = brute_window(n, w);
            let partners = random_block_partners(n, block, seed);
            for i in 0..n {
                let mut expect = win[i].clone();
                for j in 0..n {
                    if i < g || j < g || j % s == 0 {
                        expect.insert(j);
                    }
                    if let Some(p) = partners[i / block] {
                        if j / block == p {
                            expect.insert(j);
                        }
                    }
                }
                let got: BTreeSet<usize> = composed.row(i).iter().copied().collect();
                prop_assert_eq!(got, expect);
            }
        }
    }
}
