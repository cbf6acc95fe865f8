//! Score-cell and new-parameter accounting.
//!
//! `measured_cells` comes from actually constructing each variant's mask (or
//! running its kernel); `formula_cells` is an independent arithmetic count of
//! the same support; `bound_cells` instantiates the asymptotic cost column of
//! the usual efficient-attention summary table (`n(w+1)`, `2ng`, `n⌈n/s⌉`, …).
//! Memory is reported as `cells × 8` bytes.

use std::fmt::{self, Write as _};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{param_err, Result};
use crate::kernels::{
    linformer_encdec_attention, lsh_buckets, lsh_round_mask, sinkhorn_mask, AttentionInputs,
    HeposSpec, LowRankSpec, LshSpec, SinkhornSpec,
};
use crate::patterns::{hepos_mask, Augmentation, PatternKind, PatternSpec};
use crate::tensor::Tensor;

/// An attention variant whose cost can be accounted.
#[derive(Debug, Clone, PartialEq)]
pub enum Variant {
    /// Mask-defined self-attention (full, window, adaptive span, and their
    /// global/stride/random augmentations) or one strided cross-attention head.
    Pattern(PatternSpec),
    Linformer { k: usize },
    LinformerEncDec { k: usize },
    Lsh(LshSpec),
    Sinkhorn { block: usize },
    /// All heads of strided encoder-decoder attention.
    Hepos(HeposSpec),
    FullEncDec,
}

impl Variant {
    pub fn is_exact(&self) -> bool {
        match self {
            Variant::Pattern(p) => !p
                .augments
                .iter()
                .any(|a| matches!(a, Augmentation::RandomBlocks { .. })),
            Variant::Lsh(_) => false,
            _ => true,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Pattern(p) => write!(f, "{p}"),
            Variant::Linformer { k } => write!(f, "linformer(k={k})"),
            Variant::LinformerEncDec { k } => write!(f, "linformer_encdec(k={k})"),
            Variant::Lsh(s) => write!(f, "lsh(l={} bl={} buckets={})", s.rounds, s.bucket_size, s.n_buckets),
            Variant::Sinkhorn { block } => write!(f, "sinkhorn(bs={block})"),
            Variant::Hepos(s) => write!(f, "hepos(sh={} H={})", s.stride, s.heads),
            Variant::FullEncDec => write!(f, "full_encdec"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityReport {
    pub variant: String,
    pub n: usize,
    pub m: usize,
    pub measured_cells: usize,
    pub formula_cells: usize,
    pub bound_cells: usize,
    pub new_params: usize,
    /// `measured == formula` is required when true; otherwise `measured ≤ formula`.
    pub exact: bool,
}

impl ComplexityReport {
    pub fn bytes(&self) -> usize {
        self.measured_cells * std::mem::size_of::<f64>()
    }

    pub fn consistent(&self) -> bool {
        if self.exact {
            self.measured_cells == self.formula_cells
        } else {
            self.measured_cells <= self.formula_cells
        }
    }
}

/// Accounts `variant` for encoder length `n` and decoder length `m` (`m` is
/// only used by encoder-decoder variants).
pub fn count_cells(variant: &Variant, n: usize, m: usize) -> Result<ComplexityReport> {
    if n == 0 {
        return Err(param_err("sequence length must be >= 1"));
    }
    let (measured, formula, bound, params) = match variant {
        Variant::Pattern(p) => {
            let measured = p.build(n, m)?.cell_count();
            (measured, pattern_formula(p, n, m)?, pattern_bound(p, n, m), pattern_params(p))
        }
        Variant::Linformer { k } => {
            let measured = measure_linformer(n, n, *k)?;
            (measured, n * k, n * k, 2 * k * n)
        }
        Variant::LinformerEncDec { k } => {
            let measured = measure_linformer(m, n, *k)?;
            (measured, m * k, m * k, 2 * k * n)
        }
        Variant::Lsh(spec) => {
            spec.validate(n)?;
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let keys = Tensor::randn(n, 8, 1.0, &mut rng);
            let mut measured = 0;
            for buckets in lsh_buckets(&keys, spec) {
                measured += lsh_round_mask(&buckets, spec.bucket_size)?.cell_count();
            }
            let bound = spec.rounds * n * spec.bucket_size;
            (measured, bound, bound, 0)
        }
        Variant::Sinkhorn { block } => {
            if *block == 0 || n % block != 0 {
                return Err(param_err(format!("block size {block} must divide {n}")));
            }
            let blocks = n / block;
            let spec = SinkhornSpec::new(*block, SinkhornSpec::neighbour_logits(blocks, 10.0));
            let measured = sinkhorn_mask(n, &spec)?.cell_count();
            let formula = if blocks > 1 { 2 * n * block } else { n * block };
            (measured, formula, 2 * n * block, 0)
        }
        Variant::Hepos(spec) => {
            spec.validate(n)?;
            let mut measured = 0;
            for h in 0..spec.heads {
                measured += hepos_mask(m, n, h, spec.stride)?.cell_count();
            }
            let formula = (0..spec.heads)
                .map(|h| m * (n - h % spec.stride).div_ceil(spec.stride))
                .sum();
            (measured, formula, spec.heads * m * n.div_ceil(spec.stride), 0)
        }
        Variant::FullEncDec => (m * n, m * n, m * n, 0),
    };
    Ok(ComplexityReport {
        variant: variant.to_string(),
        n,
        m,
        measured_cells: measured,
        formula_cells: formula,
        bound_cells: bound,
        new_params: params,
        exact: variant.is_exact(),
    })
}

fn measure_linformer(m: usize, n: usize, k: usize) -> Result<usize> {
    let inputs = AttentionInputs::new(Tensor::zeros(m, 1), Tensor::zeros(n, 1), Tensor::zeros(n, 1))?;
    let spec = LowRankSpec::new(Tensor::zeros(k, n), Tensor::zeros(k, n))?;
    Ok(linformer_encdec_attention(&inputs, &spec)?.score_cells)
}

/// Pairs `(i, j)` in `0..n` with `|i − j| ≤ reach`.
pub fn band_cells(n: usize, reach: usize) -> usize {
    let d = reach.min(n - 1);
    n + 2 * (d * n - d * (d + 1) / 2)
}

#[derive(Clone, Copy)]
enum Set {
    Interval(usize, usize),
    Multiples(usize),
}

/// Size of the intersection of `sets` within `0..n`.
fn intersection_size(sets: &[Set], n: usize) -> usize {
    let (mut lo, mut hi) = (0usize, n - 1);
    let mut stride = None;
    for s in sets {
        match *s {
            Set::Interval(a, b) => {
                lo = lo.max(a);
                hi = hi.min(b);
            }
            Set::Multiples(s) => stride = Some(s),
        }
    }
    if lo > hi {
        return 0;
    }
    match stride {
        None => hi - lo + 1,
        Some(s) => (hi / s + 1).saturating_sub(lo.div_ceil(s)),
    }
}

/// `|A ∪ B ∪ …|` by inclusion–exclusion.
fn union_size(sets: &[Set], n: usize) -> usize {
    let mut total: i64 = 0;
    for subset in 1u32..(1 << sets.len()) {
        let chosen: Vec<Set> = (0..sets.len())
            .filter(|b| subset & (1 << b) != 0)
            .map(|b| sets[b])
            .collect();
        let size = intersection_size(&chosen, n) as i64;
        if chosen.len() % 2 == 1 {
            total += size;
        } else {
            total -= size;
        }
    }
    total as usize
}

fn pattern_formula(p: &PatternSpec, n: usize, m: usize) -> Result<usize> {
    let reach = match p.kind {
        PatternKind::Full => return Ok(n * n),
        PatternKind::Hepos { stride, head } => {
            return Ok(m * (n - head % stride).div_ceil(stride));
        }
        PatternKind::Window { w } => Some(w / 2),
        PatternKind::AdaptiveSpan { span, ramp, .. } => Some(span + ramp),
        PatternKind::Empty => None,
    };
    if p.augments.is_empty() {
        return Ok(reach.map_or(0, |r| band_cells(n, r)));
    }
    let mut globals = 0;
    let mut stride = None;
    let mut random_extra = 0;
    for aug in &p.augments {
        match *aug {
            Augmentation::Global { g } => globals = globals.max(g),
            Augmentation::Stride { s } => stride = Some(s),
            Augmentation::RandomBlocks { block, .. } => random_extra += n * block,
        }
    }
    let mut total = 0;
    for i in 0..n {
        if i < globals {
            total += n;
            continue;
        }
        let mut sets = Vec::with_capacity(3);
        if let Some(r) = reach {
            sets.push(Set::Interval(i.saturating_sub(r), (i + r).min(n - 1)));
        }
        if globals > 0 {
            sets.push(Set::Interval(0, globals - 1));
        }
        if let Some(s) = stride {
            sets.push(Set::Multiples(s));
        }
        total += union_size(&sets, n);
    }
    Ok(total + random_extra)
}

fn pattern_bound(p: &PatternSpec, n: usize, m: usize) -> usize {
    let base = match p.kind {
        PatternKind::Empty => 0,
        PatternKind::Full => n * n,
        PatternKind::Window { w } => n * (w + 1),
        PatternKind::AdaptiveSpan { max_span, ramp, .. } => n * (2 * (max_span + ramp) + 1),
        PatternKind::Hepos { stride, .. } => m * n.div_ceil(stride),
    };
    base + p
        .augments
        .iter()
        .map(|a| match *a {
            Augmentation::Global { g } => 2 * n * g,
            Augmentation::Stride { s } => n * n.div_ceil(s),
            Augmentation::RandomBlocks { block, .. } => n * block,
        })
        .sum::<usize>()
}

fn pattern_params(p: &PatternSpec) -> usize {
    match p.kind {
        PatternKind::AdaptiveSpan { .. } => 1,
        _ => 0,
    }
}

/// Hyperparameters for the equal-budget comparison of encoder variants.
#[derive(Debug, Clone, PartialEq)]
pub struct ParityConfig {
    pub n: usize,
    pub window: usize,
    pub max_span: usize,
    pub linformer_k: usize,
    pub lsh_rounds: usize,
    pub lsh_bucket: usize,
    pub sinkhorn_block: usize,
    pub globals: usize,
    pub stride: usize,
    pub random: usize,
    pub hepos_stride: usize,
}

impl Default for ParityConfig {
    fn default() -> Self {
        Self {
            n: 1024,
            window: 256,
            max_span: 256,
            linformer_k: 256,
            lsh_rounds: 4,
            lsh_bucket: 64,
            sinkhorn_block: 128,
            globals: 128,
            stride: 8,
            random: 128,
            hepos_stride: 4,
        }
    }
}

/// Budget shared by window, adaptive span, Linformer, LSH and Sinkhorn.
pub const PARITY_BUDGET: usize = 256;
/// Per-query extra-key budget of each window augmentation.
pub const AUGMENT_BUDGET: usize = 128;
pub const PARITY_LSH_ROUNDS: usize = 4;

impl ParityConfig {
    /// Every violated constraint, as a human-readable line.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut need = |ok: bool, what: String| {
            if !ok {
                out.push(what);
            }
        };
        need(self.window == PARITY_BUDGET, format!("w = {} != {PARITY_BUDGET}", self.window));
        need(self.max_span == PARITY_BUDGET, format!("max span = {} != {PARITY_BUDGET}", self.max_span));
        need(self.linformer_k == PARITY_BUDGET, format!("k = {} != {PARITY_BUDGET}", self.linformer_k));
        need(
            self.lsh_rounds * self.lsh_bucket == PARITY_BUDGET,
            format!("l*b_l = {} != {PARITY_BUDGET}", self.lsh_rounds * self.lsh_bucket),
        );
        need(
            2 * self.sinkhorn_block == PARITY_BUDGET,
            format!("2*b_s = {} != {PARITY_BUDGET}", 2 * self.sinkhorn_block),
        );
        need(self.lsh_rounds == PARITY_LSH_ROUNDS, format!("l = {} != {PARITY_LSH_ROUNDS}", self.lsh_rounds));
        need(self.globals == AUGMENT_BUDGET, format!("g = {} != {AUGMENT_BUDGET}", self.globals));
        let strided_keys = if self.stride == 0 { 0 } else { self.n.div_ceil(self.stride) };
        need(
            strided_keys == AUGMENT_BUDGET,
            format!("ceil(n/s) = {strided_keys} != {AUGMENT_BUDGET}"),
        );
        need(self.random == AUGMENT_BUDGET, format!("r = {} != {AUGMENT_BUDGET}", self.random));
        need(
            self.linformer_k > 0 && self.hepos_stride * self.linformer_k == self.n,
            format!("s_h = {} != n/k", self.hepos_stride),
        );
        out
    }

    /// The variants compared under this configuration, for a decoder of
    /// length `m`.
    pub fn variants(&self, seed: u64) -> Vec<Variant> {
        let w = self.window;
        vec![
            Variant::Pattern(PatternSpec::full()),
            Variant::Pattern(PatternSpec::window(w)),
            Variant::Pattern(PatternSpec::adaptive_span(
                self.max_span,
                self.max_span,
                crate::patterns::DEFAULT_RAMP,
            )),
            Variant::Pattern(PatternSpec::window(w).with_global(self.globals)),
            Variant::Pattern(PatternSpec::window(w).with_stride(self.stride)),
            Variant::Pattern(PatternSpec::window(w).with_random_blocks(self.random, seed)),
            Variant::Linformer { k: self.linformer_k },
            Variant::Lsh(LshSpec {
                rounds: self.lsh_rounds,
                bucket_size: self.lsh_bucket,
                n_buckets: 2 * self.n.div_ceil(2 * self.lsh_bucket),
                seed,
            }),
            Variant::Sinkhorn {
                block: self.sinkhorn_block,
            },
            Variant::FullEncDec,
            Variant::Hepos(HeposSpec::new(self.hepos_stride, 1)),
            Variant::LinformerEncDec { k: self.linformer_k },
        ]
    }
}

/// True iff every equal-budget constraint holds.
pub fn parity_check(config: &ParityConfig) -> bool {
    config.violations().is_empty()
}

pub const CSV_HEADER: &str = "pattern,n,m,cells,formula_cells,bound_cells,bytes,new_params";

pub fn to_csv(reports: &[ComplexityReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.variant,
            r.n,
            r.m,
            r.measured_cells,
            r.formula_cells,
            r.bound_cells,
            r.bytes(),
            r.new_params
        );
    }
    out
}

/// Aligned plain-text table.
pub fn to_table(reports: &[ComplexityReport]) -> String {
    let headers = ["pattern", "n", "m", "cells", "formula", "bound", "bytes", "new_params", "ok"];
    let rows: Vec<[String; 9]> = reports
        .iter()
        .map(|r| {
            [
                r.variant.clone(),
                r.n.to_string(),
                r.m.to_string(),
                r.measured_cells.to_string(),
                r.formula_cells.to_string(),
                r.bound_cells.to_string(),
                r.bytes().to_string(),
                r.new_params.to_string(),
                if r.consistent() { "yes" } else { "NO" }.to_string(),
            ]
        })
        .collect();
    let mut widths = headers.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |cells: &[&str], out: &mut String| {
        for (i, (c, w)) in cells.iter().zip(widths).enumerate() {
            if i == 0 {
                let _ = write!(out, "{c:<w$}");
            } else {
                let _ = write!(out, "  {c:>w$}");
            }
        }
        out.push('\n');
    };
    line(&headers, &mut out);
    for row in &rows {
        let cells: Vec<&str> = row.iter().map(String::as_str).collect();
        line(&cells, &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_1024() {
        let r = count_cells(&Variant::Pattern(PatternSpec::full()), 1024, 1024).unwrap();
        assert_eq!(r.measured_cells, 1_048_576);
        assert!(r.consistent());
    }

    #[test]
    fn hepos_quarter_of_full() {
        let r = count_cells(&Variant::Hepos(HeposSpec::new(4, 1)), 1024, 512).unwrap();
        assert_eq!(r.measured_cells, 131_072);
        let full = count_cells(&Variant::FullEncDec, 1024, 512).unwrap();
        assert_eq!(full.measured_cells, 524_288);
        assert_eq!(full.measured_cells, 4 * r.measured_cells);
    }

    #[test]
    fn linformer_params() {
        let r = count_cells(&Variant::Linformer { k: 256 }, 1024, 1024).unwrap();
        assert_eq!(r.new_params, 524_288);
        assert_eq!(r.measured_cells, 1024 * 256);
    }

    #[test]
    fn band_formula_small_cases() {
        assert_eq!(band_cells(8, 1), 8 + 2 * 7);
        assert_eq!(band_cells(3, 10), 9);
        assert_eq!(band_cells(1, 4), 1);
    }

    #[test]
    fn parity_examples() {
        let base = ParityConfig::default();
        assert!(parity_check(&base));
        assert!(!parity_check(&ParityConfig {
            sinkhorn_block: 100,
            ..base.clone()
        }));
        assert!(!parity_check(&ParityConfig {
            lsh_bucket: 63,
            ..base.clone()
        }));
        assert!(!parity_check(&ParityConfig { stride: 0, ..base }));
    }

    #[test]
    fn random_blocks_bounded() {
        let p = PatternSpec::window(4).with_random_blocks(4, 3);
        let r = count_cells(&Variant::Pattern(p), 32, 32).unwrap();
        assert!(!r.exact);
        assert!(r.consistent());
    }

    #[test]
    fn csv_and_table_render() {
        let r = count_cells(&Variant::Pattern(PatternSpec::window(2)), 8, 8).unwrap();
        let csv = to_csv(std::slice::from_ref(&r));
        assert_eq!(csv, format!("{CSV_HEADER}\nwindow(w=2),8,8,22,22,24,176,0\n"));
        let table = to_table(&[r]);
        assert!(table.starts_with("pattern"));
        assert!(table.lines().nth(1).unwrap().ends_with("yes"));
    }
}
