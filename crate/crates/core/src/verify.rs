//! Self-check suite: every efficient kernel against the dense masked
//! reference, finite-difference gradient checks, and structural invariants.
//!
//! The report is a pure function of the configuration, so two runs with the
//! same seed render byte-identical text.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{finite_difference_check, Tape, Var};
use crate::error::{param_err, Result};
use crate::kernels::{
    full_attention, full_attention_tape, hepos_attention, hepos_attention_tape, linformer_attention,
    linformer_attention_tape, linformer_encdec_attention, lsh_attention, lsh_buckets, lsh_round_mask,
    lsh_union_mask, masked_attention_reference, pattern_attention, sinkhorn_attention, sinkhorn_mask,
    windowed_attention, windowed_attention_tape, AttentionInputs, HeposSpec, LowRankSpec, LshCombine, LshSpec,
    SinkhornSpec,
};
use crate::ledger::{count_cells, parity_check, ParityConfig, Variant};
use crate::mask::{softmax_masked, AttentionMask};
use crate::patterns::{hepos_keys, PatternSpec};
use crate::tensor::Tensor;

pub const ORACLE_TOLERANCE: f64 = 1e-10;
pub const GRADIENT_TOLERANCE: f64 = 1e-4;
const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Random cases per oracle check.
    pub cases: usize,
    /// Largest sequence length for oracle checks; a multiple of 8.
    pub max_n: usize,
    pub max_d: usize,
    /// Largest sequence length for gradient checks.
    pub grad_n: usize,
    /// Flip one cell of every oracle mask so the suite must fail.
    pub fault: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            cases: 10,
            max_n: 64,
            max_d: 8,
            grad_n: 16,
            fault: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub tolerance: f64,
    pub cases: usize,
    /// Largest error seen (violation count for structural checks).
    pub worst: f64,
    /// Reproduction dump of the first failing case.
    pub failure: Option<String>,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<CheckOutcome>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckOutcome::passed)
    }

    pub fn first_failure(&self) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| !c.passed())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<28} {:>5} {:>10} {:>10}  status", "check", "cases", "worst", "tolerance");
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{:<28} {:>5} {:>10.3e} {:>10.0e}  {}",
                c.name,
                c.cases,
                c.worst,
                c.tolerance,
                if c.passed() { "ok" } else { "FAIL" }
            );
        }
        let ok = self.checks.iter().filter(|c| c.passed()).count();
        let _ = writeln!(out, "{ok}/{} checks passed", self.checks.len());
        if let Some(c) = self.first_failure() {
            let _ = writeln!(out, "\nfirst failing case ({}):", c.name);
            out.push_str(c.failure.as_deref().unwrap_or_default());
        }
        out
    }
}

pub fn run_verify(config: &VerifyConfig) -> Result<VerifyReport> {
    if config.max_n < 8 || config.max_n % 8 != 0 {
        return Err(param_err(format!("max_n must be a positive multiple of 8, got {}", config.max_n)));
    }
    if config.max_d == 0 || config.cases == 0 || config.grad_n < 4 {
        return Err(param_err("max_d and cases must be >= 1, grad_n >= 4"));
    }
    let oracles: [(&'static str, OracleFn); 12] = [
        ("oracle/adaptive_span", adaptive_span_trial),
        ("oracle/full", full_trial),
        ("oracle/hepos", hepos_trial),
        ("oracle/hepos_tape", hepos_tape_trial),
        ("oracle/linformer", linformer_trial),
        ("oracle/linformer_encdec", linformer_encdec_trial),
        ("oracle/lsh_average", lsh_average_trial),
        ("oracle/lsh_union", lsh_union_trial),
        ("oracle/pattern", pattern_trial),
        ("oracle/sinkhorn", sinkhorn_trial),
        ("oracle/sparse_tape", sparse_tape_trial),
        ("oracle/window", window_trial),
    ];
    let mut checks = Vec::new();
    for (name, trial) in oracles {
        checks.push(run_oracle(name, trial, config));
    }
    for (name, kernel) in [
        ("grad/full", GradKernel::Full),
        ("grad/hepos", GradKernel::Hepos),
        ("grad/linformer", GradKernel::Linformer),
        ("grad/window", GradKernel::Window),
    ] {
        checks.push(run_gradient(name, kernel, config));
    }
    checks.push(hepos_structure(config.max_n));
    checks.push(ledger_closed_forms());
    checks.push(parity_defaults());
    checks.push(softmax_rows(config));
    checks.sort_by_key(|c| c.name);
    Ok(VerifyReport { checks })
}

struct Trial {
    inputs: AttentionInputs,
    params: String,
    got: Tensor,
    want: Tensor,
}

type OracleFn = fn(&mut ChaCha8Rng, usize, usize, bool) -> Result<Trial>;

fn case_rng(config: &VerifyConfig, salt: &str, case: usize) -> (u64, ChaCha8Rng) {
    let mut h = config.seed ^ 0x9e37_79b9_7f4a_7c15;
    for b in salt.bytes() {
        h = h.wrapping_mul(0x100_0000_01b3).wrapping_add(b as u64);
    }
    let seed = h.wrapping_add(case as u64);
    (seed, ChaCha8Rng::seed_from_u64(seed))
}

fn run_oracle(name: &'static str, trial: OracleFn, config: &VerifyConfig) -> CheckOutcome {
    let mut worst: f64 = 0.0;
    let mut failure = None;
    for case in 0..config.cases {
        let (seed, mut rng) = case_rng(config, name, case);
        let n = 8 * rng.gen_range(1..=config.max_n / 8);
        let d = rng.gen_range(1..=config.max_d);
        let header = format!("case {case} seed {seed} n {n} d {d}\n");
        let verdict = trial(&mut rng, n, d, config.fault).and_then(|t| {
            let err = t.got.max_abs_diff(&t.want)?;
            Ok((err, t))
        });
        match verdict {
            Ok((err, t)) => {
                let err = if err.is_finite() { err } else { f64::INFINITY };
                worst = worst.max(err);
                if err > ORACLE_TOLERANCE && failure.is_none() {
                    failure = Some(format!("{header}{}max_abs_diff {err:e}\n{}", t.params, dump(&t.inputs)));
                }
            }
            Err(e) => {
                worst = f64::INFINITY;
                if failure.is_none() {
                    failure = Some(format!("{header}error: {e}\n"));
                }
            }
        }
    }
    CheckOutcome {
        name,
        tolerance: ORACLE_TOLERANCE,
        cases: config.cases,
        worst,
        failure,
    }
}

fn dump(inputs: &AttentionInputs) -> String {
    let mut out = String::new();
    for (label, t) in [("q", &inputs.q), ("k", &inputs.k), ("v", &inputs.v)] {
        let _ = writeln!(out, "{label} {}x{}", t.rows(), t.cols());
        for r in 0..t.rows() {
            let row: Vec<String> = t.row(r).iter().map(|x| format!("{x:?}")).collect();
            let _ = writeln!(out, "  {}", row.join(" "));
        }
    }
    out
}

fn random_inputs(rng: &mut ChaCha8Rng, m: usize, n: usize, d: usize, dv: usize) -> AttentionInputs {
    let q = Tensor::randn(m, d, 1.0, rng);
    let k = Tensor::randn(n, d, 1.0, rng);
    let v = Tensor::randn(n, dv, 1.0, rng);
    AttentionInputs { q, k, v }
}

/// Dense reference, with one cell toggled in fault mode.
fn oracle(inputs: &AttentionInputs, mask: &AttentionMask, fault: bool) -> Result<Tensor> {
    if fault {
        let mut bad = mask.clone();
        bad.flip(0, mask.n_keys() - 1);
        return masked_attention_reference(inputs, &bad);
    }
    masked_attention_reference(inputs, mask)
}

/// `|i − j| ≤ w/2`, straight from the definition.
fn brute_window(n: usize, w: usize) -> Result<AttentionMask> {
    let rows = (0..n).map(|i| (0..n).filter(|&j| i.abs_diff(j) <= w / 2).collect()).collect();
    AttentionMask::from_rows(n, rows)
}

fn full_trial(rng: &mut ChaCha8Rng, n: usize, d: usize, fault: bool) -> Result<Trial> {
    let inputs = random_inputs(rng, n, n, d, d);
    let got = full_attention(&inputs)?.output;
    let want = oracle(&inputs, &AttentionMask::full(n, n), fault)?;
    Ok(Trial { inputs, params: String::new(), got, want })
}

fn window_trial(rng: &mut ChaCha8Rng, n: usize, d: usize, fault: bool) -> Result<Trial> {
    let inputs = random_inputs(rng, n, n, d, d);
    let w = 2 * rng.gen_range(1..=n / 2);
    let got = windowed_attention(&inputs, w)?.output;
    let want = oracle(&inputs, &brute_window(n, w)?, fault)?;
    Ok(Trial { inputs, params: format!("w {w}\n"), got, want })
}

fn pattern_trial(rng: &mut ChaCha8Rng, n: usize, d: usize, fault: bool) -> Result<Trial> {
    let inputs = random_inputs(rng, n, n, d, d);
    let mut spec = PatternSpec::window(2 * rng.gen_range(1..=4));
    if rng.gen_bool(0.7) {
        spec = spec.with_global(rng.gen_range(1..=3));
    }
    if rng.gen_bool(0.7) {
        spec = spec.with_stride(rng.gen_range(2..=n));
    }
    if rng.gen_bool(0.7) {
        spec = spec.with_random_blocks(rng.gen_range(1..=8), rng.gen());
    }
    let got = pattern_attention(&inputs, &spec)?.output;
    let want = oracle(&inputs, &spec.build(n, n)?, fault)?;
    Ok(Trial { inputs, params: format!("pattern {spec}\n"), got, want })
}

fn adaptive_span_trial(rng: &mut ChaCha8Rng, n: usize, d: usize, fault: bool) -> Result<Trial> {
    let inputs = random_inputs(rng, n, n, d, d);
    let span = rng.gen_range(0..n);
    let spec = PatternSpec::adaptive_span(span, n, rng.gen_range(1..=8));
    let got = pattern_attention(&inputs, &spec)?.output;
    let want = oracle(&inputs, &spec.build(n, n)?, fault)?;
    Ok(Trial { inputs, params: format!("pattern {spec}\n"), got, want })
}

fn lsh_spec(rng: &mut ChaCha8Rng, n: usize) -> LshSpec {
    let bucket_size = [2, 4, 8][rng.gen_range(0..3)];
    let n_buckets = n.div_ceil(bucket_size).next_multiple_of(2);
    LshSpec {
        rounds: rng.gen_range(1..=4),
        bucket_size,
        n_buckets,
        seed: rng.gen(),
    }
}

fn lsh_union_trial(rng: &mut ChaCha8Rng, n: usize, d: usize, fault: bool) -> Result<Trial> {
    let inputs = random_inputs(rng, n, n, d, d);
    let spec = lsh_spec(rng, n);
    let got = lsh_attention(&inputs, &spec, LshCombine::Union)?.output;
    let want = oracle(&inputs, &lsh_union_mask(&inputs.k, &spec)?, fault)?;
    Ok(Trial { inputs, params: format!("{spec:?}\n"), got, want })
}

fn lsh_average_trial(rng: &mut ChaCha8Rng, n: usize, d: usize, fault: bool) -> Result<Trial> {
    let inputs = random_inputs(rng, n, n, d, d);
    let spec = lsh_spec(rng, n);
    let got = lsh_attention(&inputs, &spec, LshCombine::Average)?.output;
    let mut want = Tensor::zeros(n, d);
    for buckets in lsh_buckets(&inputs.k, &spec) {
        want.add_assign(&oracle(&inputs, &lsh_round_mask(&buckets, spec.bucket_size)?, fault)?);
    }
    let want = want.scale(1.0 / spec.rounds as f64);
    Ok(Trial { inputs, params: format!("{spec:?}\n"), got, want })
}

fn sinkhorn_trial(rng: &mut ChaCha8Rng, n: usize, d: usize, fault: bool) -> Result<Trial> {
    let inputs = random_inputs(rng, n, n, d, d);
    let block = [2, 4, 8][rng.gen_range(0..3)];
    let blocks = n / block;
    let spec = SinkhornSpec::new(block, Tensor::randn(blocks, blocks, 2.0, rng));
    let got = sinkhorn_attention(&inputs, &spec)?.output;
    let want = oracle(&inputs, &sinkhorn_mask(n, &spec)?, fault)?;
    Ok(Trial { inputs, params: format!("block {block} logits {:?}\n", spec.sort_logits.data()), got, want })
}

fn low_rank(rng: &mut ChaCha8Rng, n: usize) -> Result<LowRankSpec> {
    let k = rng.gen_range(1..=n);
    let scale = 1.0 / (n as f64).sqrt();
    LowRankSpec::new(Tensor::randn(k, n, scale, rng), Tensor::randn(k, n, scale, rng))
}

fn linformer_oracle(inputs: &AttentionInputs, spec: &LowRankSpec, fault: bool) -> Result<Tensor> {
    let projected = AttentionInputs {
        q: inputs.q.clone(),
        k: spec.e.matmul(&inputs.k)?,
        v: spec.f.matmul(&inputs.v)?,
    };
    oracle(&projected, &AttentionMask::full(inputs.q.rows(), spec.k()), fault)
}

fn linformer_trial(rng: &mut ChaCha8Rng, n: usize, d: usize, fault: bool) -> Result<Trial> {
    let inputs = random_inputs(rng, n, n, d, d);
    let spec = low_rank(rng, n)?;
    let got = linformer_attention(&inputs, &spec)?.output;
    let want = linformer_oracle(&inputs, &spec, fault)?;
    Ok(Trial { inputs, params: format!("k {}\n", spec.k()), got, want })
}

fn linformer_encdec_trial(rng: &mut ChaCha8Rng, n: usize, d: usize, fault: bool) -> Result<Trial> {
    let m = rng.gen_range(1..=n);
    let inputs = random_inputs(rng, m, n, d, d);
    let spec = low_rank(rng, n)?;
    let got = linformer_encdec_attention(&inputs, &spec)?.output;
    let want = linformer_oracle(&inputs, &spec, fault)?;
    Ok(Trial { inputs, params: format!("m {m} k {}\n", spec.k()), got, want })
}

fn hepos_case(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (usize, HeposSpec, usize) {
    let heads = *[1, 2, 4].iter().filter(|&&h| h <= d).last().unwrap_or(&1);
    let heads = rng.gen_range(1..=heads);
    let d = heads * (d / heads).max(1);
    let spec = HeposSpec::new(rng.gen_range(1..=n.min(8)), heads);
    (rng.gen_range(1..=n), spec, d)
}

/// Per-head dense reference over `(i − (h mod s)) mod s == 0` key masks.
fn hepos_oracle(inputs: &AttentionInputs, spec: &HeposSpec, fault: bool) -> Result<Tensor> {
    let (m, n) = (inputs.q.rows(), inputs.k.rows());
    let dh = inputs.q.cols() / spec.heads;
    let dvh = inputs.v.cols() / spec.heads;
    let mut parts = Vec::new();
    for h in 0..spec.heads {
        let offset = h % spec.stride;
        let keys: Vec<usize> = (0..n).filter(|&i| i >= offset && (i - offset) % spec.stride == 0).collect();
        let mask = AttentionMask::from_rows(n, vec![keys; m])?;
        let head = AttentionInputs {
            q: inputs.q.slice_cols(h * dh, dh)?,
            k: inputs.k.slice_cols(h * dh, dh)?,
            v: inputs.v.slice_cols(h * dvh, dvh)?,
        };
        parts.push(oracle(&head, &mask, fault)?);
    }
    Tensor::concat_cols(&parts.iter().collect::<Vec<_>>())
}

fn hepos_trial(rng: &mut ChaCha8Rng, n: usize, d: usize, fault: bool) -> Result<Trial> {
    let (m, spec, d) = hepos_case(rng, n, d);
    let inputs = random_inputs(rng, m, n, d, d);
    let got = hepos_attention(&inputs, &spec)?.output;
    let want = hepos_oracle(&inputs, &spec, fault)?;
    Ok(Trial { inputs, params: format!("m {m} {spec:?}\n"), got, want })
}

fn hepos_tape_trial(rng: &mut ChaCha8Rng, n: usize, d: usize, fault: bool) -> Result<Trial> {
    let (m, spec, d) = hepos_case(rng, n, d);
    let inputs = random_inputs(rng, m, n, d, d);
    let mut tape = Tape::new();
    let (q, k, v) = (tape.leaf(inputs.q.clone()), tape.leaf(inputs.k.clone()), tape.leaf(inputs.v.clone()));
    let (out, _) = hepos_attention_tape(&mut tape, q, k, v, &spec)?;
    let got = tape.value(out).clone();
    let want = hepos_oracle(&inputs, &spec, fault)?;
    Ok(Trial { inputs, params: format!("m {m} {spec:?}\n"), got, want })
}

fn sparse_tape_trial(rng: &mut ChaCha8Rng, n: usize, d: usize, fault: bool) -> Result<Trial> {
    let m = rng.gen_range(1..=n);
    let inputs = random_inputs(rng, m, n, d, d);
    let rows = (0..m)
        .map(|_| {
            let mut row: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.3)).collect();
            if row.is_empty() {
                row.push(rng.gen_range(0..n));
            }
            row
        })
        .collect();
    let mask = Arc::new(AttentionMask::from_rows(n, rows)?);
    let mut tape = Tape::new();
    let (q, k, v) = (tape.leaf(inputs.q.clone()), tape.leaf(inputs.k.clone()), tape.leaf(inputs.v.clone()));
    let (out, _) = tape.sparse_attention(q, k, v, mask.clone(), inputs.scale())?;
    let got = tape.value(out).clone();
    let want = oracle(&inputs, &mask, fault)?;
    Ok(Trial { inputs, params: format!("m {m} cells {}\n", mask.cell_count()), got, want })
}

#[derive(Debug, Clone, Copy)]
enum GradKernel {
    Full,
    Window,
    Linformer,
    Hepos,
}

/// Differentiates `sum(kernel(q, k, v) ⊙ probe)` with respect to each of
/// q, k and v in turn (and the projections for the low-rank kernel).
fn run_gradient(name: &'static str, kernel: GradKernel, config: &VerifyConfig) -> CheckOutcome {
    const CASES: usize = 3;
    let mut worst: f64 = 0.0;
    let mut failure = None;
    for case in 0..CASES {
        let (seed, mut rng) = case_rng(config, name, case);
        let n = rng.gen_range(4..=config.grad_n);
        let d = 4;
        let m = match kernel {
            GradKernel::Hepos => rng.gen_range(1..=n),
            _ => n,
        };
        let w = 2 * rng.gen_range(1..=3);
        let rank = rng.gen_range(1..=n);
        let hepos = HeposSpec::new(rng.gen_range(1..=n.min(4)), 2);
        let mut leaves = vec![
            Tensor::randn(m, d, 1.0, &mut rng),
            Tensor::randn(n, d, 1.0, &mut rng),
            Tensor::randn(n, d, 1.0, &mut rng),
        ];
        if let GradKernel::Linformer = kernel {
            leaves.push(Tensor::randn(rank, n, 0.5, &mut rng));
            leaves.push(Tensor::randn(rank, n, 0.5, &mut rng));
        }
        let probe = Tensor::randn(m, d, 1.0, &mut rng);
        let header = format!("case {case} seed {seed} m {m} n {n} d {d} w {w} k {rank} {hepos:?}\n");
        for wrt in 0..leaves.len() {
            let f = |tape: &mut Tape, x: Var| -> Result<Var> {
                let vars: Vec<Var> = (0..leaves.len())
                    .map(|i| if i == wrt { x } else { tape.leaf(leaves[i].clone()) })
                    .collect();
                let (out, _) = match kernel {
                    GradKernel::Full => full_attention_tape(tape, vars[0], vars[1], vars[2])?,
                    GradKernel::Window => windowed_attention_tape(tape, vars[0], vars[1], vars[2], w)?,
                    GradKernel::Linformer => {
                        linformer_attention_tape(tape, vars[0], vars[1], vars[2], vars[3], vars[4])?
                    }
                    GradKernel::Hepos => hepos_attention_tape(tape, vars[0], vars[1], vars[2], &hepos)?,
                };
                let p = tape.leaf(probe.clone());
                let prod = tape.mul(out, p)?;
                Ok(tape.sum(prod))
            };
            match finite_difference_check(f, &leaves[wrt], FD_STEP) {
                Ok(err) => {
                    worst = worst.max(err);
                    if err > GRADIENT_TOLERANCE && failure.is_none() {
                        failure = Some(format!("{header}input {wrt} relative error {err:e}\n"));
                    }
                }
                Err(e) => {
                    worst = f64::INFINITY;
                    if failure.is_none() {
                        failure = Some(format!("{header}input {wrt} error: {e}\n"));
                    }
                }
            }
        }
    }
    CheckOutcome {
        name,
        tolerance: GRADIENT_TOLERANCE,
        cases: CASES,
        worst,
        failure,
    }
}

fn structural(name: &'static str, cases: usize, violations: Vec<String>) -> CheckOutcome {
    CheckOutcome {
        name,
        tolerance: 0.0,
        cases,
        worst: violations.len() as f64,
        failure: violations.first().map(|v| format!("{v}\n")),
    }
}

/// Every `(n, s)` with `s ≤ n ≤ max_n`: balanced per-head key counts and an
/// exact partition of the keys across heads `0..s`.
pub fn hepos_structure_violations(max_n: usize) -> (usize, Vec<String>) {
    let mut bad = Vec::new();
    let mut cases = 0;
    for n in 1..=max_n {
        for s in 1..=n {
            cases += 1;
            let mut owner = vec![usize::MAX; n];
            for h in 0..s {
                let keys = hepos_keys(n, h, s);
                if keys.len() != n / s && keys.len() != n.div_ceil(s) {
                    bad.push(format!("n {n} s {s} head {h}: {} keys", keys.len()));
                }
                for k in keys {
                    if owner[k] != usize::MAX {
                        bad.push(format!("n {n} s {s}: key {k} in heads {} and {h}", owner[k]));
                    }
                    owner[k] = h;
                }
            }
            if let Some(k) = owner.iter().position(|&o| o == usize::MAX) {
                bad.push(format!("n {n} s {s}: key {k} uncovered"));
            }
        }
    }
    (cases, bad)
}

fn hepos_structure(max_n: usize) -> CheckOutcome {
    let (cases, bad) = hepos_structure_violations(max_n);
    structural("structure/hepos_partition", cases, bad)
}

fn ledger_closed_forms() -> CheckOutcome {
    let variants = [
        Variant::Pattern(PatternSpec::full()),
        Variant::Pattern(PatternSpec::window(4)),
        Variant::Pattern(PatternSpec::window(6).with_global(2).with_stride(5)),
        Variant::Pattern(PatternSpec::adaptive_span(3, 8, 2)),
        Variant::Linformer { k: 8 },
        Variant::Sinkhorn { block: 8 },
        Variant::Hepos(HeposSpec::new(4, 4)),
        Variant::FullEncDec,
    ];
    let mut bad = Vec::new();
    let mut cases = 0;
    for n in [16, 64, 256] {
        for v in &variants {
            cases += 1;
            match count_cells(v, n, n / 2) {
                Ok(r) if r.consistent() => {}
                Ok(r) => bad.push(format!(
                    "{v} n {n}: measured {} formula {}",
                    r.measured_cells, r.formula_cells
                )),
                Err(e) => bad.push(format!("{v} n {n}: {e}")),
            }
        }
    }
    structural("structure/ledger", cases, bad)
}

fn parity_defaults() -> CheckOutcome {
    let cfg = ParityConfig::default();
    let mut bad = cfg.violations();
    if !parity_check(&cfg) && bad.is_empty() {
        bad.push("parity_check rejected defaults".into());
    }
    structural("structure/parity", 1, bad)
}

fn softmax_rows(config: &VerifyConfig) -> CheckOutcome {
    let mut bad = Vec::new();
    for case in 0..config.cases {
        let (seed, mut rng) = case_rng(config, "softmax", case);
        let n = 8 * rng.gen_range(1..=config.max_n / 8);
        let scores = Tensor::randn(n, n, 20.0, &mut rng);
        let w = 2 * rng.gen_range(1..=n / 2);
        let result = brute_window(n, w).and_then(|mask| softmax_masked(&scores, &mask));
        match result {
            Ok(p) => {
                for r in 0..n {
                    let s: f64 = p.row(r).iter().sum();
                    if (s - 1.0).abs() > 1e-12 {
                        bad.push(format!("seed {seed} n {n} w {w}: row {r} sums to {s:e}"));
                    }
                }
            }
            Err(e) => bad.push(format!("seed {seed}: {e}")),
        }
    }
    structural("structure/softmax_rows", config.cases, bad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> VerifyConfig {
        VerifyConfig {
            cases: 2,
            max_n: 16,
            grad_n: 6,
            ..VerifyConfig::default()
        }
    }

    #[test]
    fn clean_suite_passes_and_is_sorted() {
        let report = run_verify(&quick()).unwrap();
        assert!(report.passed(), "{}", report.render());
        let names: Vec<_> = report.checks.iter().map(|c| c.name).collect();
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(names, sorted);
    }

    #[test]
    fn fault_is_detected_with_dump() {
        let report = run_verify(&VerifyConfig { fault: true, ..quick() }).unwrap();
        assert!(!report.passed());
        let text = report.render();
        assert!(text.contains("first failing case"));
        assert!(text.contains("seed"));
    }

    #[test]
    fn report_is_reproducible() {
        let a = run_verify(&quick()).unwrap().render();
        let b = run_verify(&quick()).unwrap().render();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_config_rejected() {
        assert!(run_verify(&VerifyConfig { max_n: 12, ..quick() }).is_err());
    }
}
