use std::fmt::Write as _;

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use effattn::kernels::{lsh_union_mask, sinkhorn_mask, LshSpec, SinkhornSpec};
use effattn::patterns::{hepos_mask, DEFAULT_RAMP};
use effattn::{AttentionMask, PatternKind, PatternSpec, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{emit, Common, Format, Outcome};

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternName {
    /// No base cells; combine with --g, --s or --r.
    None,
    Full,
    Window,
    Adaptive,
    Hepos,
    Lsh,
    Sinkhorn,
}

#[derive(Args, Debug)]
pub struct MaskArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    pattern: PatternName,
    /// Sequence (encoder) length.
    #[arg(long)]
    n: usize,
    /// Decoder length for strided cross-attention; defaults to --n.
    #[arg(long)]
    m: Option<usize>,
    /// Window width (even); each query sees w/2 keys on each side.
    #[arg(long)]
    w: Option<usize>,
    /// Global tokens.
    #[arg(long)]
    g: Option<usize>,
    /// Key stride.
    #[arg(long)]
    s: Option<usize>,
    /// Random block size.
    #[arg(long)]
    r: Option<usize>,
    /// Adaptive span z.
    #[arg(long)]
    span: Option<usize>,
    #[arg(long)]
    max_span: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_RAMP)]
    ramp: usize,
    /// Head stride for strided cross-attention.
    #[arg(long)]
    sh: Option<usize>,
    /// Heads to draw for strided cross-attention, one panel each.
    #[arg(long, default_value_t = 1)]
    heads: usize,
    /// Hash rounds for LSH.
    #[arg(long, default_value_t = 1)]
    rounds: usize,
    /// Bucket (chunk) size for LSH.
    #[arg(long, default_value_t = 4)]
    bucket: usize,
    /// Block size for sorted-block attention.
    #[arg(long, default_value_t = 4)]
    block: usize,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

fn need(value: Option<usize>, flag: &str, pattern: &str) -> anyhow::Result<usize> {
    value.with_context(|| format!("--pattern {pattern} needs {flag}"))
}

fn augment(mut spec: PatternSpec, args: &MaskArgs) -> PatternSpec {
    if let Some(g) = args.g {
        spec = spec.with_global(g);
    }
    if let Some(s) = args.s {
        spec = spec.with_stride(s);
    }
    if let Some(r) = args.r {
        spec = spec.with_random_blocks(r, args.common.seed);
    }
    spec
}

/// `(label, mask)` panels to draw.
fn build(args: &MaskArgs) -> anyhow::Result<Vec<(String, AttentionMask)>> {
    let n = args.n;
    let mut rng = ChaCha8Rng::seed_from_u64(args.common.seed);
    let single = |spec: PatternSpec| -> anyhow::Result<Vec<(String, AttentionMask)>> {
        let mask = spec.build(n, n)?;
        Ok(vec![(spec.to_string(), mask)])
    };
    if args.pattern != PatternName::Hepos && args.heads != 1 {
        bail!("--heads only applies to --pattern hepos");
    }
    match args.pattern {
        PatternName::None => single(augment(PatternSpec::new(PatternKind::Empty), args)),
        PatternName::Full => single(augment(PatternSpec::full(), args)),
        PatternName::Window => single(augment(PatternSpec::window(need(args.w, "--w", "window")?), args)),
        PatternName::Adaptive => {
            let span = need(args.span, "--span", "adaptive")?;
            let spec = PatternSpec::adaptive_span(span, args.max_span.unwrap_or(span), args.ramp);
            if args.g.is_some() || args.s.is_some() || args.r.is_some() {
                bail!("the adaptive span mask takes no augmentations");
            }
            single(spec)
        }
        PatternName::Hepos => {
            let sh = need(args.sh, "--sh", "hepos")?;
            let m = args.m.unwrap_or(n);
            if args.heads == 0 {
                bail!("--heads must be >= 1");
            }
            (0..args.heads)
                .map(|h| Ok((format!("head {h}"), hepos_mask(m, n, h, sh)?)))
                .collect()
        }
        PatternName::Lsh => {
            let keys = Tensor::randn(n, 8, 1.0, &mut rng);
            let spec = LshSpec {
                rounds: args.rounds,
                bucket_size: args.bucket,
                n_buckets: 2 * n.div_ceil(2 * args.bucket.max(1)),
                seed: args.common.seed,
            };
            Ok(vec![(format!("lsh(l={} bl={})", spec.rounds, spec.bucket_size), lsh_union_mask(&keys, &spec)?)])
        }
        PatternName::Sinkhorn => {
            if args.block == 0 || n % args.block != 0 {
                bail!("--block {} must divide --n {n}", args.block);
            }
            let blocks = n / args.block;
            let spec = SinkhornSpec::new(args.block, Tensor::randn(blocks, blocks, 1.0, &mut rng));
            Ok(vec![(format!("sinkhorn(bs={})", args.block), sinkhorn_mask(n, &spec)?)])
        }
    }
}

/// Panels side by side, separated by a one-pixel mid-grey column.
fn panels_pgm(panels: &[(String, AttentionMask)]) -> Vec<u8> {
    if let [(_, mask)] = panels {
        return mask.render_pgm();
    }
    let rows = panels.iter().map(|(_, m)| m.n_queries()).max().unwrap_or(0);
    let cols: usize = panels.iter().map(|(_, m)| m.n_keys()).sum::<usize>() + panels.len().saturating_sub(1);
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    let dense: Vec<Tensor> = panels.iter().map(|(_, m)| m.to_dense()).collect();
    for r in 0..rows {
        for (i, t) in dense.iter().enumerate() {
            if i > 0 {
                out.push(128);
            }
            for c in 0..t.cols() {
                let v = if r < t.rows() { t.get(r, c) } else { 0.0 };
                out.push((v * 255.0).round() as u8);
            }
        }
    }
    out
}

pub fn run(args: MaskArgs) -> anyhow::Result<Outcome> {
    let panels = build(&args)?;
    let bytes = match args.format {
        Format::Pgm => panels_pgm(&panels),
        Format::Text => {
            let mut out = String::new();
            for (i, (label, mask)) in panels.iter().enumerate() {
                if panels.len() > 1 {
                    if i > 0 {
                        out.push('\n');
                    }
                    let _ = writeln!(out, "{label}");
                }
                out.push_str(&mask.render_text());
            }
            out.into_bytes()
        }
        Format::Csv => {
            let mut out = String::from("panel,query,key,weight\n");
            for (i, (_, mask)) in panels.iter().enumerate() {
                for q in 0..mask.n_queries() {
                    let soft = mask.soft_row(q);
                    for (j, &k) in mask.row(q).iter().enumerate() {
                        let w = soft.map_or(1.0, |s| s[j]);
                        let _ = writeln!(out, "{i},{q},{k},{w}");
                    }
                }
            }
            out.into_bytes()
        }
    };
    emit(&args.common.out, &bytes)?;
    Ok(Outcome::Ok)
}
