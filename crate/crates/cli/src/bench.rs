use std::fmt::Write as _;

use anyhow::bail;
use clap::Args;
use effattn::ledger::{count_cells, to_csv, to_table, ParityConfig};

use crate::{emit, Common, Format, Outcome};

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    common: Common,
    /// Encoder lengths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1024")]
    n: Vec<usize>,
    /// Decoder length for encoder-decoder rows; defaults to n/2.
    #[arg(long)]
    m: Option<usize>,
    /// Window width.
    #[arg(long, default_value_t = 256)]
    w: usize,
    /// Maximum adaptive span.
    #[arg(long, default_value_t = 256)]
    max_span: usize,
    /// Low-rank projection size.
    #[arg(long, default_value_t = 256)]
    k: usize,
    /// LSH hash rounds.
    #[arg(long, default_value_t = 4)]
    rounds: usize,
    /// LSH bucket size.
    #[arg(long, default_value_t = 64)]
    bucket: usize,
    /// Sorted-block size.
    #[arg(long, default_value_t = 128)]
    block: usize,
    /// Global tokens added to the window.
    #[arg(long, default_value_t = 128)]
    g: usize,
    /// Key stride added to the window.
    #[arg(long, default_value_t = 8)]
    s: usize,
    /// Random block size added to the window.
    #[arg(long, default_value_t = 128)]
    r: usize,
    /// Head stride for strided cross-attention.
    #[arg(long, default_value_t = 4)]
    sh: usize,
    /// Exit 1 when the equal-budget constraints do not hold.
    #[arg(long)]
    strict: bool,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

pub fn run(args: BenchArgs) -> anyhow::Result<Outcome> {
    if args.format == Format::Pgm {
        bail!("bench writes text or csv");
    }
    if args.n.is_empty() {
        bail!("--n needs at least one length");
    }
    let mut reports = Vec::new();
    let mut parity = String::new();
    let mut parity_ok = true;
    for &n in &args.n {
        let cfg = ParityConfig {
            n,
            window: args.w,
            max_span: args.max_span,
            linformer_k: args.k,
            lsh_rounds: args.rounds,
            lsh_bucket: args.bucket,
            sinkhorn_block: args.block,
            globals: args.g,
            stride: args.s,
            random: args.r,
            hepos_stride: args.sh,
        };
        let m = args.m.unwrap_or(n / 2).max(1);
        for v in cfg.variants(args.common.seed) {
            reports.push(count_cells(&v, n, m)?);
        }
        let violations = cfg.violations();
        if violations.is_empty() {
            let _ = writeln!(parity, "parity n={n}: ok");
        } else {
            parity_ok = false;
            let _ = writeln!(parity, "parity n={n}: violated: {}", violations.join("; "));
        }
    }
    let consistent = reports.iter().all(|r| r.consistent());
    let body = match args.format {
        Format::Csv => to_csv(&reports),
        _ => format!("{}\n{parity}", to_table(&reports)),
    };
    emit(&args.common.out, body.as_bytes())?;
    if args.format == Format::Csv {
        eprint!("{parity}");
    }
    if !consistent {
        eprintln!("measured cells disagree with the closed form");
        return Ok(Outcome::CheckFailed);
    }
    Ok(if args.strict && !parity_ok { Outcome::CheckFailed } else { Outcome::Ok })
}
