//! `effattn`: mask rendering, self-verification, complexity tables, toy
//! training and summary evaluation.
//!
//! Exit status: 0 on success, 1 when a check fails or input cannot be
//! parsed, 2 on usage errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod bench;
mod eval;
mod mask;
mod train;

#[derive(Parser, Debug)]
#[command(name = "effattn", version, about = "Efficient attention patterns, kernels and evaluation tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render an attention mask as text, CSV or a PGM image.
    Mask(mask::MaskArgs),
    /// Check every kernel against the dense reference and run gradient checks.
    Verify(VerifyArgs),
    /// Tabulate attended cells for each attention variant.
    Bench(bench::BenchArgs),
    /// Train the toy encoder-decoder on a synthetic task.
    Train(train::TrainArgs),
    /// Score summaries with cloze QA and report corpus statistics.
    Eval(eval::EvalArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Seed for every random choice.
    #[arg(long, env = "EFFATTN_SEED", default_value_t = 0)]
    seed: u64,
    /// Write the main output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Csv,
    Pgm,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    /// Random cases per oracle check.
    #[arg(long, default_value_t = 10)]
    cases: usize,
    /// Largest sequence length for oracle checks (multiple of 8).
    #[arg(long, default_value_t = 64)]
    max_n: usize,
    /// Largest head dimension for oracle checks.
    #[arg(long, default_value_t = 8)]
    max_d: usize,
    /// Flip one cell of every reference mask; the run must then fail.
    #[arg(long)]
    fault: bool,
}

/// Result of a subcommand: either success or a failed check whose report has
/// already been written.
pub enum Outcome {
    Ok,
    CheckFailed,
}

pub fn emit(out: &Option<PathBuf>, bytes: &[u8]) -> anyhow::Result<()> {
    use std::io::Write;
    match out {
        Some(path) => std::fs::write(path, bytes)
            .map_err(|e| anyhow::anyhow!("cannot write {}: {e}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn verify(args: VerifyArgs) -> anyhow::Result<Outcome> {
    let config = effattn::verify::VerifyConfig {
        seed: args.common.seed,
        cases: args.cases,
        max_n: args.max_n,
        max_d: args.max_d,
        fault: args.fault,
        ..Default::default()
    };
    let report = effattn::verify::run_verify(&config)?;
    emit(&args.common.out, report.render().as_bytes())?;
    Ok(if report.passed() { Outcome::Ok } else { Outcome::CheckFailed })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Mask(a) => mask::run(a),
        Command::Verify(a) => verify(a),
        Command::Bench(a) => bench::run(a),
        Command::Train(a) => train::run(a),
        Command::Eval(a) => eval::run(a),
    };
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
