use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use effattn_eval::analysis::{synthetic_corpus, Layout};
use effattn_eval::output::{claims_jsonl, scores_csv};
use effattn_eval::{corpus_stats, evaluate_corpus, read_jsonl, ContextMatchAnswerer, DEFAULT_BUDGET};

use crate::{emit, Common, Outcome};

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Synthetic {
    Front,
    Even,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Corpus file, one JSON record per line.
    #[arg(long = "in", conflicts_with = "synthetic")]
    input: Option<PathBuf>,
    /// Generate a synthetic corpus instead of reading one.
    #[arg(long, value_enum)]
    synthetic: Option<Synthetic>,
    /// Records in a synthetic corpus.
    #[arg(long, default_value_t = 50)]
    docs: usize,
    /// Source sentences in each QA context.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: usize,
    /// Also write corrupted claims for every reference sentence here.
    #[arg(long)]
    claims: Option<PathBuf>,
}

pub fn run(args: EvalArgs) -> anyhow::Result<Outcome> {
    let records = match (&args.input, args.synthetic) {
        (Some(path), None) => {
            let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
            read_jsonl(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?
        }
        (None, Some(kind)) => {
            let layout = match kind {
                Synthetic::Front => Layout::FrontLoaded,
                Synthetic::Even => Layout::Even,
            };
            synthetic_corpus(layout, args.docs, args.common.seed)
        }
        _ => bail!("give --in or --synthetic"),
    };
    let stats = corpus_stats(&records)?;
    let report = evaluate_corpus(&records, &ContextMatchAnswerer::default(), args.budget)?;
    emit(&args.common.out, scores_csv(&report, &stats).as_bytes())?;
    if let Some(path) = &args.claims {
        emit(&Some(path.clone()), claims_jsonl(&records, args.common.seed).as_bytes())?;
    }
    Ok(Outcome::Ok)
}
