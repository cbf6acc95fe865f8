use std::fmt::Write as _;

use anyhow::bail;
use clap::{Args, ValueEnum};
use effattn::seq2seq::{
    beam_decode, synth_task, train, CrossAttention, ModelConfig, ModelScorer, TaskKind, TrainConfig, DEFAULT_ALPHA,
    DEFAULT_BATCH, DEFAULT_BEAM, DEFAULT_LR,
};
use effattn::PatternSpec;

use crate::{emit, Common, Outcome};

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cross {
    Full,
    Linformer,
    Hepos,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// copy, reverse or strided_pick.
    #[arg(long, default_value = "copy")]
    task: TaskKind,
    /// Source length.
    #[arg(long, default_value_t = 16)]
    length: usize,
    #[arg(long, default_value_t = 16)]
    vocab: usize,
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    #[arg(long, default_value_t = DEFAULT_LR)]
    lr: f64,
    #[arg(long, default_value_t = DEFAULT_BATCH)]
    batch: usize,
    /// Encoder-decoder attention.
    #[arg(long, value_enum, default_value_t = Cross::Full)]
    cross: Cross,
    /// Head stride for strided encoder-decoder attention.
    #[arg(long, default_value_t = 2)]
    sh: usize,
    /// Projection size for low-rank encoder-decoder attention.
    #[arg(long, default_value_t = 8)]
    k: usize,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    /// Encoder window width; full encoder attention when absent.
    #[arg(long)]
    w: Option<usize>,
    #[arg(long, default_value_t = 100)]
    eval_every: usize,
    /// Held-out sentences decoded with beam search after training.
    #[arg(long, default_value_t = 3)]
    samples: usize,
    #[arg(long, default_value_t = DEFAULT_BEAM)]
    beam: usize,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
}

pub fn run(args: TrainArgs) -> anyhow::Result<Outcome> {
    if args.steps == 0 {
        bail!("--steps must be >= 1");
    }
    let target_len = args.task.target_for(&vec![0; args.length]).len() + 1;
    let config = ModelConfig {
        dim: args.dim,
        heads: args.heads,
        ffn_dim: 2 * args.dim,
        encoder: args.w.map_or_else(PatternSpec::full, PatternSpec::window),
        cross: match args.cross {
            Cross::Full => CrossAttention::Full,
            Cross::Linformer => CrossAttention::Linformer { k: args.k },
            Cross::Hepos => CrossAttention::Hepos { stride: args.sh },
        },
        seed: args.common.seed,
        ..ModelConfig::new(args.vocab, args.length, target_len)
    };
    let tc = TrainConfig {
        batch: args.batch,
        eval_every: args.eval_every,
        seed: args.common.seed,
        ..TrainConfig::new(args.task, args.length, args.steps, args.lr)
    };
    let run = train(config, &tc)?;
    emit(&args.common.out, run.to_csv().as_bytes())?;

    let mut summary = String::new();
    let _ = writeln!(summary, "final accuracy {:.6}", run.final_accuracy);
    let _ = writeln!(
        summary,
        "cells per example: encoder {} encoder-decoder {}",
        run.encoder_cells, run.cross_cells
    );
    let held_out = synth_task(args.task, args.length, args.vocab, args.samples, args.common.seed ^ 0xdec0de)?;
    for ex in held_out {
        let scorer = ModelScorer {
            model: &run.model,
            source: &ex.source,
        };
        let out = beam_decode(&scorer, args.beam, args.alpha, target_len)?;
        let _ = writeln!(
            summary,
            "source {:?} decoded {:?}{}",
            ex.source,
            out.tokens,
            if out.truncated { " (truncated)" } else { "" }
        );
    }
    eprint!("{summary}");
    Ok(Outcome::Ok)
}
