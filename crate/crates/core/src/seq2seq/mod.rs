//! A one-layer encoder-decoder with pluggable encoder self-attention and
//! cross-attention, trained on synthetic sequence tasks.

mod beam;
mod model;
mod task;
mod train;

pub use beam::{beam_decode, greedy_decode, length_penalty, Decoded, NextTokenScorer, DEFAULT_ALPHA, DEFAULT_BEAM};
pub use model::{CrossAttention, Model, ModelConfig, ModelScorer};
pub use task::{synth_task, Example, TaskKind, BOS, EOS, FIRST_CONTENT, PAD, UNK};
pub use train::{evaluate, train, StepLog, TrainConfig, TrainRun, CLIP_NORM, DEFAULT_BATCH, DEFAULT_LR};
