use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{param_err, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
/// Smallest id a task may emit as content.
pub const FIRST_CONTENT: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Copy,
    Reverse,
    /// Every fourth source token, starting with the first.
    StridedPick,
}

impl FromStr for TaskKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "copy" => Ok(Self::Copy),
            "reverse" => Ok(Self::Reverse),
            "strided_pick" | "strided-pick" => Ok(Self::StridedPick),
            other => Err(param_err(format!("unknown task {other:?}"))),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Copy => "copy",
            Self::Reverse => "reverse",
            Self::StridedPick => "strided_pick",
        })
    }
}

impl TaskKind {
    pub fn target_for(self, source: &[usize]) -> Vec<usize> {
        match self {
            Self::Copy => source.to_vec(),
            Self::Reverse => source.iter().rev().copied().collect(),
            Self::StridedPick => source.iter().step_by(4).copied().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
}

/// `count` random source sequences of `length` content tokens drawn from
/// `FIRST_CONTENT..vocab`, paired with their task targets.
pub fn synth_task(kind: TaskKind, length: usize, vocab: usize, count: usize, seed: u64) -> Result<Vec<Example>> {
    if length == 0 {
        return Err(param_err("task length must be >= 1"));
    }
    if vocab <= FIRST_CONTENT {
        return Err(param_err(format!("vocab must exceed the {FIRST_CONTENT} reserved ids")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            let source: Vec<usize> = (0..length).map(|_| rng.gen_range(FIRST_CONTENT..vocab)).collect();
            let target = kind.target_for(&source);
            Example { source, target }
        })
        .collect())
}
