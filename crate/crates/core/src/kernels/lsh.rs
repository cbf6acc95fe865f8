use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{sparse_attention, AttentionInputs, KernelOutput};
use crate::error::{param_err, Error, Result};
use crate::mask::AttentionMask;
use crate::tensor::{dot, Tensor};

/// Hashing configuration: `rounds` independent hashes into `n_buckets`
/// buckets, each bucket processed in chunks of at most `bucket_size`.
#[derive(Debug, Clone, PartialEq)]
pub struct LshSpec {
    pub rounds: usize,
    pub bucket_size: usize,
    pub n_buckets: usize,
    pub seed: u64,
}

/// How per-round results are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LshCombine {
    /// Attend separately per round and average the round outputs.
    Average,
    /// Attend once over the union of all round masks. This is the form with
    /// an exact dense-oracle counterpart.
    Union,
}

impl LshSpec {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.rounds == 0 || self.bucket_size == 0 || self.n_buckets == 0 {
            return Err(param_err("rounds, bucket size and bucket count must be >= 1"));
        }
        if self.n_buckets > 1 && self.n_buckets % 2 != 0 {
            return Err(param_err(format!(
                "bucket count must be 1 or even, got {}",
                self.n_buckets
            )));
        }
        if self.n_buckets * self.bucket_size < n {
            return Err(Error::Capacity(format!(
                "{} buckets of {} cannot hold {n} positions",
                self.n_buckets, self.bucket_size
            )));
        }
        Ok(())
    }
}

/// Bucket of every row of `vectors` for each round, using random rotations
/// `R ~ N(0, 1)^{d × n_buckets/2}` and `argmax([xR; −xR])`.
pub fn lsh_buckets(vectors: &Tensor, spec: &LshSpec) -> Vec<Vec<usize>> {
    let n = vectors.rows();
    if spec.n_buckets == 1 {
        return vec![vec![0; n]; spec.rounds];
    }
    let half = spec.n_buckets / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.rounds)
        .map(|_| {
            let rotation = Tensor::randn(half, vectors.cols(), 1.0, &mut rng);
            (0..n)
                .map(|i| {
                    let x = vectors.row(i);
                    let mut best = (f64::NEG_INFINITY, 0);
                    for b in 0..half {
                        let p = dot(x, rotation.row(b));
                        if p > best.0 {
                            best = (p, b);
                        }
                    }
                    for b in 0..half {
                        let p = -dot(x, rotation.row(b));
                        if p > best.0 {
                            best = (p, half + b);
                        }
                    }
                    best.1
                })
                .collect()
        })
        .collect()
}

/// Mask for one hashing round. Positions are sorted by `(bucket, position)`
/// and each bucket is cut into consecutive chunks of at most `bucket_size`;
/// a position attends the members of its own chunk, which always includes
/// the position itself.
pub fn lsh_round_mask(buckets: &[usize], bucket_size: usize) -> Result<AttentionMask> {
    let n = buckets.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (buckets[i], i));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut group_of = vec![0; n];
    let mut prev_bucket = None;
    for &pos in &order {
        let full = groups.last().is_some_and(|g| g.len() == bucket_size);
        if prev_bucket != Some(buckets[pos]) || full {
            groups.push(Vec::with_capacity(bucket_size));
        }
        prev_bucket = Some(buckets[pos]);
        group_of[pos] = groups.len() - 1;
        groups.last_mut().expect("group pushed").push(pos);
    }
    let rows = (0..n).map(|i| groups[group_of[i]].clone()).collect();
    AttentionMask::from_rows(n, rows)
}

/// Union of every round's mask for `keys` (the shared query/key vectors).
pub fn lsh_union_mask(keys: &Tensor, spec: &LshSpec) -> Result<AttentionMask> {
    spec.validate(keys.rows())?;
    let mut union: Option<AttentionMask> = None;
    for buckets in lsh_buckets(keys, spec) {
        let round = lsh_round_mask(&buckets, spec.bucket_size)?;
        union = Some(match union {
            Some(u) => u.union(&round)?,
            None => round,
        });
    }
    Ok(union.expect("at least one round"))
}

/// Locality-sensitive hashing self-attention with shared query/key space:
/// each position is bucketed by its key row, so bucket co-membership is
/// symmetric.
pub fn lsh_attention(inputs: &AttentionInputs, spec: &LshSpec, combine: LshCombine) -> Result<KernelOutput> {
    inputs.validate()?;
    inputs.require_self_attention("lsh_attention")?;
    spec.validate(inputs.n_keys())?;
    match combine {
        LshCombine::Union => sparse_attention(inputs, &lsh_union_mask(&inputs.k, spec)?),
        LshCombine::Average => {
            let mut acc = Tensor::zeros(inputs.n_queries(), inputs.v.cols());
            let mut cells = 0;
            for buckets in lsh_buckets(&inputs.k, spec) {
                let round = sparse_attention(inputs, &lsh_round_mask(&buckets, spec.bucket_size)?)?;
                acc.add_assign(&round.output);
                cells += round.score_cells;
            }
            Ok(KernelOutput {
                output: acc.scale(1.0 / spec.rounds as f64),
                score_cells: cells,
            })
        }
    }
}
