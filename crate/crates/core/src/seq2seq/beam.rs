use crate::error::{param_err, Result};

pub const DEFAULT_BEAM: usize = 4;
pub const DEFAULT_ALPHA: f64 = 2.0;

/// Source of next-token log-probabilities for a decoding prefix.
pub trait NextTokenScorer {
    /// Log-probabilities over the vocabulary after `prefix` (generated tokens
    /// only; the start token is implicit).
    fn log_probs(&self, prefix: &[usize]) -> Result<Vec<f64>>;

    fn eos(&self) -> usize;
}

/// `((5 + len) / 6)^alpha`.
pub fn length_penalty(len: usize, alpha: f64) -> f64 {
    ((5.0 + len as f64) / 6.0).powf(alpha)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    /// Generated tokens, excluding the final EOS.
    pub tokens: Vec<usize>,
    /// Sum of token log-probabilities, EOS included when present.
    pub log_prob: f64,
    /// `log_prob / length_penalty(len)` where `len` counts EOS.
    pub score: f64,
    /// No hypothesis emitted EOS within the step limit.
    pub truncated: bool,
}

#[derive(Clone)]
struct Hyp {
    tokens: Vec<usize>,
    log_prob: f64,
}

/// Beam search with length-normalized final scores.
///
/// Each step expands every live hypothesis by every token and keeps the
/// `beam` best expansions by cumulative log-probability; expansions ending in
/// EOS are retired as finished. The best finished hypothesis by
/// length-normalized score wins. With `beam = 1` this is greedy decoding.
pub fn beam_decode<S: NextTokenScorer + ?Sized>(scorer: &S, beam: usize, alpha: f64, max_len: usize) -> Result<Decoded> {
    if beam == 0 {
        return Err(param_err("beam width must be >= 1"));
    }
    if !(alpha >= 0.0) {
        return Err(param_err(format!("length penalty must be >= 0, got {alpha}")));
    }
    let eos = scorer.eos();
    let mut live = vec![Hyp {
        tokens: Vec::new(),
        log_prob: 0.0,
    }];
    let mut finished: Vec<(Hyp, f64)> = Vec::new();

    for _ in 0..max_len {
        if live.is_empty() {
            break;
        }
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        for (hi, hyp) in live.iter().enumerate() {
            let lp = scorer.log_probs(&hyp.tokens)?;
            for (tok, &l) in lp.iter().enumerate().filter(|(_, l)| l.is_finite()) {
                candidates.push((hyp.log_prob + l, hi, tok));
            }
        }
        // stable on (hypothesis, token) order for ties
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0));
        candidates.truncate(beam);
        let mut next = Vec::with_capacity(beam);
        for (log_prob, hi, tok) in candidates {
            let mut tokens = live[hi].tokens.clone();
            tokens.push(tok);
            let hyp = Hyp { tokens, log_prob };
            if tok == eos {
                let score = log_prob / length_penalty(hyp.tokens.len(), alpha);
                finished.push((hyp, score));
            } else {
                next.push(hyp);
            }
        }
        live = next;
    }

    let best = finished
        .into_iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| a.1.total_cmp(&b.1).then(ib.cmp(ia)))
        .map(|(_, f)| f);
    Ok(match best {
        Some((mut hyp, score)) => {
            hyp.tokens.pop();
            Decoded {
                tokens: hyp.tokens,
                log_prob: hyp.log_prob,
                score,
                truncated: false,
            }
        }
        None => {
            let hyp = live.into_iter().next().unwrap_or(Hyp {
                tokens: Vec::new(),
                log_prob: 0.0,
            });
            let score = hyp.log_prob / length_penalty(hyp.tokens.len(), alpha);
            Decoded {
                tokens: hyp.tokens,
                log_prob: hyp.log_prob,
                score,
                truncated: true,
            }
        }
    })
}

/// Argmax decoding until EOS or `max_len` tokens.
pub fn greedy_decode<S: NextTokenScorer + ?Sized>(scorer: &S, max_len: usize) -> Result<Decoded> {
    let eos = scorer.eos();
    let mut tokens = Vec::new();
    let mut log_prob = 0.0;
    for _ in 0..max_len {
        let lp = scorer.log_probs(&tokens)?;
        let (tok, l) = lp
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, l)| if l > best.1 { (i, l) } else { best });
        log_prob += l;
        if tok == eos {
            return Ok(Decoded {
                score: log_prob,
                tokens,
                log_prob,
                truncated: false,
            });
        }
        tokens.push(tok);
    }
    Ok(Decoded {
        score: log_prob,
        tokens,
        log_prob,
        truncated: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Deterministic pseudo-random next-token distribution keyed on the prefix.
    struct HashedScorer {
        vocab: usize,
        seed: u64,
    }

    impl NextTokenScorer for HashedScorer {
        fn log_probs(&self, prefix: &[usize]) -> Result<Vec<f64>> {
            let key = prefix.iter().fold(self.seed, |h, &t| h.wrapping_mul(31).wrapping_add(t as u64 + 1));
            let mut rng = ChaCha8Rng::seed_from_u64(key);
            let logits: Vec<f64> = (0..self.vocab).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let z = logits.iter().map(|l| l.exp()).sum::<f64>().ln();
            Ok(logits.iter().map(|l| l - z).collect())
        }

        fn eos(&self) -> usize {
            0
        }
    }

    /// All EOS-terminated sequences of length <= max_len, scored exhaustively.
    fn exhaustive(s: &HashedScorer, max_len: usize, alpha: f64) -> (Vec<usize>, f64) {
        let mut best = (Vec::new(), f64::NEG_INFINITY);
        let mut stack = vec![(Vec::<usize>::new(), 0.0)];
        while let Some((prefix, lp)) = stack.pop() {
            if prefix.len() == max_len {
                continue;
            }
            let probs = s.log_probs(&prefix).unwrap();
            for (tok, l) in probs.into_iter().enumerate() {
                let mut seq = prefix.clone();
                seq.push(tok);
                if tok == s.eos() {
                    let score = (lp + l) / length_penalty(seq.len(), alpha);
                    if score > best.1 {
                        seq.pop();
                        best = (seq, score);
                    }
                } else {
                    stack.push((seq, lp + l));
                }
            }
        }
        best
    }

    #[test]
    fn wide_beam_equals_exhaustive_search() {
        for seed in 0..20 {
            let s = HashedScorer { vocab: 4, seed };
            let (tokens, score) = exhaustive(&s, 4, 0.0);
            let got = beam_decode(&s, 256, 0.0, 4).unwrap();
            assert_eq!(got.tokens, tokens, "seed {seed}");
            assert!((got.score - score).abs() < 1e-12);
            let (tokens, score) = exhaustive(&s, 4, 2.0);
            let got = beam_decode(&s, 256, 2.0, 4).unwrap();
            assert_eq!(got.tokens, tokens, "seed {seed}");
            assert!((got.score - score).abs() < 1e-12);
        }
    }

    #[test]
    fn beam_one_is_greedy() {
        for seed in 0..20 {
            let s = HashedScorer { vocab: 5, seed };
            let beam = beam_decode(&s, 1, DEFAULT_ALPHA, 6).unwrap();
            let greedy = greedy_decode(&s, 6).unwrap();
            assert_eq!(beam.tokens, greedy.tokens);
            assert_eq!(beam.truncated, greedy.truncated);
            assert!((beam.log_prob - greedy.log_prob).abs() < 1e-12);
        }
    }

    #[test]
    fn truncation_flagged() {
        struct NeverStop;
        impl NextTokenScorer for NeverStop {
            fn log_probs(&self, _: &[usize]) -> Result<Vec<f64>> {
                Ok(vec![f64::NEG_INFINITY, 0.0])
            }
            fn eos(&self) -> usize {
                0
            }
        }
        let out = beam_decode(&NeverStop, 4, 2.0, 3).unwrap();
        assert!(out.truncated);
        assert_eq!(out.tokens, vec![1, 1, 1]);
    }

    #[test]
    fn defaults_and_validation() {
        assert_eq!(DEFAULT_BEAM, 4);
        assert_eq!(DEFAULT_ALPHA, 2.0);
        assert_eq!(length_penalty(1, 2.0), 1.0);
        let s = HashedScorer { vocab: 3, seed: 0 };
        assert!(beam_decode(&s, 0, 1.0, 3).is_err());
        assert!(beam_decode(&s, 2, -1.0, 3).is_err());
    }
}
