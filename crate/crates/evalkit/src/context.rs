use std::collections::HashMap;

use crate::error::{EvalError, Result};
use crate::text::sentence_ngram_counts;

/// Default number of source sentences in a QA context.
pub const DEFAULT_BUDGET: usize = 5;

/// Greedy ROUGE-2-recall sentence selection against `reference`.
///
/// Each round adds the sentence with the largest recall gain (lowest index
/// on ties) and stops at `budget` sentences or when nothing strictly
/// improves recall. Returns indices in selection order.
pub fn greedy_context<T: AsRef<str>>(source: &[Vec<T>], reference: &[Vec<T>], budget: usize) -> Result<Vec<usize>> {
    if budget == 0 {
        return Err(EvalError::Parameter("context budget must be >= 1".into()));
    }
    let target = sentence_ngram_counts(reference, 2);
    let per_sentence: Vec<HashMap<Vec<&str>, usize>> =
        source.iter().map(|s| sentence_ngram_counts(std::slice::from_ref(s), 2)).collect();
    let mut have: HashMap<Vec<&str>, usize> = HashMap::new();
    let mut chosen = Vec::new();
    while chosen.len() < budget {
        let mut best: Option<(usize, usize)> = None;
        for (i, grams) in per_sentence.iter().enumerate() {
            if chosen.contains(&i) {
                continue;
            }
            // recall gain in matched n-grams; the denominator is constant
            let gain: usize = grams
                .iter()
                .filter_map(|(g, &c)| {
                    let cap = *target.get(g)?;
                    let before = have.get(g).copied().unwrap_or(0).min(cap);
                    Some((have.get(g).copied().unwrap_or(0) + c).min(cap) - before)
                })
                .sum();
            if gain > 0 && best.map_or(true, |(_, b)| gain > b) {
                best = Some((i, gain));
            }
        }
        let Some((i, _)) = best else { break };
        for (g, &c) in &per_sentence[i] {
            *have.entry(g.clone()).or_insert(0) += c;
        }
        chosen.push(i);
    }
    Ok(chosen)
}

/// Selected sentences in source order, which is how they are shown to the
/// answerer.
pub fn context_sentences<T: Clone>(source: &[Vec<T>], selection: &[usize]) -> Vec<Vec<T>> {
    let mut idx = selection.to_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| source[i].clone()).collect()
}
