use std::collections::HashMap;

use crate::error::{EvalError, Result};

/// Lowercased runs of alphanumeric characters. Whitespace and punctuation
/// only separate tokens and never appear in the output.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn tokenize_sentences<S: AsRef<str>>(sentences: &[S]) -> Vec<Vec<String>> {
    sentences.iter().map(|s| tokenize(s.as_ref())).collect()
}

/// n-gram multiset of one token sequence.
pub fn ngram_counts<T: AsRef<str>>(tokens: &[T], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut out = HashMap::new();
    if n == 0 || tokens.len() < n {
        return out;
    }
    for w in tokens.windows(n) {
        *out.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
    }
    out
}

/// n-gram multiset of a sentence list; n-grams never span sentences.
pub fn sentence_ngram_counts<T: AsRef<str>>(sentences: &[Vec<T>], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut out = HashMap::new();
    for s in sentences {
        for (g, c) in ngram_counts(s, n) {
            *out.entry(g).or_insert(0) += c;
        }
    }
    out
}

/// Clipped n-gram overlap divided by the reference n-gram count; 0 when the
/// reference is shorter than `n`.
pub fn rouge_n_recall<T: AsRef<str>>(candidate: &[T], reference: &[T], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(EvalError::Parameter("n-gram order must be >= 1".into()));
    }
    Ok(recall_of_counts(&ngram_counts(candidate, n), &ngram_counts(reference, n)))
}

pub(crate) fn recall_of_counts(cand: &HashMap<Vec<&str>, usize>, reference: &HashMap<Vec<&str>, usize>) -> f64 {
    let total: usize = reference.values().sum();
    if total == 0 {
        return 0.0;
    }
    let hit: usize = reference
        .iter()
        .map(|(g, &c)| c.min(cand.get(g).copied().unwrap_or(0)))
        .sum();
    hit as f64 / total as f64
}

/// Multiset unigram F1. Both empty gives 1, exactly one empty gives 0.
pub fn unigram_f1<T: AsRef<str>>(a: &[T], b: &[T]) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let ca = ngram_counts(a, 1);
    let cb = ngram_counts(b, 1);
    let common: usize = ca.iter().map(|(g, &c)| c.min(cb.get(g).copied().unwrap_or(0))).sum();
    if common == 0 {
        return 0.0;
    }
    let p = common as f64 / a.len() as f64;
    let r = common as f64 / b.len() as f64;
    2.0 * p * r / (p + r)
}

/// Whether `needle` occurs as a contiguous run inside `hay`.
pub fn contains_run<T: AsRef<str>, U: AsRef<str>>(hay: &[T], needle: &[U]) -> bool {
    if needle.is_empty() {
        return true;
    }
    hay.windows(needle.len())
        .any(|w| w.iter().zip(needle).all(|(x, y)| x.as_ref() == y.as_ref()))
}
