use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{EvalError, Result};
use crate::record::SummaryRecord;

pub const DEFAULT_PARTITIONS: usize = 10;

fn curve_for<'a>(doc: &'a [String], salient: &HashSet<(&'a str, &'a str)>, partitions: usize) -> Result<Vec<f64>> {
    if partitions == 0 {
        return Err(EvalError::Parameter("partitions must be >= 1".into()));
    }
    if salient.is_empty() {
        return Err(EvalError::UndefinedCurve);
    }
    // a bigram belongs to the partition holding its first token
    let mut first: HashMap<(&str, &str), usize> = HashMap::new();
    for (j, w) in doc.windows(2).enumerate() {
        let g = (w[0].as_str(), w[1].as_str());
        if salient.contains(&g) {
            first.entry(g).or_insert(j + 1);
        }
    }
    let total = salient.len() as f64;
    Ok((1..=partitions)
        .map(|p| {
            let end = (p * doc.len()).div_ceil(partitions);
            first.values().filter(|&&e| e <= end).count() as f64 / total
        })
        .collect())
}

/// Share of the reference's unique bigrams found in the document prefix
/// ending at each of `partitions` equal token partitions.
pub fn bigram_accumulation(doc: &[String], reference: &[String], partitions: usize) -> Result<Vec<f64>> {
    if reference.len() < 2 {
        return Err(EvalError::UndefinedCurve);
    }
    let salient = reference.windows(2).map(|w| (w[0].as_str(), w[1].as_str())).collect();
    curve_for(doc, &salient, partitions)
}

/// Curve of a record: the source is read as one token stream and reference
/// bigrams are taken within sentences.
pub fn record_curve(record: &SummaryRecord, partitions: usize) -> Result<Vec<f64>> {
    let doc = record.source_tokens();
    let salient: HashSet<(&str, &str)> = record
        .reference
        .iter()
        .flat_map(|s| s.windows(2).map(|w| (w[0].as_str(), w[1].as_str())))
        .collect();
    curve_for(&doc, &salient, partitions)
}

/// Fraction of the final mass added after the midpoint of the curve.
pub fn second_half_mass(curve: &[f64]) -> f64 {
    let Some(&last) = curve.last() else { return 0.0 };
    if curve.len() < 2 || last <= 0.0 {
        return 0.0;
    }
    (last - curve[curve.len() / 2 - 1]) / last
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub docs: usize,
    pub summary_words: f64,
    pub summary_sentences: f64,
    pub doc_words: f64,
    /// Mean of per-record doc words / summary words.
    pub compression: f64,
    /// Mean salient-bigram curve over records where it is defined.
    pub curve: Vec<f64>,
    pub curve_records: usize,
}

pub fn corpus_stats(records: &[SummaryRecord]) -> Result<CorpusStats> {
    if records.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let n = records.len() as f64;
    let mean = |f: &dyn Fn(&SummaryRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
    let mut curve = vec![0.0; DEFAULT_PARTITIONS];
    let mut curve_records = 0;
    for r in records {
        match record_curve(r, DEFAULT_PARTITIONS) {
            Ok(c) => {
                curve_records += 1;
                curve.iter_mut().zip(c).for_each(|(a, b)| *a += b);
            }
            Err(EvalError::UndefinedCurve) => {}
            Err(e) => return Err(e),
        }
    }
    if curve_records > 0 {
        curve.iter_mut().for_each(|x| *x /= curve_records as f64);
    }
    Ok(CorpusStats {
        docs: records.len(),
        summary_words: mean(&|r| r.reference_words() as f64),
        summary_sentences: mean(&|r| r.reference.len() as f64),
        doc_words: mean(&|r| r.source_words() as f64),
        compression: mean(&|r| r.source_words() as f64 / r.reference_words() as f64),
        curve,
        curve_records,
    })
}

/// Where summary-worthy content sits in a synthetic document.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// Almost all salient bigrams in the first three tenths.
    FrontLoaded,
    /// Salient bigrams spread uniformly.
    Even,
}

/// Synthetic corpus of `docs` records of ten 200-token filler partitions
/// with 20 salient two-token phrases inserted according to `layout`. Each
/// phrase is also one reference sentence.
pub fn synthetic_corpus(layout: Layout, docs: usize, seed: u64) -> Vec<SummaryRecord> {
    const PARTS: usize = 10;
    const PART_LEN: usize = 200;
    const PHRASES: usize = 20;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..docs)
        .map(|d| {
            let filler: Vec<Vec<String>> = (0..PARTS)
                .map(|_| (0..PART_LEN).map(|_| format!("w{}", rng.gen_range(0..500))).collect())
                .collect();
            let mut inserts: Vec<Vec<(usize, usize)>> = vec![Vec::new(); PARTS];
            let mut reference = Vec::with_capacity(PHRASES);
            for k in 0..PHRASES {
                let part = match layout {
                    Layout::Even => rng.gen_range(0..PARTS),
                    Layout::FrontLoaded if rng.gen_bool(0.95) => rng.gen_range(0..3),
                    Layout::FrontLoaded => rng.gen_range(3..PARTS),
                };
                let phrase = vec![format!("s{d}k{k}a"), format!("s{d}k{k}b")];
                inserts[part].push((rng.gen_range(0..=PART_LEN), k));
                reference.push(phrase);
            }
            // phrases go between filler tokens, never inside another phrase
            let mut doc = Vec::new();
            for (part, mut ins) in filler.into_iter().zip(inserts) {
                ins.sort_unstable();
                let mut next = ins.into_iter().peekable();
                for i in 0..=PART_LEN {
                    while let Some((_, k)) = next.next_if(|&(at, _)| at == i) {
                        doc.extend(reference[k].iter().cloned());
                    }
                    if i < PART_LEN {
                        doc.push(part[i].clone());
                    }
                }
            }
            SummaryRecord {
                id: format!("{layout:?}-{d}").to_lowercase(),
                source: doc.chunks(20).map(<[String]>::to_vec).collect(),
                system_summary: reference.clone(),
                reference,
                spans: Vec::new(),
            }
        })
        .collect()
}
