use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::EvalError;
use crate::text::contains_run;

/// Token that replaces the masked span in a question.
pub const BLANK: &str = "<blank>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpanKind {
    Entity,
    Event,
    Date,
    Number,
}

impl FromStr for SpanKind {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "entity" => Ok(Self::Entity),
            "event" => Ok(Self::Event),
            "date" => Ok(Self::Date),
            "number" => Ok(Self::Number),
            other => Err(EvalError::Parameter(format!("unknown span kind {other:?}"))),
        }
    }
}

impl fmt::Display for SpanKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Entity => "entity",
            Self::Event => "event",
            Self::Date => "date",
            Self::Number => "number",
        })
    }
}

/// Extractor output: tokens `start..end` of reference sentence `sentence`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
    pub kind: SpanKind,
}

impl Span {
    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn overlaps(&self, other: &Span) -> bool {
        self.sentence == other.sentence && self.start < other.end && other.start < self.end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClozeQuestion {
    pub question: Vec<String>,
    pub answer: Vec<String>,
    pub kind: SpanKind,
    /// Selected source sentences, in source order.
    pub context: Vec<Vec<String>>,
}

/// Drops out-of-range spans and resolves overlaps within a sentence by
/// keeping the longest span (earliest on ties).
pub fn resolve_spans(reference: &[Vec<String>], spans: &[Span]) -> Vec<Span> {
    let mut valid: Vec<Span> = spans
        .iter()
        .copied()
        .filter(|s| !s.is_empty() && reference.get(s.sentence).is_some_and(|r| s.end <= r.len()))
        .collect();
    valid.sort_by(|a, b| b.len().cmp(&a.len()).then((a.sentence, a.start).cmp(&(b.sentence, b.start))));
    let mut kept: Vec<Span> = Vec::new();
    for s in valid {
        if !kept.iter().any(|k| k.overlaps(&s)) {
            kept.push(s);
        }
    }
    kept.sort_by_key(|s| (s.sentence, s.start));
    kept
}

/// One cloze question per surviving span. Questions whose answer does not
/// occur contiguously in any context sentence are dropped.
pub fn make_cloze(reference: &[Vec<String>], spans: &[Span], context: &[Vec<String>]) -> Vec<ClozeQuestion> {
    resolve_spans(reference, spans)
        .into_iter()
        .filter_map(|s| {
            let sentence = &reference[s.sentence];
            let answer = sentence[s.start..s.end].to_vec();
            if !context.iter().any(|c| contains_run(c, &answer)) {
                return None;
            }
            let mut question = sentence[..s.start].to_vec();
            question.push(BLANK.to_string());
            question.extend_from_slice(&sentence[s.end..]);
            Some(ClozeQuestion {
                question,
                answer,
                kind: s.kind,
                context: context.to_vec(),
            })
        })
        .collect()
}
