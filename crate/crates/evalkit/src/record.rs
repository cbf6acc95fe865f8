use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::cloze::Span;
use crate::error::{EvalError, Result};
use crate::text::tokenize_sentences;

/// One input line of a corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRecord {
    pub id: String,
    pub source: Vec<String>,
    pub reference: Vec<String>,
    #[serde(default)]
    pub system_summary: Vec<String>,
    /// Token offsets refer to the tokenized reference sentences.
    #[serde(default)]
    pub spans: Vec<Span>,
}

/// A tokenized record.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRecord {
    pub id: String,
    pub source: Vec<Vec<String>>,
    pub reference: Vec<Vec<String>>,
    pub system_summary: Vec<Vec<String>>,
    pub spans: Vec<Span>,
}

impl SummaryRecord {
    pub fn from_raw(raw: RawRecord) -> Result<Self> {
        let rec = Self {
            source: tokenize_sentences(&raw.source),
            reference: tokenize_sentences(&raw.reference),
            system_summary: tokenize_sentences(&raw.system_summary),
            spans: raw.spans,
            id: raw.id,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |message: &str| EvalError::Record {
            id: self.id.clone(),
            message: message.into(),
        };
        if self.source.iter().all(Vec::is_empty) {
            return Err(fail("source has no tokens"));
        }
        if self.reference.iter().all(Vec::is_empty) {
            return Err(fail("reference has no tokens"));
        }
        Ok(())
    }

    pub fn source_words(&self) -> usize {
        self.source.iter().map(Vec::len).sum()
    }

    pub fn reference_words(&self) -> usize {
        self.reference.iter().map(Vec::len).sum()
    }

    pub fn source_tokens(&self) -> Vec<String> {
        self.source.concat()
    }

    pub fn reference_tokens(&self) -> Vec<String> {
        self.reference.concat()
    }
}

/// Reads one JSON object per line; blank lines are skipped. Errors carry the
/// 1-based line number.
pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<SummaryRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| EvalError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| EvalError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let rec = SummaryRecord::from_raw(raw).map_err(|e| EvalError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn parse_jsonl(text: &str) -> Result<Vec<SummaryRecord>> {
    read_jsonl(text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloze::SpanKind;

    #[test]
    fn parses_records_and_spans() {
        let text = r#"{"id":"a","source":["Revenue rose 7 percent."],"reference":["Revenue rose 7 percent"],"system_summary":["Revenue rose 7 percent"],"spans":[{"sentence":0,"start":2,"end":3,"kind":"number"}]}

{"id":"b","source":["x y"],"reference":["x"]}"#;
        let recs = parse_jsonl(text).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].spans[0].kind, SpanKind::Number);
        assert_eq!(recs[0].source[0], ["revenue", "rose", "7", "percent"]);
        assert!(recs[1].system_summary.is_empty());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = "{\"id\":\"a\",\"source\":[\"x\"],\"reference\":[\"x\"]}\n{\"id\": 3}\n";
        assert!(matches!(parse_jsonl(text), Err(EvalError::Parse { line: 2, .. })));
        let text = "{\"id\":\"a\",\"source\":[\"...\"],\"reference\":[\"x\"]}\n";
        assert!(matches!(parse_jsonl(text), Err(EvalError::Parse { line: 1, .. })));
        let text = "{\"id\":\"a\",\"source\":[\"x\"],\"reference\":[\"x\"],\"extra\":1}\n";
        assert!(matches!(parse_jsonl(text), Err(EvalError::Parse { line: 1, .. })));
    }
}
