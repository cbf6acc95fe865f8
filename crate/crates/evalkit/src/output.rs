use crate::analysis::CorpusStats;
use crate::apes::ApesReport;
use crate::factcc::record_claims;
use crate::record::SummaryRecord;

pub const SCORE_HEADER: [&str; 5] = ["id", "apes", "apes_src", "questions", "flagged"];

fn fixed(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_default()
}

fn write_rows(rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(&row).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv output is utf-8")
}

/// Per-record score table, a blank line, then a `metric,value` block with
/// the corpus means and statistics.
pub fn scores_csv(report: &ApesReport, stats: &CorpusStats) -> String {
    let header = std::iter::once(SCORE_HEADER.iter().map(|s| s.to_string()).collect());
    let records = report.records.iter().map(|r| {
        vec![
            r.id.clone(),
            fixed(r.apes),
            fixed(r.apes_src),
            r.questions.len().to_string(),
            r.flagged().to_string(),
        ]
    });
    let mut out = write_rows(header.chain(records));
    out.push('\n');
    let mut metrics = vec![
        ("records".to_string(), stats.docs.to_string()),
        ("apes".into(), fixed(report.apes)),
        ("apes_src".into(), fixed(report.apes_src)),
        ("flagged".into(), report.records.iter().map(|r| r.flagged()).sum::<usize>().to_string()),
    ];
    metrics.extend(stats_rows(stats));
    out.push_str(&write_rows(
        std::iter::once(vec!["metric".to_string(), "value".to_string()]).chain(metrics.into_iter().map(|(k, v)| vec![k, v])),
    ));
    out
}

fn stats_rows(stats: &CorpusStats) -> Vec<(String, String)> {
    let mut rows = vec![
        ("summary_words".to_string(), format!("{:.2}", stats.summary_words)),
        ("summary_sentences".into(), format!("{:.2}", stats.summary_sentences)),
        ("doc_words".into(), format!("{:.2}", stats.doc_words)),
        ("compression".into(), format!("{:.2}", stats.compression)),
        ("curve_records".into(), stats.curve_records.to_string()),
    ];
    for (i, c) in stats.curve.iter().enumerate() {
        rows.push((format!("curve_{}", i + 1), format!("{c:.6}")));
    }
    rows
}

/// The statistics block alone, for corpora scored without questions.
pub fn stats_csv(stats: &CorpusStats) -> String {
    let mut rows = vec![("records".to_string(), stats.docs.to_string())];
    rows.extend(stats_rows(stats));
    write_rows(
        std::iter::once(vec!["metric".to_string(), "value".to_string()]).chain(rows.into_iter().map(|(k, v)| vec![k, v])),
    )
}

#[derive(serde::Serialize)]
struct ClaimLine<'a> {
    id: &'a str,
    sentence: usize,
    transform: crate::factcc::Transform,
    label: crate::factcc::Label,
    text: String,
}

/// One JSON object per claim: `id`, `sentence`, `transform`, `label`, `text`.
pub fn claims_jsonl(records: &[SummaryRecord], seed: u64) -> String {
    let mut out = String::new();
    for r in records {
        for (sentence, claim) in record_claims(r, seed) {
            let line = ClaimLine {
                id: &r.id,
                sentence,
                transform: claim.transform,
                label: claim.label,
                text: claim.tokens.join(" "),
            };
            out.push_str(&serde_json::to_string(&line).expect("claim serializes"));
            out.push('\n');
        }
    }
    out
}
