use crate::answer::Answerer;
use crate::cloze::{make_cloze, ClozeQuestion};
use crate::context::{context_sentences, greedy_context};
use crate::error::Result;
use crate::record::SummaryRecord;
use crate::text::unigram_f1;

#[derive(Debug, Clone, PartialEq)]
pub struct QuestionScore {
    pub system_answer: Vec<String>,
    pub context_answer: Option<Vec<String>>,
    /// F1 against the reference answer.
    pub f1_reference: f64,
    /// F1 against the answer read from the source context.
    pub f1_context: f64,
    /// The answerer failed; both scores are 0.
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordScore {
    pub id: String,
    pub questions: Vec<QuestionScore>,
    /// `None` when the record yielded no questions.
    pub apes: Option<f64>,
    pub apes_src: Option<f64>,
}

impl RecordScore {
    pub fn flagged(&self) -> usize {
        self.questions.iter().filter(|q| q.failed).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApesReport {
    pub records: Vec<RecordScore>,
    /// Mean over records that produced at least one question.
    pub apes: Option<f64>,
    pub apes_src: Option<f64>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Cloze questions for a record: greedy context against the reference, then
/// one question per resolved span whose answer the context contains.
pub fn record_questions(record: &SummaryRecord, budget: usize) -> Result<Vec<ClozeQuestion>> {
    let picked = greedy_context(&record.source, &record.reference, budget)?;
    let context = context_sentences(&record.source, &picked);
    Ok(make_cloze(&record.reference, &record.spans, &context))
}

pub fn score_questions<A: Answerer + ?Sized>(
    id: &str,
    summary: &[Vec<String>],
    questions: &[ClozeQuestion],
    answerer: &A,
) -> RecordScore {
    let scored: Vec<QuestionScore> = questions
        .iter()
        .map(|q| {
            let sys = answerer.answer(&q.question, summary);
            let cxt = answerer.answer(&q.question, &q.context);
            match (sys, cxt) {
                (Ok(sys), Ok(cxt)) => QuestionScore {
                    f1_reference: unigram_f1(&sys, &q.answer),
                    f1_context: unigram_f1(&sys, &cxt),
                    system_answer: sys,
                    context_answer: Some(cxt),
                    failed: false,
                },
                (sys, cxt) => QuestionScore {
                    system_answer: sys.unwrap_or_default(),
                    context_answer: cxt.ok(),
                    f1_reference: 0.0,
                    f1_context: 0.0,
                    failed: true,
                },
            }
        })
        .collect();
    RecordScore {
        id: id.to_string(),
        apes: mean(scored.iter().map(|q| q.f1_reference)),
        apes_src: mean(scored.iter().map(|q| q.f1_context)),
        questions: scored,
    }
}

/// APES and APES_src per record and as corpus means. `questions[i]` belongs
/// to `records[i]`.
pub fn apes_scores<A: Answerer + ?Sized>(
    records: &[SummaryRecord],
    questions: &[Vec<ClozeQuestion>],
    answerer: &A,
) -> ApesReport {
    let scores: Vec<RecordScore> = records
        .iter()
        .zip(questions)
        .map(|(r, qs)| score_questions(&r.id, &r.system_summary, qs, answerer))
        .collect();
    ApesReport {
        apes: mean(scores.iter().filter_map(|r| r.apes)),
        apes_src: mean(scores.iter().filter_map(|r| r.apes_src)),
        records: scores,
    }
}

/// Builds questions with [`record_questions`] and scores every record.
pub fn evaluate_corpus<A: Answerer + ?Sized>(
    records: &[SummaryRecord],
    answerer: &A,
    budget: usize,
) -> Result<ApesReport> {
    let questions = records
        .iter()
        .map(|r| record_questions(r, budget))
        .collect::<Result<Vec<_>>>()?;
    Ok(apes_scores(records, &questions, answerer))
}
