//! Summary faithfulness and corpus analysis: ROUGE recall, greedy context
//! selection, cloze questions scored through a pluggable answerer (APES and
//! APES_src), rule-based claim corruption, and salient-bigram position
//! curves.

pub mod analysis;
pub mod answer;
pub mod apes;
pub mod cloze;
pub mod context;
pub mod error;
pub mod factcc;
pub mod output;
pub mod record;
pub mod text;

pub use analysis::{bigram_accumulation, corpus_stats, second_half_mass, CorpusStats};
pub use answer::{Answerer, ContextMatchAnswerer};
pub use apes::{apes_scores, evaluate_corpus, ApesReport};
pub use cloze::{make_cloze, ClozeQuestion, Span, SpanKind};
pub use context::{greedy_context, DEFAULT_BUDGET};
pub use error::{EvalError, Result};
pub use factcc::{factcc_transforms, Claim, Label};
pub use record::{parse_jsonl, read_jsonl, SummaryRecord};
pub use text::{rouge_n_recall, tokenize, unigram_f1};
