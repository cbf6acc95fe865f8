use crate::cloze::BLANK;

/// The question-answering seam: reads a cloze question and a passage and
/// returns an answer, or an error message when it cannot answer.
/// Implementations must be deterministic and reentrant.
pub trait Answerer {
    fn answer(&self, question: &[String], passage: &[Vec<String>]) -> Result<Vec<String>, String>;
}

impl<F> Answerer for F
where
    F: Fn(&[String], &[Vec<String>]) -> Result<Vec<String>, String>,
{
    fn answer(&self, question: &[String], passage: &[Vec<String>]) -> Result<Vec<String>, String> {
        self(question, passage)
    }
}

/// Fills the blank by aligning the question's surrounding words with each
/// passage sentence. The candidate span with the most matching neighbour
/// tokens wins; ties go to the earliest sentence, then the earliest and
/// shortest span. Fails when no neighbour token matches anywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContextMatchAnswerer {
    pub max_answer_len: usize,
}

impl Default for ContextMatchAnswerer {
    fn default() -> Self {
        Self { max_answer_len: 8 }
    }
}

impl Answerer for ContextMatchAnswerer {
    fn answer(&self, question: &[String], passage: &[Vec<String>]) -> Result<Vec<String>, String> {
        let blank = question
            .iter()
            .position(|t| t == BLANK)
            .ok_or_else(|| "question has no blank".to_string())?;
        let left = &question[..blank];
        let right = &question[blank + 1..];
        let mut best: Option<(usize, &[String])> = None;
        for sentence in passage {
            for start in 0..sentence.len() {
                let l = left
                    .iter()
                    .rev()
                    .zip(sentence[..start].iter().rev())
                    .take_while(|(a, b)| a == b)
                    .count();
                for end in start + 1..=sentence.len().min(start + self.max_answer_len) {
                    let r = right
                        .iter()
                        .zip(&sentence[end..])
                        .take_while(|(a, b)| a == b)
                        .count();
                    if l + r > best.map_or(0, |(s, _)| s) {
                        best = Some((l + r, &sentence[start..end]));
                    }
                }
            }
        }
        best.map(|(_, span)| span.to_vec())
            .ok_or_else(|| "no passage sentence matches the question".to_string())
    }
}
