use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use serde::Serialize;

use crate::cloze::{Span, SpanKind};
use crate::record::SummaryRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Original,
    Negation,
    EntitySwap,
    NumberSwap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Claim {
    pub tokens: Vec<String>,
    pub label: Label,
    pub transform: Transform,
}

/// Auxiliaries that take a following "not".
pub const AUXILIARIES: &[&str] = &[
    "is", "are", "was", "were", "am", "has", "have", "had", "will", "would", "can", "could", "shall", "should",
    "may", "might", "must", "does", "do", "did",
];

/// Past-tense main verbs and their base forms, negated as "did not <base>".
pub const PAST_VERBS: &[(&str, &str)] = &[
    ("rose", "rise"),
    ("fell", "fall"),
    ("grew", "grow"),
    ("increased", "increase"),
    ("decreased", "decrease"),
    ("declined", "decline"),
    ("reported", "report"),
    ("found", "find"),
    ("showed", "show"),
    ("said", "say"),
    ("approved", "approve"),
    ("passed", "pass"),
    ("reached", "reach"),
    ("made", "make"),
    ("took", "take"),
    ("received", "receive"),
    ("announced", "announce"),
    ("improved", "improve"),
    ("reduced", "reduce"),
    ("caused", "cause"),
];

/// Toggles negation at the first finite verb: removes "not"/"never" after
/// an auxiliary, inserts "not" after a bare auxiliary, rewrites "did not
/// <base>" back to the past form, and turns a listed past verb into "did not
/// <base>". `None` when the sentence has no verb from the lexicon.
pub fn negate(tokens: &[String]) -> Option<Vec<String>> {
    for (i, t) in tokens.iter().enumerate() {
        if AUXILIARIES.contains(&t.as_str()) {
            let mut out = tokens.to_vec();
            let next = tokens.get(i + 1).map(String::as_str);
            if matches!(next, Some("not") | Some("never")) {
                out.remove(i + 1);
                if t == "did" {
                    if let Some(&(past, _)) = PAST_VERBS.iter().find(|(_, base)| Some(*base) == tokens.get(i + 2).map(String::as_str)) {
                        out.splice(i..i + 2, [past.to_string()]);
                    }
                }
            } else {
                out.insert(i + 1, "not".to_string());
            }
            return Some(out);
        }
        if let Some(&(_, base)) = PAST_VERBS.iter().find(|(past, _)| past == t) {
            let mut out = tokens.to_vec();
            out.splice(i..=i, ["did".to_string(), "not".to_string(), base.to_string()]);
            return Some(out);
        }
    }
    None
}

fn swap(
    tokens: &[String],
    spans: &[Span],
    pool: &[Vec<String>],
    kind: SpanKind,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<String>> {
    let targets: Vec<&Span> = spans.iter().filter(|s| s.kind == kind && s.end <= tokens.len() && !s.is_empty()).collect();
    let target = targets.choose(rng)?;
    let original = &tokens[target.start..target.end];
    let candidates: Vec<&Vec<String>> = pool.iter().filter(|c| !c.is_empty() && c.as_slice() != original).collect();
    let replacement = candidates.choose(rng)?;
    let mut out = tokens[..target.start].to_vec();
    out.extend(replacement.iter().cloned());
    out.extend_from_slice(&tokens[target.end..]);
    Some(out)
}

/// Positive original claim plus whichever negative transforms apply.
///
/// `spans` index into `tokens`; `entity_pool` and `number_pool` hold the
/// same-kind spans of the whole record. A transform with no candidate is
/// skipped.
pub fn factcc_transforms(
    tokens: &[String],
    spans: &[Span],
    entity_pool: &[Vec<String>],
    number_pool: &[Vec<String>],
    seed: u64,
) -> Vec<Claim> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut claims = vec![Claim {
        tokens: tokens.to_vec(),
        label: Label::Positive,
        transform: Transform::Original,
    }];
    if let Some(t) = negate(tokens) {
        claims.push(Claim {
            tokens: t,
            label: Label::Negative,
            transform: Transform::Negation,
        });
    }
    for (kind, pool, transform) in [
        (SpanKind::Entity, entity_pool, Transform::EntitySwap),
        (SpanKind::Number, number_pool, Transform::NumberSwap),
    ] {
        if let Some(t) = swap(tokens, spans, pool, kind, &mut rng) {
            claims.push(Claim {
                tokens: t,
                label: Label::Negative,
                transform,
            });
        }
    }
    claims
}

/// Same-kind span texts of a sentence list.
pub fn span_pool(sentences: &[Vec<String>], spans: &[Span], kind: SpanKind) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = Vec::new();
    for s in spans.iter().filter(|s| s.kind == kind) {
        if let Some(text) = sentences.get(s.sentence).and_then(|t| t.get(s.start..s.end)) {
            if !out.iter().any(|o| o == text) {
                out.push(text.to_vec());
            }
        }
    }
    out
}

/// Claims for every reference sentence of a record, with swap pools drawn
/// from the record's own spans. Sentence `i` uses seed `seed + i`.
pub fn record_claims(record: &SummaryRecord, seed: u64) -> Vec<(usize, Claim)> {
    let entities = span_pool(&record.reference, &record.spans, SpanKind::Entity);
    let numbers = span_pool(&record.reference, &record.spans, SpanKind::Number);
    record
        .reference
        .iter()
        .enumerate()
        .flat_map(|(i, sentence)| {
            let spans: Vec<Span> = record.spans.iter().filter(|s| s.sentence == i).copied().collect();
            factcc_transforms(sentence, &spans, &entities, &numbers, seed.wrapping_add(i as u64))
                .into_iter()
                .map(move |c| (i, c))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::tokenize;
    use proptest::prelude::*;

    fn words(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn number_swap_uses_pool() {
        let s = words("Revenue rose 7 percent");
        let spans = [Span { sentence: 0, start: 2, end: 3, kind: SpanKind::Number }];
        let claims = factcc_transforms(&s, &spans, &[], &[words("7"), words("12")], 0);
        assert_eq!(claims[0].label, Label::Positive);
        assert_eq!(claims[0].tokens, s);
        let swap = claims.iter().find(|c| c.transform == Transform::NumberSwap).unwrap();
        assert_eq!(swap.tokens, words("revenue rose 12 percent"));
        assert_eq!(swap.label, Label::Negative);
        let neg = claims.iter().find(|c| c.transform == Transform::Negation).unwrap();
        assert_eq!(neg.tokens, words("revenue did not rise 7 percent"));
        assert!(claims.iter().all(|c| c.transform != Transform::EntitySwap));
    }

    #[test]
    fn lone_entity_skips_swap_but_negates() {
        let s = words("The board approved the plan");
        let spans = [Span { sentence: 0, start: 1, end: 2, kind: SpanKind::Entity }];
        let claims = factcc_transforms(&s, &spans, &[words("board")], &[], 3);
        let kinds: Vec<_> = claims.iter().map(|c| c.transform).collect();
        assert_eq!(kinds, [Transform::Original, Transform::Negation]);
    }

    #[test]
    fn negation_toggles() {
        assert_eq!(negate(&words("it was raining")).unwrap(), words("it was not raining"));
        assert_eq!(negate(&words("it was not raining")).unwrap(), words("it was raining"));
        assert_eq!(negate(&words("prices did not rise")).unwrap(), words("prices rose"));
        assert_eq!(negate(&words("prices fell")).unwrap(), words("prices did not fall"));
        assert_eq!(negate(&words("green apples")), None);
    }

    #[test]
    fn seeded_swaps_repeat() {
        let s = words("alice met bob in paris");
        let spans = [
            Span { sentence: 0, start: 0, end: 1, kind: SpanKind::Entity },
            Span { sentence: 0, start: 2, end: 3, kind: SpanKind::Entity },
            Span { sentence: 0, start: 4, end: 5, kind: SpanKind::Entity },
        ];
        let pool = span_pool(&[s.clone()], &spans, SpanKind::Entity);
        assert_eq!(pool.len(), 3);
        let a = factcc_transforms(&s, &spans, &pool, &[], 11);
        assert_eq!(a, factcc_transforms(&s, &spans, &pool, &[], 11));
        let swap = a.iter().find(|c| c.transform == Transform::EntitySwap).unwrap();
        assert_ne!(swap.tokens, s);
    }

    proptest! {
        #[test]
        fn always_positive_and_negative_when_possible(
            words_in in prop::collection::vec(prop::sample::select(vec!["the", "cat", "was", "rose", "7", "12", "bob", "x"]), 1..10),
            seed in any::<u64>(),
        ) {
            let tokens: Vec<String> = words_in.iter().map(|w| w.to_string()).collect();
            let spans: Vec<Span> = tokens
                .iter()
                .enumerate()
                .filter(|(_, t)| t.as_str() == "7" || t.as_str() == "12")
                .map(|(i, _)| Span { sentence: 0, start: i, end: i + 1, kind: SpanKind::Number })
                .collect();
            let pool = vec![vec!["7".to_string()], vec!["12".to_string()]];
            let claims = factcc_transforms(&tokens, &spans, &[], &pool, seed);
            prop_assert_eq!(claims[0].label, Label::Positive);
            let has_verb = tokens.iter().any(|t| t == "was" || t == "rose");
            if has_verb || !spans.is_empty() {
                prop_assert!(claims.iter().any(|c| c.label == Label::Negative));
            }
            for c in &claims[1..] {
                prop_assert!(c.tokens != tokens);
            }
        }
    }
}
