//! Drafting dialogue pairs and synthesized preference triples.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, PatentDoc};
use crate::seed::rng_from_seed;

/// Which drafting step a dialogue pair exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskKind {
    Title,
    Abstract,
    Claims,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialoguePair {
    pub query: String,
    pub answer: String,
    #[serde(rename = "task")]
    pub task_kind: TaskKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceTriple {
    pub query: String,
    pub preferred: String,
    pub non_preferred: String,
}

pub fn title_query(idea: &str) -> String {
    format!(
        "I have the following ideas:\n\n{idea}\n\nCould you please help me come up with a suitable \
         patent title based on my ideas for application?"
    )
}

pub fn abstract_query(title: &str) -> String {
    format!(
        "Here is the title of the patent I want to apply for:\n\n{title}\n\nCould you please write \
         a corresponding abstract based on the title?"
    )
}

pub fn claims_query(title: &str, abstract_text: &str) -> String {
    format!(
        "Here is the title and abstract of the patent I want to apply for:\n\n{title}\n\n\
         {abstract_text}\n\nCould you please write the corresponding claims?"
    )
}

/// Numbered claims text, one claim per line: "1. ...".
pub fn claims_answer(claims: &[String]) -> String {
    claims
        .iter()
        .enumerate()
        .map(|(i, c)| format!("{}. {}", i + 1, c.trim()))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Up to three drafting pairs per document: idea (the abstract) to title,
/// title to abstract, and title plus abstract to claims. Pairs with an empty
/// answer are skipped.
pub fn make_sft_pairs(docs: &[PatentDoc]) -> Vec<DialoguePair> {
    let mut pairs = Vec::new();
    for doc in docs {
        let title = doc.title.trim();
        let abstract_text = doc.abstract_text.trim();
        if !title.is_empty() {
            pairs.push(DialoguePair {
                query: title_query(abstract_text),
                answer: title.to_string(),
                task_kind: TaskKind::Title,
            });
        }
        if !abstract_text.is_empty() {
            pairs.push(DialoguePair {
                query: abstract_query(title),
                answer: abstract_text.to_string(),
                task_kind: TaskKind::Abstract,
            });
        }
        if !doc.claims.is_empty() {
            pairs.push(DialoguePair {
                query: claims_query(title, abstract_text),
                answer: claims_answer(&doc.claims),
                task_kind: TaskKind::Claims,
            });
        }
    }
    pairs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorruptionKind {
    TruncateHalf,
    ShuffleSentences,
    SwapAnswerFromOtherDoc,
}

/// Corruption kinds to draw from; each pair gets one kind uniformly at random.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub kinds: Vec<CorruptionKind>,
}

impl CorruptionSpec {
    pub fn only(kind: CorruptionKind) -> Self {
        Self { kinds: vec![kind] }
    }

    pub fn all() -> Self {
        Self {
            kinds: vec![
                CorruptionKind::TruncateHalf,
                CorruptionKind::ShuffleSentences,
                CorruptionKind::SwapAnswerFromOtherDoc,
            ],
        }
    }
}

const MAX_ATTEMPTS: usize = 10;

/// Prefix of `text` holding the first ceil(n/2) whitespace-separated words.
pub(crate) fn truncate_half(text: &str) -> String {
    let spans: Vec<(usize, usize)> = word_spans(text);
    if spans.is_empty() {
        return String::new();
    }
    let keep = spans.len().div_ceil(2);
    text[..spans[keep - 1].1].to_string()
}

fn word_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                spans.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push((s, text.len()));
    }
    spans
}

fn sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        cur.push(c);
        if matches!(c, '.' | '!' | '?' | '\n') {
            let s = cur.trim().to_string();
            if !s.is_empty() {
                out.push(s);
            }
            cur.clear();
        }
    }
    let s = cur.trim().to_string();
    if !s.is_empty() {
        out.push(s);
    }
    out
}

fn corrupt(
    kind: CorruptionKind,
    idx: usize,
    pairs: &[DialoguePair],
    rng: &mut impl Rng,
) -> Option<String> {
    let gold = &pairs[idx].answer;
    match kind {
        CorruptionKind::TruncateHalf => Some(truncate_half(gold)),
        CorruptionKind::ShuffleSentences => {
            let mut s = sentences(gold);
            s.shuffle(rng);
            Some(s.join(" "))
        }
        CorruptionKind::SwapAnswerFromOtherDoc => {
            let same_task: Vec<usize> = (0..pairs.len())
                .filter(|&j| j != idx && pairs[j].task_kind == pairs[idx].task_kind)
                .collect();
            let pool: Vec<usize> = if same_task.is_empty() {
                (0..pairs.len()).filter(|&j| j != idx).collect()
            } else {
                same_task
            };
            pool.choose(rng).map(|&j| pairs[j].answer.clone())
        }
    }
}

/// Gold answers are preferred; a seeded corruption of the gold answer is the
/// non-preferred side. A pair whose corruption keeps colliding with the gold
/// answer (or comes out empty) after ten attempts is dropped.
pub fn make_preference_triples(
    pairs: &[DialoguePair],
    corruption: &CorruptionSpec,
    seed: u64,
) -> Vec<PreferenceTriple> {
    assert!(!corruption.kinds.is_empty(), "corruption spec needs at least one kind");
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::new();
    for (idx, pair) in pairs.iter().enumerate() {
        for _ in 0..MAX_ATTEMPTS {
            let kind = *corruption.kinds.choose(&mut rng).expect("non-empty kinds");
            match corrupt(kind, idx, pairs, &mut rng) {
                Some(bad) if !bad.trim().is_empty() && bad != pair.answer => {
                    out.push(PreferenceTriple {
                        query: pair.query.clone(),
                        preferred: pair.answer.clone(),
                        non_preferred: bad,
                    });
                    break;
                }
                _ => continue,
            }
        }
    }
    out
}

/// Write any serializable records as JSON Lines.
pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> Result<(), CorpusError> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::IpcSection;

    fn doc(claims: Vec<&str>) -> PatentDoc {
        PatentDoc {
            id: "d".into(),
            ipc_section: IpcSection::F,
            title: "Hybrid drive".into(),
            abstract_text: "A torque converter links the engine. A motor assists it.".into(),
            claims: claims.into_iter().map(String::from).collect(),
        }
    }

    #[test]
    fn no_claims_gives_two_pairs() {
        let pairs = make_sft_pairs(&[doc(vec![])]);
        assert_eq!(pairs.len(), 2);
    }

    #[test]
    fn full_doc_gives_three_task_kinds() {
        let pairs = make_sft_pairs(&[doc(vec!["A drive.", "The drive of claim 1."])]);
        let kinds: Vec<_> = pairs.iter().map(|p| p.task_kind).collect();
        assert_eq!(kinds, vec![TaskKind::Title, TaskKind::Abstract, TaskKind::Claims]);
        assert_eq!(pairs[2].answer, "1. A drive.\n2. The drive of claim 1.");
        assert!(pairs[2].query.contains("Hybrid drive"));
        assert!(pairs[2].query.contains("A motor assists it."));
    }

    #[test]
    fn title_query_uses_drafting_template() {
        let pairs = make_sft_pairs(&[doc(vec![])]);
        let q = &pairs[0].query;
        assert!(q.starts_with("I have the following ideas"));
        assert!(q.ends_with(
            "Could you please help me come up with a suitable patent title based on my ideas for application?"
        ));
        assert!(q.contains("A torque converter links the engine."));
        assert!(pairs[1].query.starts_with("Here is the title of the patent I want to apply for:"));
        assert!(pairs[1]
            .query
            .ends_with("Could you please write a corresponding abstract based on the title?"));
    }

    #[test]
    fn truncate_half_is_strict_prefix() {
        let pair = DialoguePair {
            query: "q".into(),
            answer: "one two three four five".into(),
            task_kind: TaskKind::Abstract,
        };
        let t = make_preference_triples(
            std::slice::from_ref(&pair),
            &CorruptionSpec::only(CorruptionKind::TruncateHalf),
            1,
        );
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].non_preferred, "one two three");
        assert!(pair.answer.starts_with(&t[0].non_preferred));
        assert_ne!(t[0].non_preferred, pair.answer);
    }

    #[test]
    fn single_word_truncation_is_skipped() {
        let pair = DialoguePair { query: "q".into(), answer: "word".into(), task_kind: TaskKind::Title };
        let t = make_preference_triples(&[pair], &CorruptionSpec::only(CorruptionKind::TruncateHalf), 1);
        assert!(t.is_empty());
    }

    #[test]
    fn shuffle_keeps_sentences() {
        let pair = DialoguePair {
            query: "q".into(),
            answer: "First one. Second one. Third one. Fourth one.".into(),
            task_kind: TaskKind::Abstract,
        };
        let t = make_preference_triples(
            std::slice::from_ref(&pair),
            &CorruptionSpec::only(CorruptionKind::ShuffleSentences),
            5,
        );
        assert_eq!(t.len(), 1);
        let mut a = sentences(&t[0].non_preferred);
        let mut b = sentences(&pair.answer);
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }

    #[test]
    fn swap_uses_other_gold_answers() {
        let pairs: Vec<DialoguePair> = (0..100)
            .map(|i| DialoguePair {
                query: format!("q{i}"),
                answer: format!("answer number {i}"),
                task_kind: if i % 2 == 0 { TaskKind::Title } else { TaskKind::Abstract },
            })
            .collect();
        let triples =
            make_preference_triples(&pairs, &CorruptionSpec::only(CorruptionKind::SwapAnswerFromOtherDoc), 9);
        assert_eq!(triples.len(), 100);
        for (i, t) in triples.iter().enumerate() {
            let j = pairs.iter().position(|p| p.answer == t.non_preferred).expect("gold answer");
            assert_ne!(i, j);
        }
        let again =
            make_preference_triples(&pairs, &CorruptionSpec::only(CorruptionKind::SwapAnswerFromOtherDoc), 9);
        assert_eq!(triples, again);
    }

    #[test]
    fn json_keys_match_export_schema() {
        let p = DialoguePair { query: "q".into(), answer: "a".into(), task_kind: TaskKind::Claims };
        let v: serde_json::Value = serde_json::to_value(&p).unwrap();
        assert_eq!(v["task"], "Claims");
        let t = PreferenceTriple { query: "q".into(), preferred: "p".into(), non_preferred: "n".into() };
        let v: serde_json::Value = serde_json::to_value(&t).unwrap();
        assert_eq!(v["non_preferred"], "n");
    }
}
