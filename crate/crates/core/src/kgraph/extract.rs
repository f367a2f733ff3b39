//! Cue-phrase triple extractor.
//!
//! Each sentence is scanned for relation cue phrases ("is a part of", "is
//! used for", ...). The noun phrase ending right before the cue becomes the
//! head entity and the noun phrase starting right after it the tail, so the
//! surface order "h <cue> t" maps to the stored triple (h, r, t).

use std::collections::HashSet;

use super::{Entity, EntityType, RelationType, Triple};
use crate::corpus::{pieces, PatentDoc};

const MAX_PHRASE_WORDS: usize = 4;

const DETERMINERS: &[&str] = &[
    "the", "a", "an", "said", "each", "this", "these", "those", "its", "their", "such", "any",
];

/// Words that end a noun phrase.
const STOP_WORDS: &[&str] = &[
    "and", "or", "but", "that", "which", "who", "wherein", "whereby", "where", "when", "while",
    "if", "because", "so", "then", "thus", "to", "in", "of", "with", "by", "for", "from", "on",
    "at", "into", "via", "as", "is", "are", "was", "were", "be", "been", "being", "has", "have",
    "can", "may", "will", "also", "not", "further", "includes", "comprises", "comprising",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    pub cue: Vec<String>,
    pub relation: RelationType,
    pub strength: u8,
}

impl Pattern {
    pub fn new(cue: &str, relation: RelationType, strength: u8) -> Self {
        Self { cue: cue.split_whitespace().map(str::to_lowercase).collect(), relation, strength }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternSet {
    patterns: Vec<Pattern>,
    lexicon: EntityLexicon,
}

impl Default for PatternSet {
    fn default() -> Self {
        use RelationType::*;
        let patterns = vec![
            Pattern::new("is used for", UsedFor, 4),
            Pattern::new("are used for", UsedFor, 4),
            Pattern::new("is employed for", UsedFor, 3),
            Pattern::new("is a feature of", FeatureOf, 4),
            Pattern::new("is a characteristic of", FeatureOf, 3),
            Pattern::new("is a property of", FeatureOf, 3),
            Pattern::new("is a type of", HyponymOf, 4),
            Pattern::new("is a kind of", HyponymOf, 4),
            Pattern::new("is a hyponym of", HyponymOf, 4),
            Pattern::new("is a part of", PartOf, 4),
            Pattern::new("is part of", PartOf, 4),
            Pattern::new("is a component of", PartOf, 3),
            Pattern::new("is comparable to", Compare, 4),
            Pattern::new("is compared to", Compare, 3),
            Pattern::new("is compared with", Compare, 3),
            Pattern::new("compared to", Compare, 2),
            Pattern::new("compared with", Compare, 2),
            Pattern::new("is used in conjunction with", Conjunction, 4),
            Pattern::new("in conjunction with", Conjunction, 3),
            Pattern::new("together with", Conjunction, 2),
        ];
        Self::new(patterns)
    }
}

impl PatternSet {
    pub fn new(patterns: Vec<Pattern>) -> Self {
        Self { patterns, lexicon: EntityLexicon::default() }
    }

    pub fn with_lexicon(mut self, lexicon: EntityLexicon) -> Self {
        self.lexicon = lexicon;
        self
    }

    pub fn patterns(&self) -> &[Pattern] {
        &self.patterns
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    /// Longest cue starting at `words[i]`.
    fn match_at(&self, words: &[String], i: usize) -> Option<&Pattern> {
        self.patterns
            .iter()
            .filter(|p| words.len() >= i + p.cue.len() && words[i..i + p.cue.len()] == p.cue[..])
            .max_by_key(|p| p.cue.len())
    }
}

/// Head-noun lexicons used to type entities; anything unmatched is Generic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityLexicon {
    task: HashSet<String>,
    method: HashSet<String>,
    material: HashSet<String>,
}

impl Default for EntityLexicon {
    fn default() -> Self {
        let set = |words: &[&str]| words.iter().map(|w| w.to_string()).collect();
        Self {
            task: set(&[
                "application", "applications", "problem", "task", "system", "classification",
                "detection", "control", "transfer", "management", "recognition", "regulation",
                "prediction", "generation", "treatment", "distribution", "cooling", "heating",
                "dissipation", "monitoring", "analysis", "diagnosis", "filtration",
                "purification", "propulsion", "storage", "reduction", "measurement",
                "communication", "transmission", "conversion", "protection", "delivery",
            ]),
            method: set(&[
                "method", "model", "algorithm", "network", "device", "unit", "module",
                "apparatus", "converter", "motor", "engine", "sensor", "controller", "circuit",
                "pump", "valve", "gear", "framework", "tool", "process", "technique", "assembly",
                "mechanism", "processor", "actuator", "exchanger", "filter", "battery", "antenna",
                "amplifier", "interface", "housing", "frame", "coupling", "clutch", "electrode",
                "compressor", "turbine", "inverter", "catheter", "implant", "reactor", "loom",
                "press", "column", "beam", "panel", "array", "transistor", "laser", "lens",
            ]),
            material: set(&[
                "data", "dataset", "datasets", "material", "materials", "alloy", "polymer",
                "resin", "fiber", "fibre", "corpus", "fluid", "oil", "compound", "solution",
                "powder", "steel", "glass", "coating", "electrolyte", "base", "signal", "signals",
                "catalyst", "concrete", "textile", "yarn", "pulp", "paper", "composition",
                "substrate", "film", "ceramic", "gas", "water", "reagent",
            ]),
        }
    }
}

impl EntityLexicon {
    pub fn classify(&self, name: &str) -> EntityType {
        let Some(last) = name.split_whitespace().last() else { return EntityType::Generic };
        if self.task.contains(last) {
            EntityType::Task
        } else if self.method.contains(last) {
            EntityType::Method
        } else if self.material.contains(last) {
            EntityType::Material
        } else {
            EntityType::Generic
        }
    }
}

fn is_phrase_word(w: &str) -> bool {
    w.chars().next().is_some_and(|c| c.is_alphanumeric()) && !STOP_WORDS.contains(&w)
}

fn strip_determiners(words: &[String]) -> &[String] {
    let skip = words.iter().take_while(|w| DETERMINERS.contains(&w.as_str())).count();
    &words[skip..]
}

/// Noun phrase ending just before `end` (exclusive).
fn phrase_before(words: &[String], end: usize) -> Option<String> {
    let mut start = end;
    while start > 0
        && end - start < MAX_PHRASE_WORDS + 1
        && (is_phrase_word(&words[start - 1]) || DETERMINERS.contains(&words[start - 1].as_str()))
    {
        start -= 1;
    }
    // a determiner inside the window marks the phrase start
    let window = &words[start..end];
    let last_det = window.iter().rposition(|w| DETERMINERS.contains(&w.as_str()));
    let body = match last_det {
        Some(p) => &window[p + 1..],
        None => window,
    };
    let body = &body[body.len().saturating_sub(MAX_PHRASE_WORDS)..];
    (!body.is_empty()).then(|| body.join(" "))
}

/// Noun phrase starting at `start`.
fn phrase_after(words: &[String], start: usize) -> Option<String> {
    let rest = strip_determiners(&words[start.min(words.len())..]);
    let body: Vec<&str> = rest
        .iter()
        .take_while(|w| is_phrase_word(w) && !DETERMINERS.contains(&w.as_str()))
        .take(MAX_PHRASE_WORDS)
        .map(String::as_str)
        .collect();
    (!body.is_empty()).then(|| body.join(" "))
}

fn sentences(text: &str) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    for line in text.lines() {
        let mut cur = Vec::new();
        for p in pieces(line) {
            if matches!(p.text, "." | "!" | "?" | ";") {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
            } else {
                cur.push(p.text.to_lowercase());
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

/// Extract triples from free text, in order of appearance.
pub fn extract_from_text(text: &str, patterns: &PatternSet, source_doc: &str) -> Vec<Triple> {
    let mut out = Vec::new();
    for words in sentences(text) {
        let mut i = 0;
        while i < words.len() {
            let Some(pat) = patterns.match_at(&words, i) else {
                i += 1;
                continue;
            };
            let cue_end = i + pat.cue.len();
            let head = phrase_before(&words, i);
            let tail = phrase_after(&words, cue_end);
            if let (Some(h), Some(t)) = (head, tail) {
                let head = Entity::new(&h, patterns.lexicon.classify(&h));
                let tail = Entity::new(&t, patterns.lexicon.classify(&t));
                if let Ok(triple) = Triple::new(head, pat.relation, tail, pat.strength, source_doc) {
                    out.push(triple);
                }
            }
            i = cue_end;
        }
    }
    out
}

/// Pattern-based extraction over a document's title, abstract and claims.
pub fn extract_triples(doc: &PatentDoc, patterns: &PatternSet) -> Vec<Triple> {
    let mut text = String::new();
    text.push_str(&doc.title);
    text.push('\n');
    text.push_str(&doc.abstract_text);
    for c in &doc.claims {
        text.push('\n');
        text.push_str(c);
    }
    extract_from_text(&text, patterns, &doc.id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::IpcSection;
    use crate::kgraph::verbalize;

    fn doc(text: &str) -> PatentDoc {
        PatentDoc {
            id: "p1".into(),
            ipc_section: IpcSection::F,
            title: "Drive".into(),
            abstract_text: text.into(),
            claims: vec![],
        }
    }

    fn names(ts: &[Triple]) -> Vec<(String, RelationType, String)> {
        ts.iter().map(Triple::key).collect()
    }

    #[test]
    fn part_of_sentence() {
        let ts = extract_triples(
            &doc("The torque converter is a part of the transmission system."),
            &PatternSet::default(),
        );
        assert_eq!(
            names(&ts),
            vec![("torque converter".into(), RelationType::PartOf, "transmission system".into())]
        );
        assert_eq!(ts[0].head.etype, EntityType::Method);
        assert_eq!(ts[0].tail.etype, EntityType::Task);
        assert_eq!(ts[0].source_doc, "p1");
    }

    #[test]
    fn no_cue_no_triples() {
        assert!(extract_triples(&doc("The motor spins quickly."), &PatternSet::default()).is_empty());
    }

    #[test]
    fn type_of_sentence() {
        let ts = extract_triples(&doc("X is a type of Y."), &PatternSet::default());
        assert_eq!(names(&ts), vec![("x".into(), RelationType::HyponymOf, "y".into())]);
    }

    #[test]
    fn longest_cue_wins() {
        let ts = extract_triples(
            &doc("The pump is used in conjunction with the valve."),
            &PatternSet::default(),
        );
        assert_eq!(names(&ts), vec![("pump".into(), RelationType::Conjunction, "valve".into())]);
    }

    #[test]
    fn phrases_stop_at_clause_boundaries() {
        let ts = extract_triples(
            &doc("In one embodiment, the cooling fan is used for heat dissipation of the battery pack, and more."),
            &PatternSet::default(),
        );
        assert_eq!(names(&ts), vec![("cooling fan".into(), RelationType::UsedFor, "heat dissipation".into())]);
    }

    #[test]
    fn multiple_triples_in_document_order() {
        let ts = extract_triples(
            &doc("A rotor is a part of the turbine. Steel is compared with aluminum alloy."),
            &PatternSet::default(),
        );
        assert_eq!(
            names(&ts),
            vec![
                ("rotor".into(), RelationType::PartOf, "turbine".into()),
                ("aluminum alloy".into(), RelationType::Compare, "steel".into()),
            ]
        );
    }

    #[test]
    fn verbalized_sentences_round_trip_for_every_relation() {
        for r in RelationType::ALL {
            let t = Triple::new(
                Entity::new("heat exchanger", EntityType::Method),
                r,
                Entity::new("cooling circuit", EntityType::Method),
                3,
                "d",
            )
            .unwrap();
            let back = extract_from_text(&verbalize(&t), &PatternSet::default(), "d");
            assert_eq!(names(&back), vec![t.key()], "{r}");
        }
    }

    #[test]
    fn lexicon_typing() {
        let lex = EntityLexicon::default();
        assert_eq!(lex.classify("image classification"), EntityType::Task);
        assert_eq!(lex.classify("neural network"), EntityType::Method);
        assert_eq!(lex.classify("training data"), EntityType::Material);
        assert_eq!(lex.classify("it"), EntityType::Generic);
    }
}
