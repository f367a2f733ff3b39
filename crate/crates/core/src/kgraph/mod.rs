//! Knowledge graph: entity/relation taxonomy, triple extraction, aggregation
//! and verbalization into a knowledge corpus.

mod extract;
mod io;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use extract::{extract_from_text, extract_triples, EntityLexicon, Pattern, PatternSet};
pub use io::{export_triples, import_triples, parse_triples, triple_to_json, write_knowledge_corpus};

#[derive(Debug, Error)]
pub enum KgError {
    #[error("line {line}: malformed triple: {reason}")]
    MalformedTriple { line: usize, reason: String },
    #[error("line {line}: unknown relation {value:?}")]
    UnknownRelation { line: usize, value: String },
    #[error("line {line}: strength {value} outside 1..=5")]
    StrengthOutOfRange { line: usize, value: i64 },
    #[error("invalid triple: {0}")]
    InvalidTriple(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntityType {
    Task,
    Method,
    Material,
    Generic,
}

impl EntityType {
    pub const ALL: [EntityType; 4] =
        [EntityType::Task, EntityType::Method, EntityType::Material, EntityType::Generic];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityType::Task => "Task",
            EntityType::Method => "Method",
            EntityType::Material => "Material",
            EntityType::Generic => "Generic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RelationType {
    UsedFor,
    FeatureOf,
    HyponymOf,
    PartOf,
    Compare,
    Conjunction,
}

impl RelationType {
    pub const ALL: [RelationType; 6] = [
        RelationType::UsedFor,
        RelationType::FeatureOf,
        RelationType::HyponymOf,
        RelationType::PartOf,
        RelationType::Compare,
        RelationType::Conjunction,
    ];

    pub fn is_symmetric(self) -> bool {
        matches!(self, RelationType::Compare | RelationType::Conjunction)
    }

    /// Spelling used in the triples file.
    pub fn label(self) -> &'static str {
        match self {
            RelationType::UsedFor => "Used-for",
            RelationType::FeatureOf => "Feature-of",
            RelationType::HyponymOf => "Hyponym-of",
            RelationType::PartOf => "Part-of",
            RelationType::Compare => "Compare",
            RelationType::Conjunction => "Conjunction",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.label() == s)
    }

    /// Phrase placed between head and tail when verbalizing.
    pub fn phrase(self) -> &'static str {
        match self {
            RelationType::UsedFor => "is used for",
            RelationType::FeatureOf => "is a feature of",
            RelationType::HyponymOf => "is a type of",
            RelationType::PartOf => "is a part of",
            RelationType::Compare => "is comparable to",
            RelationType::Conjunction => "is used in conjunction with",
        }
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Lowercase, trim and collapse internal whitespace.
pub fn normalize_name(name: &str) -> String {
    name.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Entity {
    pub name: String,
    pub etype: EntityType,
    pub description: String,
}

impl Entity {
    pub fn new(name: &str, etype: EntityType) -> Self {
        Self { name: normalize_name(name), etype, description: String::new() }
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Triple {
    pub head: Entity,
    pub relation: RelationType,
    pub tail: Entity,
    pub strength: u8,
    pub source_doc: String,
}

pub type TripleKey = (String, RelationType, String);

impl Triple {
    /// Validate and canonicalize. Symmetric relations are stored with the
    /// lexicographically smaller entity name as head.
    pub fn new(
        head: Entity,
        relation: RelationType,
        tail: Entity,
        strength: u8,
        source_doc: impl Into<String>,
    ) -> Result<Self, KgError> {
        if !(1..=5).contains(&strength) {
            return Err(KgError::InvalidTriple(format!("strength {strength} outside 1..=5")));
        }
        if head.name.is_empty() || tail.name.is_empty() {
            return Err(KgError::InvalidTriple("empty entity name".into()));
        }
        if head.name != normalize_name(&head.name) || tail.name != normalize_name(&tail.name) {
            return Err(KgError::InvalidTriple("entity name not normalized".into()));
        }
        if head.name == tail.name {
            return Err(KgError::InvalidTriple(format!("self-relation on {:?}", head.name)));
        }
        let (head, tail) = if relation.is_symmetric() && tail.name < head.name {
            (tail, head)
        } else {
            (head, tail)
        };
        Ok(Self { head, relation, tail, strength, source_doc: source_doc.into() })
    }

    pub fn key(&self) -> TripleKey {
        (self.head.name.clone(), self.relation, self.tail.name.clone())
    }
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Render a triple as one declarative sentence.
pub fn verbalize(triple: &Triple) -> String {
    capitalize(&format!("{} {} {}.", triple.head.name, triple.relation.phrase(), triple.tail.name))
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Fact {
    triple: Triple,
    sources: BTreeSet<String>,
}

/// Set of triples keyed by (head, relation, tail), plus an entity index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeGraph {
    facts: BTreeMap<TripleKey, Fact>,
    entities: BTreeMap<String, Entity>,
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert with set semantics; a duplicate keeps the higher strength and
    /// records the additional source document.
    pub fn insert(&mut self, triple: Triple) {
        let triple = Triple::new(
            triple.head,
            triple.relation,
            triple.tail,
            triple.strength,
            triple.source_doc,
        )
        .expect("triple invariants hold for constructed triples");
        let key = triple.key();
        for e in [&triple.head, &triple.tail] {
            self.entities.entry(e.name.clone()).or_insert_with(|| e.clone());
        }
        match self.facts.get_mut(&key) {
            Some(fact) => {
                fact.sources.insert(triple.source_doc.clone());
                if triple.strength > fact.triple.strength {
                    fact.triple = triple;
                }
            }
            None => {
                let sources = BTreeSet::from([triple.source_doc.clone()]);
                self.facts.insert(key, Fact { triple, sources });
            }
        }
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    /// Triples in canonical (head, relation, tail) order.
    pub fn triples(&self) -> impl Iterator<Item = &Triple> {
        self.facts.values().map(|f| &f.triple)
    }

    pub fn get(&self, key: &TripleKey) -> Option<&Triple> {
        self.facts.get(key).map(|f| &f.triple)
    }

    pub fn contains(&self, head: &str, relation: RelationType, tail: &str) -> bool {
        let t = Triple::new(
            Entity::new(head, EntityType::Generic),
            relation,
            Entity::new(tail, EntityType::Generic),
            1,
            "",
        );
        t.map(|t| self.facts.contains_key(&t.key())).unwrap_or(false)
    }

    pub fn entity(&self, name: &str) -> Option<&Entity> {
        self.entities.get(name)
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values()
    }

    /// Number of distinct source documents linking the unordered pair by any
    /// relation.
    pub fn pair_cooccurrence(&self, a: &str, b: &str) -> usize {
        let mut docs = BTreeSet::new();
        for f in self.facts.values() {
            let (h, t) = (&f.triple.head.name, &f.triple.tail.name);
            if (h == a && t == b) || (h == b && t == a) {
                docs.extend(f.sources.iter());
            }
        }
        docs.len()
    }

    /// Co-occurrence counts for every linked unordered pair.
    pub fn pair_counts(&self) -> BTreeMap<(String, String), usize> {
        let mut docs: BTreeMap<(String, String), BTreeSet<&String>> = BTreeMap::new();
        for f in self.facts.values() {
            let (h, t) = (f.triple.head.name.clone(), f.triple.tail.name.clone());
            let key = if h <= t { (h, t) } else { (t, h) };
            docs.entry(key).or_default().extend(f.sources.iter());
        }
        docs.into_iter().map(|(k, v)| (k, v.len())).collect()
    }
}

/// Union of per-document triple lists.
pub fn aggregate(per_doc: &[Vec<Triple>]) -> KnowledgeGraph {
    let mut kg = KnowledgeGraph::new();
    for t in per_doc.iter().flatten() {
        kg.insert(t.clone());
    }
    kg
}

/// One verbalized sentence per triple, in canonical triple order.
pub fn build_knowledge_corpus(kg: &KnowledgeGraph) -> Vec<String> {
    kg.triples().map(verbalize).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(h: &str, r: RelationType, tl: &str, s: u8, doc: &str) -> Triple {
        Triple::new(Entity::new(h, EntityType::Generic), r, Entity::new(tl, EntityType::Generic), s, doc)
            .unwrap()
    }

    #[test]
    fn symmetric_flags() {
        let sym: Vec<_> = RelationType::ALL.into_iter().filter(|r| r.is_symmetric()).collect();
        assert_eq!(sym, vec![RelationType::Compare, RelationType::Conjunction]);
    }

    #[test]
    fn triple_invariants() {
        let e = |n: &str| Entity::new(n, EntityType::Method);
        assert!(Triple::new(e("a"), RelationType::PartOf, e("b"), 0, "d").is_err());
        assert!(Triple::new(e("a"), RelationType::PartOf, e("b"), 6, "d").is_err());
        assert!(Triple::new(e("a"), RelationType::PartOf, e(" A "), 3, "d").is_err());
        let c = Triple::new(e("zeta"), RelationType::Compare, e("alpha"), 3, "d").unwrap();
        assert_eq!((c.head.name.as_str(), c.tail.name.as_str()), ("alpha", "zeta"));
        let p = Triple::new(e("zeta"), RelationType::PartOf, e("alpha"), 3, "d").unwrap();
        assert_eq!(p.head.name, "zeta");
    }

    #[test]
    fn duplicates_keep_max_strength() {
        let kg = aggregate(&[
            vec![t("pump", RelationType::PartOf, "cooling loop", 2, "d1")],
            vec![t("pump", RelationType::PartOf, "cooling loop", 5, "d2")],
        ]);
        assert_eq!(kg.len(), 1);
        assert_eq!(kg.triples().next().unwrap().strength, 5);
        assert_eq!(kg.pair_cooccurrence("pump", "cooling loop"), 2);
    }

    #[test]
    fn symmetric_duplicates_collapse() {
        let kg = aggregate(&[vec![
            t("a", RelationType::Compare, "b", 3, "d"),
            t("b", RelationType::Compare, "a", 3, "d"),
        ]]);
        assert_eq!(kg.len(), 1);
    }

    #[test]
    fn union_over_documents() {
        // 4 + 3 + 3 triples, two of doc2/doc3's triples repeat earlier ones
        let d1 = vec![
            t("a", RelationType::PartOf, "b", 3, "1"),
            t("c", RelationType::UsedFor, "d", 3, "1"),
            t("e", RelationType::HyponymOf, "f", 3, "1"),
            t("g", RelationType::FeatureOf, "h", 3, "1"),
        ];
        let d2 = vec![
            t("a", RelationType::PartOf, "b", 4, "2"),
            t("i", RelationType::Compare, "j", 3, "2"),
            t("k", RelationType::Conjunction, "l", 3, "2"),
        ];
        let d3 = vec![
            t("l", RelationType::Conjunction, "k", 2, "3"),
            t("m", RelationType::UsedFor, "n", 3, "3"),
            t("o", RelationType::PartOf, "p", 3, "3"),
        ];
        let per_doc = vec![d1, d2, d3];
        let kg = aggregate(&per_doc);
        // oracle: brute-force set of canonical keys
        let keys: BTreeSet<TripleKey> = per_doc.iter().flatten().map(Triple::key).collect();
        assert_eq!(keys.len(), 8);
        assert_eq!(kg.len(), 8);
        let doubled: Vec<Vec<Triple>> = per_doc.iter().chain(per_doc.iter()).cloned().collect();
        assert_eq!(aggregate(&doubled), kg);
    }

    #[test]
    fn verbalization_templates() {
        let s = verbalize(&t("neural network", RelationType::UsedFor, "image classification", 3, "d"));
        assert_eq!(s, "Neural network is used for image classification.");
        let s = verbalize(&t("battery", RelationType::PartOf, "powertrain", 3, "d"));
        assert_eq!(s, "Battery is a part of powertrain.");
    }

    #[test]
    fn knowledge_corpus_cardinality() {
        assert!(build_knowledge_corpus(&KnowledgeGraph::new()).is_empty());
        let kg = aggregate(&[vec![
            t("a", RelationType::PartOf, "b", 3, "1"),
            t("c", RelationType::UsedFor, "d", 3, "1"),
            t("e", RelationType::HyponymOf, "f", 3, "1"),
            t("g", RelationType::FeatureOf, "h", 3, "1"),
            t("i", RelationType::Compare, "j", 3, "1"),
        ]]);
        assert_eq!(build_knowledge_corpus(&kg).len(), 5);
    }

    #[test]
    fn entity_index_covers_triples() {
        let kg = aggregate(&[vec![t("a", RelationType::PartOf, "b", 3, "1")]]);
        assert!(kg.entity("a").is_some() && kg.entity("b").is_some());
        assert_eq!(kg.entities().count(), 2);
        assert!(kg.contains("A", RelationType::PartOf, "b"));
    }
}
