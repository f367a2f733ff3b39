//! Novelty proxy: how rarely a text's extracted concept pairs co-occur in
//! a reference knowledge graph.

use std::collections::{BTreeMap, BTreeSet};

use log::debug;

use super::EvalError;
use crate::kgraph::{extract_from_text, KnowledgeGraph, PatternSet};

/// Unordered pair co-occurrence counts with their maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct PairStats {
    pub counts: BTreeMap<(String, String), usize>,
}

impl PairStats {
    pub fn from_graph(kg: &KnowledgeGraph) -> Result<Self, EvalError> {
        if kg.is_empty() {
            return Err(EvalError::EmptyGraph);
        }
        Ok(Self { counts: kg.pair_counts() })
    }

    pub fn max(&self) -> usize {
        self.counts.values().copied().max().unwrap_or(0)
    }

    pub fn count(&self, a: &str, b: &str) -> usize {
        let key = if a <= b { (a.to_string(), b.to_string()) } else { (b.to_string(), a.to_string()) };
        self.counts.get(&key).copied().unwrap_or(0)
    }

    /// `1 - count / max`; 1 for unseen pairs.
    pub fn pair_rareness(&self, a: &str, b: &str) -> f64 {
        let max = self.max();
        if max == 0 {
            return 1.0;
        }
        1.0 - self.count(a, b) as f64 / max as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RarenessScore {
    pub score: f64,
    /// Distinct unordered entity pairs extracted from the text.
    pub pairs: Vec<(String, String)>,
    /// Set when no pair was extracted (the score is then 0).
    pub no_pairs: bool,
}

/// Distinct unordered entity pairs the extractor finds in `text`.
pub fn text_pairs(text: &str, patterns: &PatternSet) -> Vec<(String, String)> {
    let mut set = BTreeSet::new();
    for t in extract_from_text(text, patterns, "") {
        let (a, b) = (t.head.name, t.tail.name);
        set.insert(if a <= b { (a, b) } else { (b, a) });
    }
    set.into_iter().collect()
}

pub fn rareness_with_stats(text: &str, stats: &PairStats, patterns: &PatternSet) -> RarenessScore {
    let pairs = text_pairs(text, patterns);
    if pairs.is_empty() {
        debug!("rareness: no concept pairs extracted; scoring 0");
        return RarenessScore { score: 0.0, pairs, no_pairs: true };
    }
    let score = pairs.iter().map(|(a, b)| stats.pair_rareness(a, b)).sum::<f64>() / pairs.len() as f64;
    RarenessScore { score, pairs, no_pairs: false }
}

pub fn rareness(text: &str, kg: &KnowledgeGraph, patterns: &PatternSet) -> Result<RarenessScore, EvalError> {
    Ok(rareness_with_stats(text, &PairStats::from_graph(kg)?, patterns))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RarenessReport {
    pub average_rareness: f64,
    pub per_text: Vec<(String, f64)>,
}

impl RarenessReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("text_id,score\n");
        for (id, v) in &self.per_text {
            s.push_str(&format!("{id},{v}\n"));
        }
        s
    }
}

/// Scores `(id, text)` items; the average is the plain mean of per-text
/// scores (texts without pairs included as 0).
pub fn rareness_report(
    texts: &[(String, String)],
    kg: &KnowledgeGraph,
    patterns: &PatternSet,
) -> Result<RarenessReport, EvalError> {
    let stats = PairStats::from_graph(kg)?;
    let per_text: Vec<(String, f64)> =
        texts.iter().map(|(id, t)| (id.clone(), rareness_with_stats(t, &stats, patterns).score)).collect();
    let average_rareness =
        if per_text.is_empty() { 0.0 } else { per_text.iter().map(|(_, s)| s).sum::<f64>() / per_text.len() as f64 };
    Ok(RarenessReport { average_rareness, per_text })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kgraph::{aggregate, Entity, EntityType, RelationType, Triple};

    fn kg() -> KnowledgeGraph {
        let t = |h: &str, tl: &str, doc: &str| {
            Triple::new(Entity::new(h, EntityType::Generic), RelationType::PartOf, Entity::new(tl, EntityType::Generic), 3, doc)
                .unwrap()
        };
        aggregate(&[
            vec![t("rotor", "turbine", "d1"), t("valve", "pump", "d1")],
            vec![t("rotor", "turbine", "d2")],
        ])
    }

    #[test]
    fn fixpoints() {
        let p = PatternSet::default();
        let top = rareness("The rotor is a part of the turbine.", &kg(), &p).unwrap();
        assert_eq!(top.score, 0.0);
        let unseen = rareness("The gear is a part of the clock.", &kg(), &p).unwrap();
        assert_eq!(unseen.score, 1.0);
        let half = rareness("The valve is a part of the pump.", &kg(), &p).unwrap();
        assert_eq!(half.score, 0.5);
        let none = rareness("Nothing to see here.", &kg(), &p).unwrap();
        assert!(none.no_pairs && none.score == 0.0);
        assert!(matches!(rareness("x", &KnowledgeGraph::new(), &p), Err(EvalError::EmptyGraph)));
    }
}
