//! Structural validation of a title / abstract / claims draft.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::corpus::words;

pub const MAX_TITLE_WORDS: usize = 30;
pub const MIN_ABSTRACT_WORDS: usize = 50;
pub const MAX_ABSTRACT_WORDS: usize = 250;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Draft {
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    /// Numbered claims as free text ("1. ... 2. The system of claim 1 ...").
    pub claims: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    TitleNonempty,
    TitleLength,
    AbstractLength,
    HasClaims,
    ConsecutiveNumbering,
    IndependentClaim,
    DanglingReference,
}

impl Rule {
    pub const ALL: [Rule; 7] = [
        Rule::TitleNonempty,
        Rule::TitleLength,
        Rule::AbstractLength,
        Rule::HasClaims,
        Rule::ConsecutiveNumbering,
        Rule::IndependentClaim,
        Rule::DanglingReference,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Rule::TitleNonempty => "title-nonempty",
            Rule::TitleLength => "title-length",
            Rule::AbstractLength => "abstract-length",
            Rule::HasClaims => "has-claims",
            Rule::ConsecutiveNumbering => "consecutive-numbering",
            Rule::IndependentClaim => "independent-claim",
            Rule::DanglingReference => "dangling-reference",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Win,
    Loss,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasonabilityVerdict {
    pub verdict: Verdict,
    pub failed_checks: Vec<Rule>,
}

impl ReasonabilityVerdict {
    pub fn from_failures(failed_checks: Vec<Rule>) -> Self {
        let verdict = if failed_checks.is_empty() { Verdict::Win } else { Verdict::Loss };
        Self { verdict, failed_checks }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedClaim {
    /// `None` for text that does not start with a claim number.
    pub number: Option<u32>,
    pub text: String,
    /// Claim numbers referenced as "claim N" / "claims N".
    pub references: Vec<u32>,
}

fn claim_start() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?m)(?:^|[.;:])[ \t]*(\d{1,3})\.[ \t]+").expect("valid regex"))
}

fn claim_ref() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\bclaims?\s+(\d{1,3})\b").expect("valid regex"))
}

fn refs(text: &str) -> Vec<u32> {
    claim_ref().captures_iter(text).filter_map(|c| c[1].parse().ok()).collect()
}

/// Split a claims block at claim numbers. A leading "Claims:" label is
/// ignored; other text before the first number becomes an unnumbered claim.
pub fn parse_claims(text: &str) -> Vec<ParsedClaim> {
    let starts: Vec<(usize, usize, u32)> = claim_start()
        .captures_iter(text)
        .map(|c| {
            let whole = c.get(0).expect("match");
            let num = c.get(1).expect("group");
            (num.start(), whole.end(), num.as_str().parse().expect("digits"))
        })
        .collect();
    let mut out = Vec::new();
    let lead_end = starts.first().map_or(text.len(), |s| s.0);
    let lead = text[..lead_end].trim();
    let lead = lead.strip_prefix("Claims:").or_else(|| lead.strip_prefix("Claims")).unwrap_or(lead).trim();
    if !lead.is_empty() {
        out.push(ParsedClaim { number: None, text: lead.to_string(), references: refs(lead) });
    }
    for (i, &(_, body_start, number)) in starts.iter().enumerate() {
        let end = starts.get(i + 1).map_or(text.len(), |s| s.0);
        let body = text[body_start..end].trim();
        out.push(ParsedClaim { number: Some(number), text: body.to_string(), references: refs(body) });
    }
    out
}

/// Words with at least one alphanumeric character.
pub fn word_count(text: &str) -> usize {
    words(text).iter().filter(|w| w.chars().any(char::is_alphanumeric)).count()
}

pub fn reasonability_check(draft: &Draft) -> ReasonabilityVerdict {
    let mut failed = Vec::new();
    let title_words = word_count(&draft.title);
    if draft.title.trim().is_empty() {
        failed.push(Rule::TitleNonempty);
    } else if title_words > MAX_TITLE_WORDS {
        failed.push(Rule::TitleLength);
    }
    let aw = word_count(&draft.abstract_text);
    if !(MIN_ABSTRACT_WORDS..=MAX_ABSTRACT_WORDS).contains(&aw) {
        failed.push(Rule::AbstractLength);
    }
    let claims = parse_claims(&draft.claims);
    if claims.is_empty() {
        failed.push(Rule::HasClaims);
        return ReasonabilityVerdict::from_failures(failed);
    }
    if claims.iter().enumerate().any(|(i, c)| c.number != Some(i as u32 + 1)) {
        failed.push(Rule::ConsecutiveNumbering);
    }
    if claims.iter().all(|c| !c.references.is_empty()) {
        failed.push(Rule::IndependentClaim);
    }
    let numbers: Vec<u32> = claims.iter().filter_map(|c| c.number).collect();
    let dangling = claims.iter().enumerate().any(|(i, c)| {
        let own = c.number.unwrap_or(i as u32 + 1);
        c.references.iter().any(|&r| r >= own || !numbers.contains(&r))
    });
    if dangling {
        failed.push(Rule::DanglingReference);
    }
    ReasonabilityVerdict::from_failures(failed)
}

/// Pluggable judge; the structural validator is the built-in one.
pub trait Judge {
    fn judge(&self, id: &str, draft: &Draft) -> Result<ReasonabilityVerdict, EvalError>;
}

pub struct StructuralJudge;

impl Judge for StructuralJudge {
    fn judge(&self, _id: &str, draft: &Draft) -> Result<ReasonabilityVerdict, EvalError> {
        Ok(reasonability_check(draft))
    }
}

/// Verdicts produced elsewhere (e.g. by a human or model judge), keyed by
/// draft id, read from a JSON object file.
pub struct ExternalVerdicts(pub BTreeMap<String, ReasonabilityVerdict>);

impl ExternalVerdicts {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path)?;
        let map = serde_json::from_str(&text)
            .map_err(|e| EvalError::MalformedItem { line: 0, reason: e.to_string() })?;
        Ok(Self(map))
    }
}

impl Judge for ExternalVerdicts {
    fn judge(&self, id: &str, _draft: &Draft) -> Result<ReasonabilityVerdict, EvalError> {
        self.0.get(id).cloned().ok_or_else(|| EvalError::MissingVerdict(id.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_inline_and_labelled_claims() {
        let c = parse_claims("Claims:1. A pump, comprising a rotor.\n2. The pump of claim 1, wherein x.3. A method.");
        assert_eq!(c.iter().map(|c| c.number).collect::<Vec<_>>(), vec![Some(1), Some(2), Some(3)]);
        assert_eq!(c[1].references, vec![1]);
        assert!(c[0].references.is_empty());
        let d = parse_claims("A valve with a 2.5 mm seat.");
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].number, None);
    }

    #[test]
    fn reference_rules() {
        let abs = "word ".repeat(60);
        let draft = |claims: &str| Draft { title: "A pump".into(), abstract_text: abs.clone(), claims: claims.into() };
        assert_eq!(reasonability_check(&draft("1. A pump.\n2. The pump of claim 1.")).verdict, Verdict::Win);
        assert_eq!(
            reasonability_check(&draft("1. A pump.\n2. The pump of claim 2.")).failed_checks,
            vec![Rule::DanglingReference]
        );
        assert_eq!(
            reasonability_check(&draft("1. The pump of claim 2.\n2. The pump of claim 1.")).failed_checks,
            vec![Rule::IndependentClaim, Rule::DanglingReference]
        );
        assert_eq!(reasonability_check(&draft("")).failed_checks, vec![Rule::HasClaims]);
    }
}
