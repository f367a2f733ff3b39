//! Scripted three-turn drafting: idea → title → abstract → claims, each
//! prompt built only from fields already filled.

use serde::{Deserialize, Serialize};

use kft_core::corpus::{abstract_query, claims_query, title_query, Vocab};
use kft_core::eval::{generate_answer, reasonability_check, Draft, EvalError, ReasonabilityVerdict, Verdict};
use kft_core::lm::{GenerationConfig, ModelState};
use kft_core::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub prompt: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DraftSession {
    pub idea: String,
    pub title: Option<String>,
    #[serde(rename = "abstract")]
    pub abstract_text: Option<String>,
    pub claims: Option<String>,
    pub turns: Vec<Turn>,
    pub verdict: Option<ReasonabilityVerdict>,
}

impl DraftSession {
    pub fn new(idea: &str) -> Self {
        Self { idea: idea.to_string(), title: None, abstract_text: None, claims: None, turns: Vec::new(), verdict: None }
    }

    /// A later field is never present without every earlier one.
    pub fn is_ordered(&self) -> bool {
        let filled = [self.title.is_some(), self.abstract_text.is_some(), self.claims.is_some()];
        filled.windows(2).all(|w| w[0] || !w[1])
    }

    /// The next prompt, or `None` once claims are filled.
    pub fn next_prompt(&self) -> Option<String> {
        match (&self.title, &self.abstract_text, &self.claims) {
            (None, _, _) => Some(title_query(&self.idea)),
            (Some(t), None, _) => Some(abstract_query(t)),
            (Some(t), Some(a), None) => Some(claims_query(t, a)),
            _ => None,
        }
    }

    fn fill(&mut self, prompt: String, response: String) {
        if self.title.is_none() {
            self.title = Some(response.clone());
        } else if self.abstract_text.is_none() {
            self.abstract_text = Some(response.clone());
        } else {
            self.claims = Some(response.clone());
        }
        self.turns.push(Turn { prompt, response });
    }

    pub fn draft(&self) -> Draft {
        Draft {
            title: self.title.clone().unwrap_or_default(),
            abstract_text: self.abstract_text.clone().unwrap_or_default(),
            claims: self.claims.clone().unwrap_or_default(),
        }
    }

    /// Human-readable transcript, one user/assistant exchange per turn,
    /// followed by the verdict when present.
    pub fn transcript(&self) -> String {
        let mut s = String::new();
        for (i, t) in self.turns.iter().enumerate() {
            s.push_str(&format!("## Turn {}\n\nUser:\n{}\n\nAssistant:\n{}\n\n", i + 1, t.prompt, t.response));
        }
        if let Some(v) = &self.verdict {
            let outcome = match v.verdict {
                Verdict::Win => "Win",
                Verdict::Loss => "Loss",
            };
            s.push_str(&format!("## Reasonability\n\n{outcome}"));
            if !v.failed_checks.is_empty() {
                let ids: Vec<&str> = v.failed_checks.iter().map(|r| r.id()).collect();
                s.push_str(&format!(" (failed: {})", ids.join(", ")));
            }
            s.push('\n');
        }
        s
    }
}

/// Run the three turns with `gen` (each turn with its own derived seed)
/// and append the structural verdict.
pub fn draft_session(
    model: &ModelState,
    vocab: &Vocab,
    idea: &str,
    gen: &GenerationConfig,
) -> Result<DraftSession, EvalError> {
    if idea.trim().is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut session = DraftSession::new(idea);
    for turn in ["title", "abstract", "claims"] {
        let prompt = session.next_prompt().expect("three turns");
        let g = GenerationConfig { seed: derive_seed(gen.seed, &format!("draft/{turn}")), ..gen.clone() };
        let response = generate_answer(model, vocab, &prompt, &g)?;
        session.fill(prompt, response.trim().to_string());
    }
    session.verdict = Some(reasonability_check(&session.draft()));
    Ok(session)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prompts_follow_filled_fields() {
        let mut s = DraftSession::new("a quiet fan");
        assert_eq!(s.next_prompt().unwrap(), title_query("a quiet fan"));
        s.fill(s.next_prompt().unwrap(), "Fan blade".into());
        assert!(s.next_prompt().unwrap().contains("Fan blade"));
        s.fill(s.next_prompt().unwrap(), "An abstract.".into());
        assert_eq!(s.next_prompt().unwrap(), claims_query("Fan blade", "An abstract."));
        s.fill(s.next_prompt().unwrap(), "1. A fan.".into());
        assert!(s.next_prompt().is_none());
        assert!(s.is_ordered());
        let broken = DraftSession { title: None, claims: Some("x".into()), ..DraftSession::new("i") };
        assert!(!broken.is_ordered());
    }
}
