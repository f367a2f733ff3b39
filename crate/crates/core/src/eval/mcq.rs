//! Multiple-choice benchmarking by length-normalized choice likelihood.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::corpus::{Vocab, BOS, SEP};
use crate::lm::ModelState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McqItem {
    pub question: String,
    pub choices: Vec<String>,
    #[serde(rename = "answer")]
    pub correct_index: usize,
}

impl McqItem {
    pub fn validate(&self) -> Result<(), String> {
        if self.choices.len() < 2 {
            return Err("needs at least two choices".into());
        }
        if self.correct_index >= self.choices.len() {
            return Err(format!("answer {} out of range", self.correct_index));
        }
        if self.choices.iter().any(|c| c.trim().is_empty()) {
            return Err("empty choice".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub predictions: Vec<usize>,
}

pub fn parse_mcq(text: &str) -> Result<Vec<McqItem>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item: McqItem = serde_json::from_str(line)
            .map_err(|e| EvalError::MalformedItem { line: i + 1, reason: e.to_string() })?;
        item.validate().map_err(|reason| EvalError::MalformedItem { line: i + 1, reason })?;
        out.push(item);
    }
    Ok(out)
}

pub fn load_mcq(path: impl AsRef<Path>) -> Result<Vec<McqItem>, EvalError> {
    parse_mcq(&fs::read_to_string(path)?)
}

/// Mean log-probability of the choice tokens after `BOS question SEP`.
pub fn choice_score(model: &ModelState, vocab: &Vocab, question: &str, choice: &str) -> Result<f64, EvalError> {
    let mut tokens = vec![BOS];
    tokens.extend(vocab.encode(question).ids);
    tokens.push(SEP);
    let start = tokens.len();
    tokens.extend(vocab.encode(choice).ids);
    if tokens.len() == start {
        return Err(EvalError::MalformedItem { line: 0, reason: "choice encodes to no tokens".into() });
    }
    if tokens.len() > model.config.max_seq {
        return Err(EvalError::ChoiceTooLong { len: tokens.len(), max: model.config.max_seq });
    }
    let lp = model.token_logprobs(&tokens)?;
    let choice_lp = &lp[start - 1..];
    Ok(choice_lp.iter().sum::<f64>() / choice_lp.len() as f64)
}

/// Argmax with ties going to the lowest index.
pub fn predict(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

pub fn run_mcq(model: &ModelState, vocab: &Vocab, items: &[McqItem]) -> Result<BenchResult, EvalError> {
    if items.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut predictions = Vec::with_capacity(items.len());
    let mut correct = 0;
    for item in items {
        item.validate().map_err(|reason| EvalError::MalformedItem { line: 0, reason })?;
        let scores = item
            .choices
            .iter()
            .map(|c| choice_score(model, vocab, &item.question, c))
            .collect::<Result<Vec<_>, _>>()?;
        let p = predict(&scores);
        correct += usize::from(p == item.correct_index);
        predictions.push(p);
    }
    Ok(BenchResult { accuracy: correct as f64 / items.len() as f64, correct, total: items.len(), predictions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{init_model, ModelConfig};

    #[test]
    fn ties_go_to_first_choice() {
        assert_eq!(predict(&[-1.0, -1.0, -2.0]), 0);
        let vocab = Vocab::from_words(["gear", "pump"]);
        let model = init_model(ModelConfig { vocab_size: vocab.len(), d_model: 8, n_heads: 2, n_layers: 1, d_ff: 8, max_seq: 16, seed: 0 })
            .unwrap();
        let item = McqItem { question: "which".into(), choices: vec!["gear".into(), "gear".into()], correct_index: 0 };
        assert_eq!(run_mcq(&model, &vocab, &[item]).unwrap().accuracy, 1.0);
    }

    #[test]
    fn parse_validates() {
        assert!(parse_mcq(r#"{"question":"q","choices":["a","b"],"answer":1}"#).is_ok());
        assert!(matches!(
            parse_mcq(r#"{"question":"q","choices":["a","b"],"answer":2}"#),
            Err(EvalError::MalformedItem { line: 1, .. })
        ));
    }
}
