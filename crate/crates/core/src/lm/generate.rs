//! Autoregressive temperature / top-k sampling.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::tensor::softmax;
use super::{LmError, ModelState};
use crate::corpus::EOS;
use crate::seed::{rng_from_seed, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub temperature: f64,
    pub max_new_tokens: usize,
    pub top_k: Option<usize>,
    pub seed: u64,
    pub stop_tokens: Vec<u32>,
    /// Always take the argmax; temperature and top_k are ignored.
    pub greedy: bool,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self { temperature: 0.7, max_new_tokens: 64, top_k: None, seed: 0, stop_tokens: vec![EOS], greedy: false }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), LmError> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(LmError::ConfigInvalid(format!("temperature must be > 0, got {}", self.temperature)));
        }
        if self.max_new_tokens == 0 {
            return Err(LmError::ConfigInvalid("max_new_tokens must be positive".into()));
        }
        if self.top_k == Some(0) {
            return Err(LmError::ConfigInvalid("top_k must be positive".into()));
        }
        Ok(())
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Draw one token id from a logit row. Top-k keeps the k largest logits,
/// preferring lower ids on ties.
pub fn sample_next(logits: &[f64], gen: &GenerationConfig, rng: &mut Rng) -> u32 {
    if gen.greedy {
        return argmax(logits) as u32;
    }
    let scaled: Vec<f64> = logits.iter().map(|x| x / gen.temperature).collect();
    let mut candidates: Vec<usize> = (0..scaled.len()).collect();
    if let Some(k) = gen.top_k {
        candidates.sort_by(|&a, &b| scaled[b].total_cmp(&scaled[a]).then(a.cmp(&b)));
        candidates.truncate(k.min(scaled.len()));
        candidates.sort_unstable();
    }
    let sub: Vec<f64> = candidates.iter().map(|&i| scaled[i]).collect();
    let probs = softmax(&sub);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (&id, &p) in candidates.iter().zip(&probs) {
        acc += p;
        if u < acc {
            return id as u32;
        }
    }
    // rounding left `acc` slightly below 1: take the last non-zero entry
    let last = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    candidates[last] as u32
}

/// Continue `prompt`; returns only the new tokens, including a terminating
/// stop token when one is emitted. Generation also ends when the context
/// window is full.
pub fn generate(model: &ModelState, prompt: &[u32], gen: &GenerationConfig) -> Result<Vec<u32>, LmError> {
    gen.validate()?;
    model.check_tokens(prompt)?;
    if prompt.len() >= model.config.max_seq {
        return Err(LmError::SequenceTooLong { len: prompt.len() + 1, max: model.config.max_seq });
    }
    let mut rng = rng_from_seed(gen.seed);
    let mut ctx = prompt.to_vec();
    let mut out = Vec::new();
    while out.len() < gen.max_new_tokens && ctx.len() < model.config.max_seq {
        let logits = model.next_logits(&ctx)?;
        let next = sample_next(&logits, gen, &mut rng);
        out.push(next);
        ctx.push(next);
        if gen.stop_tokens.contains(&next) {
            break;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{init_model, ModelConfig};

    fn model() -> ModelState {
        init_model(ModelConfig { vocab_size: 30, d_model: 8, n_heads: 2, n_layers: 1, d_ff: 16, max_seq: 16, seed: 2 })
            .unwrap()
    }

    #[test]
    fn greedy_takes_argmax_each_step() {
        let m = model();
        let gen = GenerationConfig { greedy: true, max_new_tokens: 5, stop_tokens: vec![], ..Default::default() };
        let out = generate(&m, &[1, 7], &gen).unwrap();
        let mut ctx = vec![1, 7];
        for &t in &out {
            assert_eq!(t as usize, argmax(&m.next_logits(&ctx).unwrap()));
            ctx.push(t);
        }
        assert_eq!(out.len(), 5);
    }

    #[test]
    fn deterministic_and_top1_is_greedy() {
        let m = model();
        let gen = GenerationConfig { max_new_tokens: 8, seed: 9, stop_tokens: vec![], ..Default::default() };
        assert_eq!(generate(&m, &[1, 3], &gen).unwrap(), generate(&m, &[1, 3], &gen).unwrap());
        let top1 = GenerationConfig { top_k: Some(1), ..gen.clone() };
        let greedy = GenerationConfig { greedy: true, ..gen };
        assert_eq!(generate(&m, &[1, 3], &top1).unwrap(), generate(&m, &[1, 3], &greedy).unwrap());
    }

    #[test]
    fn respects_window_and_validation() {
        let m = model();
        assert!(matches!(generate(&m, &[1; 16], &GenerationConfig::default()), Err(LmError::SequenceTooLong { .. })));
        let gen = GenerationConfig { max_new_tokens: 100, stop_tokens: vec![], ..Default::default() };
        assert_eq!(generate(&m, &[1; 10], &gen).unwrap().len(), 6);
        let bad = GenerationConfig { temperature: 0.0, ..Default::default() };
        assert!(matches!(generate(&m, &[1], &bad), Err(LmError::ConfigInvalid(_))));
    }

    #[test]
    fn top_k_ties_prefer_lower_ids() {
        let gen = GenerationConfig { top_k: Some(1), ..Default::default() };
        let mut rng = rng_from_seed(0);
        assert_eq!(sample_next(&[0.0, 2.0, 2.0, 1.0], &gen, &mut rng), 1);
    }
}
