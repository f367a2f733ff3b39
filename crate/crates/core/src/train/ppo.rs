//! PPO with a clipped surrogate, batch-whitened terminal rewards and a
//! per-token KL penalty against the frozen starting policy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_finite, AdamState, Curve, RewardModel, TrainError};
use crate::corpus::EOS;
use crate::lm::{generate, tensor::log_softmax, GenerationConfig, LmError, ModelState, Params};
use crate::seed::derive_seed;

/// Anything that can score a sampled answer to a prompt.
pub trait Scorer: Sync {
    fn score(&self, prompt: &[u32], answer: &[u32]) -> Result<f64, LmError>;
}

impl Scorer for RewardModel {
    /// Scores `prompt ++ answer` with a trailing end token removed, matching
    /// the layout used in reward-model training.
    fn score(&self, prompt: &[u32], answer: &[u32]) -> Result<f64, LmError> {
        let body = match answer.last() {
            Some(&EOS) => &answer[..answer.len() - 1],
            _ => answer,
        };
        let mut tokens = prompt.to_vec();
        tokens.extend_from_slice(body);
        tokens.truncate(self.base.config.max_seq);
        self.score_tokens(&tokens)
    }
}

impl<F> Scorer for F
where
    F: Fn(&[u32], &[u32]) -> f64 + Sync,
{
    fn score(&self, prompt: &[u32], answer: &[u32]) -> Result<f64, LmError> {
        Ok(self(prompt, answer))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub clip_epsilon: f64,
    pub ppo_epochs: usize,
    pub rollout_batch: usize,
    pub kl_coefficient: f64,
    pub gen: GenerationConfig,
    pub seed: u64,
    pub learning_rate: f64,
    /// Number of rollout batches; defaults to one pass over the queries.
    pub n_batches: Option<usize>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_epsilon: 0.2,
            ppo_epochs: 4,
            rollout_batch: 8,
            kl_coefficient: 0.02,
            gen: GenerationConfig::default(),
            seed: 0,
            learning_rate: 5e-5,
            n_batches: None,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::ConfigInvalid(m));
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return bad(format!("clip_epsilon must lie in (0, 1), got {}", self.clip_epsilon));
        }
        if !(self.kl_coefficient >= 0.0) {
            return bad(format!("kl_coefficient must be >= 0, got {}", self.kl_coefficient));
        }
        if self.ppo_epochs == 0 || self.rollout_batch == 0 || self.n_batches == Some(0) {
            return bad("ppo_epochs, rollout_batch and n_batches must be positive".into());
        }
        if !(self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        self.gen.validate().map_err(|e| TrainError::ConfigInvalid(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoBatchLog {
    pub batch: usize,
    /// Mean scorer output over the rollouts (before the KL penalty).
    pub mean_reward: f64,
    /// Mean answer length in tokens, not counting a terminating stop token.
    pub mean_length: f64,
    /// Mean per-token KL(policy || reference) over the batch's answer
    /// positions, measured after this batch's updates.
    pub kl: f64,
}

#[derive(Debug, Clone)]
pub struct PpoOutput {
    pub model: ModelState,
    /// `(batch, mean_reward)`.
    pub curve: Curve,
    pub logs: Vec<PpoBatchLog>,
}

/// `(r - mean) / (std + 1e-8)` with the population standard deviation.
pub fn compute_advantage(rewards: &[f64]) -> Vec<f64> {
    if rewards.is_empty() {
        return Vec::new();
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let std = (rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n).sqrt();
    rewards.iter().map(|r| (r - mean) / (std + 1e-8)).collect()
}

/// `min(r A, clip(r, 1 - eps, 1 + eps) A)`.
pub fn surrogate_term(ratio: f64, advantage: f64, eps: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - eps, 1.0 + eps) * advantage)
}

/// Mean surrogate over paired ratios and advantages.
pub fn clipped_surrogate(ratios: &[f64], advantages: &[f64], eps: f64) -> f64 {
    let n = ratios.len().max(1) as f64;
    ratios.iter().zip(advantages).map(|(&r, &a)| surrogate_term(r, a, eps)).sum::<f64>() / n
}

/// Whether the unclipped branch carries gradient.
fn unclipped_active(ratio: f64, advantage: f64, eps: f64) -> bool {
    !((advantage > 0.0 && ratio > 1.0 + eps) || (advantage < 0.0 && ratio < 1.0 - eps))
}

#[derive(Debug, Clone)]
struct Rollout {
    tokens: Vec<u32>,
    /// Index of the first answer token in `tokens`.
    start: usize,
    old_logp: Vec<f64>,
    ref_logp: Vec<f64>,
    advantage: f64,
}

fn answer_logps(model: &ModelState, tokens: &[u32], start: usize) -> Result<Vec<f64>, LmError> {
    let all = model.token_logprobs(tokens)?;
    Ok(all[start - 1..].to_vec())
}

/// Negative mean surrogate of one rollout and its parameter gradient.
fn rollout_loss_grad(model: &ModelState, ro: &Rollout, eps: f64) -> Result<(f64, Params), LmError> {
    let v = model.config.vocab_size;
    let n = ro.tokens.len() - ro.start;
    model.value_and_grad(&ro.tokens, |out| {
        let mut dl = vec![0.0; ro.tokens.len() * v];
        let mut obj = 0.0;
        for k in 0..n {
            let pos = ro.start - 1 + k;
            let lp = log_softmax(&out.logits.data[pos * v..(pos + 1) * v]);
            let target = ro.tokens[pos + 1] as usize;
            let ratio = (lp[target] - ro.old_logp[k]).exp();
            obj += surrogate_term(ratio, ro.advantage, eps);
            if unclipped_active(ratio, ro.advantage, eps) {
                // d(-r A / n)/dlogits = -(r A / n) (onehot - p)
                let c = ratio * ro.advantage / n as f64;
                let row = &mut dl[pos * v..(pos + 1) * v];
                for (slot, &l) in row.iter_mut().zip(&lp) {
                    *slot = c * l.exp();
                }
                row[target] -= c;
            }
        }
        Ok((-obj / n as f64, Some(dl), None))
    })
}

fn exact_kl(policy: &ModelState, reference: &ModelState, ro: &Rollout) -> Result<(f64, usize), LmError> {
    let v = policy.config.vocab_size;
    let a = policy.forward(&ro.tokens)?;
    let b = reference.forward(&ro.tokens)?;
    let mut total = 0.0;
    for pos in ro.start - 1..ro.tokens.len() - 1 {
        let lp = log_softmax(&a.logits.data[pos * v..(pos + 1) * v]);
        let lq = log_softmax(&b.logits.data[pos * v..(pos + 1) * v]);
        total += lp.iter().zip(&lq).map(|(p, q)| p.exp() * (p - q)).sum::<f64>();
    }
    Ok((total, ro.tokens.len() - ro.start))
}

/// Prompts are token sequences that end where the answer should begin
/// (typically `BOS query SEP`).
pub fn run_ppo(
    policy: &ModelState,
    scorer: &dyn Scorer,
    prompts: &[Vec<u32>],
    cfg: &PpoConfig,
) -> Result<PpoOutput, TrainError> {
    cfg.validate()?;
    if prompts.is_empty() {
        return Err(TrainError::EmptyQueries);
    }
    let reference = policy.clone();
    let mut model = policy.clone();
    let mut adam = AdamState::new();
    let batches = cfg.n_batches.unwrap_or_else(|| prompts.len().div_ceil(cfg.rollout_batch));
    let mut logs = Vec::with_capacity(batches);
    let mut curve = Vec::with_capacity(batches);
    let map_err = TrainError::model;
    for b in 0..batches {
        let picked: Vec<&Vec<u32>> =
            (0..cfg.rollout_batch).map(|i| &prompts[(b * cfg.rollout_batch + i) % prompts.len()]).collect();
        let sampled: Vec<Result<(Rollout, f64, usize), LmError>> = picked
            .par_iter()
            .enumerate()
            .map(|(i, prompt)| {
                let gen = GenerationConfig { seed: derive_seed(cfg.seed, &format!("ppo/{b}/{i}")), ..cfg.gen.clone() };
                let answer = generate(&model, prompt, &gen)?;
                let mut tokens = prompt.to_vec();
                tokens.extend_from_slice(&answer);
                let start = prompt.len();
                let old_logp = answer_logps(&model, &tokens, start)?;
                let ref_logp = answer_logps(&reference, &tokens, start)?;
                let score = scorer.score(prompt, &answer)?;
                let len = answer.len() - usize::from(answer.last().is_some_and(|t| cfg.gen.stop_tokens.contains(t)));
                Ok((Rollout { tokens, start, old_logp, ref_logp, advantage: 0.0 }, score, len))
            })
            .collect();
        let mut rollouts = Vec::with_capacity(sampled.len());
        let (mut scores, mut rewards, mut lengths) = (Vec::new(), Vec::new(), Vec::new());
        for s in sampled {
            let (ro, score, len) = s.map_err(map_err("ppo"))?;
            let kl = ro.old_logp.iter().zip(&ro.ref_logp).map(|(o, r)| o - r).sum::<f64>() / ro.old_logp.len() as f64;
            scores.push(score);
            rewards.push(score - cfg.kl_coefficient * kl);
            lengths.push(len as f64);
            rollouts.push(ro);
        }
        for (ro, a) in rollouts.iter_mut().zip(compute_advantage(&rewards)) {
            ro.advantage = a;
        }

        for epoch in 0..cfg.ppo_epochs {
            let parts: Vec<Result<(f64, Params), LmError>> =
                rollouts.par_iter().map(|ro| rollout_loss_grad(&model, ro, cfg.clip_epsilon)).collect();
            let inv = 1.0 / rollouts.len() as f64;
            let mut loss = 0.0;
            let mut grad = model.params.zeros_like();
            for p in parts {
                let (l, g) = p.map_err(map_err("ppo"))?;
                loss += l * inv;
                grad.add_scaled(&g, inv);
            }
            check_finite(loss, "ppo", b * cfg.ppo_epochs + epoch)?;
            adam.update_params(&mut model.params, &grad, cfg.learning_rate);
        }

        let kls: Vec<Result<(f64, usize), LmError>> =
            rollouts.par_iter().map(|ro| exact_kl(&model, &reference, ro)).collect();
        let (mut kl_sum, mut kl_n) = (0.0, 0usize);
        for k in kls {
            let (s, n) = k.map_err(map_err("ppo"))?;
            kl_sum += s;
            kl_n += n;
        }
        let n = rollouts.len() as f64;
        let log = PpoBatchLog {
            batch: b,
            mean_reward: scores.iter().sum::<f64>() / n,
            mean_length: lengths.iter().sum::<f64>() / n,
            kl: kl_sum / kl_n.max(1) as f64,
        };
        check_finite(log.kl, "ppo", b)?;
        curve.push((b, log.mean_reward));
        logs.push(log);
    }
    Ok(PpoOutput { model, curve, logs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{init_model, ModelConfig};

    #[test]
    fn whitening() {
        assert_eq!(compute_advantage(&[3.0, 3.0, 3.0]), vec![0.0; 3]);
        let a = compute_advantage(&[1.0, -1.0]);
        assert!((a[0] - 1.0).abs() < 1e-6 && (a[1] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn clip_geometry() {
        assert_eq!(surrogate_term(1.5, 1.0, 0.2), 1.2);
        assert_eq!(surrogate_term(0.5, -1.0, 0.2), -0.8);
        assert_eq!(surrogate_term(0.5, 1.0, 0.2), 0.5);
        assert!((clipped_surrogate(&[1.0; 3], &[0.5, -1.0, 2.0], 0.2) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn surrogate_gradient_matches_finite_differences() {
        let mut model = init_model(ModelConfig { vocab_size: 12, d_model: 8, n_heads: 2, n_layers: 1, d_ff: 8, max_seq: 10, seed: 4 })
            .unwrap();
        let tokens = vec![1, 5, 3, 7, 8, 2];
        let start = 3;
        // old log-probs from a perturbed copy so ratios differ from 1,
        // including one position pushed past the clip range
        let mut old_model = model.clone();
        old_model.params.head.data.iter_mut().for_each(|x| *x *= 1.3);
        let mut old_logp = answer_logps(&old_model, &tokens, start).unwrap();
        old_logp[0] -= 0.5;
        let ro = Rollout { tokens, start, old_logp, ref_logp: vec![], advantage: 0.7 };
        let (_, g) = rollout_loss_grad(&model, &ro, 0.2).unwrap();
        let h = 1e-5;
        for idx in [0usize, 17, 40, 95] {
            let orig = model.params.head.data[idx];
            model.params.head.data[idx] = orig + h;
            let lp = rollout_loss_grad(&model, &ro, 0.2).unwrap().0;
            model.params.head.data[idx] = orig - h;
            let lm = rollout_loss_grad(&model, &ro, 0.2).unwrap().0;
            model.params.head.data[idx] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let an = g.head.data[idx];
            assert!((fd - an).abs() <= 1e-7 + 1e-4 * fd.abs(), "idx {idx}: fd {fd} an {an}");
        }
    }
}
