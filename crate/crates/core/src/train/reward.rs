//! Scalar reward model: a language model body plus a linear head on the
//! final-position hidden state, trained with the pairwise logistic loss.

use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::{check_finite, AdamState, Curve, TrainConfig, TrainError};
use crate::corpus::{PreferenceTriple, Vocab, BOS, SEP};
use crate::lm::{
    load_checkpoint, save_checkpoint_with_extras, LmError, ModelState, Params, Tensor,
};
use crate::seed::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, PartialEq)]
pub struct RewardModel {
    pub base: ModelState,
    pub head_w: Vec<f64>,
    pub head_b: f64,
}

/// `BOS query SEP answer` (no end token: the score reads the last answer
/// position).
pub fn rm_tokens(vocab: &Vocab, query: &str, answer: &str) -> Vec<u32> {
    let mut t = vec![BOS];
    t.extend(vocab.encode(query).ids);
    t.push(SEP);
    t.extend(vocab.encode(answer).ids);
    t
}

/// `-ln sigmoid(s_p - s_n)`, computed stably.
pub fn pairwise_loss(score_preferred: f64, score_rejected: f64) -> f64 {
    softplus(-(score_preferred - score_rejected))
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl RewardModel {
    /// Zero head: every input scores 0 until trained.
    pub fn new(base: ModelState) -> Self {
        let d = base.config.d_model;
        Self { base, head_w: vec![0.0; d], head_b: 0.0 }
    }

    /// Final-position hidden vector the head reads.
    pub fn features(&self, tokens: &[u32]) -> Result<Vec<f64>, LmError> {
        let out = self.base.forward(tokens)?;
        Ok(out.hidden.row(tokens.len() - 1).to_vec())
    }

    pub fn score_tokens(&self, tokens: &[u32]) -> Result<f64, LmError> {
        let h = self.features(tokens)?;
        Ok(self.head_w.iter().zip(&h).map(|(w, x)| w * x).sum::<f64>() + self.head_b)
    }

    pub fn score(&self, vocab: &Vocab, query: &str, answer: &str) -> Result<f64, LmError> {
        self.score_tokens(&rm_tokens(vocab, query, answer))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LmError> {
        let extras = vec![
            ("head_w".to_string(), Tensor { shape: vec![self.head_w.len()], data: self.head_w.clone() }),
            ("head_b".to_string(), Tensor { shape: vec![1], data: vec![self.head_b] }),
        ];
        save_checkpoint_with_extras(&self.base, "rm", &extras, path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LmError> {
        let ck = load_checkpoint(path)?;
        let find = |name: &str| {
            ck.extras
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t.data.clone())
                .ok_or_else(|| LmError::CorruptCheckpoint(format!("missing reward head tensor {name}")))
        };
        let head_w = find("head_w")?;
        let head_b = find("head_b")?.first().copied().unwrap_or(0.0);
        if head_w.len() != ck.model.config.d_model {
            return Err(LmError::CorruptCheckpoint("reward head width differs from d_model".into()));
        }
        Ok(Self { base: ck.model, head_w, head_b })
    }

    /// Loss and gradients (base, head weights, head bias) for one pair.
    fn pair_grad(&self, p: &[u32], n: &[u32], train_base: bool) -> Result<(f64, Option<Params>, Vec<f64>, f64), LmError> {
        let d = self.base.config.d_model;
        let tp = self.base.tape(p)?;
        let tn = self.base.tape(n)?;
        let hp = tp.output().hidden.row(p.len() - 1).to_vec();
        let hn = tn.output().hidden.row(n.len() - 1).to_vec();
        let dotw = |h: &[f64]| self.head_w.iter().zip(h).map(|(w, x)| w * x).sum::<f64>() + self.head_b;
        let margin = dotw(&hp) - dotw(&hn);
        let loss = softplus(-margin);
        let dsp = sigmoid(margin) - 1.0;
        let dsn = -dsp;
        let dw: Vec<f64> = hp.iter().zip(&hn).map(|(a, b)| dsp * a + dsn * b).collect();
        let db = dsp + dsn;
        let base_grad = if train_base {
            let last = |len: usize, ds: f64| {
                let mut dh = vec![0.0; len * d];
                for (slot, w) in dh[(len - 1) * d..].iter_mut().zip(&self.head_w) {
                    *slot = ds * w;
                }
                dh
            };
            let mut g = self.base.backward_tape(&tp, None, Some(&last(p.len(), dsp)));
            g.add_scaled(&self.base.backward_tape(&tn, None, Some(&last(n.len(), dsn))), 1.0);
            Some(g)
        } else {
            None
        };
        Ok((loss, base_grad, dw, db))
    }
}

/// Pairwise logistic training. The body starts from `base` and the head
/// from zero; with `cfg.freeze_base` only the head moves.
pub fn train_reward_model(
    base: &ModelState,
    vocab: &Vocab,
    triples: &[PreferenceTriple],
    cfg: &TrainConfig,
) -> Result<(RewardModel, Curve), TrainError> {
    cfg.validate()?;
    if triples.is_empty() {
        return Err(TrainError::EmptyDataset("no preference triples"));
    }
    let max = base.config.max_seq;
    let data: Vec<(Vec<u32>, Vec<u32>)> = triples
        .iter()
        .map(|t| (rm_tokens(vocab, &t.query, &t.preferred), rm_tokens(vocab, &t.query, &t.non_preferred)))
        .filter(|(p, n)| p.len() <= max && n.len() <= max)
        .collect();
    if data.len() < triples.len() {
        warn!("reward model: skipped {} over-long triples", triples.len() - data.len());
    }
    if data.is_empty() {
        return Err(TrainError::EmptyDataset("every preference triple exceeds max_seq"));
    }
    let train_base = !cfg.freeze_base;
    let steps = cfg.step_budget(data.len());
    let mut rng = rng_from_seed(derive_seed(cfg.seed, "train/rm"));
    let mut rm = RewardModel::new(base.clone());
    let mut base_adam = AdamState::new();
    let mut head_adam = AdamState::new();
    let mut curve = Vec::with_capacity(steps);
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    for step in 0..steps {
        let mut idx = Vec::with_capacity(cfg.batch_size);
        while idx.len() < cfg.batch_size {
            if cursor == order.len() {
                order = (0..data.len()).collect();
                order.shuffle(&mut rng);
                cursor = 0;
            }
            idx.push(order[cursor]);
            cursor += 1;
        }
        let parts: Vec<_> = idx
            .par_iter()
            .map(|&i| rm.pair_grad(&data[i].0, &data[i].1, train_base))
            .collect();
        let inv = 1.0 / idx.len() as f64;
        let mut loss = 0.0;
        let mut gw = vec![0.0; rm.head_w.len()];
        let mut gb = 0.0;
        let mut gbase = train_base.then(|| rm.base.params.zeros_like());
        for part in parts {
            let (l, g, dw, db) = part.map_err(TrainError::model("rm"))?;
            loss += l * inv;
            for (a, b) in gw.iter_mut().zip(dw) {
                *a += b * inv;
            }
            gb += db * inv;
            if let (Some(acc), Some(g)) = (gbase.as_mut(), g) {
                acc.add_scaled(&g, inv);
            }
        }
        check_finite(loss, "rm", step)?;
        if let Some(g) = gbase {
            base_adam.update_params(&mut rm.base.params, &g, cfg.learning_rate);
        }
        let mut b = [rm.head_b];
        head_adam.update(vec![(rm.head_w.as_mut_slice(), gw.as_slice()), (&mut b, &[gb])], cfg.learning_rate);
        rm.head_b = b[0];
        curve.push((step, loss));
    }
    Ok((rm, curve))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_margin_is_ln2() {
        assert!((pairwise_loss(0.3, 0.3) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(pairwise_loss(10.0, 0.0) < 1e-4);
        assert!(pairwise_loss(-800.0, 0.0).is_finite());
    }
}
