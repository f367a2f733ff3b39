//! Mixed pre-training over the knowledge corpus S and the general corpus G.

use rand::Rng as _;

use super::{check_finite, AdamState, Curve, TrainConfig, TrainError};
use crate::corpus::{Vocab, BOS, EOS};
use crate::lm::{ModelState, TrainExample};
use crate::seed::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Knowledge,
    General,
}

#[derive(Debug, Clone)]
pub struct PretrainOutput {
    pub model: ModelState,
    pub curve: Curve,
    /// Which corpus every drawn sequence came from, in draw order.
    pub sampling_log: Vec<Source>,
}

/// `BOS text EOS`, split into windows of at most `max_seq` tokens. Windows
/// shorter than two tokens carry no prediction and are dropped.
pub fn lm_sequences(texts: &[String], vocab: &Vocab, max_seq: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for text in texts {
        let mut ids = vec![BOS];
        ids.extend(vocab.encode(text).ids);
        ids.push(EOS);
        for chunk in ids.chunks(max_seq) {
            if chunk.len() >= 2 {
                out.push(chunk.to_vec());
            }
        }
    }
    out
}

/// Each drawn sequence comes from S with probability alpha / (alpha + beta)
/// and from G otherwise, so the expected gradient is that of the weighted
/// objective divided by alpha + beta. One epoch is |S| + |G| draws over the
/// corpora with non-zero weight.
pub fn run_pretrain(
    model: &ModelState,
    knowledge: &[Vec<u32>],
    general: &[Vec<u32>],
    cfg: &TrainConfig,
) -> Result<PretrainOutput, TrainError> {
    cfg.validate()?;
    if cfg.alpha > 0.0 && knowledge.is_empty() {
        return Err(TrainError::EmptyCorpus("alpha > 0 needs a knowledge corpus"));
    }
    if cfg.beta > 0.0 && general.is_empty() {
        return Err(TrainError::EmptyCorpus("beta > 0 needs a general corpus"));
    }
    let p_knowledge = cfg.alpha / (cfg.alpha + cfg.beta);
    let per_epoch =
        if cfg.alpha > 0.0 { knowledge.len() } else { 0 } + if cfg.beta > 0.0 { general.len() } else { 0 };
    let steps = cfg.step_budget(per_epoch);
    let mut rng = rng_from_seed(derive_seed(cfg.seed, "train/pretrain"));
    let mut model = model.clone();
    let mut adam = AdamState::new();
    let mut curve = Vec::with_capacity(steps);
    let mut log = Vec::with_capacity(steps * cfg.batch_size);
    for step in 0..steps {
        let batch: Vec<TrainExample> = (0..cfg.batch_size)
            .map(|_| {
                // draw the coin only when both corpora are live, so the
                // degenerate weightings never touch the other corpus
                let from_s = if cfg.beta == 0.0 {
                    true
                } else if cfg.alpha == 0.0 {
                    false
                } else {
                    rng.gen::<f64>() < p_knowledge
                };
                let (src, pool) =
                    if from_s { (Source::Knowledge, knowledge) } else { (Source::General, general) };
                log.push(src);
                TrainExample::full(pool[rng.gen_range(0..pool.len())].clone())
            })
            .collect();
        let (loss, grad) = model.loss_and_grad(&batch).map_err(TrainError::model("pretrain"))?;
        check_finite(loss, "pretrain", step)?;
        adam.update_params(&mut model.params, &grad, cfg.learning_rate);
        curve.push((step, loss));
    }
    Ok(PretrainOutput { model, curve, sampling_log: log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{init_model, ModelConfig};

    fn model() -> ModelState {
        init_model(ModelConfig { vocab_size: 300, d_model: 8, n_heads: 2, n_layers: 1, d_ff: 16, max_seq: 16, seed: 0 })
            .unwrap()
    }

    #[test]
    fn degenerate_weights_touch_one_corpus() {
        let s = vec![vec![1, 10, 2]];
        let g = vec![vec![1, 20, 21, 2]];
        let cfg = TrainConfig { alpha: 0.0, beta: 1.0, epochs: 4, ..Default::default() };
        let out = run_pretrain(&model(), &s, &g, &cfg).unwrap();
        assert!(out.sampling_log.iter().all(|&x| x == Source::General));
        let cfg = TrainConfig { alpha: 1.0, beta: 0.0, epochs: 4, ..Default::default() };
        let out = run_pretrain(&model(), &s, &[], &cfg).unwrap();
        assert!(out.sampling_log.iter().all(|&x| x == Source::Knowledge));
        assert_eq!(out.curve.len(), 4);
    }

    #[test]
    fn missing_corpus_is_rejected() {
        let cfg = TrainConfig::default();
        assert!(matches!(run_pretrain(&model(), &[], &[vec![1, 2]], &cfg), Err(TrainError::EmptyCorpus(_))));
    }

    #[test]
    fn windows_respect_max_seq() {
        let vocab = Vocab::from_words(["a"]);
        let seqs = lm_sequences(&["a a a a a a a a a a".to_string()], &vocab, 4);
        assert!(seqs.iter().all(|s| s.len() <= 4 && s.len() >= 2));
        assert_eq!(seqs.iter().map(Vec::len).sum::<usize>(), 12);
    }
}
