//! Supervised fine-tuning on query/answer pairs with answer-only loss.

use log::warn;
use rand::seq::SliceRandom;

use super::{check_finite, AdamState, Curve, TrainConfig, TrainError};
use crate::corpus::{DialoguePair, Vocab, BOS, EOS, SEP};
use crate::lm::{ModelState, TrainExample};
use crate::seed::{derive_seed, rng_from_seed};

#[derive(Debug, Clone)]
pub struct SftOutput {
    pub model: ModelState,
    pub curve: Curve,
    /// Pairs dropped because they do not fit the context window.
    pub skipped: usize,
}

/// `BOS query SEP answer [EOS]` with the mask on exactly the positions
/// that predict answer tokens (and the trailing EOS when appended).
/// Returns `None` when the sequence exceeds `max_seq`.
pub fn sft_example(vocab: &Vocab, pair: &DialoguePair, max_seq: usize, append_eos: bool) -> Option<TrainExample> {
    let mut tokens = vec![BOS];
    tokens.extend(vocab.encode(&pair.query).ids);
    tokens.push(SEP);
    let sep_pos = tokens.len() - 1;
    tokens.extend(vocab.encode(&pair.answer).ids);
    if append_eos {
        tokens.push(EOS);
    }
    if tokens.len() > max_seq || tokens.len() == sep_pos + 1 {
        return None;
    }
    let mask = (0..tokens.len()).map(|i| i >= sep_pos && i + 1 < tokens.len()).collect();
    Some(TrainExample { tokens, mask })
}

pub fn run_sft(model: &ModelState, vocab: &Vocab, pairs: &[DialoguePair], cfg: &TrainConfig) -> Result<SftOutput, TrainError> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(TrainError::EmptyDataset("no SFT pairs"));
    }
    let examples: Vec<TrainExample> =
        pairs.iter().filter_map(|p| sft_example(vocab, p, model.config.max_seq, cfg.append_eos)).collect();
    let skipped = pairs.len() - examples.len();
    if examples.is_empty() {
        return Err(TrainError::AllPairsTooLong);
    }
    if skipped > 0 {
        warn!("sft: skipped {skipped} of {} pairs that exceed max_seq {}", pairs.len(), model.config.max_seq);
    }
    let steps = cfg.step_budget(examples.len());
    let mut rng = rng_from_seed(derive_seed(cfg.seed, "train/sft"));
    let mut model = model.clone();
    let mut adam = AdamState::new();
    let mut curve = Vec::with_capacity(steps);
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    for step in 0..steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size {
            if cursor == order.len() {
                order = (0..examples.len()).collect();
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(examples[order[cursor]].clone());
            cursor += 1;
        }
        let (loss, grad) = model.loss_and_grad(&batch).map_err(TrainError::model("sft"))?;
        check_finite(loss, "sft", step)?;
        adam.update_params(&mut model.params, &grad, cfg.learning_rate);
        curve.push((step, loss));
    }
    Ok(SftOutput { model, curve, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TaskKind;

    fn pair(q: &str, a: &str) -> DialoguePair {
        DialoguePair { query: q.into(), answer: a.into(), task_kind: TaskKind::Title }
    }

    #[test]
    fn mask_covers_answer_only() {
        let vocab = Vocab::from_words(["what", "is", "it", "engine", "motor"]);
        let ex = sft_example(&vocab, &pair("what is it", "engine motor"), 32, true).unwrap();
        // BOS what is it SEP engine motor EOS
        assert_eq!(ex.tokens.len(), 8);
        assert_eq!(ex.mask, vec![false, false, false, false, true, true, true, false]);
        let one = sft_example(&vocab, &pair("what is it", "engine"), 32, false).unwrap();
        assert_eq!(one.counted_positions(), 1);
        assert!(sft_example(&vocab, &pair("what is it", "engine"), 5, true).is_none());
    }
}
