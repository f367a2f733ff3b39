//! Training stages: mixed knowledge/general pre-training, supervised
//! fine-tuning, reward modelling and PPO, plus a stage pipeline runner.

mod adam;
mod pipeline;
mod ppo;
mod pretrain;
mod reward;
mod sft;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lm::LmError;

pub use adam::{AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use pipeline::{
    run_pipeline, validate_stages, write_curve, PipelineConfigs, PipelineInputs, PipelineOutput, Stage, StageArtifacts,
    StageRecord, TABLE_STAGE_LISTS,
};
pub use ppo::{
    clipped_surrogate, compute_advantage, run_ppo, surrogate_term, PpoBatchLog, PpoConfig, PpoOutput, Scorer,
};
pub use pretrain::{lm_sequences, run_pretrain, PretrainOutput, Source};
pub use reward::{pairwise_loss, rm_tokens, train_reward_model, RewardModel};
pub use sft::{run_sft, sft_example, SftOutput};

/// `(step, value)` series.
pub type Curve = Vec<(usize, f64)>;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    ConfigInvalid(String),
    #[error("empty corpus: {0}")]
    EmptyCorpus(&'static str),
    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),
    #[error("no PPO queries")]
    EmptyQueries,
    #[error("every SFT pair exceeds the context window")]
    AllPairsTooLong,
    #[error("{stage}: non-finite loss at step {step}")]
    DivergedLoss { stage: &'static str, step: usize },
    #[error("invalid stage order: {0}")]
    StageOrderInvalid(String),
    #[error("{stage}: {source}")]
    Model {
        stage: &'static str,
        #[source]
        source: LmError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl TrainError {
    pub(crate) fn model(stage: &'static str) -> impl FnOnce(LmError) -> TrainError {
        move |source| TrainError::Model { stage, source }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Weight of the knowledge corpus in pre-training.
    pub alpha: f64,
    /// Weight of the general corpus in pre-training.
    pub beta: f64,
    pub seed: u64,
    pub max_steps: Option<usize>,
    /// Reward model: train the scalar head only.
    pub freeze_base: bool,
    /// SFT: supervise an end-of-sequence token after the answer.
    pub append_eos: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-5,
            epochs: 3,
            batch_size: 1,
            alpha: 1.0,
            beta: 1.0,
            seed: 0,
            max_steps: None,
            freeze_base: false,
            append_eos: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::ConfigInvalid(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive".into());
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.alpha + self.beta > 0.0) {
            return bad(format!("need alpha, beta >= 0 with alpha + beta > 0, got {} and {}", self.alpha, self.beta));
        }
        Ok(())
    }

    pub(crate) fn step_budget(&self, per_epoch: usize) -> usize {
        let n = self.epochs * per_epoch.div_ceil(self.batch_size);
        self.max_steps.map_or(n, |m| n.min(m))
    }
}

pub(crate) fn check_finite(loss: f64, stage: &'static str, step: usize) -> Result<(), TrainError> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(TrainError::DivergedLoss { stage, step })
    }
}
