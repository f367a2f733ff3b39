//! Run configuration: one JSON document with `paths`, `data`, `model`,
//! `train`, `ppo` and `eval` sections plus `global_seed`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use kft_core::corpus::{CorruptionKind, MIN_WORD_CAP};
use kft_core::lm::{GenerationConfig, ModelConfig};
use kft_core::seed::derive_seed;
use kft_core::train::{PipelineConfigs, PpoConfig, TrainConfig};

use crate::CliError;

pub const SEED_ENV: &str = "KFT_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Patent corpus JSONL; the bundled synthetic corpus when absent.
    pub corpus: Option<PathBuf>,
    /// Triples JSONL used instead of extracting from the training split.
    pub triples: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self { corpus: None, triples: None, output_dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Train / validation / test fractions.
    pub split: [f64; 3],
    pub stratify: bool,
    /// Maximum number of word entries in the vocabulary.
    pub vocab_cap: usize,
    pub corruptions: Vec<CorruptionKind>,
    /// Cap on preference triples used for the reward model.
    pub max_preferences: Option<usize>,
    /// Cap on PPO prompts (title queries from the training split).
    pub max_ppo_prompts: Option<usize>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            split: [0.8, 0.1, 0.1],
            stratify: true,
            vocab_cap: 2048 - 260,
            corruptions: vec![
                CorruptionKind::TruncateHalf,
                CorruptionKind::ShuffleSentences,
                CorruptionKind::SwapAnswerFromOtherDoc,
            ],
            max_preferences: None,
            max_ppo_prompts: None,
        }
    }
}

/// Model shape; the vocabulary size comes from the built vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub max_seq: usize,
    /// Train SFT and PPO through LoRA adapters of this rank.
    pub lora_rank: Option<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self { d_model: m.d_model, n_heads: m.n_heads, n_layers: m.n_layers, d_ff: m.d_ff, max_seq: m.max_seq, lora_rank: None }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub pretrain: TrainConfig,
    pub sft: TrainConfig,
    pub rm: TrainConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbedderChoice {
    /// Token embeddings of the freshly initialized model: one fixed
    /// embedding space shared by every evaluated checkpoint.
    Reference,
    /// Token embeddings of the evaluated checkpoint.
    ModelStatic,
    /// Final hidden states of the evaluated checkpoint.
    ModelHidden,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub embedder: EmbedderChoice,
    pub seed: u64,
    pub temperature: f64,
    pub max_new_tokens: usize,
    pub top_k: Option<usize>,
    pub greedy: bool,
    /// Evaluate at most this many test pairs.
    pub limit: Option<usize>,
    /// Generated benchmark items when `bench` gets no item file.
    pub mcq_items: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            embedder: EmbedderChoice::Reference,
            seed: 0,
            temperature: 0.7,
            max_new_tokens: 64,
            top_k: None,
            greedy: false,
            limit: None,
            mcq_items: 200,
        }
    }
}

impl EvalSection {
    pub fn gen(&self) -> GenerationConfig {
        GenerationConfig {
            temperature: self.temperature,
            max_new_tokens: self.max_new_tokens,
            top_k: self.top_k,
            seed: self.seed,
            greedy: self.greedy,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub global_seed: u64,
    pub paths: Paths,
    pub data: DataConfig,
    pub model: ModelSection,
    pub train: TrainSection,
    pub ppo: PpoConfig,
    pub eval: EvalSection,
}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    CliError::ConfigInvalid(msg.into()).into()
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
    }

    /// Apply `KFT_SEED` if set.
    pub fn apply_env(&mut self) -> anyhow::Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.global_seed = v.trim().parse().map_err(|_| invalid(format!("{SEED_ENV}={v:?} is not an integer")))?;
        }
        Ok(())
    }

    /// Per-stage seeds, each derived from the global seed and the stage
    /// name so stages can be re-run independently.
    pub fn seeds(&self) -> BTreeMap<String, u64> {
        ["split", "model", "preferences", "pretrain", "sft", "rm", "ppo", "eval", "bench", "draft"]
            .iter()
            .map(|name| (name.to_string(), derive_seed(self.global_seed, name)))
            .collect()
    }

    /// Copy of the config with every stage seed replaced by its derived
    /// value.
    pub fn seeded(&self) -> RunConfig {
        let s = self.seeds();
        let mut c = self.clone();
        c.train.pretrain.seed = s["pretrain"];
        c.train.sft.seed = s["sft"];
        c.train.rm.seed = s["rm"];
        c.ppo.seed = s["ppo"];
        c.eval.seed = s["eval"];
        c
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            d_model: self.model.d_model,
            n_heads: self.model.n_heads,
            n_layers: self.model.n_layers,
            d_ff: self.model.d_ff,
            max_seq: self.model.max_seq,
            seed: derive_seed(self.global_seed, "model"),
        }
    }

    pub fn pipeline_configs(&self) -> PipelineConfigs {
        let c = self.seeded();
        PipelineConfigs {
            pretrain: c.train.pretrain,
            sft: c.train.sft,
            rm: c.train.rm,
            ppo: c.ppo,
            lora_rank: c.model.lora_rank,
        }
    }

    /// Check every section against its module invariants. Runs before any
    /// output is written.
    pub fn validate(&self) -> anyhow::Result<()> {
        let [tr, va, te] = self.data.split;
        if tr <= 0.0 || va < 0.0 || te <= 0.0 || ((tr + va + te) - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("data.split must be non-negative fractions summing to 1, got {:?}", self.data.split)));
        }
        if self.data.vocab_cap < MIN_WORD_CAP {
            return Err(invalid(format!("data.vocab_cap must be at least {MIN_WORD_CAP}")));
        }
        if self.data.corruptions.is_empty() {
            return Err(invalid("data.corruptions must not be empty"));
        }
        // placeholder vocabulary size; only the shape is checked here
        self.model_config(260 + self.data.vocab_cap).validate().map_err(|e| invalid(e.to_string()))?;
        if let Some(r) = self.model.lora_rank {
            if r == 0 || r > self.model.d_model {
                return Err(invalid(format!("model.lora_rank must be in 1..={}", self.model.d_model)));
            }
        }
        for (name, t) in [("pretrain", &self.train.pretrain), ("sft", &self.train.sft), ("rm", &self.train.rm)] {
            t.validate().map_err(|e| invalid(format!("train.{name}: {e}")))?;
        }
        self.ppo.validate().map_err(|e| invalid(format!("ppo: {e}")))?;
        self.eval.gen().validate().map_err(|e| invalid(format!("eval: {e}")))?;
        for (name, p) in [("corpus", &self.paths.corpus), ("triples", &self.paths.triples)] {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(invalid(format!("paths.{name}: {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_validate() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&json).unwrap(), c);
        assert_eq!(c.train.sft.learning_rate, 5e-5);
        assert_eq!(c.eval.temperature, 0.7);
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"global_seed": 7, "model": {"d_model": 16, "n_heads": 2}}"#).unwrap();
        assert_eq!(c.global_seed, 7);
        assert_eq!(c.model.d_model, 16);
        assert_eq!(c.model.n_layers, ModelSection::default().n_layers);
        assert!(serde_json::from_str::<RunConfig>(r#"{"modle": {}}"#).is_err());
    }

    #[test]
    fn seeds_follow_global_seed() {
        let a = RunConfig::default();
        let b = RunConfig { global_seed: 1, ..Default::default() };
        assert_ne!(a.seeds()["sft"], b.seeds()["sft"]);
        assert_ne!(a.seeds()["sft"], a.seeds()["rm"]);
        assert_eq!(a.seeded().train.sft.seed, a.seeds()["sft"]);
    }

    #[test]
    fn invalid_sections_are_rejected() {
        let mut c = RunConfig::default();
        c.train.sft.learning_rate = 0.0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.data.split = [0.5, 0.1, 0.1];
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.model.n_heads = 3;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.paths.corpus = Some("/nonexistent/corpus.jsonl".into());
        assert!(c.validate().is_err());
    }
}
