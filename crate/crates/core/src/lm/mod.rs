//! A small decoder-only transformer language model.
//!
//! Pre-norm blocks (LayerNorm, causal multi-head attention, LayerNorm,
//! GELU feed-forward), learned positional embeddings and an untied output
//! head. Everything is f64 with hand-derived backward passes so that
//! gradients can be checked against finite differences. Optional LoRA
//! adapters sit on the query and value projections.

mod checkpoint;
mod generate;
mod model;
pub mod tensor;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::{derive_seed, rng_from_seed};
pub use checkpoint::{load_checkpoint, save_checkpoint, save_checkpoint_with_extras, Checkpoint};
pub use generate::{generate, sample_next, GenerationConfig};
pub use model::{ForwardOutput, Tape, TrainExample};
pub use tensor::Tensor;

const INIT_STD: f64 = 0.02;

#[derive(Debug, Error)]
pub enum LmError {
    #[error("invalid model config: {0}")]
    ConfigInvalid(String),
    #[error("sequence of {len} tokens exceeds max_seq {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("empty input sequence")]
    EmptySequence,
    #[error("token id {id} outside vocabulary of {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },
    #[error("loss mask selects no position with a successor token")]
    EmptyMask,
    #[error("empty batch")]
    EmptyBatch,
    #[error("LoRA rank {rank} exceeds d_model {d_model}")]
    RankTooLarge { rank: usize, d_model: usize },
    #[error("checkpoint checksum mismatch")]
    ChecksumMismatch,
    #[error("checkpoint version {found} unsupported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub max_seq: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { vocab_size: 2048, d_model: 64, n_heads: 4, n_layers: 4, d_ff: 256, max_seq: 256, seed: 0 }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), LmError> {
        let bad = |m: String| Err(LmError::ConfigInvalid(m));
        if self.vocab_size == 0 || self.d_model == 0 || self.n_layers == 0 || self.d_ff == 0 {
            return bad("vocab_size, d_model, n_layers and d_ff must be positive".into());
        }
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return bad(format!("n_heads {} does not divide d_model {}", self.n_heads, self.d_model));
        }
        if self.max_seq < 8 {
            return bad(format!("max_seq {} is below 8", self.max_seq));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Closed-form parameter count of the base model (no adapter).
    pub fn param_count(&self) -> usize {
        let (v, d, t, f, l) = (self.vocab_size, self.d_model, self.max_seq, self.d_ff, self.n_layers);
        let per_layer = 2 * d + 4 * d * d + 2 * d + d * f + f + f * d + d;
        v * d + t * d + l * per_layer + 2 * d + d * v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub ln1_gain: Tensor,
    pub ln1_bias: Tensor,
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
    pub wo: Tensor,
    pub ln2_gain: Tensor,
    pub ln2_bias: Tensor,
    pub ff_in: Tensor,
    pub ff_in_bias: Tensor,
    pub ff_out: Tensor,
    pub ff_out_bias: Tensor,
}

/// Low-rank factors for one layer: effective `W = W + scaling * down @ up`
/// in the row-vector convention `y = x W`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraLayer {
    pub q_down: Tensor,
    pub q_up: Tensor,
    pub v_down: Tensor,
    pub v_up: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter {
    pub rank: usize,
    pub scaling: f64,
    pub layers: Vec<LoraLayer>,
}

/// All trainable arrays. The same type doubles as a gradient container and
/// as optimizer moment storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub tok_emb: Tensor,
    pub pos_emb: Tensor,
    pub layers: Vec<Layer>,
    pub lnf_gain: Tensor,
    pub lnf_bias: Tensor,
    pub head: Tensor,
    pub lora: Option<LoraAdapter>,
}

macro_rules! layer_fields {
    ($m:ident) => {
        $m!(ln1_gain, ln1_bias, wq, wk, wv, wo, ln2_gain, ln2_bias, ff_in, ff_in_bias, ff_out, ff_out_bias)
    };
}

impl Params {
    /// Tensors in canonical order with dotted names. Adapter tensors come
    /// last and carry a `lora.` prefix.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![
            ("tok_emb".into(), &self.tok_emb),
            ("pos_emb".into(), &self.pos_emb),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            macro_rules! push {
                ($($f:ident),*) => { $( out.push((format!("layers.{i}.{}", stringify!($f)), &l.$f)); )* };
            }
            layer_fields!(push);
        }
        out.push(("lnf_gain".into(), &self.lnf_gain));
        out.push(("lnf_bias".into(), &self.lnf_bias));
        out.push(("head".into(), &self.head));
        if let Some(lora) = &self.lora {
            for (i, l) in lora.layers.iter().enumerate() {
                out.push((format!("lora.{i}.q_down"), &l.q_down));
                out.push((format!("lora.{i}.q_up"), &l.q_up));
                out.push((format!("lora.{i}.v_down"), &l.v_down));
                out.push((format!("lora.{i}.v_up"), &l.v_up));
            }
        }
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = vec![
            ("tok_emb".into(), &mut self.tok_emb),
            ("pos_emb".into(), &mut self.pos_emb),
        ];
        for (i, l) in self.layers.iter_mut().enumerate() {
            macro_rules! push {
                ($($f:ident),*) => { $( out.push((format!("layers.{i}.{}", stringify!($f)), &mut l.$f)); )* };
            }
            layer_fields!(push);
        }
        out.push(("lnf_gain".into(), &mut self.lnf_gain));
        out.push(("lnf_bias".into(), &mut self.lnf_bias));
        out.push(("head".into(), &mut self.head));
        if let Some(lora) = &mut self.lora {
            for (i, l) in lora.layers.iter_mut().enumerate() {
                out.push((format!("lora.{i}.q_down"), &mut l.q_down));
                out.push((format!("lora.{i}.q_up"), &mut l.q_up));
                out.push((format!("lora.{i}.v_down"), &mut l.v_down));
                out.push((format!("lora.{i}.v_up"), &mut l.v_up));
            }
        }
        out
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.named_mut() {
            t.data.iter_mut().for_each(|x| *x = 0.0);
        }
        z
    }

    pub fn is_finite(&self) -> bool {
        self.named().iter().all(|(_, t)| t.is_finite())
    }

    pub fn scalar_count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Params, scale: f64) {
        for ((_, a), (_, b)) in self.named_mut().into_iter().zip(other.named()) {
            for (x, &y) in a.data.iter_mut().zip(&b.data) {
                *x += scale * y;
            }
        }
    }

    /// Whether `name` is updated by training: adapter tensors only when an
    /// adapter is attached, otherwise every tensor.
    pub fn is_trainable(&self, name: &str) -> bool {
        match self.lora {
            Some(_) => name.starts_with("lora."),
            None => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub config: ModelConfig,
    pub params: Params,
}

/// Deterministic initialization: N(0, 0.02) weights, unit LayerNorm gains,
/// zero biases. Draw order follows [`Params::named`].
pub fn init_model(config: ModelConfig) -> Result<ModelState, LmError> {
    config.validate()?;
    let mut rng = rng_from_seed(derive_seed(config.seed, "lm/init"));
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    let (v, d, f, t) = (config.vocab_size, config.d_model, config.d_ff, config.max_seq);
    let mut w = |shape: &[usize]| Tensor::from_fn(shape, || normal.sample(&mut rng));
    let tok_emb = w(&[v, d]);
    let pos_emb = w(&[t, d]);
    let mut layers = Vec::with_capacity(config.n_layers);
    for _ in 0..config.n_layers {
        layers.push(Layer {
            ln1_gain: Tensor::filled(&[d], 1.0),
            ln1_bias: Tensor::zeros(&[d]),
            wq: w(&[d, d]),
            wk: w(&[d, d]),
            wv: w(&[d, d]),
            wo: w(&[d, d]),
            ln2_gain: Tensor::filled(&[d], 1.0),
            ln2_bias: Tensor::zeros(&[d]),
            ff_in: w(&[d, f]),
            ff_in_bias: Tensor::zeros(&[f]),
            ff_out: w(&[f, d]),
            ff_out_bias: Tensor::zeros(&[d]),
        });
    }
    let head = w(&[d, v]);
    let params = Params {
        tok_emb,
        pos_emb,
        layers,
        lnf_gain: Tensor::filled(&[d], 1.0),
        lnf_bias: Tensor::zeros(&[d]),
        head,
        lora: None,
    };
    Ok(ModelState { config, params })
}

impl ModelState {
    pub fn lora(&self) -> Option<&LoraAdapter> {
        self.params.lora.as_ref()
    }

    /// Attach fresh adapters to every layer's query and value projections.
    /// Down-projections are N(0, 1/d_model), up-projections are zero, so
    /// the model function is unchanged until training moves them.
    pub fn attach_lora(&self, rank: usize, scaling: f64) -> Result<ModelState, LmError> {
        let d = self.config.d_model;
        if rank == 0 || rank > d {
            return Err(LmError::RankTooLarge { rank, d_model: d });
        }
        let mut rng = rng_from_seed(derive_seed(self.config.seed, "lm/lora"));
        let normal = Normal::new(0.0, 1.0 / (d as f64).sqrt()).expect("valid std");
        let layers = (0..self.config.n_layers)
            .map(|_| LoraLayer {
                q_down: Tensor::from_fn(&[d, rank], || normal.sample(&mut rng)),
                q_up: Tensor::zeros(&[rank, d]),
                v_down: Tensor::from_fn(&[d, rank], || normal.sample(&mut rng)),
                v_up: Tensor::zeros(&[rank, d]),
            })
            .collect();
        let mut out = self.clone();
        out.params.lora = Some(LoraAdapter { rank, scaling, layers });
        Ok(out)
    }

    /// Default adapter: rank 4, scaling 2 / rank.
    pub fn attach_default_lora(&self) -> Result<ModelState, LmError> {
        self.attach_lora(4, 0.5)
    }

    /// Fold adapter products into the base projections and drop the adapter.
    pub fn merge_lora(&self) -> ModelState {
        let mut out = self.clone();
        let Some(lora) = out.params.lora.take() else { return out };
        let d = self.config.d_model;
        for (layer, ad) in out.params.layers.iter_mut().zip(&lora.layers) {
            let dq = tensor::matmul(&ad.q_down.data, &ad.q_up.data, d, lora.rank, d);
            let dv = tensor::matmul(&ad.v_down.data, &ad.v_up.data, d, lora.rank, d);
            for (w, x) in layer.wq.data.iter_mut().zip(dq) {
                *w += lora.scaling * x;
            }
            for (w, x) in layer.wv.data.iter_mut().zip(dv) {
                *w += lora.scaling * x;
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.params.is_finite()
    }
}
