//! Knowledge fine-tuning for patent concept generation.
//!
//! The crate is organized by pipeline stage:
//!
//! - [`corpus`]: patent records, tokenizer, splits, drafting dialogues and
//!   preference data.
//! - [`kgraph`]: triple extraction, aggregation and verbalization.
//! - [`lm`]: a small decoder-only transformer with hand-written gradients,
//!   LoRA adapters, sampling and checkpoints.
//! - [`train`]: knowledge-injection pre-training, supervised fine-tuning,
//!   reward modelling and PPO.
//! - [`eval`]: generation metrics, rareness, multiple-choice benchmarking,
//!   structural reasonability checks and ablation reports.
//! - [`synth`]: a seeded generator for the bundled synthetic patent corpus.

pub mod corpus;
pub mod eval;
pub mod kgraph;
pub mod lm;
pub mod seed;
pub mod synth;
pub mod train;
