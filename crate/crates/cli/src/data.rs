//! Deterministic preparation of every dataset a run needs, from the config
//! alone: split, vocabulary, knowledge graph, pre-training sequences,
//! drafting pairs, preferences and PPO prompts.

use std::path::Path;

use anyhow::Context;
use sha2::{Digest, Sha256};

use kft_core::corpus::{
    abstract_query, claims_query, load_corpus, make_preference_triples, make_sft_pairs, split_corpus, title_query,
    CorruptionSpec, DialoguePair, PatentDoc, PreferenceTriple, Split, TaskKind, Vocab, VocabBuilder,
};
use kft_core::eval::prompt_tokens;
use kft_core::kgraph::{aggregate, build_knowledge_corpus, import_triples, KnowledgeGraph, PatternSet};
use kft_core::synth::{bundled_corpus, bundled_corpus_text, corpus_graph, knowledge_probes};
use kft_core::train::{lm_sequences, sft_example};

use crate::config::RunConfig;

pub struct Prepared {
    pub split: Split,
    pub vocab: Vocab,
    pub patterns: PatternSet,
    /// Graph used for knowledge injection and rareness.
    pub kg: KnowledgeGraph,
    pub knowledge: Vec<Vec<u32>>,
    pub general: Vec<Vec<u32>>,
    pub sft_pairs: Vec<DialoguePair>,
    /// Held-out drafting pairs that fit the context window.
    pub test_pairs: Vec<DialoguePair>,
    pub preferences: Vec<PreferenceTriple>,
    pub ppo_prompts: Vec<Vec<u32>>,
    /// Verbalized facts of held-out documents absent from `kg`.
    pub probes: Vec<String>,
}

/// Where the corpus comes from, with its digest.
pub fn corpus_source(cfg: &RunConfig) -> anyhow::Result<(String, String)> {
    match &cfg.paths.corpus {
        Some(p) => Ok((p.display().to_string(), file_digest(p)?)),
        None => Ok((BUNDLED_INPUT.into(), bundled_digest())),
    }
}

pub const BUNDLED_INPUT: &str = "<bundled corpus>";

pub fn bundled_digest() -> String {
    hex::encode(Sha256::digest(bundled_corpus_text().as_bytes()))
}

pub fn file_digest(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn load_docs(cfg: &RunConfig) -> anyhow::Result<Vec<PatentDoc>> {
    match &cfg.paths.corpus {
        Some(p) => load_corpus(p).with_context(|| format!("loading corpus {}", p.display())),
        None => Ok(bundled_corpus()),
    }
}

/// Vocabulary over the training documents plus the drafting templates.
pub fn build_vocabulary(train: &[PatentDoc], cap: usize) -> anyhow::Result<Vocab> {
    let mut b = VocabBuilder::new();
    for d in train {
        b.add_doc(d);
    }
    b.add_text(&title_query("")).add_text(&abstract_query("")).add_text(&claims_query("", ""));
    Ok(b.build(cap)?)
}

pub fn prepare(cfg: &RunConfig) -> anyhow::Result<Prepared> {
    let docs = load_docs(cfg)?;
    let [tr, va, te] = cfg.data.split;
    let seeds = cfg.seeds();
    let split = split_corpus(&docs, (tr, va, te), seeds["split"], cfg.data.stratify)?;
    let vocab = build_vocabulary(&split.train, cfg.data.vocab_cap)?;
    let patterns = PatternSet::default();
    let kg = match &cfg.paths.triples {
        Some(p) => aggregate(&[import_triples(p).with_context(|| format!("importing {}", p.display()))?]),
        None => corpus_graph(&split.train, &patterns),
    };
    let max_seq = cfg.model.max_seq;
    let knowledge = lm_sequences(&build_knowledge_corpus(&kg), &vocab, max_seq);
    let general_text: Vec<String> = split.train.iter().map(PatentDoc::full_text).collect();
    let general = lm_sequences(&general_text, &vocab, max_seq);
    let sft_pairs = make_sft_pairs(&split.train);
    let test_pairs = make_sft_pairs(&split.test)
        .into_iter()
        .filter(|p| sft_example(&vocab, p, max_seq, true).is_some())
        .collect();
    let spec = CorruptionSpec { kinds: cfg.data.corruptions.clone() };
    let mut preferences = make_preference_triples(&sft_pairs, &spec, seeds["preferences"]);
    if let Some(n) = cfg.data.max_preferences {
        preferences.truncate(n);
    }
    let mut ppo_prompts: Vec<Vec<u32>> = sft_pairs
        .iter()
        .filter(|p| p.task_kind == TaskKind::Title)
        .map(|p| prompt_tokens(&vocab, &p.query))
        .filter(|t| t.len() < max_seq)
        .collect();
    if let Some(n) = cfg.data.max_ppo_prompts {
        ppo_prompts.truncate(n);
    }
    let held_out: Vec<PatentDoc> = split.val.iter().chain(&split.test).cloned().collect();
    let probes = knowledge_probes(&kg, &held_out, &patterns);
    Ok(Prepared { split, vocab, patterns, kg, knowledge, general, sft_pairs, test_pairs, preferences, ppo_prompts, probes })
}

impl Prepared {
    pub fn probe_sequences(&self, max_seq: usize) -> Vec<Vec<u32>> {
        lm_sequences(&self.probes, &self.vocab, max_seq)
    }
}
