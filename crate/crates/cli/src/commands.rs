//! Subcommand definitions and handlers.
//!
//! Output layout under the configured output directory:
//!
//! ```text
//! data/          splits, vocabulary, drafting pairs, preferences   (ingest)
//! kg/            triples.jsonl, knowledge.txt        (kg-extract, kg-import, verbalize)
//! checkpoints/   <stage>.ckpt and <stage>_curve.csv  (pretrain, sft, train-rm, ppo)
//! runs/<stages>/ per-stage checkpoints and curves    (pipeline, ablate)
//! drafts/        <name>.json and <name>.txt          (draft)
//! reports/       CSV, Markdown and JSON reports      (eval, bench, ablate, report)
//! manifests/     <command>.json                      (every command)
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Subcommand, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};

use kft_core::corpus::{write_corpus, write_jsonl};
use kft_core::eval::{
    ablation_report, evaluate_outputs, generate_outputs, load_mcq, metrics_csv, metrics_markdown, perplexity, rareness_report,
    run_mcq, BenchResult, Embedder, HiddenStateEmbedder, MetricReport, StaticEmbedder, ABLATION_ROWS,
};
use kft_core::kgraph::{aggregate, build_knowledge_corpus, export_triples, import_triples, write_knowledge_corpus};
use kft_core::lm::{init_model, load_checkpoint, save_checkpoint, ModelState};
use kft_core::synth::{corpus_graph, mcq_items};
use kft_core::train::{
    run_pipeline, run_ppo, run_sft, train_reward_model, write_curve, PipelineInputs, PpoBatchLog, RewardModel, Stage,
};

use crate::config::{EmbedderChoice, RunConfig};
use crate::data::{corpus_source, prepare, Prepared};
use crate::draft::draft_session;
use crate::manifest::{digest_of, InputDigest, Manifest};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Pt,
    Kpt,
}

#[derive(Debug, Clone, PartialEq, Subcommand)]
pub enum Command {
    /// Split the corpus, build the vocabulary and write the derived datasets.
    Ingest,
    /// Extract a knowledge graph from the training split.
    KgExtract,
    /// Import an external triples file as the knowledge graph.
    KgImport {
        #[arg(long)]
        input: PathBuf,
    },
    /// Write the verbalized knowledge corpus.
    Verbalize,
    /// Pre-train from scratch on the general corpus (pt) or with the
    /// knowledge corpus mixed in (kpt).
    Pretrain {
        #[arg(long, value_enum)]
        mode: Mode,
    },
    /// Supervised fine-tuning on drafting dialogues.
    Sft {
        #[arg(long)]
        init: PathBuf,
    },
    /// Train a reward model on preference triples.
    TrainRm {
        #[arg(long)]
        init: PathBuf,
    },
    /// PPO against a trained reward model.
    Ppo {
        #[arg(long)]
        init: PathBuf,
        #[arg(long)]
        reward_model: PathBuf,
    },
    /// Run a list of stages end to end, e.g. `--stages kpt,sft,rm,ppo`.
    Pipeline {
        #[arg(long, default_value = "kpt,sft,rm,ppo")]
        stages: String,
    },
    /// Draft title, abstract and claims from an idea.
    Draft {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        idea: String,
        #[arg(long, default_value = "draft")]
        name: String,
    },
    /// Generate answers for the test split and score them.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        label: String,
    },
    /// Multiple-choice benchmark accuracy.
    Bench {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        label: String,
        /// MCQ JSONL; generated from the test split when absent.
        #[arg(long)]
        items: Option<PathBuf>,
    },
    /// Train and evaluate all six stage combinations.
    Ablate,
    /// Collect eval and bench reports into one summary.
    Report,
}

fn path_arg(p: &Path) -> String {
    p.display().to_string()
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::KgExtract => "kg-extract",
            Command::KgImport { .. } => "kg-import",
            Command::Verbalize => "verbalize",
            Command::Pretrain { .. } => "pretrain",
            Command::Sft { .. } => "sft",
            Command::TrainRm { .. } => "train-rm",
            Command::Ppo { .. } => "ppo",
            Command::Pipeline { .. } => "pipeline",
            Command::Draft { .. } => "draft",
            Command::Eval { .. } => "eval",
            Command::Bench { .. } => "bench",
            Command::Ablate => "ablate",
            Command::Report => "report",
        }
    }

    /// Arguments that reproduce this command when parsed again.
    pub fn to_args(&self) -> Vec<String> {
        let mut a = vec![self.name().to_string()];
        let mut flag = |k: &str, v: String| {
            a.push(format!("--{k}"));
            a.push(v);
        };
        match self {
            Command::KgImport { input } => flag("input", path_arg(input)),
            Command::Pretrain { mode } => flag("mode", if *mode == Mode::Pt { "pt" } else { "kpt" }.into()),
            Command::Sft { init } | Command::TrainRm { init } => flag("init", path_arg(init)),
            Command::Ppo { init, reward_model } => {
                flag("init", path_arg(init));
                flag("reward-model", path_arg(reward_model));
            }
            Command::Pipeline { stages } => flag("stages", stages.clone()),
            Command::Draft { checkpoint, idea, name } => {
                flag("checkpoint", path_arg(checkpoint));
                flag("idea", idea.clone());
                flag("name", name.clone());
            }
            Command::Eval { checkpoint, label } => {
                flag("checkpoint", path_arg(checkpoint));
                flag("label", label.clone());
            }
            Command::Bench { checkpoint, label, items } => {
                flag("checkpoint", path_arg(checkpoint));
                flag("label", label.clone());
                if let Some(items) = items {
                    flag("items", path_arg(items));
                }
            }
            Command::Ingest | Command::KgExtract | Command::Verbalize | Command::Ablate | Command::Report => {}
        }
        a
    }

    fn file_inputs(&self) -> Vec<&Path> {
        match self {
            Command::KgImport { input } => vec![input],
            Command::Sft { init } | Command::TrainRm { init } => vec![init],
            Command::Ppo { init, reward_model } => vec![init, reward_model],
            Command::Draft { checkpoint, .. } | Command::Eval { checkpoint, .. } => vec![checkpoint],
            Command::Bench { checkpoint, items, .. } => {
                let mut v: Vec<&Path> = vec![checkpoint];
                v.extend(items.as_deref());
                v
            }
            _ => vec![],
        }
    }
}

fn config_invalid(msg: impl Into<String>) -> anyhow::Error {
    CliError::ConfigInvalid(msg.into()).into()
}

fn kg_triples_path(out: &Path) -> PathBuf {
    out.join("kg").join("triples.jsonl")
}

/// Everything that can be checked without doing work: config invariants,
/// stage lists, input files, and the knowledge source for KPT. Returns the
/// config with implicit inputs made explicit.
fn preflight(cmd: &Command, cfg: &RunConfig) -> anyhow::Result<RunConfig> {
    cfg.validate()?;
    let mut cfg = cfg.clone();
    for p in cmd.file_inputs() {
        if !p.is_file() {
            return Err(config_invalid(format!("{}: {} does not exist", cmd.name(), p.display())));
        }
    }
    if let Command::Draft { idea, .. } = cmd {
        if idea.trim().is_empty() {
            return Err(config_invalid("draft: --idea must not be empty"));
        }
    }
    if let Command::Pipeline { stages } = cmd {
        let stages = Stage::parse_list(stages).map_err(|e| config_invalid(e.to_string()))?;
        kft_core::train::validate_stages(&stages).map_err(|e| config_invalid(e.to_string()))?;
    }
    let uses_kg = matches!(cmd, Command::Pretrain { mode: Mode::Kpt } | Command::Verbalize);
    if uses_kg && cfg.paths.triples.is_none() {
        let extracted = kg_triples_path(&cfg.paths.output_dir);
        if extracted.is_file() {
            cfg.paths.triples = Some(extracted);
        } else if matches!(cmd, Command::Pretrain { .. }) {
            return Err(config_invalid(
                "pretrain --mode kpt needs a knowledge source: set paths.triples or run kg-extract / kg-import first",
            ));
        }
    }
    Ok(cfg)
}

fn inputs_of(cmd: &Command, cfg: &RunConfig) -> anyhow::Result<Vec<InputDigest>> {
    let (path, sha256) = corpus_source(cfg)?;
    let mut inputs = vec![InputDigest { path, sha256 }];
    if let Some(t) = &cfg.paths.triples {
        inputs.push(digest_of(t)?);
    }
    for p in cmd.file_inputs() {
        inputs.push(digest_of(p)?);
    }
    Ok(inputs)
}

/// Validate, write the manifest, then run.
pub fn execute(cmd: &Command, cfg: &RunConfig) -> anyhow::Result<()> {
    let cfg = preflight(cmd, cfg)?;
    let inputs = inputs_of(cmd, &cfg)?;
    let out = cfg.paths.output_dir.clone();
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let manifest = Manifest::new(cmd.name(), cmd.to_args(), &cfg, inputs);
    manifest.write(&out)?;
    info!("{}: output in {}", cmd.name(), out.display());
    match cmd {
        Command::Ingest => ingest(&cfg, &out),
        Command::KgExtract => kg_extract(&cfg, &out),
        Command::KgImport { input } => kg_import(input, &out),
        Command::Verbalize => verbalize(&cfg, &out),
        Command::Pretrain { mode } => pretrain(&cfg, &out, *mode),
        Command::Sft { init } => sft(&cfg, &out, init),
        Command::TrainRm { init } => train_rm(&cfg, &out, init),
        Command::Ppo { init, reward_model } => ppo(&cfg, &out, init, reward_model),
        Command::Pipeline { stages } => pipeline(&cfg, &out, stages),
        Command::Draft { checkpoint, idea, name } => draft(&cfg, &out, checkpoint, idea, name),
        Command::Eval { checkpoint, label } => eval(&cfg, &out, checkpoint, label),
        Command::Bench { checkpoint, label, items } => bench(&cfg, &out, checkpoint, label, items.as_deref()),
        Command::Ablate => ablate(&cfg, &out),
        Command::Report => report(&out),
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_file(path, s)
}

fn ingest(cfg: &RunConfig, out: &Path) -> anyhow::Result<()> {
    let p = prepare(cfg)?;
    let dir = out.join("data");
    fs::create_dir_all(&dir)?;
    write_corpus(dir.join("train.jsonl"), &p.split.train)?;
    write_corpus(dir.join("val.jsonl"), &p.split.val)?;
    write_corpus(dir.join("test.jsonl"), &p.split.test)?;
    write_file(&dir.join("vocab.json"), p.vocab.to_json())?;
    write_jsonl(dir.join("sft_train.jsonl"), &p.sft_pairs)?;
    write_jsonl(dir.join("sft_test.jsonl"), &p.test_pairs)?;
    write_jsonl(dir.join("preferences.jsonl"), &p.preferences)?;
    println!(
        "ingested {} / {} / {} documents, vocabulary of {} tokens, {} drafting pairs, {} preference triples",
        p.split.train.len(),
        p.split.val.len(),
        p.split.test.len(),
        p.vocab.len(),
        p.sft_pairs.len(),
        p.preferences.len()
    );
    Ok(())
}

fn kg_extract(cfg: &RunConfig, out: &Path) -> anyhow::Result<()> {
    let p = prepare(&RunConfig { paths: crate::config::Paths { triples: None, ..cfg.paths.clone() }, ..cfg.clone() })?;
    let kg = corpus_graph(&p.split.train, &p.patterns);
    fs::create_dir_all(out.join("kg"))?;
    export_triples(kg_triples_path(out), kg.triples())?;
    println!("extracted {} triples over {} entities", kg.len(), kg.entities().count());
    Ok(())
}

fn kg_import(input: &Path, out: &Path) -> anyhow::Result<()> {
    let triples = import_triples(input).with_context(|| format!("importing {}", input.display()))?;
    let kg = aggregate(&[triples]);
    fs::create_dir_all(out.join("kg"))?;
    export_triples(kg_triples_path(out), kg.triples())?;
    println!("imported {} triples", kg.len());
    Ok(())
}

fn verbalize(cfg: &RunConfig, out: &Path) -> anyhow::Result<()> {
    let p = prepare(cfg)?;
    let sentences = build_knowledge_corpus(&p.kg);
    fs::create_dir_all(out.join("kg"))?;
    write_knowledge_corpus(out.join("kg").join("knowledge.txt"), &sentences)?;
    println!("wrote {} knowledge sentences", sentences.len());
    Ok(())
}

fn fresh_model(cfg: &RunConfig, p: &Prepared) -> anyhow::Result<ModelState> {
    Ok(init_model(cfg.model_config(p.vocab.len()))?)
}

fn load_model(path: &Path, p: &Prepared) -> anyhow::Result<ModelState> {
    let ck = load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
    if ck.model.config.vocab_size != p.vocab.len() {
        bail!(
            "{} has vocabulary size {}, but this config builds {}",
            path.display(),
            ck.model.config.vocab_size,
            p.vocab.len()
        );
    }
    Ok(ck.model)
}

fn inputs<'a>(model: &'a ModelState, p: &'a Prepared) -> PipelineInputs<'a> {
    PipelineInputs {
        model,
        vocab: &p.vocab,
        knowledge: &p.knowledge,
        general: &p.general,
        sft_pairs: &p.sft_pairs,
        preferences: &p.preferences,
        ppo_prompts: &p.ppo_prompts,
    }
}

fn pretrain(cfg: &RunConfig, out: &Path, mode: Mode) -> anyhow::Result<()> {
    let p = prepare(cfg)?;
    let model = fresh_model(cfg, &p)?;
    let stage = if mode == Mode::Pt { Stage::Pt } else { Stage::Kpt };
    let res = run_pipeline(&[stage], &inputs(&model, &p), &cfg.pipeline_configs(), Some(&out.join("checkpoints")))
        .context(stage.tag())?;
    let last = res.artifacts.records[0].curve.last().map_or(f64::NAN, |c| c.1);
    println!("{} finished, final loss {last:.4}", stage.tag());
    Ok(())
}

fn adapt(cfg: &RunConfig, m: ModelState) -> anyhow::Result<ModelState> {
    Ok(match cfg.model.lora_rank {
        Some(r) => m.attach_lora(r, 2.0 / r as f64)?,
        None => m,
    })
}

fn save_stage(out: &Path, tag: &str, model: &ModelState, curve: &kft_core::train::Curve, label: &str) -> anyhow::Result<()> {
    let dir = out.join("checkpoints");
    fs::create_dir_all(&dir)?;
    save_checkpoint(model, tag, dir.join(format!("{tag}.ckpt")))?;
    write_curve(&dir.join(format!("{tag}_curve.csv")), label, curve)?;
    Ok(())
}

fn sft(cfg: &RunConfig, out: &Path, init: &Path) -> anyhow::Result<()> {
    let p = prepare(cfg)?;
    let model = adapt(cfg, load_model(init, &p)?)?;
    let c = cfg.pipeline_configs();
    let res = run_sft(&model, &p.vocab, &p.sft_pairs, &c.sft).context("sft")?;
    if res.skipped > 0 {
        log::warn!("skipped {} drafting pairs longer than max_seq", res.skipped);
    }
    save_stage(out, "sft", &res.model.merge_lora(), &res.curve, "loss")?;
    println!("sft finished, final loss {:.4}", res.curve.last().map_or(f64::NAN, |c| c.1));
    Ok(())
}

fn train_rm(cfg: &RunConfig, out: &Path, init: &Path) -> anyhow::Result<()> {
    let p = prepare(cfg)?;
    let base = load_model(init, &p)?;
    let (rm, curve) = train_reward_model(&base, &p.vocab, &p.preferences, &cfg.pipeline_configs().rm).context("rm")?;
    let dir = out.join("checkpoints");
    fs::create_dir_all(&dir)?;
    rm.save(dir.join("rm.ckpt"))?;
    write_curve(&dir.join("rm_curve.csv"), "loss", &curve)?;
    println!("reward model trained on {} triples", p.preferences.len());
    Ok(())
}

fn write_ppo_log(path: &Path, logs: &[PpoBatchLog]) -> anyhow::Result<()> {
    let mut s = String::from("batch,mean_reward,mean_length,kl\n");
    for l in logs {
        s.push_str(&format!("{},{},{},{}\n", l.batch, l.mean_reward, l.mean_length, l.kl));
    }
    write_file(path, s)
}

fn ppo(cfg: &RunConfig, out: &Path, init: &Path, reward_model: &Path) -> anyhow::Result<()> {
    let p = prepare(cfg)?;
    let policy = adapt(cfg, load_model(init, &p)?)?;
    let rm = RewardModel::load(reward_model).with_context(|| format!("loading {}", reward_model.display()))?;
    let res = run_ppo(&policy, &rm, &p.ppo_prompts, &cfg.pipeline_configs().ppo).context("ppo")?;
    save_stage(out, "ppo", &res.model.merge_lora(), &res.curve, "mean_reward")?;
    write_ppo_log(&out.join("checkpoints").join("ppo_log.csv"), &res.logs)?;
    println!("ppo finished after {} rollout batches", res.logs.len());
    Ok(())
}

fn run_label(stages: &[Stage]) -> String {
    stages.iter().map(|s| s.tag()).collect::<Vec<_>>().join("-")
}

fn pipeline(cfg: &RunConfig, out: &Path, stages: &str) -> anyhow::Result<()> {
    let stages = Stage::parse_list(stages)?;
    let p = prepare(cfg)?;
    let model = fresh_model(cfg, &p)?;
    let dir = out.join("runs").join(run_label(&stages));
    let res = run_pipeline(&stages, &inputs(&model, &p), &cfg.pipeline_configs(), Some(&dir))?;
    if !res.ppo_logs.is_empty() {
        write_ppo_log(&dir.join("ppo_log.csv"), &res.ppo_logs)?;
    }
    println!("pipeline {} finished; checkpoints in {}", run_label(&stages), dir.display());
    Ok(())
}

fn draft(cfg: &RunConfig, out: &Path, checkpoint: &Path, idea: &str, name: &str) -> anyhow::Result<()> {
    let p = prepare(cfg)?;
    let model = load_model(checkpoint, &p)?;
    let gen = kft_core::lm::GenerationConfig { seed: cfg.seeds()["draft"], ..cfg.eval.gen() };
    let session = draft_session(&model, &p.vocab, idea, &gen)?;
    let dir = out.join("drafts");
    write_json(&dir.join(format!("{name}.json")), &session)?;
    write_file(&dir.join(format!("{name}.txt")), session.transcript())?;
    print!("{}", session.transcript());
    Ok(())
}

/// Embedder for `model` according to the config; `reference` is the
/// freshly initialized model shared across checkpoints.
fn embedder<'a>(
    choice: EmbedderChoice,
    reference: &'a ModelState,
    model: &'a ModelState,
    p: &'a Prepared,
) -> Box<dyn Embedder + 'a> {
    match choice {
        EmbedderChoice::Reference => Box::new(StaticEmbedder { model: reference, vocab: &p.vocab }),
        EmbedderChoice::ModelStatic => Box::new(StaticEmbedder { model, vocab: &p.vocab }),
        EmbedderChoice::ModelHidden => Box::new(HiddenStateEmbedder { model, vocab: &p.vocab }),
    }
}

fn test_pairs(cfg: &RunConfig, p: &Prepared) -> Vec<kft_core::corpus::DialoguePair> {
    let n = cfg.eval.limit.unwrap_or(usize::MAX);
    p.test_pairs.iter().take(n).cloned().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub label: String,
    pub pairs: usize,
    pub metrics: MetricReport,
    pub average_rareness: f64,
    /// Perplexity on verbalized held-out facts; `None` without probes.
    pub probe_perplexity: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct OutputRecord<'a> {
    query: &'a str,
    gold: &'a str,
    generated: &'a str,
}

fn eval(cfg: &RunConfig, out: &Path, checkpoint: &Path, label: &str) -> anyhow::Result<()> {
    let p = prepare(cfg)?;
    let model = load_model(checkpoint, &p)?;
    let reference = fresh_model(cfg, &p)?;
    let emb = embedder(cfg.eval.embedder, &reference, &model, &p);
    let pairs = test_pairs(cfg, &p);
    let gen = cfg.seeded().eval.gen();
    let outputs = generate_outputs(&model, &p.vocab, &pairs, &gen)?;
    let metrics = evaluate_outputs(&outputs, emb.as_ref())?;
    let texts: Vec<(String, String)> = outputs.iter().enumerate().map(|(i, (g, _))| (format!("{i}"), g.clone())).collect();
    let rare = rareness_report(&texts, &p.kg, &p.patterns)?;
    let probes = p.probe_sequences(cfg.model.max_seq);
    let probe_perplexity = if probes.is_empty() { None } else { Some(perplexity(&model, &probes)?) };

    let dir = out.join("reports");
    let rows = vec![(label.to_string(), metrics.clone())];
    write_file(&dir.join(format!("eval_{label}.csv")), metrics_csv(&rows))?;
    write_file(&dir.join(format!("eval_{label}.md")), metrics_markdown(&rows))?;
    write_file(&dir.join(format!("rareness_{label}.csv")), rare.to_csv())?;
    let record = EvalRecord {
        label: label.into(),
        pairs: pairs.len(),
        metrics,
        average_rareness: rare.average_rareness,
        probe_perplexity,
    };
    write_json(&dir.join(format!("eval_{label}.json")), &record)?;
    let lines: Vec<OutputRecord> = pairs
        .iter()
        .zip(&outputs)
        .map(|(pair, (g, gold))| OutputRecord { query: &pair.query, gold, generated: g })
        .collect();
    write_jsonl(dir.join(format!("outputs_{label}.jsonl")), &lines)?;
    print!("{}", metrics_markdown(&rows));
    println!("average rareness {:.4}", record.average_rareness);
    if let Some(ppl) = record.probe_perplexity {
        println!("probe perplexity {ppl:.4}");
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub label: String,
    pub result: BenchResult,
}

fn bench_markdown(records: &[BenchRecord]) -> String {
    let mut s = String::from("| Model | Accuracy | Correct | Total |\n|---|---|---|---|\n");
    for r in records {
        s.push_str(&format!(
            "| {} | {:.3} | {} | {} |\n",
            r.label, r.result.accuracy, r.result.correct, r.result.total
        ));
    }
    s
}

fn bench_csv(records: &[BenchRecord]) -> String {
    let mut s = String::from("model,accuracy,correct,total\n");
    for r in records {
        s.push_str(&format!("{},{},{},{}\n", r.label, r.result.accuracy, r.result.correct, r.result.total));
    }
    s
}

fn bench(cfg: &RunConfig, out: &Path, checkpoint: &Path, label: &str, items: Option<&Path>) -> anyhow::Result<()> {
    let p = prepare(cfg)?;
    let model = load_model(checkpoint, &p)?;
    let items = match items {
        Some(path) => load_mcq(path)?,
        None => {
            let kg = corpus_graph(&p.split.test, &p.patterns);
            mcq_items(&kg, cfg.eval.mcq_items, cfg.seeds()["bench"])
        }
    };
    if items.is_empty() {
        bail!("no benchmark items");
    }
    let result = run_mcq(&model, &p.vocab, &items)?;
    let records = vec![BenchRecord { label: label.into(), result }];
    let dir = out.join("reports");
    write_file(&dir.join(format!("bench_{label}.csv")), bench_csv(&records))?;
    write_file(&dir.join(format!("bench_{label}.md")), bench_markdown(&records))?;
    write_json(&dir.join(format!("bench_{label}.json")), &records[0])?;
    print!("{}", bench_markdown(&records));
    Ok(())
}

fn ablate(cfg: &RunConfig, out: &Path) -> anyhow::Result<()> {
    let p = prepare(cfg)?;
    let init = fresh_model(cfg, &p)?;
    let cfgs = cfg.pipeline_configs();
    let mut models: Vec<(String, ModelState)> = Vec::new();
    for (first, prefix) in [(Stage::Pt, "PT"), (Stage::Kpt, "KPT")] {
        let stages = [first, Stage::Sft, Stage::Rm, Stage::Ppo];
        let dir = out.join("runs").join(run_label(&stages));
        info!("ablate: running {}", run_label(&stages));
        let res = run_pipeline(&stages, &inputs(&init, &p), &cfgs, Some(&dir))?;
        write_ppo_log(&dir.join("ppo_log.csv"), &res.ppo_logs)?;
        for (stage, model) in res.snapshots {
            let label = match stage {
                Stage::Pt | Stage::Kpt => prefix.to_string(),
                Stage::Sft => format!("{prefix} + SFT"),
                Stage::Ppo => format!("{prefix} + SFT + RLHF"),
                Stage::Rm => unreachable!("reward models are not snapshots"),
            };
            models.push((label, model));
        }
    }
    let mut ordered: Vec<(String, &ModelState)> = Vec::new();
    for label in ABLATION_ROWS {
        let m = models.iter().find(|(l, _)| l == label).map(|(_, m)| m).expect("all six rows trained");
        ordered.push((label.to_string(), m));
    }
    // every row is scored in the same embedding space
    let full = ordered.last().expect("six rows").1;
    let emb = embedder(cfg.eval.embedder, &init, full, &p);
    let pairs = test_pairs(cfg, &p);
    let table = ablation_report(&ordered, &p.vocab, &pairs, emb.as_ref(), &cfg.seeded().eval.gen())?;
    let dir = out.join("reports");
    let rows: Vec<(String, MetricReport)> = table.rows.iter().map(|r| (r.label.clone(), r.report.clone())).collect();
    write_file(&dir.join("stages.csv"), metrics_csv(&rows))?;
    write_file(&dir.join("stages.md"), metrics_markdown(&rows))?;
    write_file(&dir.join("ablation.csv"), table.to_csv())?;
    write_file(&dir.join("ablation.md"), table.to_markdown())?;
    print!("{}", table.to_markdown());
    Ok(())
}

fn report(out: &Path) -> anyhow::Result<()> {
    let dir = out.join("reports");
    let mut names: Vec<PathBuf> = match fs::read_dir(&dir) {
        Ok(rd) => rd.filter_map(|e| e.ok().map(|e| e.path())).collect(),
        Err(_) => Vec::new(),
    };
    names.sort();
    let mut evals = Vec::new();
    let mut benches = Vec::new();
    for path in names {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        if !name.ends_with(".json") {
            continue;
        }
        let text = fs::read_to_string(&path)?;
        if name.starts_with("eval_") {
            evals.push(serde_json::from_str::<EvalRecord>(&text).with_context(|| format!("parsing {name}"))?);
        } else if name.starts_with("bench_") {
            benches.push(serde_json::from_str::<BenchRecord>(&text).with_context(|| format!("parsing {name}"))?);
        }
    }
    if evals.is_empty() && benches.is_empty() {
        bail!("no eval or bench reports under {}", dir.display());
    }
    let rows: Vec<(String, MetricReport)> = evals.iter().map(|e| (e.label.clone(), e.metrics.clone())).collect();
    let mut md = String::new();
    let mut csv = String::new();
    if !rows.is_empty() {
        md.push_str("## Generation metrics\n\n");
        md.push_str(&metrics_markdown(&rows));
        md.push_str("\n| Model | Average rareness |\n|---|---|\n");
        for e in &evals {
            md.push_str(&format!("| {} | {:.4} |\n", e.label, e.average_rareness));
        }
        csv.push_str(&metrics_csv(&rows));
    }
    if !benches.is_empty() {
        md.push_str("\n## Benchmark\n\n");
        md.push_str(&bench_markdown(&benches));
        write_file(&dir.join("summary_bench.csv"), bench_csv(&benches))?;
    }
    write_file(&dir.join("summary.md"), &md)?;
    if !csv.is_empty() {
        write_file(&dir.join("summary.csv"), csv)?;
    }
    print!("{md}");
    Ok(())
}
