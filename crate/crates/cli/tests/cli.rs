//! Front-end behaviour: argument and config errors, seed precedence and
//! scripted drafting.

use std::path::Path;
use std::process::Command;

use clap::Parser;

use kft_cli::config::SEED_ENV;
use kft_cli::draft::draft_session;
use kft_cli::{category, exit_code, resolve, Cli};
use kft_core::corpus::{abstract_query, claims_query, title_query, VocabBuilder};
use kft_core::lm::{init_model, GenerationConfig, ModelConfig};

fn run(args: &[&str]) -> anyhow::Result<()> {
    kft_cli::run(std::iter::once("kft").chain(args.iter().copied()))
}

fn write_config(dir: &Path, json: &str) -> String {
    let p = dir.join("cfg.json");
    std::fs::write(&p, json).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn unknown_command_is_a_usage_error() {
    let err = run(&["frobnicate"]).unwrap_err();
    assert_eq!(category(&err), "unknown-command");
    assert_eq!(exit_code(&err), 2);

    let status = Command::new(env!("CARGO_BIN_EXE_kft")).arg("frobnicate").output().unwrap();
    assert_eq!(status.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&status.stderr).contains("unknown-command"));
    let help = Command::new(env!("CARGO_BIN_EXE_kft")).arg("--help").output().unwrap();
    assert!(help.status.success());
}

#[test]
fn invalid_config_fails_before_writing_anything() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), r#"{ "model": { "d_model": 10, "n_heads": 3 } }"#);
    let err = run(&["--config", &cfg, "--out", out.to_str().unwrap(), "ingest"]).unwrap_err();
    assert_eq!(category(&err), "config-invalid");
    assert_eq!(exit_code(&err), 2);
    assert!(!out.exists());

    let cfg = write_config(dir.path(), r#"{ "modle": {} }"#);
    let err = run(&["--config", &cfg, "--out", out.to_str().unwrap(), "ingest"]).unwrap_err();
    assert_eq!(exit_code(&err), 2);
    assert!(!out.exists());
}

#[test]
fn knowledge_pretraining_needs_a_graph() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let err = run(&["--out", out.to_str().unwrap(), "pretrain", "--mode", "kpt"]).unwrap_err();
    assert_eq!(category(&err), "config-invalid");
    assert!(!out.exists());
}

#[test]
fn seed_precedence_is_file_then_env_then_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{ "global_seed": 5 }"#);
    let parse = |extra: &[&str]| {
        let argv: Vec<&str> = ["kft", "--config", &cfg].iter().copied().chain(extra.iter().copied()).collect();
        resolve(&Cli::try_parse_from(argv).unwrap()).unwrap().1.global_seed
    };
    // The only test in this binary that touches the environment.
    std::env::remove_var(SEED_ENV);
    assert_eq!(parse(&["ingest"]), 5);
    std::env::set_var(SEED_ENV, "9");
    assert_eq!(parse(&["ingest"]), 9);
    assert_eq!(parse(&["--seed", "13", "ingest"]), 13);
    std::env::set_var(SEED_ENV, "nine");
    let argv = ["kft", "--config", cfg.as_str(), "ingest"];
    assert!(resolve(&Cli::try_parse_from(argv).unwrap()).is_err());
    std::env::remove_var(SEED_ENV);
}

#[test]
fn drafting_turns_are_ordered_and_deterministic() {
    let mut b = VocabBuilder::new();
    b.add_text(&title_query("")).add_text(&abstract_query("")).add_text(&claims_query("", ""));
    b.add_text("a folding ladder with locking hinges and rubber feet");
    let vocab = b.build(200).unwrap();
    let model = init_model(ModelConfig {
        vocab_size: vocab.len(),
        d_model: 16,
        n_heads: 2,
        n_layers: 1,
        d_ff: 32,
        max_seq: 256,
        seed: 1,
    })
    .unwrap();
    let gen = GenerationConfig { max_new_tokens: 6, seed: 21, ..Default::default() };
    let idea = "a folding ladder with locking hinges";
    let a = draft_session(&model, &vocab, idea, &gen).unwrap();
    let b2 = draft_session(&model, &vocab, idea, &gen).unwrap();
    assert_eq!(a, b2);
    assert!(a.is_ordered() && a.claims.is_some() && a.verdict.is_some());
    assert_eq!(a.turns.len(), 3);
    assert_eq!(a.turns[0].prompt, title_query(idea));
    assert_eq!(a.turns[1].prompt, abstract_query(a.title.as_deref().unwrap()));
    assert!(a.transcript().contains("## Reasonability"));
    assert!(draft_session(&model, &vocab, "  ", &gen).is_err());
}
