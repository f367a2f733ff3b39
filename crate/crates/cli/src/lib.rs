//! Command-line front end: config handling, manifests, drafting sessions
//! and one handler per subcommand.

pub mod commands;
pub mod config;
pub mod data;
pub mod draft;
pub mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::Parser;
use thiserror::Error;

use kft_core::corpus::CorpusError;
use kft_core::eval::EvalError;
use kft_core::kgraph::KgError;
use kft_core::lm::LmError;
use kft_core::train::TrainError;

pub use commands::{execute, Command};
pub use config::RunConfig;
pub use manifest::Manifest;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("unknown command: {0}")]
    UnknownCommand(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
}

#[derive(Debug, Parser)]
#[command(name = "kft", version, about = "Knowledge fine-tuning pipeline for patent drafting models")]
pub struct Cli {
    /// JSON run configuration; defaults apply to missing fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides paths.output_dir).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Global seed (overrides the config file and KFT_SEED).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Re-run the command recorded in a manifest with its exact config.
    #[arg(long, conflicts_with_all = ["config", "seed"])]
    pub replay: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Option<Command>,
}

/// Resolve the config and command from parsed arguments.
pub fn resolve(cli: &Cli) -> anyhow::Result<(Command, RunConfig)> {
    if let Some(path) = &cli.replay {
        let m = Manifest::load(path)?;
        m.verify_inputs()?;
        let mut argv = vec![OsString::from("kft")];
        argv.extend(m.args.iter().map(OsString::from));
        let parsed = Cli::try_parse_from(argv).map_err(|e| CliError::Usage(e.to_string()))?;
        let cmd = parsed.command.ok_or_else(|| CliError::Usage("manifest records no command".into()))?;
        if let Some(c) = &cli.command {
            if c != &cmd {
                return Err(CliError::Usage(format!("--replay runs `{}`, not `{}`", cmd.name(), c.name())).into());
            }
        }
        let mut cfg = m.config;
        if let Some(out) = &cli.out {
            cfg.paths.output_dir = out.clone();
        }
        return Ok((cmd, cfg));
    }
    let cmd = cli.command.clone().ok_or_else(|| CliError::Usage("a subcommand is required (see --help)".into()))?;
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_env()?;
    if let Some(s) = cli.seed {
        cfg.global_seed = s;
    }
    if let Some(out) = &cli.out {
        cfg.paths.output_dir = out.clone();
    }
    Ok((cmd, cfg))
}

/// Parse `argv` (including the program name) and run the command.
pub fn run<I, T>(argv: I) -> anyhow::Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                print!("{e}");
                return Ok(());
            }
            ErrorKind::InvalidSubcommand => {
                let name = e
                    .get(clap::error::ContextKind::InvalidSubcommand)
                    .map(|v| v.to_string())
                    .unwrap_or_default();
                return Err(CliError::UnknownCommand(name).into());
            }
            _ => return Err(CliError::Usage(e.render().to_string()).into()),
        },
    };
    let (cmd, cfg) = resolve(&cli)?;
    execute(&cmd, &cfg)
}

/// Short error category for messages and exit codes.
pub fn category(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return match e {
                CliError::UnknownCommand(_) => "unknown-command",
                CliError::Usage(_) => "usage",
                CliError::ConfigInvalid(_) => "config-invalid",
            };
        }
        if cause.is::<TrainError>() {
            return "train";
        }
        if cause.is::<LmError>() {
            return "model";
        }
        if cause.is::<EvalError>() {
            return "eval";
        }
        if cause.is::<CorpusError>() {
            return "corpus";
        }
        if cause.is::<KgError>() {
            return "kg";
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
    }
    "error"
}

/// 2 for invocation and configuration problems, 1 for failures while
/// running.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    match category(err) {
        "unknown-command" | "usage" | "config-invalid" => 2,
        _ => 1,
    }
}
