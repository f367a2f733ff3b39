//! Run manifests: the resolved config, the derived seeds and the digests of
//! every input, enough to repeat a run exactly.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::data::{bundled_digest, file_digest, BUNDLED_INPUT};

pub const MANIFEST_FORMAT: &str = "kft-manifest/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub tool_version: String,
    pub command: String,
    /// Subcommand arguments, as they would be typed after the command name.
    pub args: Vec<String>,
    pub config: RunConfig,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<InputDigest>,
}

impl Manifest {
    pub fn new(command: &str, args: Vec<String>, config: &RunConfig, inputs: Vec<InputDigest>) -> Self {
        Self {
            format: MANIFEST_FORMAT.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            args,
            config: config.clone(),
            seeds: config.seeds(),
            inputs,
        }
    }

    pub fn path_in(output_dir: &Path, command: &str) -> PathBuf {
        output_dir.join("manifests").join(format!("{command}.json"))
    }

    pub fn write(&self, output_dir: &Path) -> anyhow::Result<PathBuf> {
        let path = Self::path_in(output_dir, &self.command);
        fs::create_dir_all(path.parent().expect("manifest path has a parent"))?;
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        let m: Manifest = serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))?;
        if m.format != MANIFEST_FORMAT {
            bail!("unsupported manifest format {:?}", m.format);
        }
        Ok(m)
    }

    /// Fails when a recorded file input changed since the manifest was
    /// written.
    pub fn verify_inputs(&self) -> anyhow::Result<()> {
        for input in &self.inputs {
            let now = if input.path == BUNDLED_INPUT {
                bundled_digest()
            } else {
                file_digest(Path::new(&input.path))?
            };
            if now != input.sha256 {
                bail!("input {} changed since the manifest was written", input.path);
            }
        }
        Ok(())
    }
}

pub fn digest_of(path: &Path) -> anyhow::Result<InputDigest> {
    Ok(InputDigest { path: path.display().to_string(), sha256: file_digest(path)? })
}
