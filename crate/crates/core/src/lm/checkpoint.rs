//! Checkpoint files: one JSON header line, then raw little-endian f64 data
//! for every tensor in manifest order. Adapter tensors and named extras
//! (e.g. a reward head) follow the base tensors.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{init_model, LmError, ModelConfig, ModelState, Tensor};

const FORMAT: &str = "kft-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AdapterInfo {
    rank: usize,
    scaling: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    stage_tag: String,
    config: ModelConfig,
    dtype: String,
    tensors: Vec<Entry>,
    adapter: Option<AdapterInfo>,
    extras: Vec<Entry>,
    checksum: String,
    payload_bytes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelState,
    pub stage_tag: String,
    pub extras: Vec<(String, Tensor)>,
}

pub fn save_checkpoint(model: &ModelState, stage_tag: &str, path: impl AsRef<Path>) -> Result<(), LmError> {
    save_checkpoint_with_extras(model, stage_tag, &[], path)
}

pub fn save_checkpoint_with_extras(
    model: &ModelState,
    stage_tag: &str,
    extras: &[(String, Tensor)],
    path: impl AsRef<Path>,
) -> Result<(), LmError> {
    let mut payload: Vec<u8> = Vec::new();
    let mut put = |name: &str, t: &Tensor| {
        let offset = payload.len();
        for x in &t.data {
            payload.extend_from_slice(&x.to_le_bytes());
        }
        Entry { name: name.to_string(), shape: t.shape.clone(), offset, len: t.len() }
    };
    let tensors: Vec<Entry> = model.params.named().into_iter().map(|(n, t)| put(&n, t)).collect();
    let extra_entries: Vec<Entry> = extras.iter().map(|(n, t)| put(&format!("extra.{n}"), t)).collect();
    let header = Header {
        format: FORMAT.into(),
        version: CHECKPOINT_VERSION,
        stage_tag: stage_tag.into(),
        config: model.config,
        dtype: "f64".into(),
        tensors,
        adapter: model.params.lora.as_ref().map(|l| AdapterInfo { rank: l.rank, scaling: l.scaling }),
        extras: extra_entries,
        checksum: hex::encode(Sha256::digest(&payload)),
        payload_bytes: payload.len(),
    };
    let mut bytes = serde_json::to_vec(&header).map_err(|e| LmError::CorruptCheckpoint(e.to_string()))?;
    bytes.push(b'\n');
    bytes.extend_from_slice(&payload);
    fs::write(path, bytes)?;
    Ok(())
}

fn read_tensor(payload: &[u8], e: &Entry) -> Result<Tensor, LmError> {
    if e.shape.iter().product::<usize>() != e.len {
        return Err(LmError::CorruptCheckpoint(format!("{}: shape/len disagree", e.name)));
    }
    let start = e.offset;
    let end = start + e.len * 8;
    let bytes = payload
        .get(start..end)
        .ok_or_else(|| LmError::CorruptCheckpoint(format!("{}: out of payload bounds", e.name)))?;
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok(Tensor { shape: e.shape.clone(), data })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, LmError> {
    let bytes = fs::read(path)?;
    let Some(nl) = bytes.iter().position(|&b| b == b'\n') else {
        return Err(LmError::ChecksumMismatch);
    };
    let header: Header = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| LmError::CorruptCheckpoint(format!("header: {e}")))?;
    if header.format != FORMAT {
        return Err(LmError::CorruptCheckpoint(format!("unknown format {:?}", header.format)));
    }
    if header.version != CHECKPOINT_VERSION {
        return Err(LmError::VersionMismatch { found: header.version, expected: CHECKPOINT_VERSION });
    }
    if header.dtype != "f64" {
        return Err(LmError::CorruptCheckpoint(format!("unsupported dtype {:?}", header.dtype)));
    }
    let payload = &bytes[nl + 1..];
    if payload.len() != header.payload_bytes || hex::encode(Sha256::digest(payload)) != header.checksum {
        return Err(LmError::ChecksumMismatch);
    }

    let mut model = init_model(header.config)?;
    if let Some(a) = &header.adapter {
        model = model.attach_lora(a.rank, a.scaling)?;
    }
    {
        let slots = model.params.named_mut();
        if slots.len() != header.tensors.len() {
            return Err(LmError::CorruptCheckpoint("tensor count does not match config".into()));
        }
        for ((name, slot), entry) in slots.into_iter().zip(&header.tensors) {
            if name != entry.name || slot.shape != entry.shape {
                return Err(LmError::CorruptCheckpoint(format!("unexpected tensor {}", entry.name)));
            }
            *slot = read_tensor(payload, entry)?;
        }
    }
    let extras = header
        .extras
        .iter()
        .map(|e| {
            let name = e.name.strip_prefix("extra.").unwrap_or(&e.name).to_string();
            Ok((name, read_tensor(payload, e)?))
        })
        .collect::<Result<Vec<_>, LmError>>()?;
    Ok(Checkpoint { model, stage_tag: header.stage_tag, extras })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn model() -> ModelState {
        init_model(ModelConfig { vocab_size: 24, d_model: 8, n_heads: 2, n_layers: 2, d_ff: 12, max_seq: 10, seed: 1 })
            .unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let m = model();
        let extra = vec![("head_w".to_string(), Tensor { shape: vec![2], data: vec![0.25, -1.0] })];
        save_checkpoint_with_extras(&m, "sft", &extra, &path).unwrap();
        let ck = load_checkpoint(&path).unwrap();
        assert_eq!(ck.model, m);
        assert_eq!(ck.stage_tag, "sft");
        assert_eq!(ck.extras, extra);
    }

    #[test]
    fn truncation_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&model(), "pt", &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(LmError::ChecksumMismatch)));
        let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
        fs::write(&path, &bytes[..nl - 5]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(LmError::ChecksumMismatch)));
    }

    #[test]
    fn version_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&model(), "pt", &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        let text = String::from_utf8_lossy(&bytes[..bytes.iter().position(|&b| b == b'\n').unwrap()]).to_string();
        let bumped = text.replace("\"version\":1", "\"version\":2");
        let mut f = fs::File::create(&path).unwrap();
        f.write_all(bumped.as_bytes()).unwrap();
        f.write_all(&bytes[text.len()..]).unwrap();
        drop(f);
        assert!(matches!(load_checkpoint(&path), Err(LmError::VersionMismatch { found: 2, expected: 1 })));
    }
}
