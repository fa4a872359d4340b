use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use speedcam_nn::{ParamKind, Parameterized};

use super::{hex, ModelConfig, ModelKind, Regressor};
use crate::dataset::NormalizationSpec;
use crate::error::{Error, IoContext, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"SPDCKPT\0";

/// Everything stored next to the parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub norm: NormalizationSpec,
    /// Seed of the training run that produced the parameters.
    pub seed: u64,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// 1-based epoch the parameters come from; `None` before training.
    pub epoch: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    kind: String,
    shape: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    model_kind: ModelKind,
    model: ModelConfig,
    meta: CheckpointMeta,
    tensors: Vec<TensorEntry>,
    blob_len: usize,
    blob_sha256: String,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Regressor,
    pub meta: CheckpointMeta,
    /// First 16 hex digits of the parameter blob hash.
    pub checkpoint_id: String,
}

fn kind_str(kind: ParamKind) -> &'static str {
    match kind {
        ParamKind::Trainable => "trainable",
        ParamKind::Frozen => "frozen",
        ParamKind::Buffer => "buffer",
    }
}

/// Writes `model` and `meta` atomically (temp file, then rename). Returns
/// the checkpoint id.
pub fn save_checkpoint(path: &Path, model: &Regressor, meta: &CheckpointMeta) -> Result<String> {
    let mut tensors = Vec::new();
    let mut blob = Vec::new();
    model.visit_params(&mut |p| {
        tensors.push(TensorEntry {
            name: p.name().to_string(),
            kind: kind_str(p.kind()).to_string(),
            shape: p.value.shape().to_vec(),
        });
        for v in p.value.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    });
    let digest = hex(&Sha256::digest(&blob));
    let header = Header {
        format_version: CHECKPOINT_VERSION,
        model_kind: model.kind(),
        model: model.config(),
        meta: meta.clone(),
        tensors,
        blob_len: blob.len(),
        blob_sha256: digest.clone(),
    };
    let header_json = serde_json::to_vec(&header).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;

    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).at(dir)?;
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Checkpoint(format!("invalid checkpoint path {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", file_name.to_string_lossy(), std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(MAGIC)?;
        f.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        f.write_all(&(header_json.len() as u64).to_le_bytes())?;
        f.write_all(&header_json)?;
        f.write_all(&blob)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    if let Err(e) = write() {
        let _ = fs::remove_file(&tmp);
        return Err(Error::Io {
            path: path.to_path_buf(),
            source: e,
        });
    }
    Ok(digest[..16].to_string())
}

/// Reads a checkpoint, verifying version, integrity and (if given) the
/// model kind. Nothing is returned unless every check passes.
pub fn load_checkpoint(path: &Path, expected: Option<ModelKind>) -> Result<Checkpoint> {
    let bytes = fs::read(path).at(path)?;
    let bad = |msg: &str| Error::Checkpoint(format!("{}: {msg}", path.display()));
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(bad(&format!(
            "format version {version} unsupported (expected {CHECKPOINT_VERSION})"
        )));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let header_end = 20usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("truncated header"))?;
    let header: Header =
        serde_json::from_slice(&bytes[20..header_end]).map_err(|e| bad(&format!("corrupt header: {e}")))?;
    if header.format_version != CHECKPOINT_VERSION {
        return Err(bad("header version mismatch"));
    }
    if let Some(kind) = expected {
        if kind != header.model_kind {
            return Err(bad(&format!("holds a {} model, expected {kind}", header.model_kind)));
        }
    }
    let blob = &bytes[header_end..];
    if blob.len() != header.blob_len {
        return Err(bad(&format!(
            "parameter blob has {} bytes, header declares {}",
            blob.len(),
            header.blob_len
        )));
    }
    let digest = hex(&Sha256::digest(blob));
    if digest != header.blob_sha256 {
        return Err(bad("parameter blob checksum mismatch"));
    }

    let mut model = Regressor::build_for_restore(&header.model)?;
    let mut idx = 0;
    let mut offset = 0;
    let mut mismatch = None;
    model.visit_params_mut(&mut |p| {
        if mismatch.is_some() {
            return;
        }
        let Some(entry) = header.tensors.get(idx) else {
            mismatch = Some(format!("missing tensor #{idx} ({})", p.name()));
            return;
        };
        if entry.name != p.name() || entry.shape != p.value.shape() || entry.kind != kind_str(p.kind()) {
            mismatch = Some(format!(
                "tensor #{idx}: stored {} {:?} ({}), model has {} {:?} ({})",
                entry.name,
                entry.shape,
                entry.kind,
                p.name(),
                p.value.shape(),
                kind_str(p.kind())
            ));
            return;
        }
        for v in p.value.data_mut() {
            *v = f32::from_le_bytes(blob[offset..offset + 4].try_into().expect("4 bytes"));
            offset += 4;
        }
        idx += 1;
    });
    if let Some(m) = mismatch {
        return Err(bad(&m));
    }
    if idx != header.tensors.len() || offset != blob.len() {
        return Err(bad("tensor list does not match the model architecture"));
    }
    Ok(Checkpoint {
        model,
        meta: header.meta,
        checkpoint_id: digest[..16].to_string(),
    })
}
