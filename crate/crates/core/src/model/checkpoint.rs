//! Binary checkpoint files.
//!
//! Layout: the 4 bytes `GCDT`, a little-endian `u32` version, a little-endian
//! `u64` header length, a UTF-8 JSON header, then every parameter as raw
//! little-endian `f32` values in manifest order. Manifest offsets are byte
//! offsets from the start of the parameter data.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ModelBundle, ModelConfig, ModelError};
use crate::data::{NormStats, TaskRegistry};
use crate::io::write_atomic;
use crate::numerics::{ParamStore, Tensor};

pub const MAGIC: [u8; 4] = *b"GCDT";
pub const CHECKPOINT_VERSION: u32 = 1;
const PREAMBLE: usize = 16;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("not a checkpoint: bad magic bytes {0:?}")]
    Magic([u8; 4]),
    #[error("unsupported checkpoint version: expected {expected}, found {found}")]
    Version { expected: u32, found: u32 },
    #[error("truncated checkpoint: {0}")]
    Truncated(String),
    #[error("malformed checkpoint header: {0}")]
    Header(String),
    #[error("checkpoint manifest does not match its model config: {0}")]
    Manifest(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub config: ModelConfig,
    pub tasks: TaskRegistry,
    pub norm_stats: BTreeMap<String, NormStats>,
    pub manifest: Vec<ManifestEntry>,
}

impl CheckpointHeader {
    pub fn total_params(&self) -> usize {
        self.manifest
            .iter()
            .map(|e| e.shape.iter().product::<usize>())
            .sum()
    }
}

pub fn encode(bundle: &ModelBundle) -> Vec<u8> {
    let mut manifest = Vec::with_capacity(bundle.params.len());
    let mut offset = 0u64;
    for (_, p) in bundle.params.iter() {
        manifest.push(ManifestEntry {
            name: p.name.clone(),
            shape: p.value.shape().to_vec(),
            offset,
        });
        offset += 4 * p.value.numel() as u64;
    }
    let header = CheckpointHeader {
        config: bundle.config.clone(),
        tasks: bundle.tasks.clone(),
        norm_stats: bundle.norm_stats.clone(),
        manifest,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(PREAMBLE + json.len() + offset as usize);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, p) in bundle.params.iter() {
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Parses only the header, for inspection.
pub fn decode_header(bytes: &[u8]) -> Result<(CheckpointHeader, usize), CheckpointError> {
    if bytes.len() < PREAMBLE {
        return Err(CheckpointError::Truncated(format!(
            "{} bytes, preamble needs {PREAMBLE}",
            bytes.len()
        )));
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(CheckpointError::Magic(magic));
    }
    let found = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if found != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version {
            expected: CHECKPOINT_VERSION,
            found,
        });
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let data_start = (PREAMBLE as u64)
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len() as u64)
        .ok_or_else(|| {
            CheckpointError::Truncated(format!(
                "header of {header_len} bytes runs past end of file"
            ))
        })? as usize;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[PREAMBLE..data_start])
        .map_err(|e| CheckpointError::Header(e.to_string()))?;
    Ok((header, data_start))
}

pub fn decode(bytes: &[u8]) -> Result<ModelBundle, CheckpointError> {
    let (header, data_start) = decode_header(bytes)?;
    header.config.validate()?;
    let expected = ModelBundle::expected_layout(&header.config, &header.tasks);
    if expected.len() != header.manifest.len() {
        return Err(CheckpointError::Manifest(format!(
            "{} entries, configuration needs {}",
            header.manifest.len(),
            expected.len()
        )));
    }
    let mut offset = 0u64;
    for (want, got) in expected.iter().zip(&header.manifest) {
        if want.name != got.name || want.shape != got.shape || got.offset != offset {
            return Err(CheckpointError::Manifest(format!(
                "entry {} {:?} at offset {}, expected {} {:?} at offset {offset}",
                got.name, got.shape, got.offset, want.name, want.shape
            )));
        }
        offset += 4 * want.shape.iter().product::<usize>() as u64;
    }
    let data = &bytes[data_start..];
    if (data.len() as u64) < offset {
        return Err(CheckpointError::Truncated(format!(
            "{} parameter bytes, manifest needs {offset}",
            data.len()
        )));
    }
    if data.len() as u64 > offset {
        return Err(CheckpointError::Manifest(format!(
            "{} bytes after the last parameter",
            data.len() as u64 - offset
        )));
    }
    let mut store = ParamStore::new();
    for e in &header.manifest {
        let start = e.offset as usize;
        let n: usize = e.shape.iter().product();
        let values: Vec<f32> = data[start..start + 4 * n]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::new(e.shape.clone(), values).map_err(ModelError::from)?;
        store.add(e.name.clone(), t).map_err(ModelError::from)?;
    }
    Ok(ModelBundle::from_parts(
        header.config,
        header.tasks,
        header.norm_stats,
        store,
    )?)
}

pub fn save_checkpoint(bundle: &ModelBundle, path: &Path) -> Result<(), CheckpointError> {
    write_atomic(path, &encode(bundle)).map_err(|e| CheckpointError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<ModelBundle, CheckpointError> {
    let bytes = std::fs::read(path).map_err(|e| CheckpointError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    decode(&bytes)
}

pub fn read_header(path: &Path) -> Result<CheckpointHeader, CheckpointError> {
    let bytes = std::fs::read(path).map_err(|e| CheckpointError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(decode_header(&bytes)?.0)
}
