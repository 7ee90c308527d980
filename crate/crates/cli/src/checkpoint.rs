//! Versioned JSON checkpoints for trained network parameters and, after the
//! joint fine-tuning phase, the cluster centres that go with them.

use std::path::Path;

use decloc_core::autoenc::NetworkParams;
use decloc_core::cluster::Centroids;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Bump on any incompatible change to the serialized layout.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub params: NetworkParams,
    /// Present only for checkpoints taken after fine-tuning.
    pub centroids: Option<Centroids>,
}

impl Checkpoint {
    pub fn new(params: NetworkParams, centroids: Option<Centroids>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            params,
            centroids,
        }
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), CliError> {
    let io = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    let json = serde_json::to_vec_pretty(ckpt)
        .map_err(|e| CliError::Invalid(format!("cannot serialize checkpoint: {e}")))?;
    std::fs::write(path, json).map_err(io)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    let bytes = std::fs::read(path).map_err(|source| CliError::Ingest {
        path: path.to_path_buf(),
        source,
    })?;
    let ckpt: Checkpoint = serde_json::from_slice(&bytes).map_err(|e| CliError::Validation {
        file: path.to_path_buf(),
        line: e.line() as u64,
        message: e.to_string(),
    })?;
    if ckpt.format_version != FORMAT_VERSION {
        return Err(CliError::Invalid(format!(
            "checkpoint format version {} is not supported (expected {})",
            ckpt.format_version, FORMAT_VERSION
        )));
    }
    Ok(ckpt)
}
