//! Versioned checkpoint container: parameter values, optimizer moments,
//! scaler stats, and the hash of the run configuration that produced them.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::ScalerStats;
use crate::model::ModelState;

use super::{Result, TrainingError};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    /// Full run configuration echo, so forecasting needs only the checkpoint.
    pub config: serde_json::Value,
    pub model: ModelState,
    pub scaler: ScalerStats,
    pub sensor_ids: Vec<String>,
    pub best_val_mae: f64,
}

/// Canonical hash of a configuration value. serde_json maps are sorted, so
/// equal configs hash equal regardless of key order in the file.
pub fn config_hash(config: &serde_json::Value) -> String {
    let canonical = serde_json::to_string(config).expect("config serializes");
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)
            .map_err(|e| TrainingError::Invalid(format!("checkpoint serialization: {e}")))?;
        std::fs::write(path, text).map_err(|e| {
            TrainingError::Invalid(format!("cannot write checkpoint {}: {e}", path.display()))
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            TrainingError::Invalid(format!("cannot read checkpoint {}: {e}", path.display()))
        })?;
        let ckpt: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| TrainingError::Invalid(format!("malformed checkpoint: {e}")))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(TrainingError::Invalid(format!(
                "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
                ckpt.version
            )));
        }
        Ok(ckpt)
    }
}
