use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::{QNetwork, LAYOUT, PARAM_COUNT};
use super::train::TrainConfig;

pub const CHECKPOINT_FORMAT: &str = "rewardnet-qnetwork";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported checkpoint {format} v{version}")]
    Unsupported { format: String, version: u32 },
    #[error("checkpoint holds {found} parameters, expected {PARAM_COUNT}")]
    Shape { found: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Block {
    name: String,
    shape: [usize; 2],
    values: Vec<f64>,
}

/// Versioned text dump of every parameter block plus the training setup.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub config: TrainConfig,
    blocks: Vec<Block>,
}

impl Checkpoint {
    pub fn new(net: &QNetwork, config: &TrainConfig) -> Self {
        let blocks = LAYOUT
            .iter()
            .map(|&(name, offset, rows, cols)| Block {
                name: name.to_string(),
                shape: [rows, cols],
                values: net.params()[offset..offset + rows * cols].to_vec(),
            })
            .collect();
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            seed: config.seed,
            config: config.clone(),
            blocks,
        }
    }

    pub fn network(&self) -> Result<QNetwork, CheckpointError> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Unsupported { format: self.format.clone(), version: self.version });
        }
        let params: Vec<f64> = self.blocks.iter().flat_map(|b| b.values.iter().copied()).collect();
        let shapes_ok = self.blocks.len() == LAYOUT.len()
            && self.blocks.iter().zip(&LAYOUT).all(|(b, l)| b.shape == [l.2, l.3] && b.values.len() == l.2 * l.3);
        if !shapes_ok {
            return Err(CheckpointError::Shape { found: params.len() });
        }
        QNetwork::from_params(params).ok_or(CheckpointError::Shape { found: 0 })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self, CheckpointError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
