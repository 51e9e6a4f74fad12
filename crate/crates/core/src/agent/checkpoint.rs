//! Self-describing JSON checkpoint container for a [`QNetwork`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dqn::TrainConfig;
use super::mlp::{Dense, QNetwork};
use crate::error::{Error, Result};

pub const FORMAT: &str = "rebal-qnetwork";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    /// `[input, hidden..., output]`.
    pub shape: Vec<usize>,
    pub stations: usize,
    pub seed: u64,
    pub config: TrainConfig,
    pub layers: Vec<Dense>,
}

impl Checkpoint {
    pub fn new(net: &QNetwork, config: &TrainConfig, seed: u64) -> Self {
        Checkpoint {
            format: FORMAT.to_string(),
            version: VERSION,
            shape: net.shape(),
            stations: net.input_dim().saturating_sub(1),
            seed,
            config: config.clone(),
            layers: net.layers().to_vec(),
        }
    }

    pub fn network(&self) -> Result<QNetwork> {
        let net = QNetwork::from_layers(self.layers.clone()).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if net.shape() != self.shape {
            return Err(Error::Checkpoint(format!(
                "declared shape {:?} disagrees with stored layers {:?}",
                self.shape,
                net.shape()
            )));
        }
        Ok(net)
    }

    /// Rejects checkpoints trained for a different station count.
    pub fn expect_stations(&self, n: usize) -> Result<()> {
        let want_out = n * n.saturating_sub(1);
        let (input, output) = (self.shape[0], *self.shape.last().expect("non-empty shape"));
        if input != n + 1 || output != want_out {
            return Err(Error::Checkpoint(format!(
                "shape mismatch: checkpoint is for {} stations (input {input}, output {output}), run has {n} stations",
                self.stations
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("unreadable checkpoint: {e}")))?;
        if ckpt.format != FORMAT {
            return Err(Error::Checkpoint(format!("unknown format `{}`", ckpt.format)));
        }
        if ckpt.version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {} (expected {VERSION})",
                ckpt.version
            )));
        }
        if ckpt.shape.len() < 2 {
            return Err(Error::Checkpoint("shape needs at least input and output".into()));
        }
        ckpt.network()?;
        Ok(ckpt)
    }
}

pub fn save_checkpoint(net: &QNetwork, config: &TrainConfig, seed: u64, path: &Path) -> Result<()> {
    std::fs::write(path, Checkpoint::new(net, config, seed).to_json()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_json(&text)
}
