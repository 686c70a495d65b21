use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::ModelParams;
use super::train::TrainConfig;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "toxcf-checkpoint/1";

/// JSON model container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config: TrainConfig,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn new(params: ModelParams, config: TrainConfig) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            config,
            params,
        }
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, checkpoint)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let ckpt: Checkpoint = serde_json::from_reader(BufReader::new(file))?;
    if ckpt.format != CHECKPOINT_FORMAT {
        return Err(Error::CheckpointFormat(ckpt.format));
    }
    let p = &ckpt.params;
    let consistent = p.user_factors.len() == p.n_users * p.dim
        && p.sub_factors.len() == p.n_subreddits * p.dim
        && p.user_bias.len() == p.dim
        && p.sub_bias.len() == p.dim
        && p.dim == ckpt.config.dim;
    if !consistent || !p.is_finite() {
        return Err(Error::InvalidRecord(format!(
            "checkpoint {} has inconsistent shapes or non-finite values",
            path.display()
        )));
    }
    Ok(ckpt)
}
