//! Stage bookkeeping: path resolution, prerequisite checks, JSON output and
//! the manifest of digests.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A stage input that does not exist yet.
#[derive(Debug)]
pub struct MissingArtifact {
    pub what: &'static str,
    pub path: PathBuf,
    pub stage: &'static str,
}

impl fmt::Display for MissingArtifact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "missing {} ({}); run `toxcf {}` first",
            self.what,
            self.path.display(),
            self.stage
        )
    }
}

impl std::error::Error for MissingArtifact {}

/// Input or output data that breaks a pipeline invariant.
#[derive(Debug)]
pub struct InvalidArtifact(pub String);

impl fmt::Display for InvalidArtifact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InvalidArtifact {}

pub struct Workspace {
    pub out_dir: PathBuf,
}

impl Workspace {
    pub fn new(out_dir: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&out_dir)
            .with_context(|| format!("creating {}", out_dir.display()))?;
        Ok(Workspace { out_dir })
    }

    pub fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out_dir.join(p)
        }
    }

    /// Name recorded in the manifest: relative to the output directory when
    /// the file lives inside it.
    fn display_name(&self, p: &Path) -> String {
        p.strip_prefix(&self.out_dir)
            .unwrap_or(p)
            .to_string_lossy()
            .replace('\\', "/")
    }
}

pub fn require(path: &Path, what: &'static str, stage: &'static str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(MissingArtifact {
            what,
            path: path.to_path_buf(),
            stage,
        }
        .into())
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text)
        .map_err(|e| InvalidArtifact(format!("{}: {e}", path.display())).into())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct StageRecord {
    pub seed: Option<u64>,
    pub parameters: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub stages: BTreeMap<String, StageRecord>,
}

impl Default for Manifest {
    fn default() -> Self {
        Manifest {
            tool: "toxcf".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            stages: BTreeMap::new(),
        }
    }
}

/// Records one stage's inputs and outputs (with SHA-256 digests) in the
/// manifest, replacing any earlier record of the same stage.
pub fn record_stage(
    ws: &Workspace,
    manifest_path: &Path,
    stage: &str,
    seed: Option<u64>,
    parameters: serde_json::Value,
    inputs: &[&Path],
    outputs: &[&Path],
) -> Result<()> {
    let mut manifest: Manifest = if manifest_path.exists() {
        read_json(manifest_path)?
    } else {
        Manifest::default()
    };
    manifest.version = env!("CARGO_PKG_VERSION").to_string();
    let digests = |paths: &[&Path]| -> Result<BTreeMap<String, String>> {
        paths
            .iter()
            .map(|p| Ok((ws.display_name(p), sha256_file(p)?)))
            .collect()
    };
    let record = StageRecord {
        seed,
        parameters,
        inputs: digests(inputs)?,
        outputs: digests(outputs)?,
    };
    manifest.stages.insert(stage.to_string(), record);
    write_json(manifest_path, &manifest)
}
