use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use toxcf::baselines::Baseline;
use toxcf::corpus::KeywordConfig;
use toxcf::factorizer::{GridAxes, TrainConfig};
use toxcf::synth::SynthSpec;

/// Artifact file names, resolved against `--out-dir` unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArtifactPaths {
    pub comments: PathBuf,
    pub ground_truth: PathBuf,
    pub filtered: PathBuf,
    pub filter_stats: PathBuf,
    pub interactions: PathBuf,
    pub index: PathBuf,
    pub split: PathBuf,
    pub split_stats: PathBuf,
    pub models: PathBuf,
    pub train_summary: PathBuf,
    pub grid: PathBuf,
    pub best_config: PathBuf,
    pub evaluation: PathBuf,
    pub report_json: PathBuf,
    pub report_text: PathBuf,
    pub histogram_csv: PathBuf,
    pub histogram_svg: PathBuf,
    pub manifest: PathBuf,
}

impl Default for ArtifactPaths {
    fn default() -> Self {
        ArtifactPaths {
            comments: "comments.jsonl".into(),
            ground_truth: "ground_truth.json".into(),
            filtered: "filtered.jsonl".into(),
            filter_stats: "filter_stats.json".into(),
            interactions: "interactions.csv".into(),
            index: "index.json".into(),
            split: "split.csv".into(),
            split_stats: "split_stats.txt".into(),
            models: "models".into(),
            train_summary: "train_summary.json".into(),
            grid: "grid.json".into(),
            best_config: "best_config.json".into(),
            evaluation: "evaluation.json".into(),
            report_json: "report.json".into(),
            report_text: "report.txt".into(),
            histogram_csv: "toxicity_histogram.csv".into(),
            histogram_svg: "toxicity_histogram.svg".into(),
            manifest: "manifest.json".into(),
        }
    }
}

/// Everything a pipeline run can be configured with. Loaded from a JSON file
/// given by `--config`; command-line flags take precedence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub paths: ArtifactPaths,
    pub keywords: KeywordConfig,
    pub train: TrainConfig,
    pub grid: GridAxes,
    /// Trained models per `train` invocation, seeded consecutively.
    pub train_runs: usize,
    pub baselines: Vec<Baseline>,
    pub baseline_runs: usize,
    pub histogram_bins: usize,
    pub synth: SynthSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            paths: ArtifactPaths::default(),
            keywords: KeywordConfig::default(),
            train: TrainConfig::default(),
            grid: GridAxes::default(),
            train_runs: 5,
            baselines: Baseline::ALL.to_vec(),
            baseline_runs: 5,
            histogram_bins: 50,
            synth: SynthSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(config)
    }
}
