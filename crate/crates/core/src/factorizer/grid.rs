use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{Example, ModelParams};
use super::train::{fit, validation_gmean, TrainConfig, TrainReport};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridAxes {
    pub dims: Vec<usize>,
    pub learning_rates: Vec<f64>,
    pub l2_lambdas: Vec<f64>,
    pub batch_sizes: Vec<usize>,
}

impl Default for GridAxes {
    fn default() -> Self {
        GridAxes {
            dims: vec![32, 64, 128, 256, 512, 1024, 2048],
            learning_rates: vec![1e-2, 1e-3, 1e-4, 1e-5],
            l2_lambdas: vec![1e-2, 1e-4, 1e-6, 0.0],
            batch_sizes: vec![256, 1024, 4096, 16384],
        }
    }
}

impl GridAxes {
    /// Cartesian product, ordered by dim, learning rate, L2, batch size.
    pub fn cells(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        let mut out = Vec::new();
        for &dim in &self.dims {
            for &learning_rate in &self.learning_rates {
                for &l2_lambda in &self.l2_lambdas {
                    for &batch_size in &self.batch_sizes {
                        out.push(TrainConfig {
                            dim,
                            learning_rate,
                            l2_lambda,
                            batch_size,
                            ..base.clone()
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub config: TrainConfig,
    pub validation_gmean: f64,
    pub report: TrainReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: TrainConfig,
    pub best_validation_gmean: f64,
    #[serde(skip)]
    pub params: Option<ModelParams>,
    pub cells: Vec<CellReport>,
}

/// Fits every grid cell (in parallel) and keeps the one with the highest
/// validation G-mean of its returned parameters. Ties go to the smaller
/// dimension, then the smaller learning rate, then grid order.
///
/// Cells do not retain their parameters; the winning cell is refit, which is
/// deterministic and yields the same parameters.
pub fn grid_search(
    n_users: usize,
    n_subreddits: usize,
    train: &[Example],
    validation: &[Example],
    axes: &GridAxes,
    base: &TrainConfig,
) -> Result<GridResult> {
    if axes.dims.is_empty()
        || axes.learning_rates.is_empty()
        || axes.l2_lambdas.is_empty()
        || axes.batch_sizes.is_empty()
    {
        return Err(Error::Config(
            "every grid axis needs at least one value".into(),
        ));
    }
    let configs = axes.cells(base);
    let cells = configs
        .into_par_iter()
        .map(|config| {
            let (params, report) = fit(n_users, n_subreddits, train, validation, &config)?;
            Ok(CellReport {
                validation_gmean: validation_gmean(&params, validation),
                config,
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut best = 0;
    for (i, c) in cells.iter().enumerate().skip(1) {
        let b = &cells[best];
        let better = c.validation_gmean > b.validation_gmean
            || (c.validation_gmean == b.validation_gmean
                && (c.config.dim, c.config.learning_rate) < (b.config.dim, b.config.learning_rate));
        if better {
            best = i;
        }
    }
    let best_config = cells[best].config.clone();
    let (params, _) = fit(n_users, n_subreddits, train, validation, &best_config)?;
    Ok(GridResult {
        best: best_config,
        best_validation_gmean: cells[best].validation_gmean,
        params: Some(params),
        cells,
    })
}
