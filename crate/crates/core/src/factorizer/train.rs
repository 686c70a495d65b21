use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::classify;
use super::model::{accumulate_gradients, bce_loss, init_params, predict, Example, ModelParams};
use crate::error::{Error, Result};
use crate::evaluation::evaluate_labels;
use crate::labeler::Label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Latent dimension.
    pub dim: usize,
    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Minimum validation-loss decrease that counts as an improvement.
    pub es_tolerance: f64,
    /// Epochs without improvement before stopping.
    pub es_patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 128,
            learning_rate: 1e-5,
            l2_lambda: 1e-4,
            batch_size: 1024,
            max_epochs: 1000,
            es_tolerance: 0.005,
            es_patience: 7,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.dim == 0 {
            return bad("dim must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return bad("l2_lambda must be non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.es_patience == 0 {
            return bad("es_patience must be at least 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return bad("epsilon must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 0 is the initial state before any update.
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
    pub validation_gmean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainReport {
    /// Number of completed training epochs.
    pub fn epochs_run(&self) -> usize {
        self.epochs.len().saturating_sub(1)
    }
}

pub(crate) fn validation_gmean(params: &ModelParams, validation: &[Example]) -> f64 {
    let truth: Vec<Label> = validation.iter().map(|e| e.label).collect();
    let pred: Vec<Label> = validation
        .iter()
        .map(|e| classify(predict(params, e.user, e.subreddit)))
        .collect();
    evaluate_labels(&truth, &pred)
        .map(|m| m.gmean)
        .unwrap_or(0.0)
}

fn check_indices(examples: &[Example], n_users: usize, n_subreddits: usize) -> Result<()> {
    for e in examples {
        if e.user >= n_users || e.subreddit >= n_subreddits {
            return Err(Error::Config(format!(
                "example ({}, {}) outside a {n_users}x{n_subreddits} model",
                e.user, e.subreddit
            )));
        }
    }
    Ok(())
}

/// Trains from a seeded initialization.
///
/// The training order is reshuffled every epoch. After each epoch the
/// validation BCE is compared with the best seen so far; only a decrease of
/// more than `es_tolerance` counts as improvement, and after `es_patience`
/// epochs without one the parameters of the best epoch are restored. A run
/// that exhausts `max_epochs` returns its final parameters. An empty
/// validation set disables early stopping.
pub fn fit(
    n_users: usize,
    n_subreddits: usize,
    train: &[Example],
    validation: &[Example],
    config: &TrainConfig,
) -> Result<(ModelParams, TrainReport)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyTrainSet);
    }
    check_indices(train, n_users, n_subreddits)?;
    check_indices(validation, n_users, n_subreddits)?;

    let mut params = init_params(n_users, n_subreddits, config.dim, config.seed);
    let mut state = AdamState::new(&params);
    let mut grads = params.zeros_like();
    let mut order: Vec<Example> = train.to_vec();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(1);

    let record = |epoch: usize, params: &ModelParams| EpochRecord {
        epoch,
        train_loss: bce_loss(params, train),
        validation_loss: (!validation.is_empty()).then(|| bce_loss(params, validation)),
        validation_gmean: (!validation.is_empty()).then(|| validation_gmean(params, validation)),
    };

    let initial = record(0, &params);
    let mut best_loss = initial.validation_loss;
    let mut best_epoch = 0;
    let mut best_params = params.clone();
    let mut stale = 0;
    let mut stopped_early = false;
    let mut epochs = vec![initial];

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(config.batch_size) {
            accumulate_gradients(&params, batch, config.l2_lambda, &mut grads);
            adam_step(&mut params, &grads, &mut state, config);
        }
        if !params.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        let rec = record(epoch, &params);
        let val = rec.validation_loss;
        epochs.push(rec);

        match (val, best_loss) {
            (Some(loss), Some(best)) => {
                if best - loss > config.es_tolerance {
                    best_loss = Some(loss);
                    best_epoch = epoch;
                    best_params.clone_from(&params);
                    stale = 0;
                } else {
                    stale += 1;
                    if stale >= config.es_patience {
                        stopped_early = true;
                        break;
                    }
                }
            }
            _ => best_epoch = epoch,
        }
    }

    if stopped_early {
        params = best_params;
    }
    log::debug!(
        "fit d={} lr={} l2={} bs={}: {} epochs, best {}",
        config.dim,
        config.learning_rate,
        config.l2_lambda,
        config.batch_size,
        epochs.len() - 1,
        best_epoch
    );
    Ok((
        params,
        TrainReport {
            epochs,
            best_epoch,
            stopped_early,
        },
    ))
}
