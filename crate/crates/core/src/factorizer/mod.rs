//! Biased matrix factorization for interaction toxicity.
//!
//! The toxicity probability of user `u` in subreddit `s` is
//! `sigmoid(<U[u] + b_users, V[s] + b_subs>)`, where `b_users` and `b_subs`
//! are single vectors shared by all users and all subreddits. Training
//! minimizes mean binary cross-entropy plus an L2 penalty over every
//! parameter with mini-batch Adam and early stopping on validation loss.

mod adam;
mod checkpoint;
mod grid;
mod model;
mod train;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT};
pub use grid::{grid_search, CellReport, GridAxes, GridResult};
pub use model::{
    batch_gradients, batch_loss, bce_loss, init_params, predict, sigmoid, Example, ModelParams,
    PROB_CLIP,
};
pub use train::{fit, EpochRecord, TrainConfig, TrainReport};

use crate::labeler::Label;

/// Hard label from a predicted probability, matching the interaction label
/// rule (strictly above one half is toxic).
pub fn classify(probability: f64) -> Label {
    Label::from(probability > 0.5)
}
