//! Predictive modelling of toxicity in user–subcommunity interactions.
//!
//! The crate covers the whole offline workflow:
//!
//! - [`corpus`]: read toxicity-scored comment dumps and drop low-activity
//!   subcommunities and generic (off-topic, unrepresentative) comments.
//! - [`labeler`]: group comments into user–subcommunity interactions and
//!   binarize their mean toxicity.
//! - [`splitter`]: per-class leave-one-out partitioning that never produces
//!   cold-start users or subcommunities.
//! - [`factorizer`]: the biased matrix-factorization classifier, its Adam
//!   training loop with early stopping, and grid search.
//! - [`baselines`]: the NON / RND / USR reference predictors.
//! - [`evaluation`]: sensitivity, specificity, G-mean, multi-run aggregation
//!   and the interaction-toxicity histogram.
//! - [`synth`]: planted low-rank datasets for desk-scale verification.

pub mod baselines;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod factorizer;
pub mod labeler;
pub mod splitter;
pub mod synth;

pub use error::{Error, Result};
