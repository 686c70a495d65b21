//! Reference predictors.
//!
//! - NON: everything is non-toxic (what a platform without prediction does).
//! - RND: toxic with probability equal to the training toxic proportion.
//! - USR: toxic with probability equal to the user's training toxic ratio.
//!
//! RND and USR sample; they do not threshold.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorizer::Example;
use crate::labeler::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    Non,
    Rnd,
    Usr,
}

impl Baseline {
    pub const ALL: [Baseline; 3] = [Baseline::Non, Baseline::Rnd, Baseline::Usr];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::Non => "NON",
            Baseline::Rnd => "RND",
            Baseline::Usr => "USR",
        }
    }
}

impl std::str::FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "non" => Ok(Baseline::Non),
            "rnd" => Ok(Baseline::Rnd),
            "usr" => Ok(Baseline::Usr),
            other => Err(Error::Config(format!("unknown baseline {other:?}"))),
        }
    }
}

pub fn predict_non(len: usize) -> Vec<Label> {
    vec![Label::NonToxic; len]
}

fn bernoulli(probabilities: impl Iterator<Item = f64>, seed: u64) -> Vec<Label> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    probabilities
        .map(|p| Label::from(rng.random_bool(p.clamp(0.0, 1.0))))
        .collect()
}

pub fn predict_rnd(len: usize, p_toxic: f64, seed: u64) -> Vec<Label> {
    bernoulli(std::iter::repeat_n(p_toxic, len), seed)
}

/// Toxic proportion of a set of examples (0 for an empty set).
pub fn toxic_proportion(train: &[Example]) -> f64 {
    if train.is_empty() {
        return 0.0;
    }
    train.iter().filter(|e| e.label.is_toxic()).count() as f64 / train.len() as f64
}

/// Per-user toxic ratio over training interactions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UserToxicityProfile {
    ratios: HashMap<usize, f64>,
}

impl UserToxicityProfile {
    pub fn ratio(&self, user: usize) -> Option<f64> {
        self.ratios.get(&user).copied()
    }

    pub fn len(&self) -> usize {
        self.ratios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratios.is_empty()
    }
}

pub fn build_user_profile(train: &[Example]) -> UserToxicityProfile {
    let mut counts: HashMap<usize, (usize, usize)> = HashMap::new();
    for e in train {
        let c = counts.entry(e.user).or_default();
        c.1 += 1;
        if e.label.is_toxic() {
            c.0 += 1;
        }
    }
    UserToxicityProfile {
        ratios: counts
            .into_iter()
            .map(|(u, (toxic, total))| (u, toxic as f64 / total as f64))
            .collect(),
    }
}

pub fn predict_usr(
    users: &[usize],
    profile: &UserToxicityProfile,
    seed: u64,
) -> Result<Vec<Label>> {
    let probs = users
        .iter()
        .map(|&u| profile.ratio(u).ok_or(Error::UnknownUser(u)))
        .collect::<Result<Vec<_>>>()?;
    Ok(bernoulli(probs.into_iter(), seed))
}

/// Predictions of `baseline` on `targets`, using `train` for its statistics.
pub fn predict_baseline(
    baseline: Baseline,
    train: &[Example],
    targets: &[Example],
    seed: u64,
) -> Result<Vec<Label>> {
    match baseline {
        Baseline::Non => Ok(predict_non(targets.len())),
        Baseline::Rnd => Ok(predict_rnd(targets.len(), toxic_proportion(train), seed)),
        Baseline::Usr => {
            let users: Vec<usize> = targets.iter().map(|e| e.user).collect();
            predict_usr(&users, &build_user_profile(train), seed)
        }
    }
}
