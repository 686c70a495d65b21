//! Synthetic dyadic corpora with a planted low-rank toxicity rule.
//!
//! True factors are drawn for every user and subreddit, a random subset of
//! pairs is observed, and a pair is toxic when its factor inner product
//! plus a calibrated offset is positive. Labels may then be flipped with a
//! fixed probability. Each interaction is emitted as a handful of comments
//! whose scores average strictly on the label's side of 0.5, so aggregating
//! them reproduces the observed label.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::CommentRecord;
use crate::error::{Error, Result};
use crate::labeler::Label;

/// Largest tolerated gap between realized and target toxic rate.
pub const CALIBRATION_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_users: usize,
    pub m_subs: usize,
    /// Rank of the planted factors.
    pub d_true: usize,
    /// Target fraction of toxic interactions before label noise.
    pub toxic_rate_target: f64,
    /// Fraction of the user x subreddit space that is observed.
    pub density: f64,
    pub noise_flip_prob: f64,
    /// Inclusive range of comments per interaction.
    pub comments_per_interaction: (usize, usize),
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_users: 2000,
            m_subs: 100,
            d_true: 2,
            toxic_rate_target: 0.1,
            density: 0.0677,
            noise_flip_prob: 0.05,
            comments_per_interaction: (1, 4),
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_users == 0 || self.m_subs == 0 || self.d_true == 0 {
            return bad("n_users, m_subs and d_true must be positive".into());
        }
        if !(self.toxic_rate_target > 0.0 && self.toxic_rate_target < 1.0) {
            return bad(format!(
                "toxic_rate_target {} outside (0, 1)",
                self.toxic_rate_target
            ));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return bad(format!("density {} outside (0, 1]", self.density));
        }
        if !(0.0..0.5).contains(&self.noise_flip_prob) {
            return bad(format!(
                "noise_flip_prob {} outside [0, 0.5)",
                self.noise_flip_prob
            ));
        }
        let (lo, hi) = self.comments_per_interaction;
        if lo == 0 || lo > hi {
            return bad(format!(
                "comments_per_interaction ({lo}, {hi}) is not a range of positive counts"
            ));
        }
        if self.observed_pairs() < self.n_users + self.m_subs {
            return bad(format!(
                "density too low: {} observed pairs for {} users and {} subreddits",
                self.observed_pairs(),
                self.n_users,
                self.m_subs
            ));
        }
        Ok(())
    }

    pub fn observed_pairs(&self) -> usize {
        (self.density * (self.n_users * self.m_subs) as f64).round() as usize
    }

    pub fn user_name(u: usize) -> String {
        format!("u{u}")
    }

    pub fn sub_name(s: usize) -> String {
        format!("s{s}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedInteraction {
    pub user: String,
    pub subreddit: String,
    /// Label from the planted rule.
    pub clean_label: Label,
    /// Label after noise; the emitted comments aggregate to this one.
    pub observed_label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: SynthSpec,
    pub user_factors: Vec<Vec<f64>>,
    pub sub_factors: Vec<Vec<f64>>,
    /// Added to the factor inner product before thresholding at 0.
    pub offset: f64,
    pub clean_toxic_rate: f64,
    pub observed_toxic_rate: f64,
    pub interactions: Vec<PlantedInteraction>,
}

fn gaussian_rows(rows: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(rng)).collect())
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Comment scores whose mean lies on `label`'s side of 0.5 by a clear
/// margin, drawn from Beta distributions that pile up near 0 and 1.
fn comment_scores(label: Label, count: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let dist = match label {
        Label::Toxic => Beta::new(4.0, 0.6),
        Label::NonToxic => Beta::new(0.6, 4.0),
    }
    .expect("valid beta parameters");
    loop {
        let scores: Vec<f64> = (0..count).map(|_| dist.sample(rng)).collect();
        let mean = scores.iter().sum::<f64>() / count as f64;
        let margin = match label {
            Label::Toxic => mean - 0.5,
            Label::NonToxic => 0.5 - mean,
        };
        if margin > 1e-6 {
            return scores;
        }
    }
}

/// `observed_pairs()` distinct (user, subreddit) pairs drawn uniformly, sorted.
fn sample_pairs(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let m = spec.m_subs;
    let mut flat = index::sample(rng, spec.n_users * m, spec.observed_pairs()).into_vec();
    flat.sort_unstable();
    flat.into_iter().map(|i| (i / m, i % m)).collect()
}

pub fn generate(spec: &SynthSpec) -> Result<(Vec<CommentRecord>, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let user_factors = gaussian_rows(spec.n_users, spec.d_true, &mut rng);
    let sub_factors = gaussian_rows(spec.m_subs, spec.d_true, &mut rng);

    let pairs = sample_pairs(spec, &mut rng);
    let k = pairs.len();
    let scores: Vec<f64> = pairs
        .iter()
        .map(|&(u, s)| dot(&user_factors[u], &sub_factors[s]))
        .collect();

    // offset between the n_toxic-th and (n_toxic+1)-th largest scores
    let mut sorted = scores.clone();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let n_toxic = (spec.toxic_rate_target * k as f64).round() as usize;
    let offset = match n_toxic {
        0 => -(sorted[0] + 1.0),
        n if n >= k => -(sorted[k - 1] - 1.0),
        n => -(sorted[n - 1] + sorted[n]) / 2.0,
    };
    let clean: Vec<Label> = scores
        .iter()
        .map(|z| Label::from(z + offset > 0.0))
        .collect();
    let clean_toxic_rate = clean.iter().filter(|l| l.is_toxic()).count() as f64 / k as f64;
    if (clean_toxic_rate - spec.toxic_rate_target).abs() > CALIBRATION_TOLERANCE {
        return Err(Error::Calibration {
            realized: clean_toxic_rate,
            target: spec.toxic_rate_target,
        });
    }

    let mut comments = Vec::new();
    let mut interactions = Vec::with_capacity(k);
    let (lo, hi) = spec.comments_per_interaction;
    for (&(u, s), &clean_label) in pairs.iter().zip(&clean) {
        let observed_label = if rng.random_bool(spec.noise_flip_prob) {
            Label::from(!clean_label.is_toxic())
        } else {
            clean_label
        };
        let count = rng.random_range(lo..=hi);
        for tox in comment_scores(observed_label, count, &mut rng) {
            comments.push(CommentRecord {
                comment_id: format!("c{}", comments.len()),
                user: SynthSpec::user_name(u),
                subreddit: SynthSpec::sub_name(s),
                created_utc: None,
                body: "synthetic comment".to_string(),
                toxicity: Some(tox),
            });
        }
        interactions.push(PlantedInteraction {
            user: SynthSpec::user_name(u),
            subreddit: SynthSpec::sub_name(s),
            clean_label,
            observed_label,
        });
    }
    let observed_toxic_rate = interactions
        .iter()
        .filter(|i| i.observed_label.is_toxic())
        .count() as f64
        / k as f64;

    Ok((
        comments,
        GroundTruth {
            spec: spec.clone(),
            user_factors,
            sub_factors,
            offset,
            clean_toxic_rate,
            observed_toxic_rate,
            interactions,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeler::aggregate_interactions;

    fn small() -> SynthSpec {
        SynthSpec {
            n_users: 300,
            m_subs: 30,
            density: 0.1,
            seed: 4,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn noiseless_labels_survive_aggregation() {
        let spec = SynthSpec {
            noise_flip_prob: 0.0,
            ..small()
        };
        let (comments, truth) = generate(&spec).unwrap();
        let records = aggregate_interactions(&comments).unwrap();
        assert_eq!(records.len(), truth.interactions.len());
        for (r, p) in records.iter().zip(&truth.interactions) {
            assert_eq!((&r.user, &r.subreddit), (&p.user, &p.subreddit));
            assert_eq!(r.label, p.clean_label);
        }
    }

    #[test]
    fn calibration_hits_the_target() {
        let spec = SynthSpec {
            n_users: 500,
            m_subs: 50,
            density: 0.3,
            noise_flip_prob: 0.0,
            ..SynthSpec::default()
        };
        let (_, truth) = generate(&spec).unwrap();
        assert!((0.08..=0.12).contains(&truth.observed_toxic_rate));
        assert!((0.08..=0.12).contains(&truth.clean_toxic_rate));
    }

    #[test]
    fn same_seed_same_output() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(
            serde_json::to_string(&a.0).unwrap(),
            serde_json::to_string(&b.0).unwrap()
        );
        assert_eq!(a.1, b.1);
        let c = generate(&SynthSpec { seed: 5, ..small() }).unwrap();
        assert_ne!(a.1.interactions, c.1.interactions);
    }

    #[test]
    fn infeasible_calibration_is_reported() {
        // four interactions cannot be 30% toxic within tolerance
        let spec = SynthSpec {
            n_users: 2,
            m_subs: 2,
            density: 1.0,
            toxic_rate_target: 0.3,
            ..SynthSpec::default()
        };
        assert!(matches!(generate(&spec), Err(Error::Calibration { .. })));
    }

    #[test]
    fn spec_validation() {
        assert!(SynthSpec::default().validate().is_ok());
        assert!(SynthSpec {
            density: 0.001,
            ..SynthSpec::default()
        }
        .validate()
        .is_err());
        assert!(SynthSpec {
            noise_flip_prob: 0.5,
            ..SynthSpec::default()
        }
        .validate()
        .is_err());
        assert!(SynthSpec {
            comments_per_interaction: (3, 2),
            ..SynthSpec::default()
        }
        .validate()
        .is_err());
        assert!(SynthSpec {
            toxic_rate_target: 1.0,
            ..SynthSpec::default()
        }
        .validate()
        .is_err());
    }
}
