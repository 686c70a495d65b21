//! Leave-one-out partitioning for binary labels on dyadic data.
//!
//! Interactions carry no usable timestamps, so "last item" becomes a seeded
//! uniform draw, done separately for each class:
//!
//! 1. every user with at least two toxic interactions sends one of them to
//!    the held-out partition; the rest stay in training;
//! 2. the same for non-toxic interactions;
//! 3. every subreddit whose toxic interactions were all held out gets one of
//!    them back in training;
//! 4. the same for non-toxic interactions.
//!
//! Running the procedure again on the training part (with seed + 1) carves
//! out the validation partition. Every user and subreddit therefore keeps at
//! least one training interaction, so no evaluated pair is cold-start.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorizer::Example;
use crate::labeler::{DyadicDataset, Label};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidRecord(format!("unknown split tag {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    /// One tag per interaction, aligned with `DyadicDataset::interactions`.
    pub tags: Vec<Split>,
    pub seed: u64,
    pub with_validation: bool,
}

impl SplitAssignment {
    /// Interaction indices carrying `split`.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.tags
            .iter()
            .enumerate()
            .filter(|&(_, &t)| t == split)
            .map(|(i, _)| i)
            .collect()
    }

    /// The interactions tagged `split`, as model examples.
    pub fn examples(&self, ds: &DyadicDataset, split: Split) -> Vec<Example> {
        self.indices(split)
            .into_iter()
            .map(|i| {
                let it = &ds.interactions[i];
                Example {
                    user: it.user,
                    subreddit: it.subreddit,
                    label: it.label,
                }
            })
            .collect()
    }
}

/// Holds out one interaction per (user, class) from `pool`, then returns one
/// per (subreddit, class) whose pool interactions were all held out.
fn hold_out(
    ds: &DyadicDataset,
    tags: &mut [Split],
    pool: &[usize],
    held: Split,
    rng: &mut ChaCha8Rng,
) {
    for class in [Label::Toxic, Label::NonToxic] {
        let mut per_user: Vec<Vec<usize>> = vec![Vec::new(); ds.n_users()];
        for &i in pool {
            let it = &ds.interactions[i];
            if it.label == class {
                per_user[it.user].push(i);
            }
        }
        for items in per_user.iter().filter(|items| items.len() >= 2) {
            let pick = items[rng.random_range(0..items.len())];
            tags[pick] = held;
        }
    }
    for class in [Label::Toxic, Label::NonToxic] {
        let mut per_sub: Vec<Vec<usize>> = vec![Vec::new(); ds.n_subreddits()];
        for &i in pool {
            let it = &ds.interactions[i];
            if it.label == class {
                per_sub[it.subreddit].push(i);
            }
        }
        for items in &per_sub {
            if !items.is_empty() && items.iter().all(|&i| tags[i] == held) {
                let pick = items[rng.random_range(0..items.len())];
                tags[pick] = Split::Train;
            }
        }
    }
}

pub fn loli_binary_split(ds: &DyadicDataset, seed: u64, with_validation: bool) -> SplitAssignment {
    let mut tags = vec![Split::Train; ds.len()];
    let all: Vec<usize> = (0..ds.len()).collect();
    hold_out(
        ds,
        &mut tags,
        &all,
        Split::Test,
        &mut ChaCha8Rng::seed_from_u64(seed),
    );
    if with_validation {
        let train: Vec<usize> = all
            .into_iter()
            .filter(|&i| tags[i] == Split::Train)
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        hold_out(ds, &mut tags, &train, Split::Validation, &mut rng);
    }
    SplitAssignment {
        tags,
        seed,
        with_validation,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SplitViolation {
    TagCount { tags: usize, interactions: usize },
    UserNotInTrain(usize),
    SubredditNotInTrain(usize),
    ValidationWithoutFlag,
}

impl fmt::Display for SplitViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitViolation::TagCount { tags, interactions } => {
                write!(f, "{tags} tags for {interactions} interactions")
            }
            SplitViolation::UserNotInTrain(u) => write!(f, "user {u} has no training interaction"),
            SplitViolation::SubredditNotInTrain(s) => {
                write!(f, "subreddit {s} has no training interaction")
            }
            SplitViolation::ValidationWithoutFlag => {
                write!(
                    f,
                    "validation tags present although validation was disabled"
                )
            }
        }
    }
}

/// Checks partition completeness and cold-start freedom. An empty report
/// means the split is usable.
pub fn verify_split(ds: &DyadicDataset, split: &SplitAssignment) -> Vec<SplitViolation> {
    if split.tags.len() != ds.len() {
        return vec![SplitViolation::TagCount {
            tags: split.tags.len(),
            interactions: ds.len(),
        }];
    }
    let mut report = Vec::new();
    if !split.with_validation && split.tags.contains(&Split::Validation) {
        report.push(SplitViolation::ValidationWithoutFlag);
    }
    let mut users_present = vec![false; ds.n_users()];
    let mut subs_present = vec![false; ds.n_subreddits()];
    let mut users_train = vec![false; ds.n_users()];
    let mut subs_train = vec![false; ds.n_subreddits()];
    for (it, &tag) in ds.interactions.iter().zip(&split.tags) {
        users_present[it.user] = true;
        subs_present[it.subreddit] = true;
        if tag == Split::Train {
            users_train[it.user] = true;
            subs_train[it.subreddit] = true;
        }
    }
    for u in 0..ds.n_users() {
        if users_present[u] && !users_train[u] {
            report.push(SplitViolation::UserNotInTrain(u));
        }
    }
    for s in 0..ds.n_subreddits() {
        if subs_present[s] && !subs_train[s] {
            report.push(SplitViolation::SubredditNotInTrain(s));
        }
    }
    report
}

/// (user, class, partition) triples with more than one held-out interaction.
pub fn held_out_cap_violations(
    ds: &DyadicDataset,
    split: &SplitAssignment,
) -> Vec<(usize, Label, Split)> {
    let mut seen = HashSet::new();
    let mut dup = Vec::new();
    for (it, &tag) in ds.interactions.iter().zip(&split.tags) {
        if tag != Split::Train && !seen.insert((it.user, it.label, tag)) {
            dup.push((it.user, it.label, tag));
        }
    }
    dup
}

/// Per-partition summary, laid out like a split statistics table.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionStats {
    pub interactions: usize,
    pub non_toxic: usize,
    pub toxic: usize,
    pub unique_users: usize,
    pub unique_subreddits: usize,
}

fn stats_where(ds: &DyadicDataset, keep: impl Fn(usize) -> bool) -> PartitionStats {
    let mut users = HashSet::new();
    let mut subs = HashSet::new();
    let mut stats = PartitionStats::default();
    for (_, it) in ds.interactions.iter().enumerate().filter(|&(i, _)| keep(i)) {
        stats.interactions += 1;
        if it.label.is_toxic() {
            stats.toxic += 1;
        } else {
            stats.non_toxic += 1;
        }
        users.insert(it.user);
        subs.insert(it.subreddit);
    }
    stats.unique_users = users.len();
    stats.unique_subreddits = subs.len();
    stats
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitStats {
    pub full: PartitionStats,
    pub train: PartitionStats,
    pub validation: PartitionStats,
    pub test: PartitionStats,
}

pub fn split_stats(ds: &DyadicDataset, split: &SplitAssignment) -> SplitStats {
    let of = |s: Split| stats_where(ds, |i| split.tags[i] == s);
    SplitStats {
        full: stats_where(ds, |_| true),
        train: of(Split::Train),
        validation: of(Split::Validation),
        test: of(Split::Test),
    }
}

impl fmt::Display for SplitStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<12}{:>14}{:>12}{:>10}{:>10}{:>12}",
            "", "Interactions", "Non-toxic", "Toxic", "Users", "Subreddits"
        )?;
        for (name, s) in [
            ("Full set", &self.full),
            ("Train", &self.train),
            ("Validation", &self.validation),
            ("Test", &self.test),
        ] {
            writeln!(
                f,
                "{:<12}{:>14}{:>12}{:>10}{:>10}{:>12}",
                name, s.interactions, s.non_toxic, s.toxic, s.unique_users, s.unique_subreddits
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitRow {
    user: String,
    subreddit: String,
    split: Split,
}

pub fn write_split(path: &Path, ds: &DyadicDataset, split: &SplitAssignment) -> Result<()> {
    if split.tags.len() != ds.len() {
        return Err(Error::LengthMismatch {
            left: split.tags.len(),
            right: ds.len(),
        });
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for (it, &tag) in ds.interactions.iter().zip(&split.tags) {
        w.serialize(SplitRow {
            user: ds.users[it.user].clone(),
            subreddit: ds.subreddits[it.subreddit].clone(),
            split: tag,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a split file and aligns it with `ds`. Seed is not stored in the
/// CSV and is reported as 0.
pub fn read_split(path: &Path, ds: &DyadicDataset) -> Result<SplitAssignment> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(BufReader::new(file));
    let position: std::collections::HashMap<(&str, &str), usize> = ds
        .interactions
        .iter()
        .enumerate()
        .map(|(i, it)| {
            (
                (
                    ds.users[it.user].as_str(),
                    ds.subreddits[it.subreddit].as_str(),
                ),
                i,
            )
        })
        .collect();
    let mut tags: Vec<Option<Split>> = vec![None; ds.len()];
    for row in r.deserialize() {
        let row: SplitRow = row?;
        let i = *position
            .get(&(row.user.as_str(), row.subreddit.as_str()))
            .ok_or_else(|| Error::UnknownEntity {
                kind: "interaction",
                name: format!("{}/{}", row.user, row.subreddit),
            })?;
        if tags[i].replace(row.split).is_some() {
            return Err(Error::DuplicateInteraction {
                user: row.user,
                subreddit: row.subreddit,
            });
        }
    }
    let tags = tags
        .into_iter()
        .enumerate()
        .map(|(i, t)| {
            t.ok_or_else(|| {
                let it = &ds.interactions[i];
                Error::InvalidRecord(format!(
                    "no split tag for {}/{}",
                    ds.users[it.user], ds.subreddits[it.subreddit]
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let with_validation = tags.contains(&Split::Validation);
    Ok(SplitAssignment {
        tags,
        seed: 0,
        with_validation,
    })
}
