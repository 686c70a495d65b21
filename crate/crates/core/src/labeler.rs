//! Interaction aggregation and binary labelling.
//!
//! An interaction is every comment one user posted in one subreddit. Its
//! label is toxic iff the mean comment toxicity exceeds 0.5; a mean of
//! exactly 0.5 is non-toxic.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus::CommentRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    NonToxic,
    Toxic,
}

impl Label {
    pub fn from_mean(mean_toxicity: f64) -> Self {
        if mean_toxicity > 0.5 {
            Label::Toxic
        } else {
            Label::NonToxic
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn as_f64(self) -> f64 {
        self.as_u8() as f64
    }

    pub fn is_toxic(self) -> bool {
        self == Label::Toxic
    }
}

impl From<bool> for Label {
    fn from(toxic: bool) -> Self {
        if toxic {
            Label::Toxic
        } else {
            Label::NonToxic
        }
    }
}

impl TryFrom<u8> for Label {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Label::NonToxic),
            1 => Ok(Label::Toxic),
            other => Err(Error::InvalidRecord(format!("label {other} is not 0 or 1"))),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.as_u8())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = u8::deserialize(d)?;
        Label::try_from(v).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub user: String,
    pub subreddit: String,
    pub comment_count: usize,
    pub mean_toxicity: f64,
    pub label: Label,
}

/// Neumaier-compensated sum over the values in ascending order, so the result
/// does not depend on input order.
fn order_free_mean(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &x in values.iter() {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    (sum + comp) / values.len() as f64
}

/// One record per distinct (user, subreddit) pair, in first-appearance order.
pub fn aggregate_interactions(comments: &[CommentRecord]) -> Result<Vec<InteractionRecord>> {
    let mut slot: HashMap<(&str, &str), usize> = HashMap::new();
    let mut groups: Vec<(&str, &str, Vec<f64>)> = Vec::new();
    for c in comments {
        let tox = c.toxicity.ok_or_else(|| Error::MissingToxicity {
            comment_id: c.comment_id.clone(),
        })?;
        let key = (c.user.as_str(), c.subreddit.as_str());
        let idx = *slot.entry(key).or_insert_with(|| {
            groups.push((key.0, key.1, Vec::new()));
            groups.len() - 1
        });
        groups[idx].2.push(tox);
    }
    Ok(groups
        .into_iter()
        .map(|(user, subreddit, mut toxicities)| {
            let mean_toxicity = order_free_mean(&mut toxicities);
            InteractionRecord {
                user: user.to_string(),
                subreddit: subreddit.to_string(),
                comment_count: toxicities.len(),
                mean_toxicity,
                label: Label::from_mean(mean_toxicity),
            }
        })
        .collect())
}

/// An interaction in index space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interaction {
    pub user: usize,
    pub subreddit: usize,
    pub label: Label,
    pub mean_toxicity: f64,
    pub comment_count: usize,
}

/// Interactions over contiguous user and subreddit indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DyadicDataset {
    pub users: Vec<String>,
    pub subreddits: Vec<String>,
    pub interactions: Vec<Interaction>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub users: Vec<String>,
    pub subreddits: Vec<String>,
}

fn intern(names: &mut Vec<String>, lookup: &mut HashMap<String, usize>, name: &str) -> usize {
    if let Some(&i) = lookup.get(name) {
        return i;
    }
    names.push(name.to_string());
    lookup.insert(name.to_string(), names.len() - 1);
    names.len() - 1
}

/// Assigns indices in first-appearance order.
pub fn index_dataset(records: &[InteractionRecord]) -> Result<DyadicDataset> {
    let mut ds = DyadicDataset::default();
    let mut user_ix = HashMap::new();
    let mut sub_ix = HashMap::new();
    for r in records {
        let user = intern(&mut ds.users, &mut user_ix, &r.user);
        let subreddit = intern(&mut ds.subreddits, &mut sub_ix, &r.subreddit);
        ds.interactions.push(Interaction {
            user,
            subreddit,
            label: r.label,
            mean_toxicity: r.mean_toxicity,
            comment_count: r.comment_count,
        });
    }
    ds.check_unique_pairs()?;
    Ok(ds)
}

impl DyadicDataset {
    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_subreddits(&self) -> usize {
        self.subreddits.len()
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    pub fn index(&self) -> DatasetIndex {
        DatasetIndex {
            users: self.users.clone(),
            subreddits: self.subreddits.clone(),
        }
    }

    /// Builds a dataset using a fixed index instead of first appearance.
    pub fn with_index(records: &[InteractionRecord], index: DatasetIndex) -> Result<Self> {
        let user_ix: HashMap<&str, usize> = index
            .users
            .iter()
            .enumerate()
            .map(|(i, u)| (u.as_str(), i))
            .collect();
        let sub_ix: HashMap<&str, usize> = index
            .subreddits
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        if user_ix.len() != index.users.len() || sub_ix.len() != index.subreddits.len() {
            return Err(Error::Config(
                "dataset index contains duplicate names".into(),
            ));
        }
        let mut interactions = Vec::with_capacity(records.len());
        for r in records {
            let user = *user_ix
                .get(r.user.as_str())
                .ok_or_else(|| Error::UnknownEntity {
                    kind: "user",
                    name: r.user.clone(),
                })?;
            let subreddit =
                *sub_ix
                    .get(r.subreddit.as_str())
                    .ok_or_else(|| Error::UnknownEntity {
                        kind: "subreddit",
                        name: r.subreddit.clone(),
                    })?;
            interactions.push(Interaction {
                user,
                subreddit,
                label: r.label,
                mean_toxicity: r.mean_toxicity,
                comment_count: r.comment_count,
            });
        }
        let ds = DyadicDataset {
            users: index.users,
            subreddits: index.subreddits,
            interactions,
        };
        ds.check_unique_pairs()?;
        Ok(ds)
    }

    fn check_unique_pairs(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::with_capacity(self.interactions.len());
        for it in &self.interactions {
            if !seen.insert((it.user, it.subreddit)) {
                return Err(Error::DuplicateInteraction {
                    user: self.users[it.user].clone(),
                    subreddit: self.subreddits[it.subreddit].clone(),
                });
            }
        }
        Ok(())
    }

    pub fn records(&self) -> Vec<InteractionRecord> {
        self.interactions
            .iter()
            .map(|it| InteractionRecord {
                user: self.users[it.user].clone(),
                subreddit: self.subreddits[it.subreddit].clone(),
                comment_count: it.comment_count,
                mean_toxicity: it.mean_toxicity,
                label: it.label,
            })
            .collect()
    }

    pub fn toxic_count(&self) -> usize {
        self.interactions
            .iter()
            .filter(|it| it.label.is_toxic())
            .count()
    }
}

pub fn write_interactions(path: &Path, records: &[InteractionRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_interactions(path: &Path) -> Result<Vec<InteractionRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(BufReader::new(file));
    let mut out = Vec::new();
    for rec in r.deserialize() {
        let rec: InteractionRecord = rec?;
        if rec.comment_count == 0 || !(0.0..=1.0).contains(&rec.mean_toxicity) {
            return Err(Error::InvalidRecord(format!(
                "interaction ({}, {}) has count {} and mean {}",
                rec.user, rec.subreddit, rec.comment_count, rec.mean_toxicity
            )));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_index(path: &Path, index: &DatasetIndex) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(file), index)?;
    Ok(())
}

pub fn read_index(path: &Path) -> Result<DatasetIndex> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scored(id: usize, user: &str, sub: &str, tox: f64) -> CommentRecord {
        CommentRecord {
            comment_id: format!("c{id}"),
            user: user.into(),
            subreddit: sub.into(),
            created_utc: None,
            body: String::new(),
            toxicity: Some(tox),
        }
    }

    fn group(toxicities: &[f64]) -> InteractionRecord {
        let cs: Vec<_> = toxicities
            .iter()
            .enumerate()
            .map(|(i, &t)| scored(i, "u", "s", t))
            .collect();
        let mut out = aggregate_interactions(&cs).unwrap();
        assert_eq!(out.len(), 1);
        out.pop().unwrap()
    }

    #[test]
    fn label_examples() {
        let r = group(&[0.9, 0.8, 0.95]);
        assert!((r.mean_toxicity - 2.65 / 3.0).abs() < 1e-12);
        assert_eq!(r.label, Label::Toxic);
        assert_eq!(r.comment_count, 3);

        let r = group(&[1.0, 0.0]);
        assert_eq!(r.mean_toxicity, 0.5);
        assert_eq!(r.label, Label::NonToxic);

        assert_eq!(group(&[0.51]).label, Label::Toxic);
    }

    #[test]
    fn missing_toxicity_names_the_comment() {
        let mut c = scored(7, "u", "s", 0.0);
        c.toxicity = None;
        match aggregate_interactions(&[c]) {
            Err(Error::MissingToxicity { comment_id }) => assert_eq!(comment_id, "c7"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn indexing_counts_distinct_entities() {
        let cs = vec![
            scored(0, "a", "x", 0.1),
            scored(1, "b", "x", 0.9),
            scored(2, "a", "x", 0.3),
        ];
        let ds = index_dataset(&aggregate_interactions(&cs).unwrap()).unwrap();
        assert_eq!((ds.n_users(), ds.n_subreddits(), ds.len()), (2, 1, 2));

        let empty = index_dataset(&[]).unwrap();
        assert_eq!(
            (empty.n_users(), empty.n_subreddits(), empty.len()),
            (0, 0, 0)
        );
    }

    #[test]
    fn duplicate_pairs_are_rejected() {
        let r = group(&[0.2]);
        assert!(matches!(
            index_dataset(&[r.clone(), r]),
            Err(Error::DuplicateInteraction { .. })
        ));
    }

    #[test]
    fn fixed_index_matches_first_appearance() {
        let cs = vec![scored(0, "a", "x", 0.1), scored(1, "b", "y", 0.9)];
        let records = aggregate_interactions(&cs).unwrap();
        let ds = index_dataset(&records).unwrap();
        let again = DyadicDataset::with_index(&records, ds.index()).unwrap();
        assert_eq!(ds, again);
        let mut idx = ds.index();
        idx.users.pop();
        assert!(DyadicDataset::with_index(&records, idx).is_err());
    }

    #[test]
    fn csv_and_index_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cs = vec![
            scored(0, "a", "x", 0.1),
            scored(1, "a", "x", 0.25),
            scored(2, "b", "y", 0.7),
        ];
        let records = aggregate_interactions(&cs).unwrap();
        let csv_path = dir.path().join("interactions.csv");
        write_interactions(&csv_path, &records).unwrap();
        let header = std::fs::read_to_string(&csv_path).unwrap();
        assert!(header.starts_with("user,subreddit,comment_count,mean_toxicity,label\n"));
        assert_eq!(read_interactions(&csv_path).unwrap(), records);

        let ds = index_dataset(&records).unwrap();
        let idx_path = dir.path().join("index.json");
        write_index(&idx_path, &ds.index()).unwrap();
        assert_eq!(read_index(&idx_path).unwrap(), ds.index());
    }

    proptest! {
        #[test]
        fn aggregation_invariants(
            rows in prop::collection::vec((0..6u8, 0..4u8, 0.0f64..=1.0), 1..120),
            seed in any::<u64>(),
        ) {
            let cs: Vec<_> = rows
                .iter()
                .enumerate()
                .map(|(i, &(u, s, t))| scored(i, &format!("u{u}"), &format!("s{s}"), t))
                .collect();
            let out = aggregate_interactions(&cs).unwrap();
            prop_assert_eq!(out.iter().map(|r| r.comment_count).sum::<usize>(), cs.len());

            for r in &out {
                let members: Vec<f64> = cs
                    .iter()
                    .filter(|c| c.user == r.user && c.subreddit == r.subreddit)
                    .map(|c| c.toxicity.unwrap())
                    .collect();
                let lo = members.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = members.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(lo <= r.mean_toxicity && r.mean_toxicity <= hi);
            }

            // permutation leaves means and labels unchanged
            let mut shuffled = cs.clone();
            let mut state = seed;
            for i in (1..shuffled.len()).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (state >> 33) as usize % (i + 1));
            }
            let permuted = aggregate_interactions(&shuffled).unwrap();
            for r in &out {
                let p = permuted
                    .iter()
                    .find(|p| p.user == r.user && p.subreddit == r.subreddit)
                    .unwrap();
                prop_assert!((p.mean_toxicity - r.mean_toxicity).abs() <= 1e-12);
                prop_assert_eq!(p.label, r.label);
            }
        }
    }
}
