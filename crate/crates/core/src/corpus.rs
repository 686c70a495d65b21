//! Comment ingestion and the two corpus filters: low-activity subcommunity
//! removal and generic-comment removal.
//!
//! A comment is "generic" when it shares no token with the words that are
//! popular in its own subreddit but not popular elsewhere, and it mentions
//! none of the health keywords.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One posted comment, as found in a JSONL dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommentRecord {
    pub comment_id: String,
    pub user: String,
    pub subreddit: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_utc: Option<i64>,
    pub body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub toxicity: Option<f64>,
}

impl CommentRecord {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("comment_id", &self.comment_id),
            ("user", &self.user),
            ("subreddit", &self.subreddit),
        ] {
            if value.is_empty() {
                return Err(Error::InvalidRecord(format!("empty {name}")));
            }
        }
        if let Some(t) = self.toxicity {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::InvalidRecord(format!(
                    "toxicity {t} of comment {} outside [0,1]",
                    self.comment_id
                )));
            }
        }
        Ok(())
    }
}

/// Stand-in health keyword list; the original list was never published.
pub const DEFAULT_HEALTH_KEYWORDS: &[&str] = &[
    "covid",
    "covid19",
    "coronavirus",
    "vaccine",
    "vaccination",
    "vaccinated",
    "pfizer",
    "moderna",
    "astrazeneca",
    "lockdown",
    "pandemic",
    "quarantine",
    "mask",
    "booster",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KeywordConfig {
    pub health_keywords: BTreeSet<String>,
    /// Size of the per-subreddit popular-word lists.
    pub popular_k: usize,
    /// Subreddits with at most this many distinct authors are dropped.
    pub min_distinct_users: usize,
}

impl Default for KeywordConfig {
    fn default() -> Self {
        Self {
            health_keywords: DEFAULT_HEALTH_KEYWORDS
                .iter()
                .map(|k| k.to_string())
                .collect(),
            popular_k: 100,
            min_distinct_users: 20,
        }
    }
}

impl KeywordConfig {
    pub fn validate(&self) -> Result<()> {
        if self.popular_k == 0 {
            return Err(Error::Config("popular_k must be at least 1".into()));
        }
        if self.health_keywords.is_empty() {
            return Err(Error::Config("health keyword list is empty".into()));
        }
        for kw in &self.health_keywords {
            if tokenize(kw) != [kw.as_str()] {
                return Err(Error::Config(format!(
                    "keyword {kw:?} is not a single lowercase alphanumeric token"
                )));
            }
        }
        Ok(())
    }
}

/// Reads a keyword file: one keyword per line, `#` starts a comment.
pub fn read_keywords(path: &Path) -> Result<BTreeSet<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Abort on the first malformed line.
    Strict,
    /// Skip malformed lines and report them.
    #[default]
    Lenient,
}

#[derive(Debug, Default)]
pub struct ReadOutcome {
    pub records: Vec<CommentRecord>,
    /// Malformed lines that were skipped (lenient mode only).
    pub skipped: Vec<Error>,
}

pub fn read_comments(path: &Path, mode: ParseMode) -> Result<ReadOutcome> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_comments_from(BufReader::new(file), mode).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_comments_from<R: BufRead>(reader: R, mode: ParseMode) -> Result<ReadOutcome> {
    let mut out = ReadOutcome::default();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io("<input>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<CommentRecord>(&line)
            .map_err(|e| e.to_string())
            .and_then(|r| r.validate().map(|_| r).map_err(|e| e.to_string()));
        match parsed {
            Ok(r) => out.records.push(r),
            Err(message) => {
                let err = Error::Parse {
                    line: line_no,
                    message,
                };
                match mode {
                    ParseMode::Strict => return Err(err),
                    ParseMode::Lenient => out.skipped.push(err),
                }
            }
        }
    }
    if !out.skipped.is_empty() {
        log::warn!("skipped {} malformed comment lines", out.skipped.len());
    }
    Ok(out)
}

pub fn write_comments(path: &Path, comments: &[CommentRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for c in comments {
        serde_json::to_writer(&mut w, c)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Keeps comments whose subreddit has strictly more than `min_distinct_users`
/// distinct authors.
pub fn filter_low_activity(
    comments: Vec<CommentRecord>,
    min_distinct_users: usize,
) -> Vec<CommentRecord> {
    let mut authors: HashMap<&str, HashSet<&str>> = HashMap::new();
    for c in &comments {
        authors.entry(&c.subreddit).or_default().insert(&c.user);
    }
    let keep: HashSet<String> = authors
        .into_iter()
        .filter(|(_, users)| users.len() > min_distinct_users)
        .map(|(s, _)| s.to_string())
        .collect();
    comments
        .into_iter()
        .filter(|c| keep.contains(&c.subreddit))
        .collect()
}

/// Lowercases and splits on runs of non-alphanumeric characters.
pub fn tokenize(body: &str) -> Vec<String> {
    body.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn count_tokens<'a>(
    comments: impl IntoIterator<Item = &'a CommentRecord>,
) -> HashMap<String, usize> {
    let mut counts = HashMap::new();
    for c in comments {
        for t in tokenize(&c.body) {
            *counts.entry(t).or_insert(0) += 1;
        }
    }
    counts
}

/// The `k` entries with the highest count, ties broken lexicographically.
fn top_k<'a>(counts: impl Iterator<Item = (&'a str, usize)>, k: usize) -> Vec<String> {
    let mut ranked: Vec<(&str, usize)> = counts.filter(|&(_, n)| n > 0).collect();
    let order = |a: &(&str, usize), b: &(&str, usize)| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0));
    if ranked.len() > k {
        ranked.select_nth_unstable_by(k, order);
        ranked.truncate(k);
    }
    ranked.sort_unstable_by(order);
    ranked.into_iter().map(|(t, _)| t.to_string()).collect()
}

/// Most frequent tokens by raw occurrence count, most frequent first.
pub fn popular_words(comments: &[CommentRecord], k: usize) -> Vec<String> {
    let counts = count_tokens(comments);
    top_k(counts.iter().map(|(t, &n)| (t.as_str(), n)), k)
}

pub fn specific_words(
    popular_in: &BTreeSet<String>,
    popular_out: &BTreeSet<String>,
) -> BTreeSet<String> {
    popular_in.difference(popular_out).cloned().collect()
}

pub fn is_health_related(body: &str, keywords: &BTreeSet<String>) -> bool {
    tokenize(body).iter().any(|t| keywords.contains(t))
}

/// Computes the subreddit-specific word set of every subreddit present.
///
/// The outside list of a subreddit pools all comments of every other
/// subreddit in `comments`.
pub fn specific_words_by_subreddit(
    comments: &[CommentRecord],
    k: usize,
) -> HashMap<String, BTreeSet<String>> {
    let mut by_sub: HashMap<&str, Vec<&CommentRecord>> = HashMap::new();
    for c in comments {
        by_sub.entry(&c.subreddit).or_default().push(c);
    }
    let per_sub: Vec<(&str, HashMap<String, usize>)> = by_sub
        .into_par_iter()
        .map(|(s, cs)| (s, count_tokens(cs)))
        .collect();
    let mut global: HashMap<&str, usize> = HashMap::new();
    for (_, counts) in &per_sub {
        for (t, &n) in counts {
            *global.entry(t.as_str()).or_insert(0) += n;
        }
    }
    per_sub
        .par_iter()
        .map(|(s, inside)| {
            let popular_in: BTreeSet<String> =
                top_k(inside.iter().map(|(t, &n)| (t.as_str(), n)), k)
                    .into_iter()
                    .collect();
            let outside = global
                .iter()
                .map(|(&t, &n)| (t, n - inside.get(t).copied().unwrap_or(0)));
            let popular_out: BTreeSet<String> = top_k(outside, k).into_iter().collect();
            (s.to_string(), specific_words(&popular_in, &popular_out))
        })
        .collect()
}

/// Drops comments that contain no subreddit-specific word and no health
/// keyword.
pub fn remove_generic(
    comments: Vec<CommentRecord>,
    specific_by_subreddit: &HashMap<String, BTreeSet<String>>,
    keywords: &BTreeSet<String>,
) -> Result<Vec<CommentRecord>> {
    let mut kept = Vec::with_capacity(comments.len());
    for c in comments {
        let specific = specific_by_subreddit.get(&c.subreddit).ok_or_else(|| {
            Error::Config(format!(
                "no specific-word set for subreddit {:?}",
                c.subreddit
            ))
        })?;
        let tokens = tokenize(&c.body);
        let keep = tokens
            .iter()
            .any(|t| specific.contains(t) || keywords.contains(t));
        if keep {
            kept.push(c);
        }
    }
    Ok(kept)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterStats {
    pub input_comments: usize,
    pub after_low_activity: usize,
    pub after_generic_removal: usize,
    pub subreddits_kept: usize,
}

/// Low-activity removal followed by generic-comment removal.
pub fn filter_corpus(
    comments: Vec<CommentRecord>,
    config: &KeywordConfig,
) -> Result<(Vec<CommentRecord>, FilterStats)> {
    config.validate()?;
    let input_comments = comments.len();
    let active = filter_low_activity(comments, config.min_distinct_users);
    let after_low_activity = active.len();
    let specific = specific_words_by_subreddit(&active, config.popular_k);
    let kept = remove_generic(active, &specific, &config.health_keywords)?;
    let subreddits_kept = kept
        .iter()
        .map(|c| c.subreddit.as_str())
        .collect::<HashSet<_>>()
        .len();
    let stats = FilterStats {
        input_comments,
        after_low_activity,
        after_generic_removal: kept.len(),
        subreddits_kept,
    };
    Ok((kept, stats))
}
