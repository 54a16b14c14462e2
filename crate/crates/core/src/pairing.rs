//! Time-controlled pairing of posts into (winner, loser) training examples.
//!
//! Two posts from the same subreddit form a candidate pair when they were
//! created within a bounded time window and one clearly out-performed the
//! other, so that the title is the main varying factor and popularity
//! differences are attributable to it rather than to posting time.

use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::corpus::{Post, PostCollection};
use crate::error::{Error, Result};

/// Thresholds a candidate pair must clear. All three are strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairingConfig {
    /// Maximum creation-time gap in seconds.
    pub max_gap_seconds: i64,
    /// Minimum absolute score difference.
    pub min_score_diff: i64,
    /// Winner score must be at least this multiple of the loser score.
    pub min_score_ratio: f64,
}

impl Default for PairingConfig {
    fn default() -> Self {
        Self {
            max_gap_seconds: 30 * 60,
            min_score_diff: 20,
            min_score_ratio: 2.0,
        }
    }
}

impl PairingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_gap_seconds <= 0 {
            return Err(Error::Config(format!(
                "max_gap_seconds must be positive, got {}",
                self.max_gap_seconds
            )));
        }
        if self.min_score_diff <= 0 {
            return Err(Error::Config(format!(
                "min_score_diff must be positive, got {}",
                self.min_score_diff
            )));
        }
        if !(self.min_score_ratio > 0.0) {
            return Err(Error::Config(format!(
                "min_score_ratio must be positive, got {}",
                self.min_score_ratio
            )));
        }
        Ok(())
    }
}

/// A ranked training example. Titles and scores are embedded so pair files
/// are self-contained for the training and evaluation stages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostPair {
    pub winner_id: String,
    pub winner_title: String,
    pub winner_score: i64,
    pub loser_id: String,
    pub loser_title: String,
    pub loser_score: i64,
}

impl PostPair {
    pub fn from_posts(winner: &Post, loser: &Post) -> Self {
        Self {
            winner_id: winner.id.clone(),
            winner_title: winner.title.clone(),
            winner_score: winner.score,
            loser_id: loser.id.clone(),
            loser_title: loser.title.clone(),
            loser_score: loser.score,
        }
    }
}

/// Decide whether two same-subreddit posts form a valid pair under `config`.
/// Argument order does not matter; the higher-scoring post is the winner.
/// Equal scores can never produce a winner, so they never form a pair.
///
/// The ratio check clamps the loser score to at least 1: a ratio against a
/// zero or negative score is vacuous, and the clamp makes the constraint
/// meaningful while agreeing with the plain ratio on the score range the
/// corpus filter admits.
pub fn validate_pair(a: &Post, b: &Post, config: &PairingConfig) -> Result<bool> {
    config.validate()?;
    if a.subreddit != b.subreddit {
        return Err(Error::Config(format!(
            "cannot pair across subreddits ({:?} vs {:?})",
            a.subreddit, b.subreddit
        )));
    }
    if a.score == b.score {
        return Ok(false);
    }
    let (winner, loser) = if a.score > b.score { (a, b) } else { (b, a) };
    let gap = (a.created_utc - b.created_utc).abs();
    let diff = winner.score - loser.score;
    let ratio_floor = config.min_score_ratio * loser.score.max(1) as f64;
    Ok(gap <= config.max_gap_seconds
        && diff >= config.min_score_diff
        && winner.score as f64 >= ratio_floor)
}

/// Greedily match posts into pairs.
///
/// Posts are scanned in chronological order (ties broken by id). Each
/// not-yet-paired post is paired with the earliest later not-yet-paired post
/// that forms a valid pair with it, and both are removed from further
/// consideration, so every post appears in at most one pair. Output pairs are
/// in chronological order of their earlier member.
pub fn pair_posts(collection: &PostCollection, config: &PairingConfig) -> Result<Vec<PostPair>> {
    config.validate()?;
    let mut posts: Vec<&Post> = collection.posts().iter().collect();
    // Collections are canonically ordered already; re-sort so the scan order
    // never silently depends on the caller.
    posts.sort_by(|a, b| {
        a.created_utc
            .cmp(&b.created_utc)
            .then_with(|| a.id.cmp(&b.id))
    });

    let mut used = vec![false; posts.len()];
    let mut pairs = Vec::new();
    for i in 0..posts.len() {
        if used[i] {
            continue;
        }
        for j in (i + 1)..posts.len() {
            if posts[j].created_utc - posts[i].created_utc > config.max_gap_seconds {
                break;
            }
            if used[j] {
                continue;
            }
            if validate_pair(posts[i], posts[j], config)? {
                let (w, l) = if posts[i].score > posts[j].score {
                    (posts[i], posts[j])
                } else {
                    (posts[j], posts[i])
                };
                pairs.push(PostPair::from_posts(w, l));
                used[i] = true;
                used[j] = true;
                break;
            }
        }
    }
    Ok(pairs)
}

/// Write pairs as newline-delimited JSON.
pub fn write_pairs(path: &Path, pairs: &[PostPair]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for pair in pairs {
        let line = serde_json::to_string(pair).expect("pair serialization is infallible");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Read a pair file written by [`write_pairs`]. Every line must parse.
pub fn read_pairs(path: &Path) -> Result<Vec<PostPair>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: PostPair = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        pairs.push(pair);
    }
    Ok(pairs)
}
