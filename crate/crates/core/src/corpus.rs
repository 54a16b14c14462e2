//! Post records, corpus loading, filtering and subsampling.
//!
//! A corpus is a set of posts from a single subreddit held in chronological
//! order. Input files are newline-delimited JSON records using the public
//! dump field names (`id`, `title`, `score`, `subreddit`, `created_utc`,
//! `stickied`). Real dump files contain deleted and partial records, so
//! per-record parsing is permissive by default: bad records are skipped and
//! counted, and only file-level failures abort.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

/// One submission. `score` is net upvotes and may be negative; `created_utc`
/// is unix seconds and is always positive in a valid record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub title: String,
    #[serde(deserialize_with = "lenient_i64")]
    pub score: i64,
    pub subreddit: String,
    #[serde(deserialize_with = "lenient_i64")]
    pub created_utc: i64,
    #[serde(default)]
    pub stickied: bool,
}

/// Dump files are inconsistent about numeric encodings: integers appear as
/// JSON numbers, floats and quoted strings depending on the export era.
fn lenient_i64<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<i64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(i64),
        Float(f64),
        Text(String),
    }
    match Raw::deserialize(de)? {
        Raw::Int(v) => Ok(v),
        Raw::Float(v) => Ok(v as i64),
        Raw::Text(s) => s
            .trim()
            .parse::<f64>()
            .map(|v| v as i64)
            .map_err(|_| serde::de::Error::custom(format!("non-numeric value {s:?}"))),
    }
}

/// Parse one record line. Returns a descriptive reason on failure so callers
/// can count or report skips.
pub fn parse_post_record(raw: &str) -> std::result::Result<Post, String> {
    let post: Post = serde_json::from_str(raw).map_err(|e| e.to_string())?;
    if post.id.trim().is_empty() {
        return Err("empty id".into());
    }
    if post.title.trim().is_empty() {
        return Err("empty title".into());
    }
    if post.subreddit.trim().is_empty() {
        return Err("empty subreddit".into());
    }
    if post.created_utc <= 0 {
        return Err(format!("non-positive created_utc {}", post.created_utc));
    }
    Ok(post)
}

/// Counters from a permissive parse pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ParseStats {
    pub lines: usize,
    pub parsed: usize,
    pub skipped: usize,
}

/// Read every record from a newline-delimited file. Blank lines are ignored.
/// In permissive mode (`strict == false`) bad records are skipped and
/// counted; in strict mode the first bad record aborts with its line number.
pub fn read_posts(path: &Path, strict: bool) -> Result<(Vec<Post>, ParseStats)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = Vec::new();
    for line in BufReader::new(file).lines() {
        lines.push(line.map_err(|e| Error::io(path, e))?);
    }

    let parsed: Vec<(usize, std::result::Result<Post, String>)> = lines
        .par_iter()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, parse_post_record(l)))
        .collect();

    let mut stats = ParseStats {
        lines: parsed.len(),
        ..ParseStats::default()
    };
    let mut posts = Vec::with_capacity(parsed.len());
    for (line_no, record) in parsed {
        match record {
            Ok(p) => {
                stats.parsed += 1;
                posts.push(p);
            }
            Err(reason) if strict => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: reason,
                });
            }
            Err(_) => stats.skipped += 1,
        }
    }
    Ok((posts, stats))
}

/// Write posts as newline-delimited JSON, one record per line.
pub fn write_posts(path: &Path, posts: &[Post]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for post in posts {
        let line = serde_json::to_string(post).expect("post serialization is infallible");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Collections
// ---------------------------------------------------------------------------

/// Posts from a single subreddit in chronological order (ties broken by id).
/// Chronological order is the canonical collection order: constructors sort,
/// and every operation that returns a collection preserves it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostCollection {
    subreddit: String,
    posts: Vec<Post>,
}

impl PostCollection {
    /// Build a collection, enforcing subreddit homogeneity and id uniqueness.
    pub fn new(subreddit: impl Into<String>, mut posts: Vec<Post>) -> Result<Self> {
        let subreddit = subreddit.into();
        for p in &posts {
            if p.subreddit != subreddit {
                return Err(Error::Data(format!(
                    "post {} belongs to subreddit {:?}, expected {:?}",
                    p.id, p.subreddit, subreddit
                )));
            }
        }
        posts.sort_by(|a, b| {
            a.created_utc
                .cmp(&b.created_utc)
                .then_with(|| a.id.cmp(&b.id))
        });
        let mut seen = std::collections::HashSet::with_capacity(posts.len());
        for p in &posts {
            if !seen.insert(p.id.as_str()) {
                return Err(Error::Data(format!("duplicate post id {:?}", p.id)));
            }
        }
        Ok(Self { subreddit, posts })
    }

    pub fn subreddit(&self) -> &str {
        &self.subreddit
    }

    pub fn posts(&self) -> &[Post] {
        &self.posts
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn into_posts(self) -> Vec<Post> {
        self.posts
    }
}

/// Drop duplicate ids keeping the first occurrence. Returns the number of
/// duplicates removed. Used before collection construction so that repeated
/// records in a raw dump do not abort ingestion.
pub fn dedup_by_id(posts: Vec<Post>) -> (Vec<Post>, usize) {
    let mut seen = std::collections::HashSet::with_capacity(posts.len());
    let mut kept = Vec::with_capacity(posts.len());
    let mut dropped = 0;
    for p in posts {
        if seen.insert(p.id.clone()) {
            kept.push(p);
        } else {
            dropped += 1;
        }
    }
    (kept, dropped)
}

/// Keep posts with `score >= min_score`, optionally dropping stickied posts.
/// Relative order is preserved; the input is untouched.
pub fn filter_posts(
    collection: &PostCollection,
    min_score: i64,
    exclude_stickied: bool,
) -> PostCollection {
    let posts = collection
        .posts
        .iter()
        .filter(|p| p.score >= min_score && !(exclude_stickied && p.stickied))
        .cloned()
        .collect();
    PostCollection {
        subreddit: collection.subreddit.clone(),
        posts,
    }
}

/// Uniform random subsample without replacement of `round(fraction * n)`
/// posts, deterministic for a given seed, chronological order restored.
pub fn subsample(collection: &PostCollection, fraction: f64, seed: u64) -> Result<PostCollection> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!(
            "sample fraction must be in (0, 1], got {fraction}"
        )));
    }
    let n = collection.len();
    let take = (fraction * n as f64).round() as usize;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut indices = rand::seq::index::sample(&mut rng, n, take).into_vec();
    // Ascending indices over an already-chronological collection restore
    // chronological order without a second sort.
    indices.sort_unstable();
    let posts = indices
        .into_iter()
        .map(|i| collection.posts[i].clone())
        .collect();
    Ok(PostCollection {
        subreddit: collection.subreddit.clone(),
        posts,
    })
}
