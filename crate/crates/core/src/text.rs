//! Tokenization and frozen word embeddings.
//!
//! Titles are lowercased and split on whitespace, and each token is stripped
//! of leading and trailing punctuation while internal punctuation survives,
//! so "9/11", "pg-13" and "don't" stay single tokens. Embeddings are loaded
//! from the standard text format (token followed by `dim` reals per line)
//! and are never updated by training.

use ndarray::Array2;
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};

/// Sentinel token reported when no token of a title could be embedded.
pub const EMPTY_TOKEN: &str = "<empty>";

/// Lowercase, split on whitespace, trim punctuation off token edges, drop
/// tokens that end up empty. Punctuation is any non-alphanumeric character;
/// trimming only touches the edges so internal punctuation is preserved.
pub fn tokenize(title: &str) -> Vec<String> {
    title
        .to_lowercase()
        .split_whitespace()
        .map(|raw| raw.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// What to do with tokens absent from the embedding table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OovPolicy {
    /// Remove the token from the sequence (default).
    Drop,
    /// Keep the token with an all-zeros vector.
    Zero,
}

impl Default for OovPolicy {
    fn default() -> Self {
        OovPolicy::Drop
    }
}

impl std::str::FromStr for OovPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "drop" => Ok(OovPolicy::Drop),
            "zero" => Ok(OovPolicy::Zero),
            other => Err(Error::Config(format!(
                "unknown oov policy {other:?}, expected drop or zero"
            ))),
        }
    }
}

/// Frozen token-to-vector table with a fixed dimension.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    /// Load a table from a text file: one entry per line, token followed by
    /// exactly `dim` reals. Duplicate tokens keep the first entry. Any line
    /// with the wrong arity or a non-finite value aborts, naming the line.
    pub fn load(path: &Path, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut vectors = HashMap::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let line_no = idx + 1;
            let mut parts = line.split_whitespace();
            let token = parts
                .next()
                .expect("non-blank line has at least one field")
                .to_owned();
            let values: Vec<f64> = parts
                .map(|v| {
                    v.parse::<f64>().map_err(|_| Error::Parse {
                        path: path.to_path_buf(),
                        line: line_no,
                        message: format!("non-numeric component {v:?}"),
                    })
                })
                .collect::<Result<_>>()?;
            if values.len() != dim {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: format!(
                        "expected {dim} components for token {token:?}, found {}",
                        values.len()
                    ),
                });
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: format!("non-finite component for token {token:?}"),
                });
            }
            vectors.entry(token).or_insert(values);
        }
        Ok(Self { dim, vectors })
    }

    /// Build a table in memory. Every vector must have length `dim` and be
    /// finite. Duplicate tokens keep the first entry.
    pub fn from_entries<I>(dim: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Vec<f64>)>,
    {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        let mut vectors = HashMap::new();
        for (token, values) in entries {
            if values.len() != dim {
                return Err(Error::Data(format!(
                    "vector for {token:?} has {} components, expected {dim}",
                    values.len()
                )));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("embedding for {token:?}")));
            }
            vectors.entry(token).or_insert(values);
        }
        Ok(Self { dim, vectors })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.vectors.contains_key(token)
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }
}

/// A title ready for the model: one embedding row per kept token.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    /// `(n, dim)` with `1 <= n <= max_len`.
    pub rows: Array2<f64>,
    /// Tokens corresponding to the rows, `[EMPTY_TOKEN]` for the fallback.
    pub kept_tokens: Vec<String>,
}

impl EmbeddingMatrix {
    pub fn n_tokens(&self) -> usize {
        self.rows.nrows()
    }

    /// True when no token survived and the all-zeros fallback row was used.
    pub fn is_empty_fallback(&self) -> bool {
        self.kept_tokens.len() == 1 && self.kept_tokens[0] == EMPTY_TOKEN
    }
}

/// Turn a token sequence into an embedding matrix. Out-of-vocabulary tokens
/// are handled per `oov` first, then the kept sequence is truncated to
/// `max_len`. If nothing survives, a single all-zeros row tagged
/// [`EMPTY_TOKEN`] is returned so downstream shapes stay valid.
pub fn embed_title(
    tokens: &[String],
    table: &EmbeddingTable,
    max_len: usize,
    oov: OovPolicy,
) -> EmbeddingMatrix {
    assert!(max_len >= 1, "max_len must be at least 1");
    let mut kept: Vec<(&str, Option<&[f64]>)> = Vec::new();
    for token in tokens {
        match (table.get(token), oov) {
            (Some(v), _) => kept.push((token, Some(v))),
            (None, OovPolicy::Zero) => kept.push((token, None)),
            (None, OovPolicy::Drop) => {}
        }
    }
    kept.truncate(max_len);

    if kept.is_empty() {
        return EmbeddingMatrix {
            rows: Array2::zeros((1, table.dim())),
            kept_tokens: vec![EMPTY_TOKEN.to_owned()],
        };
    }

    let mut rows = Array2::zeros((kept.len(), table.dim()));
    let mut kept_tokens = Vec::with_capacity(kept.len());
    for (i, (token, vector)) in kept.iter().enumerate() {
        if let Some(v) = vector {
            for (j, x) in v.iter().enumerate() {
                rows[[i, j]] = *x;
            }
        }
        kept_tokens.push((*token).to_owned());
    }
    EmbeddingMatrix { rows, kept_tokens }
}
