//! Attention interpretation: top-word tables, directed attention graphs,
//! cross-model title comparison, and quartile word-score analysis.
//!
//! A convention needed here and not fixed by the architecture: a word
//! occurrence's attention weight is its incoming off-diagonal column mass,
//! `(Σ_i A[i][j] − A[j][j]) / (n−1)`, which measures how much the other
//! positions attend to it. Row-mean and diagonal-inclusive variants are
//! selectable.
//!
//! Because the embedding table is frozen and attention itself has no
//! learnable parameters, two models sharing a table produce identical
//! attention maps for the same title. Cross-model comparison therefore
//! also reports each model's leave-one-out score delta per token,
//! `Δ_i = score(title) − score(title without token i)`, which does depend
//! on trained parameters.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::PostCollection;
use crate::error::{Error, Result};
use crate::model::{forward, self_attention};
use crate::train::TitleRanker;

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

/// How a position's scalar weight is read off the attention matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttentionAggregation {
    /// Incoming column mass without the self-term, over n−1. Default.
    IncomingOffDiagonal,
    /// Outgoing row mass without the self-term, over n−1.
    OutgoingOffDiagonal,
    /// Full incoming column mass over n.
    IncomingWithDiagonal,
}

impl std::str::FromStr for AttentionAggregation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "incoming" => Ok(Self::IncomingOffDiagonal),
            "outgoing" => Ok(Self::OutgoingOffDiagonal),
            "incoming-diag" => Ok(Self::IncomingWithDiagonal),
            other => Err(Error::Config(format!(
                "unknown aggregation {other:?}, expected incoming, outgoing or incoming-diag"
            ))),
        }
    }
}

/// Scalar weight per position for an n×n attention matrix, n ≥ 2.
fn position_weights(weights: &Array2<f64>, agg: AttentionAggregation) -> Vec<f64> {
    let n = weights.nrows();
    debug_assert!(n >= 2);
    match agg {
        AttentionAggregation::IncomingOffDiagonal => (0..n)
            .map(|j| {
                (weights.column(j).sum() - weights[[j, j]]) / (n - 1) as f64
            })
            .collect(),
        AttentionAggregation::OutgoingOffDiagonal => (0..n)
            .map(|i| (weights.row(i).sum() - weights[[i, i]]) / (n - 1) as f64)
            .collect(),
        AttentionAggregation::IncomingWithDiagonal => {
            (0..n).map(|j| weights.column(j).sum() / n as f64).collect()
        }
    }
}

fn require_trained(ranker: &TitleRanker) -> Result<()> {
    if !ranker.trained {
        return Err(Error::Config(
            "interpretation requires a trained model".into(),
        ));
    }
    Ok(())
}

/// Kept tokens and attention weights for every interpretable title:
/// embeddable and at least two positions long. Computed in parallel,
/// returned in corpus order.
fn title_attentions(
    ranker: &TitleRanker,
    corpus: &PostCollection,
) -> Vec<(Vec<String>, Array2<f64>)> {
    corpus
        .posts()
        .par_iter()
        .filter_map(|post| {
            let encoded = ranker.encode(&post.title);
            if encoded.is_empty_fallback() || encoded.n_tokens() < 2 {
                return None;
            }
            let attn = self_attention(&encoded.rows).expect("embeddings are finite");
            Some((encoded.kept_tokens, attn.weights))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Top-word tables
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordWeight {
    pub token: String,
    pub weight: f64,
    /// Number of scored positions the mean runs over.
    pub occurrences: usize,
}

/// Mean attention weight per token over every occurrence in the corpus.
/// Titles with fewer than two embeddable tokens are skipped; tokens seen
/// fewer than `min_freq` times are dropped. Output is token-sorted.
pub fn word_attention_weights(
    ranker: &TitleRanker,
    corpus: &PostCollection,
    min_freq: usize,
    agg: AttentionAggregation,
) -> Result<Vec<WordWeight>> {
    require_trained(ranker)?;
    let mut sums: HashMap<String, (f64, usize)> = HashMap::new();
    for (tokens, weights) in title_attentions(ranker, corpus) {
        for (token, w) in tokens.into_iter().zip(position_weights(&weights, agg)) {
            let entry = sums.entry(token).or_insert((0.0, 0));
            entry.0 += w;
            entry.1 += 1;
        }
    }
    let mut out: Vec<WordWeight> = sums
        .into_iter()
        .filter(|(_, (_, count))| *count >= min_freq)
        .map(|(token, (sum, count))| WordWeight {
            token,
            weight: sum / count as f64,
            occurrences: count,
        })
        .collect();
    out.sort_by(|a, b| a.token.cmp(&b.token));
    Ok(out)
}

/// First k by weight descending, ties token-lexicographic. k beyond the
/// list returns everything.
pub fn top_k_words(weights: &[WordWeight], k: usize) -> Vec<WordWeight> {
    let mut ranked = weights.to_vec();
    ranked.sort_by(|a, b| {
        b.weight
            .partial_cmp(&a.weight)
            .expect("weights are finite")
            .then_with(|| a.token.cmp(&b.token))
    });
    ranked.truncate(k);
    ranked
}

// ---------------------------------------------------------------------------
// Attention graphs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionNode {
    pub token: String,
    /// Sum of the weights of the kept edges touching this node.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionEdge {
    /// The edge reads: `source` is influential context for `target`.
    pub source: String,
    pub target: String,
    /// Average of A[target_pos][source_pos] over all co-occurrences.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionGraph {
    pub nodes: Vec<AttentionNode>,
    pub edges: Vec<AttentionEdge>,
}

/// Directed graph of the strongest average word-to-word attention
/// weights. For every title and ordered position pair i ≠ j the entry
/// A[j][i] accumulates into edge token_i → token_j; per-pair averages are
/// ranked and the strongest `top_edges` kept. Edges touching a stopword
/// are dropped before ranking.
pub fn attention_graph(
    ranker: &TitleRanker,
    corpus: &PostCollection,
    top_edges: usize,
    stopwords: &HashSet<String>,
) -> Result<AttentionGraph> {
    require_trained(ranker)?;
    let mut sums: HashMap<(String, String), (f64, usize)> = HashMap::new();
    for (tokens, weights) in title_attentions(ranker, corpus) {
        let n = tokens.len();
        for i in 0..n {
            if stopwords.contains(&tokens[i]) {
                continue;
            }
            for j in 0..n {
                if i == j || stopwords.contains(&tokens[j]) {
                    continue;
                }
                let entry = sums
                    .entry((tokens[i].clone(), tokens[j].clone()))
                    .or_insert((0.0, 0));
                entry.0 += weights[[j, i]];
                entry.1 += 1;
            }
        }
    }
    let mut edges: Vec<AttentionEdge> = sums
        .into_iter()
        .map(|((source, target), (sum, count))| AttentionEdge {
            source,
            target,
            weight: sum / count as f64,
        })
        .collect();
    edges.sort_by(|a, b| {
        b.weight
            .partial_cmp(&a.weight)
            .expect("weights are finite")
            .then_with(|| a.source.cmp(&b.source))
            .then_with(|| a.target.cmp(&b.target))
    });
    edges.truncate(top_edges);

    let mut node_weights: HashMap<&str, f64> = HashMap::new();
    for e in &edges {
        *node_weights.entry(e.source.as_str()).or_insert(0.0) += e.weight;
        if e.target != e.source {
            *node_weights.entry(e.target.as_str()).or_insert(0.0) += e.weight;
        }
    }
    let mut nodes: Vec<AttentionNode> = node_weights
        .into_iter()
        .map(|(token, weight)| AttentionNode {
            token: token.to_owned(),
            weight,
        })
        .collect();
    nodes.sort_by(|a, b| a.token.cmp(&b.token));
    Ok(AttentionGraph { nodes, edges })
}

/// Render the graph in DOT. Node size and edge label carry the weights at
/// four decimal places.
pub fn graph_to_dot(graph: &AttentionGraph) -> String {
    let escape = |s: &str| s.replace('\\', "\\\\").replace('"', "\\\"");
    let mut out = String::from("digraph attention {\n");
    for node in &graph.nodes {
        out.push_str(&format!(
            "  \"{}\" [size={:.4}];\n",
            escape(&node.token),
            node.weight
        ));
    }
    for edge in &graph.edges {
        out.push_str(&format!(
            "  \"{}\" -> \"{}\" [label={:.4}];\n",
            escape(&edge.source),
            escape(&edge.target),
            edge.weight
        ));
    }
    out.push_str("}\n");
    out
}

// ---------------------------------------------------------------------------
// Cross-model title comparison
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenComparison {
    pub token: String,
    /// Attention weights; identical across models sharing an embedding
    /// table, since attention has no trained parameters.
    pub weight_a: f64,
    pub weight_b: f64,
    /// Leave-one-out score deltas, the model-dependent signal.
    pub loo_delta_a: f64,
    pub loo_delta_b: f64,
}

/// Rows with position i removed; removing the only row yields the
/// single-zero-row fallback the encoder uses for empty titles.
fn remove_position(rows: &Array2<f64>, i: usize) -> Array2<f64> {
    if rows.nrows() == 1 {
        return Array2::zeros((1, rows.ncols()));
    }
    let keep: Vec<usize> = (0..rows.nrows()).filter(|&r| r != i).collect();
    rows.select(Axis(0), &keep)
}

/// Per-token leave-one-out deltas under one model.
fn loo_deltas(ranker: &TitleRanker, rows: &Array2<f64>) -> Result<Vec<f64>> {
    let full = forward(rows, &ranker.params, &ranker.config)?.score;
    (0..rows.nrows())
        .map(|i| {
            let reduced = remove_position(rows, i);
            Ok(full - forward(&reduced, &ranker.params, &ranker.config)?.score)
        })
        .collect()
}

/// Compare one title under two models: the shared attention weight per
/// token plus each model's leave-one-out score delta. The models must
/// keep the same token sequence; a single-token title reports weight 1.0
/// by convention.
pub fn compare_title(
    title: &str,
    model_a: &TitleRanker,
    model_b: &TitleRanker,
    agg: AttentionAggregation,
) -> Result<Vec<TokenComparison>> {
    require_trained(model_a)?;
    require_trained(model_b)?;
    let enc_a = model_a.encode(title);
    let enc_b = model_b.encode(title);
    if enc_a.kept_tokens != enc_b.kept_tokens {
        return Err(Error::Config(format!(
            "models keep different token sequences for this title: {:?} vs {:?}",
            enc_a.kept_tokens, enc_b.kept_tokens
        )));
    }
    if enc_a.is_empty_fallback() {
        return Err(Error::Data(
            "title has no embeddable tokens to compare".into(),
        ));
    }
    let n = enc_a.n_tokens();
    let weights_of = |rows: &Array2<f64>| -> Result<Vec<f64>> {
        if n == 1 {
            return Ok(vec![1.0]);
        }
        let attn = self_attention(rows)?;
        Ok(position_weights(&attn.weights, agg))
    };
    let weights_a = weights_of(&enc_a.rows)?;
    let weights_b = weights_of(&enc_b.rows)?;
    let deltas_a = loo_deltas(model_a, &enc_a.rows)?;
    let deltas_b = loo_deltas(model_b, &enc_b.rows)?;
    Ok(enc_a
        .kept_tokens
        .into_iter()
        .enumerate()
        .map(|(i, token)| TokenComparison {
            token,
            weight_a: weights_a[i],
            weight_b: weights_b[i],
            loo_delta_a: deltas_a[i],
            loo_delta_b: deltas_b[i],
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Quartile word scores
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartileEntry {
    pub token: String,
    /// Mean containing-post score over the normalization constant.
    pub score: f64,
    /// 0 is the lowest quartile, 3 the highest.
    pub quartile: usize,
    /// Number of posts containing the token.
    pub occurrences: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartileTable {
    pub entries: Vec<QuartileEntry>,
    /// Mean score of the top posts used for normalization.
    pub norm: f64,
    /// 25th, 50th and 75th percentile boundaries of the token scores.
    pub boundaries: [f64; 3],
    /// Seeded uniform token samples, one list per quartile.
    pub samples: [Vec<String>; 4],
}

/// Nearest-rank percentile of an ascending-sorted slice.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.max(1) - 1]
}

/// Normalized per-token post scores stratified into quartiles. A token's
/// score is the mean score of the posts containing it, divided by the
/// mean of the top `top_n_norm` post scores (all posts when the corpus is
/// smaller). Tokens under `min_freq` containing posts are dropped; ties
/// on a boundary go to the lower quartile. Per quartile, `sample` tokens
/// are drawn uniformly with the seed.
pub fn quartile_word_scores(
    corpus: &PostCollection,
    min_freq: usize,
    top_n_norm: usize,
    sample: usize,
    seed: u64,
) -> Result<QuartileTable> {
    if corpus.is_empty() {
        return Err(Error::Data("cannot analyze an empty corpus".into()));
    }
    if top_n_norm == 0 {
        return Err(Error::Config("top_n_norm must be at least 1".into()));
    }
    let mut by_score: Vec<(&str, i64)> = corpus
        .posts()
        .iter()
        .map(|p| (p.id.as_str(), p.score))
        .collect();
    by_score.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let top = &by_score[..top_n_norm.min(by_score.len())];
    let norm = top.iter().map(|(_, s)| *s as f64).sum::<f64>() / top.len() as f64;
    if norm == 0.0 {
        return Err(Error::Data(
            "top-post mean score is zero; token scores cannot be normalized".into(),
        ));
    }

    let mut sums: HashMap<String, (f64, usize)> = HashMap::new();
    for post in corpus.posts() {
        let mut distinct: Vec<String> = crate::text::tokenize(&post.title);
        distinct.sort_unstable();
        distinct.dedup();
        for token in distinct {
            let entry = sums.entry(token).or_insert((0.0, 0));
            entry.0 += post.score as f64;
            entry.1 += 1;
        }
    }
    let mut entries: Vec<QuartileEntry> = sums
        .into_iter()
        .filter(|(_, (_, count))| *count >= min_freq)
        .map(|(token, (sum, count))| QuartileEntry {
            token,
            score: (sum / count as f64) / norm,
            quartile: 0,
            occurrences: count,
        })
        .collect();
    if entries.is_empty() {
        return Err(Error::Data(format!(
            "no token appears in at least {min_freq} posts"
        )));
    }
    entries.sort_by(|a, b| a.token.cmp(&b.token));

    let mut scores: Vec<f64> = entries.iter().map(|e| e.score).collect();
    scores.sort_by(|a, b| a.partial_cmp(b).expect("scores are finite"));
    let boundaries = [
        percentile(&scores, 25.0),
        percentile(&scores, 50.0),
        percentile(&scores, 75.0),
    ];
    for e in entries.iter_mut() {
        e.quartile = match e.score {
            s if s <= boundaries[0] => 0,
            s if s <= boundaries[1] => 1,
            s if s <= boundaries[2] => 2,
            _ => 3,
        };
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = std::array::from_fn(|q| {
        let members: Vec<&str> = entries
            .iter()
            .filter(|e| e.quartile == q)
            .map(|e| e.token.as_str())
            .collect();
        let take = sample.min(members.len());
        rand::seq::index::sample(&mut rng, members.len(), take)
            .into_iter()
            .map(|i| members[i].to_owned())
            .collect()
    });

    Ok(QuartileTable {
        entries,
        norm,
        boundaries,
        samples,
    })
}

// ---------------------------------------------------------------------------
// CSV exports
// ---------------------------------------------------------------------------

fn write_csv(path: &Path, rows: Vec<Vec<String>>) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer
            .write_record(&row)
            .map_err(|e| Error::Data(format!("encoding csv row: {e}")))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Data(format!("encoding csv: {e}")))?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_word_weights_csv(path: &Path, weights: &[WordWeight]) -> Result<()> {
    let mut rows = vec![vec![
        "token".to_string(),
        "weight".to_string(),
        "occurrences".to_string(),
    ]];
    rows.extend(weights.iter().map(|w| {
        vec![
            w.token.clone(),
            format!("{:.6}", w.weight),
            w.occurrences.to_string(),
        ]
    }));
    write_csv(path, rows)
}

pub fn write_comparison_csv(path: &Path, comparisons: &[TokenComparison]) -> Result<()> {
    let mut rows = vec![vec![
        "token".to_string(),
        "weight_a".to_string(),
        "weight_b".to_string(),
        "loo_delta_a".to_string(),
        "loo_delta_b".to_string(),
    ]];
    rows.extend(comparisons.iter().map(|c| {
        vec![
            c.token.clone(),
            format!("{:.6}", c.weight_a),
            format!("{:.6}", c.weight_b),
            format!("{:.6}", c.loo_delta_a),
            format!("{:.6}", c.loo_delta_b),
        ]
    }));
    write_csv(path, rows)
}

pub fn write_quartile_csv(path: &Path, table: &QuartileTable) -> Result<()> {
    let mut rows = vec![vec![
        "token".to_string(),
        "score".to_string(),
        "quartile".to_string(),
        "occurrences".to_string(),
    ]];
    rows.extend(table.entries.iter().map(|e| {
        vec![
            e.token.clone(),
            format!("{:.6}", e.score),
            e.quartile.to_string(),
            e.occurrences.to_string(),
        ]
    }));
    write_csv(path, rows)
}

pub fn write_quartile_samples_csv(path: &Path, table: &QuartileTable) -> Result<()> {
    let mut rows = vec![vec!["quartile".to_string(), "token".to_string()]];
    for (q, tokens) in table.samples.iter().enumerate() {
        rows.extend(
            tokens
                .iter()
                .map(|t| vec![q.to_string(), t.clone()]),
        );
    }
    write_csv(path, rows)
}
