//! Baseline scorers: 1-hot logistic regression and an embedding-average
//! MLP, trained on the same ranked pairs behind the same scorer interface
//! as the attention model.
//!
//! The logistic baseline reads a title as a binary bag of words over a
//! frequency-ranked vocabulary (presence, not counts). The MLP baseline
//! feeds the arithmetic mean of the title's embedding vectors through one
//! hidden ReLU layer. Both default to the smooth pairwise logistic loss
//! `ln(1 + exp(-(x_w - x_l)))`; a flag switches to the hinge for
//! uniformity experiments.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::distributions::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Scorer;
use crate::pairing::PostPair;
use crate::text::{tokenize, EmbeddingTable};
use crate::train::{OptimizerState, TrainConfig, TrainReport};

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

/// Dense token → index map, frequency-ranked at construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Build from an ordered token list; index i maps to tokens[i].
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// The top `size` tokens of the titles by occurrence count, ties broken
/// lexicographically. Errors when no title yields a token.
pub fn build_vocab<'a, I>(titles: I, size: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a str>,
{
    if size == 0 {
        return Err(Error::Config("vocabulary size must be at least 1".into()));
    }
    let mut counts: HashMap<String, u64> = HashMap::new();
    for title in titles {
        for token in tokenize(title) {
            *counts.entry(token).or_insert(0) += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::Data(
            "cannot build a vocabulary: no title produced any token".into(),
        ));
    }
    let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(size);
    Vocabulary::from_tokens(ranked.into_iter().map(|(t, _)| t).collect())
}

// ---------------------------------------------------------------------------
// 1-hot logistic model
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    /// One weight per vocabulary index.
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogisticParams {
    pub fn zeros(vocab_len: usize) -> Self {
        Self {
            weights: vec![0.0; vocab_len],
            bias: 0.0,
        }
    }
}

/// Distinct in-vocabulary indices of a title, sorted. Bag semantics:
/// duplicates count once.
fn onehot_indices(title: &str, vocab: &Vocabulary) -> Vec<usize> {
    let mut indices: Vec<usize> = tokenize(title)
        .iter()
        .filter_map(|t| vocab.index_of(t))
        .collect();
    indices.sort_unstable();
    indices.dedup();
    indices
}

/// Sum of the weights of the title's distinct in-vocabulary tokens, plus
/// the bias. Exactly invariant to token order and duplication.
pub fn onehot_score(title: &str, params: &LogisticParams, vocab: &Vocabulary) -> f64 {
    onehot_indices(title, vocab)
        .into_iter()
        .map(|i| params.weights[i])
        .sum::<f64>()
        + params.bias
}

/// Vocabulary tokens ranked by |weight| descending, ties lexicographic.
pub fn top_onehot_weights(
    vocab: &Vocabulary,
    params: &LogisticParams,
    k: usize,
) -> Vec<(String, f64)> {
    let mut ranked: Vec<(String, f64)> = vocab
        .tokens()
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), params.weights[i]))
        .collect();
    ranked.sort_by(|a, b| {
        b.1.abs()
            .partial_cmp(&a.1.abs())
            .expect("weights are finite")
            .then_with(|| a.0.cmp(&b.0))
    });
    ranked.truncate(k);
    ranked
}

// ---------------------------------------------------------------------------
// Embedding-average MLP
// ---------------------------------------------------------------------------

/// Mean of the title tokens' embedding vectors, duplicates weighted by
/// occurrence; the zero vector when nothing is in vocabulary.
pub fn glove_average(title: &str, embeddings: &EmbeddingTable) -> Array1<f64> {
    let mut sum = Array1::zeros(embeddings.dim());
    let mut kept = 0usize;
    for token in tokenize(title) {
        if let Some(v) = embeddings.get(&token) {
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
            kept += 1;
        }
    }
    if kept > 0 {
        sum.mapv_inplace(|v| v / kept as f64);
    }
    sum
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    /// Hidden layer, shape (hidden, dim).
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// Output layer, one weight per hidden unit.
    pub w2: Array1<f64>,
    pub b2: f64,
}

impl MlpParams {
    pub fn zeros(hidden: usize, dim: usize) -> Self {
        Self {
            w1: Array2::zeros((hidden, dim)),
            b1: Array1::zeros(hidden),
            w2: Array1::zeros(hidden),
            b2: 0.0,
        }
    }

    pub fn hidden(&self) -> usize {
        self.w1.nrows()
    }

    pub fn dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hidden();
        if self.b1.len() != h || self.w2.len() != h {
            return Err(Error::Config(format!(
                "mlp shape mismatch: w1 is {}x{}, b1 has {}, w2 has {}",
                h,
                self.dim(),
                self.b1.len(),
                self.w2.len()
            )));
        }
        let finite = self
            .w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .all(|v| v.is_finite());
        if !finite || !self.b2.is_finite() {
            return Err(Error::NonFinite("mlp parameters".into()));
        }
        Ok(())
    }

    /// Flat order: w1 row-major, b1, w2, b2.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.n_params());
        flat.extend(self.w1.iter());
        flat.extend(self.b1.iter());
        flat.extend(self.w2.iter());
        flat.push(self.b2);
        flat
    }

    pub fn from_flat(hidden: usize, dim: usize, flat: &[f64]) -> Result<Self> {
        let expect = hidden * dim + 2 * hidden + 1;
        if flat.len() != expect {
            return Err(Error::Config(format!(
                "flat mlp parameter vector has {} values, expected {expect}",
                flat.len()
            )));
        }
        let (w1_part, rest) = flat.split_at(hidden * dim);
        let (b1_part, rest) = rest.split_at(hidden);
        let (w2_part, b2_part) = rest.split_at(hidden);
        Ok(Self {
            w1: Array2::from_shape_vec((hidden, dim), w1_part.to_vec())
                .expect("length checked above"),
            b1: Array1::from_vec(b1_part.to_vec()),
            w2: Array1::from_vec(w2_part.to_vec()),
            b2: b2_part[0],
        })
    }

    pub fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }
}

/// Glorot-uniform init for the weight layers, zero biases.
pub fn init_mlp_params(hidden: usize, dim: usize, seed: u64) -> Result<MlpParams> {
    if hidden == 0 || dim == 0 {
        return Err(Error::Config(format!(
            "mlp needs positive hidden and dim, got {hidden} and {dim}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound1 = (6.0 / (dim + hidden) as f64).sqrt();
    let dist1 = Uniform::new_inclusive(-bound1, bound1);
    let w1 = Array2::from_shape_fn((hidden, dim), |_| dist1.sample(&mut rng));
    let bound2 = (6.0 / (hidden + 1) as f64).sqrt();
    let dist2 = Uniform::new_inclusive(-bound2, bound2);
    let w2 = Array1::from_shape_fn(hidden, |_| dist2.sample(&mut rng));
    Ok(MlpParams {
        w1,
        b1: Array1::zeros(hidden),
        w2,
        b2: 0.0,
    })
}

/// Two-layer perceptron over the title's embedding average.
pub fn mlp_score(title: &str, params: &MlpParams, embeddings: &EmbeddingTable) -> Result<f64> {
    params.validate()?;
    if params.dim() != embeddings.dim() {
        return Err(Error::Config(format!(
            "mlp expects dim {}, embedding table has {}",
            params.dim(),
            embeddings.dim()
        )));
    }
    let avg = glove_average(title, embeddings);
    Ok(mlp_flat_score(
        &avg,
        &params.to_flat(),
        params.hidden(),
        params.dim(),
    ))
}

/// MLP forward pass straight off the flat parameter layout; shared by
/// scoring and the training hot loop.
fn mlp_flat_score(avg: &Array1<f64>, flat: &[f64], hidden: usize, dim: usize) -> f64 {
    let (w1, rest) = flat.split_at(hidden * dim);
    let (b1, rest) = rest.split_at(hidden);
    let (w2, b2) = rest.split_at(hidden);
    let mut out = b2[0];
    for j in 0..hidden {
        let row = &w1[j * dim..(j + 1) * dim];
        let pre: f64 = row.iter().zip(avg.iter()).map(|(w, a)| w * a).sum::<f64>() + b1[j];
        if pre > 0.0 {
            out += w2[j] * pre;
        }
    }
    out
}

/// Gradient of an MLP title score with respect to the flat parameters,
/// scaled by `dz` and added into `grads`. Hidden units with non-positive
/// pre-activations contribute nothing (ReLU subgradient 0 at the kink).
fn mlp_flat_gradient(
    avg: &Array1<f64>,
    dz: f64,
    flat: &[f64],
    hidden: usize,
    dim: usize,
    grads: &mut [f64],
) {
    let (w1, rest) = flat.split_at(hidden * dim);
    let (b1, rest) = rest.split_at(hidden);
    let (w2, _) = rest.split_at(hidden);
    let b1_off = hidden * dim;
    let w2_off = b1_off + hidden;
    let b2_off = w2_off + hidden;
    grads[b2_off] += dz;
    for j in 0..hidden {
        let row = &w1[j * dim..(j + 1) * dim];
        let pre: f64 = row.iter().zip(avg.iter()).map(|(w, a)| w * a).sum::<f64>() + b1[j];
        if pre > 0.0 {
            grads[w2_off + j] += dz * pre;
            let g = dz * w2[j];
            grads[b1_off + j] += g;
            for (rg, a) in grads[j * dim..(j + 1) * dim].iter_mut().zip(avg.iter()) {
                *rg += g * a;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Pairwise losses
// ---------------------------------------------------------------------------

/// `ln(1 + exp(t))` computed without overflow at any magnitude.
pub fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Smooth pairwise loss `ln(1 + exp(-(winner - loser)))`.
pub fn pairwise_logistic_loss(winner_score: f64, loser_score: f64) -> f64 {
    softplus(loser_score - winner_score)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Logistic,
    Hinge,
}

impl std::str::FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(LossKind::Logistic),
            "hinge" => Ok(LossKind::Hinge),
            other => Err(Error::Config(format!(
                "unknown loss {other:?}, expected logistic or hinge"
            ))),
        }
    }
}

impl LossKind {
    /// Loss and its derivative with respect to the score gap
    /// z = winner − loser. The logistic derivative is −σ(−z); the hinge
    /// derivative is −1 while the margin is violated and 0 otherwise.
    fn loss_and_dz(self, z: f64, margin: f64) -> (f64, f64) {
        match self {
            LossKind::Logistic => {
                let loss = softplus(-z);
                // σ(−z), evaluated on the side that never overflows.
                let sig_neg = if z >= 0.0 {
                    let e = (-z).exp();
                    e / (1.0 + e)
                } else {
                    1.0 / (1.0 + z.exp())
                };
                (loss, -sig_neg)
            }
            LossKind::Hinge => {
                let violation = margin - z;
                if violation > 0.0 {
                    (violation, -1.0)
                } else {
                    (0.0, 0.0)
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Onehot,
    Mlp,
}

impl std::str::FromStr for BaselineKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "onehot" => Ok(BaselineKind::Onehot),
            "mlp" => Ok(BaselineKind::Mlp),
            other => Err(Error::Config(format!(
                "unknown baseline {other:?}, expected onehot or mlp"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub kind: BaselineKind,
    pub vocab_size: usize,
    pub hidden: usize,
    pub loss: LossKind,
    pub train: TrainConfig,
}

impl BaselineConfig {
    pub fn new(kind: BaselineKind) -> Self {
        Self {
            kind,
            vocab_size: 20_000,
            hidden: 256,
            loss: LossKind::Logistic,
            train: TrainConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.vocab_size == 0 {
            return Err(Error::Config("vocab_size must be at least 1".into()));
        }
        if self.hidden == 0 {
            return Err(Error::Config("hidden width must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct OnehotModel {
    pub vocab: Vocabulary,
    pub params: LogisticParams,
}

#[derive(Debug, Clone)]
pub struct MlpModel {
    pub params: MlpParams,
    pub embeddings: Arc<EmbeddingTable>,
}

/// A trained baseline of either kind, scoring raw titles.
#[derive(Debug, Clone)]
pub enum BaselineModel {
    Onehot(OnehotModel),
    Mlp(MlpModel),
}

impl BaselineModel {
    pub fn kind(&self) -> BaselineKind {
        match self {
            BaselineModel::Onehot(_) => BaselineKind::Onehot,
            BaselineModel::Mlp(_) => BaselineKind::Mlp,
        }
    }
}

impl Scorer for BaselineModel {
    fn score_title(&self, title: &str) -> Result<f64> {
        match self {
            BaselineModel::Onehot(m) => Ok(onehot_score(title, &m.params, &m.vocab)),
            BaselineModel::Mlp(m) => mlp_score(title, &m.params, &m.embeddings),
        }
    }
}

/// Train a baseline on ranked pairs. Seeded and deterministic; the
/// embedding table is only consulted for the MLP kind.
pub fn train_baseline(
    pairs: &[PostPair],
    embeddings: &Arc<EmbeddingTable>,
    config: &BaselineConfig,
) -> Result<(BaselineModel, TrainReport)> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::Data("no pairs to train a baseline on".into()));
    }
    match config.kind {
        BaselineKind::Onehot => train_onehot(pairs, config),
        BaselineKind::Mlp => train_mlp(pairs, embeddings, config),
    }
}

/// Shared training skeleton: shuffled epochs of batch-mean updates over a
/// flat parameter vector. `score(feature, flat)` evaluates a title;
/// `accumulate(feature, dz, flat, grads)` adds that title's score gradient
/// scaled by dz.
fn run_epochs<F>(
    features: &[(Arc<F>, Arc<F>)],
    mut flat: Vec<f64>,
    config: &BaselineConfig,
    score: impl Fn(&F, &[f64]) -> f64,
    accumulate: impl Fn(&F, f64, &[f64], &mut [f64]),
) -> (Vec<f64>, Vec<f64>, Vec<f64>, f64) {
    let train = &config.train;
    let mut opt = OptimizerState::new(train.optimizer, flat.len());
    let mut rng = ChaCha8Rng::seed_from_u64(train.seed);
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut epoch_losses = Vec::with_capacity(train.epochs);
    let mut epoch_accuracies = Vec::with_capacity(train.epochs);
    let mut update_time = 0.0f64;

    for _epoch in 0..train.epochs {
        order.shuffle(&mut rng);
        let started = Instant::now();
        let mut loss_sum = 0.0;
        for batch in order.chunks(train.batch_size) {
            let mut grads = vec![0.0; flat.len()];
            for &idx in batch {
                let (winner, loser) = &features[idx];
                let z = score(winner, &flat) - score(loser, &flat);
                let (loss, dz) = config.loss.loss_and_dz(z, train.margin);
                loss_sum += loss;
                if dz != 0.0 {
                    accumulate(winner, dz, &flat, &mut grads);
                    accumulate(loser, -dz, &flat, &mut grads);
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for g in grads.iter_mut() {
                *g *= scale;
            }
            opt.step(&mut flat, &grads, train.learning_rate);
        }
        update_time += started.elapsed().as_secs_f64();
        epoch_losses.push(loss_sum / features.len() as f64);
        let correct = features
            .iter()
            .filter(|(w, l)| score(w, &flat) > score(l, &flat))
            .count();
        epoch_accuracies.push(correct as f64 / features.len() as f64);
    }
    (flat, epoch_losses, epoch_accuracies, update_time)
}

fn make_report(
    epoch_losses: Vec<f64>,
    epoch_accuracies: Vec<f64>,
    pairs_used: usize,
    epochs: usize,
    wall_seconds: f64,
) -> TrainReport {
    let total = (epochs * pairs_used) as f64;
    TrainReport {
        epoch_losses,
        epoch_accuracies,
        pairs_used,
        pairs_skipped: 0,
        wall_seconds,
        pairs_per_second: if wall_seconds > 0.0 {
            total / wall_seconds
        } else {
            f64::INFINITY
        },
    }
}

/// Deduplicating feature cache over pair titles.
fn pair_features<F>(pairs: &[PostPair], encode: impl Fn(&str) -> F) -> Vec<(Arc<F>, Arc<F>)> {
    let mut cache: HashMap<&str, Arc<F>> = HashMap::new();
    let mut out = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let w = cache
            .entry(pair.winner_title.as_str())
            .or_insert_with(|| Arc::new(encode(&pair.winner_title)))
            .clone();
        let l = cache
            .entry(pair.loser_title.as_str())
            .or_insert_with(|| Arc::new(encode(&pair.loser_title)))
            .clone();
        out.push((w, l));
    }
    out
}

fn train_onehot(
    pairs: &[PostPair],
    config: &BaselineConfig,
) -> Result<(BaselineModel, TrainReport)> {
    let titles = pairs
        .iter()
        .flat_map(|p| [p.winner_title.as_str(), p.loser_title.as_str()]);
    let vocab = build_vocab(titles, config.vocab_size)?;
    let features = pair_features(pairs, |title| onehot_indices(title, &vocab));
    // Flat layout: weight vector then bias. The bias gradient cancels
    // within every pair, so it stays at zero.
    let flat = vec![0.0; vocab.len() + 1];
    let (flat, losses, accuracies, wall) = run_epochs(
        &features,
        flat,
        config,
        |indices: &Vec<usize>, flat| {
            indices.iter().map(|&i| flat[i]).sum::<f64>() + flat[flat.len() - 1]
        },
        |indices: &Vec<usize>, dz, _flat, grads| {
            for &i in indices {
                grads[i] += dz;
            }
        },
    );
    let params = LogisticParams {
        bias: flat[flat.len() - 1],
        weights: flat[..flat.len() - 1].to_vec(),
    };
    let report = make_report(losses, accuracies, pairs.len(), config.train.epochs, wall);
    Ok((BaselineModel::Onehot(OnehotModel { vocab, params }), report))
}

fn train_mlp(
    pairs: &[PostPair],
    embeddings: &Arc<EmbeddingTable>,
    config: &BaselineConfig,
) -> Result<(BaselineModel, TrainReport)> {
    let hidden = config.hidden;
    let dim = embeddings.dim();
    let init = init_mlp_params(hidden, dim, config.train.seed)?;
    let features = pair_features(pairs, |title| glove_average(title, embeddings));
    let (flat, losses, accuracies, wall) = run_epochs(
        &features,
        init.to_flat(),
        config,
        |avg: &Array1<f64>, flat| mlp_flat_score(avg, flat, hidden, dim),
        |avg: &Array1<f64>, dz, flat, grads| mlp_flat_gradient(avg, dz, flat, hidden, dim, grads),
    );
    let params = MlpParams::from_flat(hidden, dim, &flat)?;
    let report = make_report(losses, accuracies, pairs.len(), config.train.epochs, wall);
    Ok((
        BaselineModel::Mlp(MlpModel {
            params,
            embeddings: Arc::clone(embeddings),
        }),
        report,
    ))
}
