//! Contrastive training of the attention model on ranked title pairs.
//!
//! Training minimizes the pairwise hinge loss
//! `max(0, margin + score(loser) - score(winner))` over shuffled mini
//! batches. Embeddings are frozen and attention has no parameters, so each
//! distinct title's attended context is computed once up front and cached;
//! recomputing it every step would produce bit-identical trajectories, just
//! slower, and a config switch exists to do exactly that for verification.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Scorer;
use crate::model::{
    self_attention, backward_scored, forward, forward_from_context, init_params, ForwardTrace,
    ModelConfig, ModelParams, ScoredTitle,
};
use crate::pairing::PostPair;
use crate::text::{embed_title, tokenize, EmbeddingMatrix, EmbeddingTable, OovPolicy};

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

/// Pairwise hinge loss `max(0, margin + loser - winner)`. Zero margin makes
/// any strict ordering lossless, which is why accuracy tracking counts ties
/// as failures: a model collapsing every score to one value reaches zero
/// loss but 0% accuracy.
pub fn hinge_loss(winner_score: f64, loser_score: f64, margin: f64) -> f64 {
    (margin + loser_score - winner_score).max(0.0)
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

impl std::str::FromStr for Optimizer {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::Adam),
            other => Err(Error::Config(format!(
                "unknown optimizer {other:?}, expected sgd or adam"
            ))),
        }
    }
}

impl std::fmt::Display for Optimizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Optimizer::Sgd => "sgd",
            Optimizer::Adam => "adam",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Hinge margin, zero by default.
    pub margin: f64,
    /// Seeds parameter init and the per-epoch shuffle.
    pub seed: u64,
    pub optimizer: Optimizer,
    /// Precompute each distinct title's context once (default). Disabling
    /// recomputes attention every step; results are bit-identical.
    pub cache_contexts: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 64,
            learning_rate: 1e-3,
            margin: 0.0,
            seed: 0,
            optimizer: Optimizer::Adam,
            cache_contexts: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(Error::Config(format!(
                "margin must be non-negative and finite, got {}",
                self.margin
            )));
        }
        Ok(())
    }
}

/// Per-epoch training statistics plus throughput.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean hinge loss of each epoch's update passes.
    pub epoch_losses: Vec<f64>,
    /// Pairwise accuracy over the training pairs after each epoch, ties
    /// counted as failures.
    pub epoch_accuracies: Vec<f64>,
    /// Pairs that entered training.
    pub pairs_used: usize,
    /// Pairs dropped because a title had no embeddable token.
    pub pairs_skipped: usize,
    /// Wall-clock seconds spent in the update loop.
    pub wall_seconds: f64,
    /// Pairs processed per second of update-loop time.
    pub pairs_per_second: f64,
}

// ---------------------------------------------------------------------------
// The trained artifact
// ---------------------------------------------------------------------------

/// A scoring model bundled with everything needed to score raw titles:
/// parameters, configuration, out-of-vocabulary policy and the frozen
/// embedding table.
#[derive(Debug, Clone)]
pub struct TitleRanker {
    pub params: ModelParams,
    pub config: ModelConfig,
    pub oov: OovPolicy,
    pub embeddings: Arc<EmbeddingTable>,
    /// False for freshly initialized parameters; interpretation requires a
    /// trained model.
    pub trained: bool,
}

impl TitleRanker {
    pub fn new(
        params: ModelParams,
        config: ModelConfig,
        oov: OovPolicy,
        embeddings: Arc<EmbeddingTable>,
        trained: bool,
    ) -> Result<Self> {
        config.validate()?;
        params.validate(&config)?;
        if embeddings.dim() != config.dim {
            return Err(Error::Config(format!(
                "embedding table dimension {} does not match model dim {}",
                embeddings.dim(),
                config.dim
            )));
        }
        Ok(Self {
            params,
            config,
            oov,
            embeddings,
            trained,
        })
    }

    /// Tokenize and embed a title under this model's text settings.
    pub fn encode(&self, title: &str) -> EmbeddingMatrix {
        let tokens = tokenize(title);
        embed_title(&tokens, &self.embeddings, self.config.max_len, self.oov)
    }

    /// Full forward pass with intermediates.
    pub fn trace(&self, title: &str) -> Result<ForwardTrace> {
        let encoded = self.encode(title);
        forward(&encoded.rows, &self.params, &self.config)
    }

    pub fn score(&self, title: &str) -> Result<f64> {
        Ok(self.trace(title)?.score)
    }
}

impl Scorer for TitleRanker {
    fn score_title(&self, title: &str) -> Result<f64> {
        self.score(title)
    }
}

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

/// First-order optimizer state over a flat parameter vector. Updates are
/// deterministic functions of the gradient sequence.
#[derive(Debug, Clone)]
pub(crate) enum OptimizerState {
    Sgd,
    Adam {
        m: Vec<f64>,
        v: Vec<f64>,
        t: u64,
    },
}

impl OptimizerState {
    pub(crate) fn new(optimizer: Optimizer, n_params: usize) -> Self {
        match optimizer {
            Optimizer::Sgd => OptimizerState::Sgd,
            Optimizer::Adam => OptimizerState::Adam {
                m: vec![0.0; n_params],
                v: vec![0.0; n_params],
                t: 0,
            },
        }
    }

    pub(crate) fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        debug_assert_eq!(params.len(), grads.len());
        match self {
            OptimizerState::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= lr * g;
                }
            }
            OptimizerState::Adam { m, v, t } => {
                const BETA1: f64 = 0.9;
                const BETA2: f64 = 0.999;
                const EPS: f64 = 1e-8;
                *t += 1;
                let t_ = *t as i32;
                let bc1 = 1.0 - BETA1.powi(t_);
                let bc2 = 1.0 - BETA2.powi(t_);
                for i in 0..params.len() {
                    m[i] = BETA1 * m[i] + (1.0 - BETA1) * grads[i];
                    v[i] = BETA2 * v[i] + (1.0 - BETA2) * grads[i] * grads[i];
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    params[i] -= lr * m_hat / (v_hat.sqrt() + EPS);
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Pair preparation
// ---------------------------------------------------------------------------

/// One side of a prepared pair: either the cached context or the raw
/// embedding rows to recompute it from.
enum TitleRep {
    Cached(Array2<f64>),
    Raw(Array2<f64>),
}

impl TitleRep {
    /// Post-activation convolution output and score under `params`.
    fn run(&self, params: &ModelParams, config: &ModelConfig) -> (Array2<f64>, Array2<f64>, f64) {
        match self {
            TitleRep::Cached(context) => {
                let (conv_out, score) = forward_from_context(context, params, config);
                (context.clone(), conv_out, score)
            }
            TitleRep::Raw(rows) => {
                let attn = self_attention(rows).expect("rows validated during preparation");
                let (conv_out, score) = forward_from_context(&attn.context, params, config);
                (attn.context, conv_out, score)
            }
        }
    }

    fn score(&self, params: &ModelParams, config: &ModelConfig) -> f64 {
        match self {
            TitleRep::Cached(context) => forward_from_context(context, params, config).1,
            TitleRep::Raw(rows) => {
                let attn = self_attention(rows).expect("rows validated during preparation");
                forward_from_context(&attn.context, params, config).1
            }
        }
    }
}

struct PreparedPair {
    winner: Arc<TitleRep>,
    loser: Arc<TitleRep>,
}

/// Encode every pair, sharing work across repeated titles. Pairs where
/// either title has no embeddable token are dropped and counted.
fn prepare_pairs(
    pairs: &[PostPair],
    embeddings: &EmbeddingTable,
    model_config: &ModelConfig,
    oov: OovPolicy,
    cache_contexts: bool,
) -> Result<(Vec<PreparedPair>, usize)> {
    let mut reps: HashMap<&str, Option<Arc<TitleRep>>> = HashMap::new();
    let encode = |title: &'_ str| -> Option<Arc<TitleRep>> {
        let encoded = embed_title(&tokenize(title), embeddings, model_config.max_len, oov);
        if encoded.is_empty_fallback() {
            return None;
        }
        let rep = if cache_contexts {
            let attn = self_attention(&encoded.rows).expect("embeddings are finite");
            TitleRep::Cached(attn.context)
        } else {
            TitleRep::Raw(encoded.rows)
        };
        Some(Arc::new(rep))
    };

    let mut prepared = Vec::with_capacity(pairs.len());
    let mut skipped = 0;
    for pair in pairs {
        let winner = match reps.entry(pair.winner_title.as_str()) {
            std::collections::hash_map::Entry::Occupied(e) => e.get().clone(),
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(encode(&pair.winner_title)).clone()
            }
        };
        let loser = match reps.entry(pair.loser_title.as_str()) {
            std::collections::hash_map::Entry::Occupied(e) => e.get().clone(),
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(encode(&pair.loser_title)).clone()
            }
        };
        match (winner, loser) {
            (Some(w), Some(l)) => prepared.push(PreparedPair { winner: w, loser: l }),
            _ => skipped += 1,
        }
    }
    Ok((prepared, skipped))
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

/// Train the attention model on ranked pairs. Deterministic for a given
/// seed: initialization, the per-epoch shuffle and every update depend only
/// on the seed and the pair sequence.
pub fn train(
    pairs: &[PostPair],
    embeddings: &Arc<EmbeddingTable>,
    model_config: &ModelConfig,
    oov: OovPolicy,
    config: &TrainConfig,
) -> Result<(TitleRanker, TrainReport)> {
    config.validate()?;
    model_config.validate()?;
    if embeddings.dim() != model_config.dim {
        return Err(Error::Config(format!(
            "embedding table dimension {} does not match model dim {}",
            embeddings.dim(),
            model_config.dim
        )));
    }

    let (prepared, skipped) = prepare_pairs(
        pairs,
        embeddings,
        model_config,
        oov,
        config.cache_contexts,
    )?;
    if prepared.is_empty() {
        return Err(Error::Data(format!(
            "no trainable pairs: all {} input pairs had an unembeddable title",
            pairs.len()
        )));
    }

    let params = init_params(model_config, config.seed)?;
    let mut flat = params.to_flat();
    let mut opt = OptimizerState::new(config.optimizer, flat.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..prepared.len()).collect();

    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut epoch_accuracies = Vec::with_capacity(config.epochs);
    let mut update_time = 0.0f64;

    for _epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let started = Instant::now();
        let mut loss_sum = 0.0;
        let mut current = ModelParams::from_flat(model_config, &flat)?;
        for batch in order.chunks(config.batch_size) {
            let mut grad_sum = vec![0.0; flat.len()];
            for &idx in batch {
                let pair = &prepared[idx];
                let (w_ctx, w_conv, w_score) = pair.winner.run(&current, model_config);
                let (l_ctx, l_conv, l_score) = pair.loser.run(&current, model_config);
                loss_sum += hinge_loss(w_score, l_score, config.margin);
                let grads = backward_scored(
                    ScoredTitle {
                        context: &w_ctx,
                        conv_out: &w_conv,
                        score: w_score,
                    },
                    ScoredTitle {
                        context: &l_ctx,
                        conv_out: &l_conv,
                        score: l_score,
                    },
                    &current,
                    model_config,
                    config.margin,
                );
                for (s, g) in grad_sum.iter_mut().zip(grads.to_flat()) {
                    *s += g;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for g in grad_sum.iter_mut() {
                *g *= scale;
            }
            opt.step(&mut flat, &grad_sum, config.learning_rate);
            current = ModelParams::from_flat(model_config, &flat)?;
        }
        update_time += started.elapsed().as_secs_f64();
        epoch_losses.push(loss_sum / prepared.len() as f64);

        // Training accuracy with ties counted as failures.
        let mut correct = 0usize;
        for pair in &prepared {
            let w = pair.winner.score(&current, model_config);
            let l = pair.loser.score(&current, model_config);
            if w > l {
                correct += 1;
            }
        }
        epoch_accuracies.push(correct as f64 / prepared.len() as f64);
    }

    let final_params = ModelParams::from_flat(model_config, &flat)?;
    let total_pairs = config.epochs * prepared.len();
    let report = TrainReport {
        epoch_losses,
        epoch_accuracies,
        pairs_used: prepared.len(),
        pairs_skipped: skipped,
        wall_seconds: update_time,
        pairs_per_second: if update_time > 0.0 {
            total_pairs as f64 / update_time
        } else {
            f64::INFINITY
        },
    };
    let ranker = TitleRanker::new(
        final_params,
        *model_config,
        oov,
        Arc::clone(embeddings),
        true,
    )?;
    Ok((ranker, report))
}
