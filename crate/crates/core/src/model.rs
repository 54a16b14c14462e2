//! The attention-based scoring model and its gradients.
//!
//! A title is a matrix of frozen embedding rows. Scoring runs three stages:
//! parameter-free scaled dot-product self-attention over the rows, a 1-D
//! convolution over the attended context, and a dense layer producing one
//! real score. Because the attention stage has no parameters and embeddings
//! are frozen, the context matrix of a title is a constant of the data, and
//! gradients only flow through the convolution and dense stages. Those
//! gradients are written out by hand below.

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Configuration and parameters
// ---------------------------------------------------------------------------

/// Post-convolution nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    None,
}

impl std::str::FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "none" => Ok(Activation::None),
            other => Err(Error::Config(format!(
                "unknown activation {other:?}, expected relu or none"
            ))),
        }
    }
}

/// Model hyperparameters. `dim` must match the embedding table and `max_len`
/// bounds the number of token rows a title may contribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Embedding dimension d_m.
    pub dim: usize,
    /// Convolution window size k.
    pub kernel_size: usize,
    /// Number of convolution filters F.
    pub num_filters: usize,
    /// Maximum title length L in tokens.
    pub max_len: usize,
    /// Nonlinearity applied to convolution outputs.
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dim: 300,
            kernel_size: 3,
            num_filters: 1,
            max_len: 30,
            activation: Activation::Relu,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("dim must be at least 1".into()));
        }
        if self.kernel_size == 0 || self.kernel_size > self.max_len {
            return Err(Error::Config(format!(
                "kernel_size must satisfy 1 <= k <= max_len, got k={} max_len={}",
                self.kernel_size, self.max_len
            )));
        }
        if self.num_filters == 0 {
            return Err(Error::Config("num_filters must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of convolution output positions the dense layer reads per
    /// filter: L - k + 1.
    pub fn conv_positions(&self) -> usize {
        self.max_len - self.kernel_size + 1
    }

    /// Length of the dense weight vector: F * (L - k + 1).
    pub fn dense_len(&self) -> usize {
        self.num_filters * self.conv_positions()
    }

    /// Total learnable parameter count.
    pub fn n_params(&self) -> usize {
        self.num_filters * self.kernel_size * self.dim  // conv kernel
            + self.num_filters                          // conv bias
            + self.dense_len()                          // dense weights
            + 1                                         // dense bias
    }
}

/// Learnable parameters. The same struct carries gradients, which use the
/// identical layout. Flat order is conv_kernel (filter, row, column,
/// row-major), conv_bias, dense_weights (filter-major), dense_bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// `(F, k, dim)`.
    pub conv_kernel: Array3<f64>,
    /// One bias per filter.
    pub conv_bias: Vec<f64>,
    /// Filter-major weights over zero-padded convolution outputs.
    pub dense_weights: Vec<f64>,
    pub dense_bias: f64,
}

impl ModelParams {
    pub fn zeros(config: &ModelConfig) -> Self {
        Self {
            conv_kernel: Array3::zeros((config.num_filters, config.kernel_size, config.dim)),
            conv_bias: vec![0.0; config.num_filters],
            dense_weights: vec![0.0; config.dense_len()],
            dense_bias: 0.0,
        }
    }

    /// Check the parameter shapes against a configuration.
    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        let expect = (config.num_filters, config.kernel_size, config.dim);
        if self.conv_kernel.dim() != expect {
            return Err(Error::Data(format!(
                "conv kernel shape {:?} does not match config {:?}",
                self.conv_kernel.dim(),
                expect
            )));
        }
        if self.conv_bias.len() != config.num_filters {
            return Err(Error::Data(format!(
                "conv bias length {} does not match {} filters",
                self.conv_bias.len(),
                config.num_filters
            )));
        }
        if self.dense_weights.len() != config.dense_len() {
            return Err(Error::Data(format!(
                "dense weight length {} does not match expected {}",
                self.dense_weights.len(),
                config.dense_len()
            )));
        }
        let finite = self
            .conv_kernel
            .iter()
            .chain(&self.conv_bias)
            .chain(&self.dense_weights)
            .all(|v| v.is_finite());
        if !finite || !self.dense_bias.is_finite() {
            return Err(Error::NonFinite("model parameters".into()));
        }
        Ok(())
    }

    /// Flatten into the declared parameter order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(
            self.conv_kernel.len() + self.conv_bias.len() + self.dense_weights.len() + 1,
        );
        flat.extend(self.conv_kernel.iter().copied());
        flat.extend(self.conv_bias.iter().copied());
        flat.extend(self.dense_weights.iter().copied());
        flat.push(self.dense_bias);
        flat
    }

    /// Rebuild from the declared flat order.
    pub fn from_flat(config: &ModelConfig, flat: &[f64]) -> Result<Self> {
        if flat.len() != config.n_params() {
            return Err(Error::Data(format!(
                "flat parameter vector has length {}, expected {}",
                flat.len(),
                config.n_params()
            )));
        }
        let kernel_len = config.num_filters * config.kernel_size * config.dim;
        let conv_kernel = Array3::from_shape_vec(
            (config.num_filters, config.kernel_size, config.dim),
            flat[..kernel_len].to_vec(),
        )
        .expect("length checked above");
        let mut offset = kernel_len;
        let conv_bias = flat[offset..offset + config.num_filters].to_vec();
        offset += config.num_filters;
        let dense_weights = flat[offset..offset + config.dense_len()].to_vec();
        offset += config.dense_len();
        Ok(Self {
            conv_kernel,
            conv_bias,
            dense_weights,
            dense_bias: flat[offset],
        })
    }
}

/// Glorot-uniform initialization: weights drawn from
/// `U(-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out)))`, biases zero.
/// For the convolution fan_in is the window size `k * dim` and fan_out is
/// the filter count; for the dense layer fan_in is its input length and
/// fan_out is 1. Deterministic for a given seed.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::zeros(config);

    let conv_fan_in = (config.kernel_size * config.dim) as f64;
    let conv_bound = (6.0 / (conv_fan_in + config.num_filters as f64)).sqrt();
    for w in params.conv_kernel.iter_mut() {
        *w = rng.gen_range(-conv_bound..conv_bound);
    }

    let dense_bound = (6.0 / (config.dense_len() as f64 + 1.0)).sqrt();
    for w in params.dense_weights.iter_mut() {
        *w = rng.gen_range(-dense_bound..dense_bound);
    }
    Ok(params)
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

/// Attention weights and the attended context for one title.
///
/// `weights` is row-stochastic: every row sums to 1 and entries lie in
/// [0, 1]. Mathematically entries are strictly inside (0, 1) for n > 1, but
/// extreme logit gaps saturate to the endpoints in floating point.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMatrix {
    /// `(n, n)` row-stochastic weights.
    pub weights: Array2<f64>,
    /// `(n, dim)` attended context, `weights . rows`.
    pub context: Array2<f64>,
}

/// Scaled dot-product self-attention with no learned parameters:
/// `A = row_softmax(M M^T / sqrt(dim))`, context `= A M`. The softmax
/// subtracts each row's maximum before exponentiation, which keeps the
/// result finite for any finite input. A single-row input attends only to
/// itself, so its context equals the input row exactly.
pub fn self_attention(rows: &Array2<f64>) -> Result<AttentionMatrix> {
    let (n, dim) = (rows.nrows(), rows.ncols());
    if n == 0 || dim == 0 {
        return Err(Error::Data(format!(
            "attention input must be non-empty, got {n}x{dim}"
        )));
    }
    if rows.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("attention input".into()));
    }

    let scale = (dim as f64).sqrt();
    let mut weights = rows.dot(&rows.t());
    weights.mapv_inplace(|v| v / scale);

    for mut row in weights.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum: f64 = row.sum();
        row.mapv_inplace(|v| v / sum);
    }

    let context = weights.dot(rows);
    Ok(AttentionMatrix { weights, context })
}

/// Valid 1-D convolution over context rows followed by the configured
/// activation. Output position `i` of filter `f` is the inner product of
/// `kernel[f]` with context rows `i..i+k` plus `bias[f]`. Inputs shorter
/// than the window are padded with zero rows, giving a single output
/// position.
pub fn conv1d_forward(
    context: &Array2<f64>,
    params: &ModelParams,
    config: &ModelConfig,
) -> Array2<f64> {
    let n = context.nrows();
    let k = config.kernel_size;
    let out_len = if n >= k { n - k + 1 } else { 1 };
    let mut out = Array2::zeros((config.num_filters, out_len));
    for f in 0..config.num_filters {
        for i in 0..out_len {
            let mut acc = params.conv_bias[f];
            for r in 0..k {
                let row = i + r;
                if row >= n {
                    continue; // zero padding contributes nothing
                }
                for c in 0..config.dim {
                    acc += params.conv_kernel[[f, r, c]] * context[[row, c]];
                }
            }
            out[[f, i]] = match config.activation {
                Activation::Relu => acc.max(0.0),
                Activation::None => acc,
            };
        }
    }
    out
}

/// Dense readout: convolution outputs are zero-padded on the right to the
/// fixed length `F * (L - k + 1)` (filter-major) and mapped to a scalar.
pub fn dense_forward(conv_out: &Array2<f64>, params: &ModelParams, config: &ModelConfig) -> f64 {
    let positions = config.conv_positions();
    let mut score = params.dense_bias;
    for f in 0..config.num_filters {
        for i in 0..conv_out.ncols().min(positions) {
            score += params.dense_weights[f * positions + i] * conv_out[[f, i]];
        }
    }
    score
}

/// Everything the backward pass needs about one scored title.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `(n, n)` attention weights.
    pub attention: Array2<f64>,
    /// `(n, dim)` attended context.
    pub context: Array2<f64>,
    /// `(F, n - k + 1)` post-activation convolution outputs (length 1 for
    /// padded short titles); the dense layer reads them zero-padded to
    /// `(F, L - k + 1)`.
    pub conv_out: Array2<f64>,
    pub score: f64,
}

/// Full forward pass over one title's embedding rows.
pub fn forward(
    rows: &Array2<f64>,
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<ForwardTrace> {
    config.validate()?;
    params.validate(config)?;
    if rows.ncols() != config.dim {
        return Err(Error::Data(format!(
            "title rows have dimension {}, model expects {}",
            rows.ncols(),
            config.dim
        )));
    }
    if rows.nrows() == 0 || rows.nrows() > config.max_len {
        return Err(Error::Data(format!(
            "title must have between 1 and {} rows, got {}",
            config.max_len,
            rows.nrows()
        )));
    }
    let attn = self_attention(rows)?;
    let conv_out = conv1d_forward(&attn.context, params, config);
    let score = dense_forward(&conv_out, params, config);
    Ok(ForwardTrace {
        attention: attn.weights,
        context: attn.context,
        conv_out,
        score,
    })
}

/// Preccompute the attended context of a title once. Training caches these:
/// attention has no parameters and embeddings are frozen, so the context is
/// a constant of the data and reusing it is exactly equivalent to
/// recomputing it every step.
pub fn forward_from_context(
    context: &Array2<f64>,
    params: &ModelParams,
    config: &ModelConfig,
) -> (Array2<f64>, f64) {
    let conv_out = conv1d_forward(context, params, config);
    let score = dense_forward(&conv_out, params, config);
    (conv_out, score)
}

// ---------------------------------------------------------------------------
// Backward pass
// ---------------------------------------------------------------------------

/// Gradient of the pairwise hinge loss
/// `max(0, margin + score(loser) - score(winner))` with respect to every
/// parameter, computed from the traces of both titles.
///
/// The subgradient is exact: when the hinge is inactive (including exactly
/// at the kink) every gradient is zero, and ReLU passes gradient only where
/// its output is strictly positive. The dense bias enters both scores with
/// coefficient one, so its gradient cancels in the difference.
pub fn backward(
    winner: &ForwardTrace,
    loser: &ForwardTrace,
    params: &ModelParams,
    config: &ModelConfig,
    margin: f64,
) -> ModelParams {
    backward_scored(
        ScoredTitle {
            context: &winner.context,
            conv_out: &winner.conv_out,
            score: winner.score,
        },
        ScoredTitle {
            context: &loser.context,
            conv_out: &loser.conv_out,
            score: loser.score,
        },
        params,
        config,
        margin,
    )
}

/// The pieces of a scored title the backward pass actually reads. Attention
/// weights are not among them: with frozen embeddings the context is a
/// constant, so training can run from cached contexts alone.
#[derive(Debug, Clone, Copy)]
pub struct ScoredTitle<'a> {
    pub context: &'a Array2<f64>,
    pub conv_out: &'a Array2<f64>,
    pub score: f64,
}

/// [`backward`] for callers that keep contexts cached instead of full traces.
pub fn backward_scored(
    winner: ScoredTitle,
    loser: ScoredTitle,
    params: &ModelParams,
    config: &ModelConfig,
    margin: f64,
) -> ModelParams {
    let mut grads = ModelParams::zeros(config);
    if margin + loser.score - winner.score <= 0.0 {
        return grads;
    }
    // d loss / d score(loser) = +1, d loss / d score(winner) = -1.
    accumulate_score_gradient(&mut grads, loser, params, config, 1.0);
    accumulate_score_gradient(&mut grads, winner, params, config, -1.0);
    grads
}

/// Add `sign * d score / d theta` for one scored title into `grads`.
fn accumulate_score_gradient(
    grads: &mut ModelParams,
    title: ScoredTitle<'_>,
    params: &ModelParams,
    config: &ModelConfig,
    sign: f64,
) {
    let positions = config.conv_positions();
    let out_len = title.conv_out.ncols();
    let n = title.context.nrows();
    let k = config.kernel_size;

    grads.dense_bias += sign;
    for f in 0..config.num_filters {
        for i in 0..out_len {
            grads.dense_weights[f * positions + i] += sign * title.conv_out[[f, i]];

            // Gradient reaching the convolution pre-activation. ReLU output
            // is positive exactly when its pre-activation is, so the stored
            // post-activation value decides the mask.
            let mut g = sign * params.dense_weights[f * positions + i];
            if config.activation == Activation::Relu && title.conv_out[[f, i]] <= 0.0 {
                g = 0.0;
            }
            if g == 0.0 {
                continue;
            }
            grads.conv_bias[f] += g;
            for r in 0..k {
                let row = i + r;
                if row >= n {
                    continue; // zero-padded row: no kernel gradient
                }
                for c in 0..config.dim {
                    grads.conv_kernel[[f, r, c]] += g * title.context[[row, c]];
                }
            }
        }
    }
}
