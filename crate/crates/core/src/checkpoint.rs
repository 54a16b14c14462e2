//! Versioned binary checkpoints for trained models.
//!
//! The main model file is a fixed header (magic, format version, the
//! model configuration and the out-of-vocabulary policy) followed by the
//! parameters as little-endian 64-bit floats in declared order:
//! conv_kernel, conv_bias, dense_weights, dense_bias. Baselines use a
//! separate magic and carry a kind tag; the 1-hot kind stores its
//! vocabulary inline, the MLP kind stores its layer shapes. Embedding
//! tables are never serialized here: they are frozen inputs with their
//! own file.
//!
//! A text sidecar `<model>.meta.txt` records seed, configuration and
//! training metadata. Wall-clock figures are deliberately excluded so a
//! rerun with the same seed writes byte-identical files; timing lives in
//! the per-run manifest instead.

use std::path::{Path, PathBuf};

use crate::baselines::{BaselineModel, LogisticParams, MlpParams, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{Activation, ModelConfig, ModelParams};
use crate::text::OovPolicy;
use crate::train::{TrainConfig, TrainReport};

const MODEL_MAGIC: &[u8; 8] = b"TRNKMODL";
const BASELINE_MAGIC: &[u8; 8] = b"TRNKBASE";
pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const BASELINE_FORMAT_VERSION: u32 = 1;

const KIND_ONEHOT: u8 = 1;
const KIND_MLP: u8 = 2;

/// Everything needed to rebuild a scorer, minus the embedding table.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub params: ModelParams,
    pub config: ModelConfig,
    pub oov: OovPolicy,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BaselineCheckpoint {
    Onehot {
        vocab: Vocabulary,
        params: LogisticParams,
    },
    Mlp(MlpParams),
}

fn activation_tag(a: Activation) -> u8 {
    match a {
        Activation::Relu => 0,
        Activation::None => 1,
    }
}

fn activation_from_tag(tag: u8) -> Result<Activation> {
    match tag {
        0 => Ok(Activation::Relu),
        1 => Ok(Activation::None),
        other => Err(Error::Data(format!("unknown activation tag {other}"))),
    }
}

fn oov_tag(oov: OovPolicy) -> u8 {
    match oov {
        OovPolicy::Drop => 0,
        OovPolicy::Zero => 1,
    }
}

fn oov_from_tag(tag: u8) -> Result<OovPolicy> {
    match tag {
        0 => Ok(OovPolicy::Drop),
        1 => Ok(OovPolicy::Zero),
        other => Err(Error::Data(format!("unknown oov tag {other}"))),
    }
}

fn push_u32(out: &mut Vec<u8>, value: usize, what: &str) -> Result<()> {
    let v: u32 = value
        .try_into()
        .map_err(|_| Error::Data(format!("{what} {value} exceeds the format's u32 range")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn push_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Byte reader that reports truncation with offsets and file context.
struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8], path: &'a Path) -> Self {
        Self { bytes, at: 0, path }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let slice = &self.bytes[self.at..end];
                self.at = end;
                Ok(slice)
            }
            None => Err(Error::Data(format!(
                "{}: truncated checkpoint, needed {n} bytes at offset {}",
                self.path.display(),
                self.at
            ))),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| {
            Error::Data(format!("{}: absurd array length {n}", self.path.display()))
        })?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn finish(&self) -> Result<()> {
        if self.at != self.bytes.len() {
            return Err(Error::Data(format!(
                "{}: {} trailing bytes after the checkpoint payload",
                self.path.display(),
                self.bytes.len() - self.at
            )));
        }
        Ok(())
    }
}

fn check_magic(cursor: &mut Cursor, expected: &[u8; 8], what: &str) -> Result<()> {
    let magic = cursor.take(8)?;
    if magic != expected {
        return Err(Error::Data(format!(
            "{}: not a {what} checkpoint (bad magic)",
            cursor.path.display()
        )));
    }
    Ok(())
}

fn check_version(cursor: &mut Cursor, expected: u32) -> Result<()> {
    let version = cursor.u32()?;
    if version != expected {
        return Err(Error::Data(format!(
            "{}: unsupported checkpoint format version {version}, this build reads {expected}",
            cursor.path.display()
        )));
    }
    Ok(())
}

pub fn save_model(
    path: &Path,
    params: &ModelParams,
    config: &ModelConfig,
    oov: OovPolicy,
) -> Result<()> {
    config.validate()?;
    params.validate(config)?;
    let mut out = Vec::with_capacity(32 + 8 * config.n_params());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
    push_u32(&mut out, config.dim, "dim")?;
    push_u32(&mut out, config.kernel_size, "kernel_size")?;
    push_u32(&mut out, config.num_filters, "num_filters")?;
    push_u32(&mut out, config.max_len, "max_len")?;
    out.push(activation_tag(config.activation));
    out.push(oov_tag(oov));
    push_f64s(&mut out, &params.to_flat());
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<ModelCheckpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cursor = Cursor::new(&bytes, path);
    check_magic(&mut cursor, MODEL_MAGIC, "model")?;
    check_version(&mut cursor, MODEL_FORMAT_VERSION)?;
    let config = ModelConfig {
        dim: cursor.u32()? as usize,
        kernel_size: cursor.u32()? as usize,
        num_filters: cursor.u32()? as usize,
        max_len: cursor.u32()? as usize,
        activation: activation_from_tag(cursor.u8()?)?,
    };
    let oov = oov_from_tag(cursor.u8()?)?;
    config.validate()?;
    let flat = cursor.f64s(config.n_params())?;
    cursor.finish()?;
    let params = ModelParams::from_flat(&config, &flat)?;
    params.validate(&config)?;
    Ok(ModelCheckpoint {
        params,
        config,
        oov,
    })
}

/// Path of the text sidecar for a model checkpoint at `path`.
pub fn meta_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_os_string();
    name.push(".meta.txt");
    PathBuf::from(name)
}

/// Write `<path>.meta.txt` describing a trained model. Content is fully
/// determined by the inputs, so reruns with one seed are byte-identical.
pub fn write_model_meta(
    path: &Path,
    config: &ModelConfig,
    oov: OovPolicy,
    train: &TrainConfig,
    report: &TrainReport,
) -> Result<()> {
    let mut out = String::from("titlerank model checkpoint\n");
    let mut line = |key: &str, value: String| {
        out.push_str(key);
        out.push_str(": ");
        out.push_str(&value);
        out.push('\n');
    };
    line("format_version", MODEL_FORMAT_VERSION.to_string());
    line("dim", config.dim.to_string());
    line("kernel_size", config.kernel_size.to_string());
    line("num_filters", config.num_filters.to_string());
    line("max_len", config.max_len.to_string());
    line(
        "activation",
        match config.activation {
            Activation::Relu => "relu".into(),
            Activation::None => "none".into(),
        },
    );
    line(
        "oov",
        match oov {
            OovPolicy::Drop => "drop".into(),
            OovPolicy::Zero => "zero".into(),
        },
    );
    line("seed", train.seed.to_string());
    line("optimizer", train.optimizer.to_string());
    line("learning_rate", train.learning_rate.to_string());
    line("batch_size", train.batch_size.to_string());
    line("margin", train.margin.to_string());
    line("epochs", train.epochs.to_string());
    line("cache_contexts", train.cache_contexts.to_string());
    line("pairs_used", report.pairs_used.to_string());
    line("pairs_skipped", report.pairs_skipped.to_string());
    if let Some(loss) = report.epoch_losses.last() {
        line("final_loss", loss.to_string());
    }
    if let Some(acc) = report.epoch_accuracies.last() {
        line("final_train_accuracy", acc.to_string());
    }
    let target = meta_path(path);
    std::fs::write(&target, out).map_err(|e| Error::io(&target, e))
}

pub fn save_baseline(path: &Path, model: &BaselineModel) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(BASELINE_MAGIC);
    out.extend_from_slice(&BASELINE_FORMAT_VERSION.to_le_bytes());
    match model {
        BaselineModel::Onehot(m) => {
            if m.params.weights.len() != m.vocab.len() {
                return Err(Error::Data(format!(
                    "weight count {} does not match vocabulary size {}",
                    m.params.weights.len(),
                    m.vocab.len()
                )));
            }
            if !m.params.weights.iter().all(|w| w.is_finite()) || !m.params.bias.is_finite() {
                return Err(Error::NonFinite("1-hot logistic parameters".into()));
            }
            out.push(KIND_ONEHOT);
            push_u32(&mut out, m.vocab.len(), "vocabulary size")?;
            for token in m.vocab.tokens() {
                push_u32(&mut out, token.len(), "token byte length")?;
                out.extend_from_slice(token.as_bytes());
            }
            push_f64s(&mut out, &m.params.weights);
            push_f64s(&mut out, &[m.params.bias]);
        }
        BaselineModel::Mlp(m) => {
            m.params.validate()?;
            out.push(KIND_MLP);
            push_u32(&mut out, m.params.hidden(), "hidden size")?;
            push_u32(&mut out, m.params.dim(), "dim")?;
            push_f64s(&mut out, &m.params.to_flat());
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_baseline(path: &Path) -> Result<BaselineCheckpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cursor = Cursor::new(&bytes, path);
    check_magic(&mut cursor, BASELINE_MAGIC, "baseline")?;
    check_version(&mut cursor, BASELINE_FORMAT_VERSION)?;
    let kind = cursor.u8()?;
    let checkpoint = match kind {
        KIND_ONEHOT => {
            let n = cursor.u32()? as usize;
            let mut tokens = Vec::with_capacity(n.min(1 << 20));
            for _ in 0..n {
                let len = cursor.u32()? as usize;
                let raw = cursor.take(len)?;
                let token = std::str::from_utf8(raw)
                    .map_err(|_| {
                        Error::Data(format!(
                            "{}: vocabulary token is not valid UTF-8",
                            path.display()
                        ))
                    })?
                    .to_string();
                tokens.push(token);
            }
            let weights = cursor.f64s(n)?;
            let bias = cursor.f64s(1)?[0];
            if !weights.iter().all(|w| w.is_finite()) || !bias.is_finite() {
                return Err(Error::NonFinite(format!(
                    "1-hot logistic parameters in {}",
                    path.display()
                )));
            }
            BaselineCheckpoint::Onehot {
                vocab: Vocabulary::from_tokens(tokens)?,
                params: LogisticParams { weights, bias },
            }
        }
        KIND_MLP => {
            let hidden = cursor.u32()? as usize;
            let dim = cursor.u32()? as usize;
            let n = hidden
                .checked_mul(dim)
                .and_then(|hd| hd.checked_add(2 * hidden + 1))
                .ok_or_else(|| {
                    Error::Data(format!("{}: absurd MLP shape", path.display()))
                })?;
            let flat = cursor.f64s(n)?;
            let params = MlpParams::from_flat(hidden, dim, &flat)?;
            params.validate()?;
            BaselineCheckpoint::Mlp(params)
        }
        other => {
            return Err(Error::Data(format!(
                "{}: unknown baseline kind tag {other}",
                path.display()
            )))
        }
    };
    cursor.finish()?;
    Ok(checkpoint)
}
