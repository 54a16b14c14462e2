//! Command-line pipeline driver: corpus ingestion, pairing, training,
//! evaluation, interpretation exports and synthetic-corpus generation.
//!
//! Every artifact-producing subcommand writes a JSON run manifest next to
//! its primary output (`<out>.manifest.json`) recording the command, the
//! full argument vector, the seeds in play, SHA-256 digests of the inputs,
//! the tool version and the wall time. Reruns with the same flags, seeds
//! and inputs produce byte-identical artifacts in single-threaded mode.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use titlerank_core::baselines::{
    train_baseline, BaselineConfig, BaselineKind, LossKind,
};
use titlerank_core::checkpoint::{
    load_model, meta_path, save_baseline, save_model, write_model_meta, BASELINE_FORMAT_VERSION,
    MODEL_FORMAT_VERSION,
};
use titlerank_core::corpus::{
    dedup_by_id, filter_posts, read_posts, subsample, write_posts, PostCollection,
};
use titlerank_core::eval::{
    kfold_cv, kfold_cv_with, mean, sample_stddev, write_fold_reports, FoldReport,
};
use titlerank_core::interpret::{
    attention_graph, compare_title, graph_to_dot, quartile_word_scores, top_k_words,
    word_attention_weights, AttentionAggregation,
};
use titlerank_core::model::{Activation, ModelConfig};
use titlerank_core::pairing::{pair_posts, read_pairs, write_pairs, PairingConfig};
use titlerank_core::stopwords::{builtin_stopwords, load_stopwords};
use titlerank_core::synth::{generate, write_embeddings, write_manifest, SynthConfig};
use titlerank_core::text::{EmbeddingTable, OovPolicy};
use titlerank_core::train::{train, Optimizer, TitleRanker, TrainConfig};

fn version_string() -> String {
    format!(
        "{} (model format {MODEL_FORMAT_VERSION}, baseline format {BASELINE_FORMAT_VERSION})",
        env!("CARGO_PKG_VERSION")
    )
}

// ---------------------------------------------------------------------------
// Argument surface
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "titlerank",
    version = version_string(),
    about = "Interpretable attention-based pairwise ranking of post titles",
    arg_required_else_help = true
)]
struct Cli {
    /// Worker threads for parallel sections; 0 or unset uses all cores.
    #[arg(long, global = true, env = "TITLERANK_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter a raw newline-delimited post dump down to a modeling corpus.
    Ingest(IngestArgs),
    /// Form time-controlled winner/loser pairs from an ingested corpus.
    Pair(PairArgs),
    /// Train the attention ranker and write a checkpoint.
    Train(TrainArgs),
    /// Train a baseline model and write a checkpoint.
    Baseline(BaselineArgs),
    /// K-fold cross-validated pairwise accuracy report.
    Eval(EvalArgs),
    /// Attention and score interpretation exports.
    #[command(subcommand)]
    Interpret(InterpretCmd),
    /// Generate a synthetic corpus with planted token effects.
    Synth(SynthArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Newline-delimited JSON post records.
    #[arg(long)]
    input: PathBuf,
    /// Keep only posts from this subreddit.
    #[arg(long)]
    subreddit: String,
    /// Drop posts scoring below this.
    #[arg(long, default_value_t = 2)]
    min_score: i64,
    /// Keep stickied posts instead of dropping them.
    #[arg(long)]
    keep_stickied: bool,
    /// Abort on the first malformed record instead of skipping it.
    #[arg(long)]
    strict: bool,
    /// Keep a seeded uniform fraction of the filtered posts.
    #[arg(long)]
    sample_fraction: Option<f64>,
    /// Seed for --sample-fraction.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PairArgs {
    /// Ingested corpus file.
    #[arg(long)]
    input: PathBuf,
    /// Maximum creation-time gap between paired posts, in minutes.
    #[arg(long, default_value_t = 30.0)]
    max_gap_min: f64,
    /// Minimum absolute score difference.
    #[arg(long, default_value_t = 20)]
    min_diff: i64,
    /// Winner score must be at least this multiple of the loser score.
    #[arg(long, default_value_t = 2.0)]
    min_ratio: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct ModelFlags {
    /// Embedding dimension of the table file.
    #[arg(long, default_value_t = 300)]
    dim: usize,
    #[arg(long, default_value_t = 3)]
    kernel_size: usize,
    #[arg(long, default_value_t = 1)]
    filters: usize,
    /// Titles are truncated to this many embedded tokens.
    #[arg(long, default_value_t = 30)]
    max_len: usize,
    /// Activation after the convolution: relu or none.
    #[arg(long, default_value = "relu", value_parser = parse_activation)]
    activation: Activation,
    /// Out-of-vocabulary policy: drop or zero.
    #[arg(long, default_value = "drop", value_parser = parse_oov)]
    oov: OovPolicy,
}

#[derive(Args, Clone)]
struct TrainFlags {
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Hinge margin for the pairwise loss.
    #[arg(long, default_value_t = 0.0)]
    margin: f64,
    /// sgd or adam.
    #[arg(long, default_value = "adam", value_parser = parse_optimizer)]
    optimizer: Optimizer,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Recompute attention contexts every epoch instead of caching them.
    #[arg(long)]
    no_cache: bool,
}

impl TrainFlags {
    fn to_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch,
            learning_rate: self.lr,
            margin: self.margin,
            seed: self.seed,
            optimizer: self.optimizer,
            cache_contexts: !self.no_cache,
        }
    }
}

impl ModelFlags {
    fn to_config(&self) -> ModelConfig {
        ModelConfig {
            dim: self.dim,
            kernel_size: self.kernel_size,
            num_filters: self.filters,
            max_len: self.max_len,
            activation: self.activation,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Pair records from `titlerank pair`.
    #[arg(long)]
    pairs: PathBuf,
    /// Frozen embedding table, one `token v1 .. vd` line per word.
    #[arg(long)]
    embeddings: PathBuf,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    train: TrainFlags,
    /// Checkpoint path; a text sidecar lands at `<out>.meta.txt`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BaselineArgs {
    /// onehot or mlp.
    #[arg(long, value_parser = parse_baseline_kind)]
    kind: BaselineKind,
    #[arg(long)]
    pairs: PathBuf,
    /// Embedding table; consulted only by the mlp kind.
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long, default_value_t = 300)]
    dim: usize,
    /// Vocabulary cap for the onehot kind.
    #[arg(long, default_value_t = 20_000)]
    vocab_size: usize,
    /// Hidden width for the mlp kind.
    #[arg(long, default_value_t = 256)]
    hidden: usize,
    /// logistic or hinge.
    #[arg(long, default_value = "logistic", value_parser = parse_loss)]
    loss: LossKind,
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    /// Model family to evaluate: main, onehot or mlp.
    #[arg(long, default_value = "main", value_parser = parse_eval_kind)]
    kind: EvalKind,
    /// The --seed flag shuffles the folds and seeds per-fold training.
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long, default_value_t = 20_000)]
    vocab_size: usize,
    #[arg(long, default_value_t = 256)]
    hidden: usize,
    #[arg(long, default_value = "logistic", value_parser = parse_loss)]
    loss: LossKind,
    /// CSV report: fold,train_size,test_size,accuracy plus a summary row.
    #[arg(long)]
    report: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum EvalKind {
    Main,
    Baseline(BaselineKind),
}

#[derive(Subcommand)]
enum InterpretCmd {
    /// Mean attention weight per word over a corpus, strongest first.
    TopWords(TopWordsArgs),
    /// Directed graph of the strongest word-to-word attention edges, in DOT.
    Graph(GraphArgs),
    /// Compare one title under two checkpoints with leave-one-out deltas.
    Compare(CompareArgs),
    /// Normalized per-word post-score quartile table.
    Quartiles(QuartilesArgs),
}

#[derive(Args)]
struct TopWordsArgs {
    /// Trained model checkpoint.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    /// Ingested corpus to aggregate over.
    #[arg(long)]
    corpus: PathBuf,
    /// Drop words seen fewer than this many times.
    #[arg(long, default_value_t = 5)]
    min_freq: usize,
    #[arg(long, default_value_t = 30)]
    top_k: usize,
    /// incoming, outgoing or incoming-diag.
    #[arg(long, default_value = "incoming", value_parser = parse_aggregation)]
    agg: AttentionAggregation,
    /// CSV: token,weight,occurrences.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GraphArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Keep this many strongest edges.
    #[arg(long, default_value_t = 25)]
    top_edges: usize,
    /// Stopword list file, one word per line; defaults to the builtin list.
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// DOT output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Title to score under both models.
    #[arg(long)]
    title: String,
    #[arg(long)]
    model_a: PathBuf,
    #[arg(long)]
    model_b: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long, default_value = "incoming", value_parser = parse_aggregation)]
    agg: AttentionAggregation,
    /// CSV: token,weight_a,weight_b,loo_delta_a,loo_delta_b.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct QuartilesArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Drop words contained in fewer than this many posts.
    #[arg(long, default_value_t = 5)]
    min_freq: usize,
    /// Normalize by the mean score of this many top posts.
    #[arg(long, default_value_t = 100)]
    top_n_norm: usize,
    /// Seeded uniform word samples reported per quartile.
    #[arg(long, default_value_t = 15)]
    sample: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV: token,score,quartile,occurrences.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Full generator configuration as JSON; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n_posts: Option<usize>,
    #[arg(long)]
    vocab_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated planted positive tokens.
    #[arg(long, value_delimiter = ',')]
    positive_tokens: Option<Vec<String>>,
    /// Comma-separated planted negative tokens.
    #[arg(long, value_delimiter = ',')]
    negative_tokens: Option<Vec<String>>,
    #[arg(long)]
    base_score: Option<f64>,
    #[arg(long)]
    positive_effect: Option<f64>,
    #[arg(long)]
    negative_effect: Option<f64>,
    #[arg(long)]
    noise_sd: Option<f64>,
    /// Corpus output; embeddings and the plant manifest default to
    /// `<out>.embeddings.txt` and `<out>.plants.json`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    embeddings_out: Option<PathBuf>,
    #[arg(long)]
    manifest_out: Option<PathBuf>,
}

// ---------------------------------------------------------------------------
// Flag value parsers (parse failures are usage errors)
// ---------------------------------------------------------------------------

fn parse_activation(s: &str) -> Result<Activation, String> {
    Activation::from_str(s).map_err(|e| e.to_string())
}

fn parse_oov(s: &str) -> Result<OovPolicy, String> {
    OovPolicy::from_str(s).map_err(|e| e.to_string())
}

fn parse_optimizer(s: &str) -> Result<Optimizer, String> {
    Optimizer::from_str(s).map_err(|e| e.to_string())
}

fn parse_baseline_kind(s: &str) -> Result<BaselineKind, String> {
    BaselineKind::from_str(s).map_err(|e| e.to_string())
}

fn parse_loss(s: &str) -> Result<LossKind, String> {
    LossKind::from_str(s).map_err(|e| e.to_string())
}

fn parse_aggregation(s: &str) -> Result<AttentionAggregation, String> {
    AttentionAggregation::from_str(s).map_err(|e| e.to_string())
}

fn parse_eval_kind(s: &str) -> Result<EvalKind, String> {
    match s {
        "main" => Ok(EvalKind::Main),
        other => BaselineKind::from_str(other)
            .map(EvalKind::Baseline)
            .map_err(|_| format!("unknown kind {other:?}, expected main, onehot or mlp")),
    }
}

// ---------------------------------------------------------------------------
// Run manifests
// ---------------------------------------------------------------------------

#[derive(serde::Serialize)]
struct RunManifest {
    tool_version: String,
    command: String,
    /// Complete argument vector as invoked.
    argv: Vec<String>,
    /// Named seeds steering this run.
    seeds: BTreeMap<String, u64>,
    /// SHA-256 digest per input file.
    inputs: BTreeMap<String, String>,
    /// Files written by this run, the manifest aside.
    outputs: Vec<String>,
    wall_seconds: f64,
}

struct ManifestBuilder {
    manifest: RunManifest,
    start: Instant,
}

impl ManifestBuilder {
    fn new(command: &str) -> Self {
        Self {
            manifest: RunManifest {
                tool_version: version_string(),
                command: command.to_owned(),
                argv: std::env::args().collect(),
                seeds: BTreeMap::new(),
                inputs: BTreeMap::new(),
                outputs: Vec::new(),
                wall_seconds: 0.0,
            },
            start: Instant::now(),
        }
    }

    fn seed(mut self, name: &str, value: u64) -> Self {
        self.manifest.seeds.insert(name.to_owned(), value);
        self
    }

    fn input(mut self, path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .with_context(|| format!("digesting input {}", path.display()))?;
        let digest = Sha256::digest(&bytes);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        self.manifest
            .inputs
            .insert(path.display().to_string(), hex);
        Ok(self)
    }

    fn output(mut self, path: &Path) -> Self {
        self.manifest.outputs.push(path.display().to_string());
        self
    }

    /// Write `<primary>.manifest.json` and finish the run.
    fn write(mut self, primary: &Path) -> Result<()> {
        self.manifest.wall_seconds = self.start.elapsed().as_secs_f64();
        let mut path = primary.as_os_str().to_owned();
        path.push(".manifest.json");
        let path = PathBuf::from(path);
        let json = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(&path, json + "\n")
            .with_context(|| format!("writing run manifest {}", path.display()))?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Entry point and dispatch
// ---------------------------------------------------------------------------

fn main() {
    // Die quietly when the reader closes the pipe, like any filter; the
    // runtime default turns SIGPIPE into a printing panic instead.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: configuring {n} worker threads: {e}");
            return 2;
        }
    }
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Ingest(args) => cmd_ingest(args),
        Command::Pair(args) => cmd_pair(args),
        Command::Train(args) => cmd_train(args),
        Command::Baseline(args) => cmd_baseline(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Interpret(cmd) => match cmd {
            InterpretCmd::TopWords(args) => cmd_top_words(args),
            InterpretCmd::Graph(args) => cmd_graph(args),
            InterpretCmd::Compare(args) => cmd_compare(args),
            InterpretCmd::Quartiles(args) => cmd_quartiles(args),
        },
        Command::Synth(args) => cmd_synth(args),
    }
}

// ---------------------------------------------------------------------------
// Shared loaders
// ---------------------------------------------------------------------------

/// Read a machine-written corpus file strictly and wrap it as a collection;
/// the subreddit is taken from the first record.
fn load_corpus(path: &Path) -> Result<PostCollection> {
    let (posts, _) = read_posts(path, true)?;
    let first = posts
        .first()
        .with_context(|| format!("{} holds no posts", path.display()))?;
    let subreddit = first.subreddit.clone();
    Ok(PostCollection::new(subreddit, posts)?)
}

fn load_table(path: &Path, dim: usize) -> Result<Arc<EmbeddingTable>> {
    Ok(Arc::new(EmbeddingTable::load(path, dim)?))
}

/// Rebuild a scoring model from a checkpoint plus its embedding table.
fn load_ranker(model: &Path, embeddings: &Path) -> Result<TitleRanker> {
    let ckpt = load_model(model)?;
    let table = load_table(embeddings, ckpt.config.dim)?;
    Ok(TitleRanker::new(
        ckpt.params,
        ckpt.config,
        ckpt.oov,
        table,
        true,
    )?)
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn cmd_ingest(args: IngestArgs) -> Result<()> {
    let mut manifest = ManifestBuilder::new("ingest").input(&args.input)?;
    let (all_posts, stats) = read_posts(&args.input, args.strict)?;
    let from_subreddit: Vec<_> = all_posts
        .into_iter()
        .filter(|p| p.subreddit == args.subreddit)
        .collect();
    let (unique, duplicates) = dedup_by_id(from_subreddit);
    let collection = PostCollection::new(args.subreddit.clone(), unique)?;
    let filtered = filter_posts(&collection, args.min_score, !args.keep_stickied);
    let kept = match args.sample_fraction {
        Some(fraction) => {
            manifest = manifest.seed("sample", args.seed);
            subsample(&filtered, fraction, args.seed)?
        }
        None => filtered,
    };
    if kept.is_empty() {
        bail!(
            "no {} posts survive min_score {} over {}",
            args.subreddit,
            args.min_score,
            args.input.display()
        );
    }
    write_posts(&args.out, kept.posts())?;
    manifest.output(&args.out).write(&args.out)?;
    println!(
        "parsed {} of {} records ({} skipped, {} duplicate ids), kept {} posts -> {}",
        stats.parsed,
        stats.lines,
        stats.skipped,
        duplicates,
        kept.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_pair(args: PairArgs) -> Result<()> {
    let manifest = ManifestBuilder::new("pair").input(&args.input)?;
    let collection = load_corpus(&args.input)?;
    let config = PairingConfig {
        max_gap_seconds: (args.max_gap_min * 60.0).round() as i64,
        min_score_diff: args.min_diff,
        min_score_ratio: args.min_ratio,
    };
    let pairs = pair_posts(&collection, &config)?;
    if pairs.is_empty() {
        bail!(
            "no pairs form under gap <= {} min, diff >= {}, ratio >= {}",
            args.max_gap_min,
            args.min_diff,
            args.min_ratio
        );
    }
    write_pairs(&args.out, &pairs)?;
    manifest.output(&args.out).write(&args.out)?;
    println!(
        "formed {} pairs from {} posts -> {}",
        pairs.len(),
        collection.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let manifest = ManifestBuilder::new("train")
        .input(&args.pairs)?
        .input(&args.embeddings)?
        .seed("train", args.train.seed);
    let pairs = read_pairs(&args.pairs)?;
    let table = load_table(&args.embeddings, args.model.dim)?;
    let model_config = args.model.to_config();
    let train_config = args.train.to_config();
    let (ranker, report) = train(
        &pairs,
        &table,
        &model_config,
        args.model.oov,
        &train_config,
    )?;
    save_model(&args.out, &ranker.params, &model_config, args.model.oov)?;
    write_model_meta(&args.out, &model_config, args.model.oov, &train_config, &report)?;
    let meta = meta_path(&args.out);
    manifest
        .output(&args.out)
        .output(&meta)
        .write(&args.out)?;
    println!(
        "trained on {} pairs ({} skipped): final loss {:.6}, train accuracy {:.4}, {:.0} pairs/sec -> {}",
        report.pairs_used,
        report.pairs_skipped,
        report.epoch_losses.last().copied().unwrap_or(f64::NAN),
        report.epoch_accuracies.last().copied().unwrap_or(f64::NAN),
        report.pairs_per_second,
        args.out.display()
    );
    Ok(())
}

fn cmd_baseline(args: BaselineArgs) -> Result<()> {
    let manifest = ManifestBuilder::new("baseline")
        .input(&args.pairs)?
        .input(&args.embeddings)?
        .seed("train", args.train.seed);
    let pairs = read_pairs(&args.pairs)?;
    let table = load_table(&args.embeddings, args.dim)?;
    let config = BaselineConfig {
        kind: args.kind,
        vocab_size: args.vocab_size,
        hidden: args.hidden,
        loss: args.loss,
        train: args.train.to_config(),
    };
    let (model, report) = train_baseline(&pairs, &table, &config)?;
    save_baseline(&args.out, &model)?;
    manifest.output(&args.out).write(&args.out)?;
    println!(
        "trained {:?} baseline on {} pairs: final loss {:.6}, train accuracy {:.4} -> {}",
        args.kind,
        report.pairs_used,
        report.epoch_losses.last().copied().unwrap_or(f64::NAN),
        report.epoch_accuracies.last().copied().unwrap_or(f64::NAN),
        args.out.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let seed = args.train.seed;
    let manifest = ManifestBuilder::new("eval")
        .input(&args.pairs)?
        .input(&args.embeddings)?
        .seed("seed", seed);
    let pairs = read_pairs(&args.pairs)?;
    let table = load_table(&args.embeddings, args.model.dim)?;
    let train_config = args.train.to_config();
    let reports: Vec<FoldReport> = match args.kind {
        EvalKind::Main => kfold_cv(
            &pairs,
            args.folds,
            seed,
            &table,
            &args.model.to_config(),
            args.model.oov,
            &train_config,
        )?,
        EvalKind::Baseline(kind) => {
            let base = BaselineConfig {
                kind,
                vocab_size: args.vocab_size,
                hidden: args.hidden,
                loss: args.loss,
                train: train_config.clone(),
            };
            kfold_cv_with(&pairs, args.folds, seed, |train_pairs, fold| {
                let config = BaselineConfig {
                    train: TrainConfig {
                        seed: base.train.seed.wrapping_add(fold as u64),
                        ..base.train.clone()
                    },
                    ..base.clone()
                };
                let (model, _) = train_baseline(train_pairs, &table, &config)?;
                Ok(model)
            })?
        }
    };
    write_fold_reports(&args.report, &reports)?;
    manifest.output(&args.report).write(&args.report)?;
    let accuracies: Vec<f64> = reports.iter().map(|r| r.accuracy).collect();
    for r in &reports {
        println!(
            "fold {}: train {} test {} accuracy {:.4}",
            r.fold_index, r.train_size, r.test_size, r.accuracy
        );
    }
    println!(
        "mean accuracy {:.4} ({:.4}) over {} folds -> {}",
        mean(&accuracies),
        sample_stddev(&accuracies),
        reports.len(),
        args.report.display()
    );
    Ok(())
}

fn cmd_top_words(args: TopWordsArgs) -> Result<()> {
    let manifest = ManifestBuilder::new("interpret top-words")
        .input(&args.model)?
        .input(&args.embeddings)?
        .input(&args.corpus)?;
    let ranker = load_ranker(&args.model, &args.embeddings)?;
    let corpus = load_corpus(&args.corpus)?;
    let weights = word_attention_weights(&ranker, &corpus, args.min_freq, args.agg)?;
    let top = top_k_words(&weights, args.top_k);
    let mut writer = csv::Writer::from_path(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    writer.write_record(["token", "weight", "occurrences"])?;
    for w in &top {
        writer.write_record([
            w.token.as_str(),
            &format!("{:.6}", w.weight),
            &w.occurrences.to_string(),
        ])?;
    }
    writer.flush()?;
    manifest.output(&args.out).write(&args.out)?;
    println!(
        "wrote top {} of {} words (min freq {}) -> {}",
        top.len(),
        weights.len(),
        args.min_freq,
        args.out.display()
    );
    Ok(())
}

fn cmd_graph(args: GraphArgs) -> Result<()> {
    let mut manifest = ManifestBuilder::new("interpret graph")
        .input(&args.model)?
        .input(&args.embeddings)?
        .input(&args.corpus)?;
    let stopwords = match &args.stopwords {
        Some(path) => {
            manifest = manifest.input(path)?;
            load_stopwords(path)?
        }
        None => builtin_stopwords(),
    };
    let ranker = load_ranker(&args.model, &args.embeddings)?;
    let corpus = load_corpus(&args.corpus)?;
    let graph = attention_graph(&ranker, &corpus, args.top_edges, &stopwords)?;
    std::fs::write(&args.out, graph_to_dot(&graph))
        .with_context(|| format!("writing {}", args.out.display()))?;
    manifest.output(&args.out).write(&args.out)?;
    println!(
        "kept {} edges over {} nodes -> {}",
        graph.edges.len(),
        graph.nodes.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let manifest = ManifestBuilder::new("interpret compare")
        .input(&args.model_a)?
        .input(&args.model_b)?
        .input(&args.embeddings)?;
    let ranker_a = load_ranker(&args.model_a, &args.embeddings)?;
    let ranker_b = if ranker_b_shares_table(&args) {
        let ckpt = load_model(&args.model_b)?;
        TitleRanker::new(
            ckpt.params,
            ckpt.config,
            ckpt.oov,
            Arc::clone(&ranker_a.embeddings),
            true,
        )?
    } else {
        load_ranker(&args.model_b, &args.embeddings)?
    };
    let rows = compare_title(&args.title, &ranker_a, &ranker_b, args.agg)?;
    let mut writer = csv::Writer::from_path(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    writer.write_record([
        "token",
        "weight_a",
        "weight_b",
        "loo_delta_a",
        "loo_delta_b",
    ])?;
    for row in &rows {
        writer.write_record([
            row.token.as_str(),
            &format!("{:.6}", row.weight_a),
            &format!("{:.6}", row.weight_b),
            &format!("{:.6}", row.loo_delta_a),
            &format!("{:.6}", row.loo_delta_b),
        ])?;
    }
    writer.flush()?;
    manifest.output(&args.out).write(&args.out)?;
    println!("compared {} tokens -> {}", rows.len(), args.out.display());
    Ok(())
}

/// Both models read the same table file; reuse the load when the
/// dimensions agree.
fn ranker_b_shares_table(args: &CompareArgs) -> bool {
    match (load_model(&args.model_a), load_model(&args.model_b)) {
        (Ok(a), Ok(b)) => a.config.dim == b.config.dim,
        _ => false,
    }
}

fn cmd_quartiles(args: QuartilesArgs) -> Result<()> {
    let manifest = ManifestBuilder::new("interpret quartiles")
        .input(&args.corpus)?
        .seed("sample", args.seed);
    let corpus = load_corpus(&args.corpus)?;
    let table = quartile_word_scores(
        &corpus,
        args.min_freq,
        args.top_n_norm,
        args.sample,
        args.seed,
    )?;
    let mut writer = csv::Writer::from_path(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    writer.write_record(["token", "score", "quartile", "occurrences"])?;
    for e in &table.entries {
        writer.write_record([
            e.token.as_str(),
            &format!("{:.6}", e.score),
            &e.quartile.to_string(),
            &e.occurrences.to_string(),
        ])?;
    }
    writer.flush()?;
    manifest.output(&args.out).write(&args.out)?;
    println!(
        "scored {} words, normalized by top-post mean {:.2}, boundaries {:.4}/{:.4}/{:.4} -> {}",
        table.entries.len(),
        table.norm,
        table.boundaries[0],
        table.boundaries[1],
        table.boundaries[2],
        args.out.display()
    );
    for (q, sample) in table.samples.iter().enumerate() {
        println!("quartile {q} sample: {}", sample.join(" "));
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let mut manifest = ManifestBuilder::new("synth");
    let mut config = match &args.config {
        Some(path) => {
            manifest = manifest.input(path)?;
            let raw = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<SynthConfig>(&raw)
                .with_context(|| format!("parsing {}", path.display()))?
        }
        None => SynthConfig::default(),
    };
    if let Some(v) = args.n_posts {
        config.n_posts = v;
    }
    if let Some(v) = args.vocab_size {
        config.vocab_size = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.positive_tokens {
        config.positive_tokens = v;
    }
    if let Some(v) = args.negative_tokens {
        config.negative_tokens = v;
    }
    if let Some(v) = args.base_score {
        config.base_score = v;
    }
    if let Some(v) = args.positive_effect {
        config.positive_effect = v;
    }
    if let Some(v) = args.negative_effect {
        config.negative_effect = v;
    }
    if let Some(v) = args.noise_sd {
        config.noise_sd = v;
    }
    manifest = manifest.seed("synth", config.seed);

    let embeddings_out = args
        .embeddings_out
        .unwrap_or_else(|| suffixed(&args.out, ".embeddings.txt"));
    let manifest_out = args
        .manifest_out
        .unwrap_or_else(|| suffixed(&args.out, ".plants.json"));

    let output = generate(&config)?;
    write_posts(&args.out, &output.posts)?;
    write_embeddings(&embeddings_out, &output.embeddings)?;
    write_manifest(&manifest_out, &output.manifest)?;
    manifest
        .output(&args.out)
        .output(&embeddings_out)
        .output(&manifest_out)
        .write(&args.out)?;
    println!(
        "generated {} posts, {} embeddings ({} plants) -> {}",
        output.posts.len(),
        output.embeddings.len(),
        output.manifest.positive_tokens.len() + output.manifest.negative_tokens.len(),
        args.out.display()
    );
    Ok(())
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(suffix);
    PathBuf::from(os)
}
