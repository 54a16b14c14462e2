//! Acceptance gate: one test per criterion, each printing a single
//! `[PASS]`/`[FAIL]` line (visible with `--nocapture`). Criteria that
//! need a trained model run on a shared planted-signal corpus built once
//! per process; everything is seeded, and model-training criteria force
//! the global thread pool to one thread so timings and trajectories are
//! single-threaded and reproducible.

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use titlerank_core::baselines::{top_onehot_weights, BaselineConfig, BaselineKind, BaselineModel};
use titlerank_core::corpus::{filter_posts, read_posts, Post, PostCollection};
use titlerank_core::eval::{kfold_cv, kfold_cv_with, mean, paired_t_test};
use titlerank_core::interpret::{
    attention_graph, compare_title, quartile_word_scores, top_k_words, word_attention_weights,
    AttentionAggregation,
};
use titlerank_core::model::{
    backward, forward, init_params, self_attention, Activation, ModelConfig, ModelParams,
};
use titlerank_core::pairing::{pair_posts, PairingConfig, PostPair};
use titlerank_core::stopwords::builtin_stopwords;
use titlerank_core::synth::{generate, SynthConfig};
use titlerank_core::text::{EmbeddingTable, OovPolicy};
use titlerank_core::train::{hinge_loss, train, Optimizer, TitleRanker, TrainConfig, TrainReport};

// ---------------------------------------------------------------------------
// Harness plumbing
// ---------------------------------------------------------------------------

/// Print the verdict line for a criterion and panic on failure.
fn verdict(id: &str, what: &str, outcome: Result<String, String>) {
    match outcome {
        Ok(detail) => println!("[PASS] {id} {what}: {detail}"),
        Err(why) => {
            println!("[FAIL] {id} {what}: {why}");
            panic!("{id} {what}: {why}");
        }
    }
}

fn single_threaded() {
    static INIT: OnceLock<()> = OnceLock::new();
    INIT.get_or_init(|| {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(1).build_global();
    });
}

// ---------------------------------------------------------------------------
// Shared planted-signal fixture
// ---------------------------------------------------------------------------

const CORPUS_SEED: u64 = 601;
const CV_SEED: u64 = 99;
const FOLDS: usize = 5;

fn main_model_config() -> ModelConfig {
    ModelConfig {
        dim: 300,
        kernel_size: 3,
        num_filters: 2,
        max_len: 30,
        activation: Activation::Relu,
    }
}

// Sgd throughout: on this corpus Adam's per-coordinate step normalization
// inflates spurious filler-word correlations as fast as the planted signal,
// reaching perfect train accuracy while generalizing poorly.
fn main_train_config() -> TrainConfig {
    TrainConfig {
        epochs: 40,
        batch_size: 64,
        learning_rate: 2e-2,
        margin: 1.0,
        seed: 11,
        optimizer: Optimizer::Sgd,
        cache_contexts: true,
    }
}

fn baseline_train_config(kind: BaselineKind) -> TrainConfig {
    let (epochs, learning_rate) = match kind {
        BaselineKind::Onehot => (10, 0.5),
        BaselineKind::Mlp => (12, 0.1),
    };
    TrainConfig {
        epochs,
        batch_size: 64,
        learning_rate,
        margin: 0.0,
        seed: 13,
        optimizer: Optimizer::Sgd,
        cache_contexts: true,
    }
}

struct PlantedFixture {
    corpus: PostCollection,
    pairs: Vec<PostPair>,
    positive_tokens: Vec<String>,
    negative_tokens: Vec<String>,
    bigrams: Vec<(String, String)>,
    main_accuracies: Vec<f64>,
    logistic_accuracies: Vec<f64>,
    mlp_accuracies: Vec<f64>,
    ablated_accuracies: Vec<f64>,
    full_ranker: TitleRanker,
    full_report: TrainReport,
    onehot: BaselineModel,
    data_seconds: f64,
    main_cv_seconds: f64,
    logistic_cv_seconds: f64,
}

fn baseline_cv(
    pairs: &[PostPair],
    table: &Arc<EmbeddingTable>,
    kind: BaselineKind,
) -> Vec<f64> {
    let reports = kfold_cv_with(pairs, FOLDS, CV_SEED, |train_pairs, fold| {
        let config = BaselineConfig {
            train: TrainConfig {
                seed: baseline_train_config(kind).seed.wrapping_add(fold as u64),
                ..baseline_train_config(kind)
            },
            ..BaselineConfig::new(kind)
        };
        let (model, _) = titlerank_core::baselines::train_baseline(train_pairs, table, &config)?;
        Ok(model)
    })
    .expect("baseline cv");
    reports.iter().map(|r| r.accuracy).collect()
}

fn fixture() -> &'static PlantedFixture {
    static FIXTURE: OnceLock<PlantedFixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        single_threaded();
        let synth_config = SynthConfig {
            seed: CORPUS_SEED,
            ..SynthConfig::default()
        };

        let data_start = Instant::now();
        let output = generate(&synth_config).expect("synthetic corpus");
        let table = Arc::new(output.embedding_table().expect("embedding table"));
        let corpus = PostCollection::new(synth_config.subreddit.clone(), output.posts.clone())
            .expect("collection");
        let pairs = pair_posts(&corpus, &PairingConfig::default()).expect("pairing");
        let data_seconds = data_start.elapsed().as_secs_f64();
        assert!(
            pairs.len() >= 200,
            "planted corpus produced only {} pairs",
            pairs.len()
        );

        let model_config = main_model_config();
        let train_config = main_train_config();

        let main_start = Instant::now();
        let main_reports = kfold_cv(
            &pairs,
            FOLDS,
            CV_SEED,
            &table,
            &model_config,
            OovPolicy::Drop,
            &train_config,
        )
        .expect("main cv");
        let main_cv_seconds = main_start.elapsed().as_secs_f64();

        let logistic_start = Instant::now();
        let logistic_accuracies = baseline_cv(&pairs, &table, BaselineKind::Onehot);
        let logistic_cv_seconds = logistic_start.elapsed().as_secs_f64();

        let mlp_accuracies = baseline_cv(&pairs, &table, BaselineKind::Mlp);

        let ablated_config = ModelConfig {
            kernel_size: 1,
            ..model_config
        };
        let ablated_reports = kfold_cv(
            &pairs,
            FOLDS,
            CV_SEED,
            &table,
            &ablated_config,
            OovPolicy::Drop,
            &train_config,
        )
        .expect("ablated cv");

        let (full_ranker, full_report) = train(
            &pairs,
            &table,
            &model_config,
            OovPolicy::Drop,
            &train_config,
        )
        .expect("full-data training");

        let (onehot, _) = titlerank_core::baselines::train_baseline(
            &pairs,
            &table,
            &BaselineConfig {
                train: baseline_train_config(BaselineKind::Onehot),
                ..BaselineConfig::new(BaselineKind::Onehot)
            },
        )
        .expect("full-data logistic");

        PlantedFixture {
            corpus,
            pairs,
            positive_tokens: output.manifest.positive_tokens.clone(),
            negative_tokens: output.manifest.negative_tokens.clone(),
            bigrams: output.manifest.bigrams.clone(),
            main_accuracies: main_reports.iter().map(|r| r.accuracy).collect(),
            logistic_accuracies,
            mlp_accuracies,
            ablated_accuracies: ablated_reports.iter().map(|r| r.accuracy).collect(),
            full_ranker,
            full_report,
            onehot,
            data_seconds,
            main_cv_seconds,
            logistic_cv_seconds,
        }
    })
}

// ---------------------------------------------------------------------------
// c01  attention correctness
// ---------------------------------------------------------------------------

/// Independent softmax oracle: scalar loops only, max-subtracted row
/// softmax of M·Mᵀ/√d computed element by element.
fn attention_oracle(rows: &Array2<f64>) -> Vec<Vec<f64>> {
    let n = rows.nrows();
    let d = rows.ncols();
    let scale = (d as f64).sqrt();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        let mut logits = vec![0.0; n];
        for j in 0..n {
            let mut dot = 0.0;
            for k in 0..d {
                dot += rows[[i, k]] * rows[[j, k]];
            }
            logits[j] = dot / scale;
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        for j in 0..n {
            out[i][j] = exps[j] / sum;
        }
    }
    out
}

#[test]
fn c01_attention_rows_stochastic_and_identity() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_row_err = 0.0f64;
    let mut oracle_err = 0.0f64;
    for case in 0..1000 {
        let n = rng.gen_range(1..=30);
        let d = if case % 2 == 0 { 4 } else { 300 };
        let rows = Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0));
        let att = self_attention(&rows).expect("attention");
        for i in 0..n {
            let mut sum = 0.0;
            for j in 0..n {
                let w = att.weights[[i, j]];
                assert!(w > 0.0, "non-positive attention weight {w} at [{i},{j}]");
                sum += w;
            }
            worst_row_err = worst_row_err.max((sum - 1.0).abs());
        }
        if n == 1 {
            assert_eq!(att.weights[[0, 0]], 1.0);
            for k in 0..d {
                assert_eq!(
                    att.context[[0, k]].to_bits(),
                    rows[[0, k]].to_bits(),
                    "n=1 context must be the input row exactly"
                );
            }
        }
        if case % 20 == 0 {
            let oracle = attention_oracle(&rows);
            for i in 0..n {
                for j in 0..n {
                    oracle_err = oracle_err.max((att.weights[[i, j]] - oracle[i][j]).abs());
                }
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let outcome = if worst_row_err > 1e-6 {
        Err(format!("row sum error {worst_row_err:.3e} exceeds 1e-6"))
    } else if oracle_err > 1e-12 {
        Err(format!("oracle mismatch {oracle_err:.3e} exceeds 1e-12"))
    } else if elapsed >= 5.0 {
        Err(format!("took {elapsed:.2}s, budget 5s"))
    } else {
        Ok(format!(
            "1000 matrices, worst row-sum error {worst_row_err:.2e}, oracle gap {oracle_err:.2e}, {elapsed:.2}s"
        ))
    };
    verdict("c01", "attention rows stochastic, n=1 identity", outcome);
}

// ---------------------------------------------------------------------------
// c02  gradient fidelity
// ---------------------------------------------------------------------------

/// Convolution pre-activations computed independently with scalar loops.
fn conv_preactivations(context: &Array2<f64>, params: &ModelParams, k: usize) -> Vec<f64> {
    let n = context.nrows();
    let d = context.ncols();
    let filters = params.conv_bias.len();
    let mut pre = Vec::new();
    if n < k {
        return pre;
    }
    for f in 0..filters {
        for t in 0..=(n - k) {
            let mut acc = params.conv_bias[f];
            for j in 0..k {
                for c in 0..d {
                    acc += params.conv_kernel[[f, j, c]] * context[[t + j, c]];
                }
            }
            pre.push(acc);
        }
    }
    pre
}

#[test]
fn c02_gradients_match_finite_differences() {
    let start = Instant::now();
    let config = ModelConfig {
        dim: 16,
        kernel_size: 3,
        num_filters: 2,
        max_len: 10,
        activation: Activation::Relu,
    };
    let margin = 1.0;
    let eps = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0usize;
    let mut attempts = 0usize;
    let mut worst = 0.0f64;
    while checked < 100 {
        attempts += 1;
        assert!(attempts < 10_000, "could not sample 100 active pairs");
        let params = init_params(&config, rng.gen()).expect("init");
        let n_w = rng.gen_range(3..=10);
        let n_l = rng.gen_range(3..=10);
        let rows_w = Array2::from_shape_fn((n_w, config.dim), |_| rng.gen_range(-1.0..1.0));
        let rows_l = Array2::from_shape_fn((n_l, config.dim), |_| rng.gen_range(-1.0..1.0));
        let tw = forward(&rows_w, &params, &config).expect("forward");
        let tl = forward(&rows_l, &params, &config).expect("forward");
        // Central differences are only meaningful away from the loss and
        // relu kinks; require interior points on both.
        let slack = margin + tl.score - tw.score;
        if slack <= 0.05 {
            continue;
        }
        let near_kink = conv_preactivations(&tw.context, &params, config.kernel_size)
            .iter()
            .chain(conv_preactivations(&tl.context, &params, config.kernel_size).iter())
            .any(|p| p.abs() < 1e-3);
        if near_kink {
            continue;
        }
        let analytic = backward(&tw, &tl, &params, &config, margin).to_flat();
        let flat = params.to_flat();
        let loss_at = |v: &[f64]| {
            let p = ModelParams::from_flat(&config, v).expect("from_flat");
            let w = forward(&rows_w, &p, &config).expect("forward").score;
            let l = forward(&rows_l, &p, &config).expect("forward").score;
            hinge_loss(w, l, margin)
        };
        for i in 0..flat.len() {
            let mut plus = flat.clone();
            plus[i] += eps;
            let mut minus = flat.clone();
            minus[i] -= eps;
            let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * eps);
            let denom = analytic[i].abs().max(fd.abs()).max(1e-8);
            let rel = (analytic[i] - fd).abs() / denom;
            // A structurally cancelling coordinate (the dense bias shifts
            // both scores identically) has a true gradient of exactly zero;
            // central differences then measure rounding noise of order
            // macheps/eps ~ 1e-11, so exact zeros get an absolute bound.
            if analytic[i] == 0.0 {
                assert!(
                    fd.abs() < 1e-9,
                    "coordinate {i}: analytic 0 but fd {fd}"
                );
                continue;
            }
            worst = worst.max(rel);
            assert!(
                rel < 1e-4,
                "coordinate {i}: analytic {} vs fd {fd}, rel {rel:.3e}",
                analytic[i]
            );
        }
        checked += 1;
    }
    let elapsed = start.elapsed().as_secs_f64();
    let outcome = if elapsed >= 30.0 {
        Err(format!("took {elapsed:.2}s, budget 30s"))
    } else {
        Ok(format!(
            "100 active pairs, worst relative error {worst:.2e}, {elapsed:.2}s"
        ))
    };
    verdict("c02", "analytic gradient matches finite differences", outcome);
}

// ---------------------------------------------------------------------------
// c03  permutation equivariance
// ---------------------------------------------------------------------------

#[test]
fn c03_attention_is_permutation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let n = rng.gen_range(2..=30);
        let d = if case % 2 == 0 { 4 } else { 300 };
        let rows = Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0));
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            perm.swap(i, j);
        }
        // permuted row i = original row perm[i]
        let permuted = Array2::from_shape_fn((n, d), |(i, k)| rows[[perm[i], k]]);
        let base = self_attention(&rows).expect("attention");
        let shuffled = self_attention(&permuted).expect("attention");
        for i in 0..n {
            for j in 0..n {
                worst = worst
                    .max((shuffled.weights[[i, j]] - base.weights[[perm[i], perm[j]]]).abs());
            }
            for k in 0..d {
                worst = worst.max((shuffled.context[[i, k]] - base.context[[perm[i], k]]).abs());
            }
        }
    }
    let outcome = if worst > 1e-10 {
        Err(format!("max deviation {worst:.3e} exceeds 1e-10"))
    } else {
        Ok(format!("100 random (M, P), max deviation {worst:.2e}"))
    };
    verdict("c03", "attention(PM) = P attention(M) Pᵀ", outcome);
}

// ---------------------------------------------------------------------------
// c04  pairing oracle equivalence
// ---------------------------------------------------------------------------

/// Brute-force greedy oracle, written from the pairing rules alone: scan
/// chronologically (ties by id), match each unused post with the earliest
/// later unused post satisfying diff >= 20, winner >= 2x max(loser, 1),
/// gap <= 30 minutes, same subreddit.
fn pairing_oracle(posts: &[Post]) -> Vec<(String, String)> {
    let mut order: Vec<&Post> = posts.iter().collect();
    order.sort_by(|a, b| {
        a.created_utc
            .cmp(&b.created_utc)
            .then_with(|| a.id.cmp(&b.id))
    });
    let eligible = |a: &Post, b: &Post| -> Option<(String, String)> {
        if a.subreddit != b.subreddit || a.score == b.score {
            return None;
        }
        let (w, l) = if a.score > b.score { (a, b) } else { (b, a) };
        let gap_ok = (a.created_utc - b.created_utc).abs() <= 30 * 60;
        let diff_ok = w.score - l.score >= 20;
        let ratio_ok = w.score as f64 >= 2.0 * l.score.max(1) as f64;
        (gap_ok && diff_ok && ratio_ok).then(|| (w.id.clone(), l.id.clone()))
    };
    let mut used = vec![false; order.len()];
    let mut out = Vec::new();
    for i in 0..order.len() {
        if used[i] {
            continue;
        }
        for j in (i + 1)..order.len() {
            if used[j] {
                continue;
            }
            if let Some(pair) = eligible(order[i], order[j]) {
                out.push(pair);
                used[i] = true;
                used[j] = true;
                break;
            }
        }
    }
    out
}

#[test]
fn c04_pairing_matches_brute_force_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let config = PairingConfig::default();
    let mut total_pairs = 0usize;
    for case in 0..50 {
        let n = rng.gen_range(2..=200);
        let mut t = 1_600_000_000i64;
        // Ids deliberately out of time order so the id tiebreak matters.
        let mut id_order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            id_order.swap(i, j);
        }
        let mut posts = Vec::with_capacity(n);
        for i in 0..n {
            // Zero gaps exercise the id tiebreak.
            t += rng.gen_range(0..=900);
            posts.push(Post {
                id: format!("p{:03}-{case}", id_order[i]),
                title: format!("title {i}"),
                score: rng.gen_range(1..=300),
                subreddit: "x".into(),
                created_utc: t,
                stickied: false,
            });
        }
        let collection = PostCollection::new("x", posts.clone()).expect("collection");
        let got: Vec<(String, String)> = pair_posts(&collection, &config)
            .expect("pair_posts")
            .into_iter()
            .map(|p| (p.winner_id, p.loser_id))
            .collect();
        let want = pairing_oracle(&posts);
        assert_eq!(got, want, "corpus {case}: implementation diverges from oracle");

        // Re-check every emitted pair against the raw constraints.
        let by_id: HashMap<&str, &Post> = posts.iter().map(|p| (p.id.as_str(), p)).collect();
        for (w_id, l_id) in &got {
            let w = by_id[w_id.as_str()];
            let l = by_id[l_id.as_str()];
            assert!(w.score - l.score >= 20);
            assert!(w.score as f64 >= 2.0 * l.score.max(1) as f64);
            assert!((w.created_utc - l.created_utc).abs() <= 1800);
            assert_eq!(w.subreddit, l.subreddit);
        }
        total_pairs += got.len();
    }
    verdict(
        "c04",
        "pair_posts equals the O(n²) greedy oracle",
        Ok(format!("50 corpora, {total_pairs} pairs, all constraints re-verified")),
    );
}

// ---------------------------------------------------------------------------
// c05  planted-signal learning
// ---------------------------------------------------------------------------

#[test]
fn c05_planted_signal_learning() {
    let fx = fixture();
    let main = mean(&fx.main_accuracies);
    let logistic = mean(&fx.logistic_accuracies);
    let mlp = mean(&fx.mlp_accuracies);
    let seconds = fx.data_seconds + fx.main_cv_seconds + fx.logistic_cv_seconds;
    let detail = format!(
        "main {main:.4}, logistic {logistic:.4}, mlp {mlp:.4} (reported), {} pairs, {seconds:.1}s single-threaded",
        fx.pairs.len()
    );
    let outcome = if main < 0.90 {
        Err(format!("main model CV accuracy {main:.4} below 0.90; {detail}"))
    } else if logistic < 0.85 {
        Err(format!("logistic CV accuracy {logistic:.4} below 0.85; {detail}"))
    } else if seconds >= 300.0 {
        Err(format!("runtime {seconds:.1}s exceeds 5 minutes; {detail}"))
    } else {
        Ok(detail)
    };
    verdict("c05", "planted-signal 5-fold CV", outcome);
}

// ---------------------------------------------------------------------------
// c06  interpretability recovery
// ---------------------------------------------------------------------------

#[test]
fn c06_interpretation_recovers_plants() {
    let fx = fixture();
    let weights = word_attention_weights(
        &fx.full_ranker,
        &fx.corpus,
        10,
        AttentionAggregation::IncomingOffDiagonal,
    )
    .expect("word weights");
    let top15: HashSet<String> = top_k_words(&weights, 15)
        .into_iter()
        .map(|w| w.token)
        .collect();
    let hits = fx
        .positive_tokens
        .iter()
        .filter(|t| top15.contains(t.as_str()))
        .count();

    let graph = attention_graph(&fx.full_ranker, &fx.corpus, usize::MAX, &builtin_stopwords())
        .expect("graph");
    let n_edges = graph.edges.len();
    let decile = n_edges.div_ceil(10);
    let mut edge_ranks = Vec::new();
    for (a, b) in &fx.bigrams {
        let rank = graph
            .edges
            .iter()
            .position(|e| e.source == *a && e.target == *b);
        edge_ranks.push((format!("{a}->{b}"), rank));
    }
    let all_in_decile = edge_ranks.iter().all(|(_, r)| matches!(r, Some(r) if *r < decile));

    let outcome = if hits < 10 {
        Err(format!(
            "only {hits}/15 positive plants in the top-15 attention words"
        ))
    } else if !all_in_decile {
        Err(format!(
            "bigram edges not all in the top decile of {n_edges} edges: {edge_ranks:?}"
        ))
    } else {
        Ok(format!(
            "{hits}/15 plants in top-15; bigram edge ranks {:?} of {n_edges} edges (decile {decile})",
            edge_ranks
                .iter()
                .map(|(name, r)| format!("{name}:{}", r.unwrap()))
                .collect::<Vec<_>>()
        ))
    };
    verdict("c06", "plants recovered by attention tables and graph", outcome);
}

// ---------------------------------------------------------------------------
// c07  frozen-feature equivalence
// ---------------------------------------------------------------------------

#[test]
fn c07_cached_contexts_are_bit_identical() {
    single_threaded();
    let synth_config = SynthConfig {
        n_posts: 300,
        vocab_size: 120,
        embed_dim: 24,
        seed: 5,
        ..SynthConfig::default()
    };
    let output = generate(&synth_config).expect("synthetic corpus");
    let table = Arc::new(output.embedding_table().expect("table"));
    let corpus = PostCollection::new("synthetic", output.posts.clone()).expect("collection");
    let pairs = pair_posts(&corpus, &PairingConfig::default()).expect("pairs");
    assert!(pairs.len() >= 20, "only {} pairs", pairs.len());
    let model_config = ModelConfig {
        dim: 24,
        ..main_model_config()
    };
    let base = TrainConfig {
        epochs: 3,
        optimizer: Optimizer::Sgd,
        learning_rate: 1e-2,
        margin: 1.0,
        seed: 17,
        ..TrainConfig::default()
    };
    let cached_cfg = TrainConfig {
        cache_contexts: true,
        ..base
    };
    let recomputed_cfg = TrainConfig {
        cache_contexts: false,
        ..base
    };
    let (cached, cached_report) =
        train(&pairs, &table, &model_config, OovPolicy::Drop, &cached_cfg).expect("train cached");
    let (recomputed, recomputed_report) = train(
        &pairs,
        &table,
        &model_config,
        OovPolicy::Drop,
        &recomputed_cfg,
    )
    .expect("train recomputed");

    let a = cached.params.to_flat();
    let b = recomputed.params.to_flat();
    let params_identical =
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits());
    let losses_identical = cached_report
        .epoch_losses
        .iter()
        .zip(&recomputed_report.epoch_losses)
        .all(|(x, y)| x.to_bits() == y.to_bits());
    let outcome = if !params_identical {
        Err("final parameters differ between cached and recomputed contexts".into())
    } else if !losses_identical {
        Err("epoch losses differ between cached and recomputed contexts".into())
    } else {
        Ok(format!(
            "3 sgd epochs over {} pairs, {} parameters bit-identical",
            pairs.len(),
            a.len()
        ))
    };
    verdict("c07", "cached vs recomputed context training", outcome);
}

// ---------------------------------------------------------------------------
// c08  statistics oracle
// ---------------------------------------------------------------------------

#[test]
fn c08_t_test_matches_reference_statistics() {
    use statrs::distribution::{ContinuousCDF, StudentsT};

    // 18 seeded random pairs plus 2 hand-frozen ones.
    let mut cases: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let lengths = [5usize, 8, 12, 30, 6, 9];
    for i in 0..18 {
        let n = lengths[i % lengths.len()];
        let offset = 0.02 * ((i % 5) as f64) - 0.04;
        let a: Vec<f64> = (0..n).map(|_| 0.5 + 0.2 * rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = a
            .iter()
            .map(|x| x - offset + 0.05 * rng.gen_range(-1.0..1.0f64))
            .collect();
        cases.push((a, b));
    }
    cases.push((
        vec![0.61, 0.64, 0.60, 0.63, 0.615],
        vec![0.55, 0.58, 0.57, 0.56, 0.545],
    ));
    cases.push((
        vec![0.50, 0.51, 0.50, 0.52, 0.90],
        vec![0.50, 0.50, 0.51, 0.50, 0.50],
    ));

    let mut worst_t = 0.0f64;
    let mut worst_p = 0.0f64;
    for (a, b) in &cases {
        let got = paired_t_test(a, b).expect("t test");
        // Reference route: direct formula for t, reference CDF for p.
        let n = a.len() as f64;
        let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        let mean_d = diffs.iter().sum::<f64>() / n;
        let var = diffs.iter().map(|d| (d - mean_d).powi(2)).sum::<f64>() / (n - 1.0);
        let t_ref = mean_d / (var.sqrt() / n.sqrt());
        let dist = StudentsT::new(0.0, 1.0, n - 1.0).expect("valid dof");
        let p_ref = 2.0 * dist.cdf(-t_ref.abs());
        worst_t = worst_t.max((got.t_statistic - t_ref).abs());
        worst_p = worst_p.max((got.p_value - p_ref).abs());
    }
    let outcome = if worst_t > 1e-9 || worst_p > 1e-9 {
        Err(format!(
            "reference deviation t {worst_t:.3e}, p {worst_p:.3e} exceeds 1e-9"
        ))
    } else {
        Ok(format!(
            "20 fixed pairs, max |Δt| {worst_t:.2e}, max |Δp| {worst_p:.2e}"
        ))
    };
    verdict("c08", "paired t-test matches reference implementation", outcome);
}

// ---------------------------------------------------------------------------
// c09  convolution ablation direction
// ---------------------------------------------------------------------------

#[test]
fn c09_conv_ablation_reported() {
    let fx = fixture();
    let full = mean(&fx.main_accuracies);
    let ablated = mean(&fx.ablated_accuracies);
    let outcome = if full < ablated - 0.02 {
        Err(format!(
            "full model {full:.4} is worse than k=1 ablation {ablated:.4} by more than 0.02"
        ))
    } else {
        Ok(format!(
            "full k=3 CV {full:.4} vs k=1 bypass {ablated:.4} (both reported)"
        ))
    };
    verdict("c09", "conv ablation direction", outcome);
}

// ---------------------------------------------------------------------------
// c10  throughput (soft)
// ---------------------------------------------------------------------------

#[test]
fn c10_throughput_logged() {
    let fx = fixture();
    verdict(
        "c10",
        "batch-64 training throughput (reported, not asserted)",
        Ok(format!(
            "{:.0} pairs/sec over {} pairs x {} epochs, single-threaded debug build",
            fx.full_report.pairs_per_second,
            fx.full_report.pairs_used,
            fx.full_report.epoch_losses.len()
        )),
    );
}

// ---------------------------------------------------------------------------
// c11  optional real-data check
// ---------------------------------------------------------------------------

#[test]
fn c11_optional_real_data_check() {
    let dump = std::env::var("TITLERANK_REAL_DUMP").ok();
    let vectors = std::env::var("TITLERANK_GLOVE").ok();
    let (dump, vectors) = match (dump, vectors) {
        (Some(d), Some(v)) => (d, v),
        _ => {
            println!(
                "[SKIP] c11 real-data check: set TITLERANK_REAL_DUMP (submission dump, one \
                 record per line) and TITLERANK_GLOVE (embedding text file) to enable"
            );
            return;
        }
    };
    single_threaded();
    let (posts, stats) = read_posts(std::path::Path::new(&dump), false).expect("read dump");
    assert!(!posts.is_empty(), "no posts parsed from {dump}");
    let subreddit = posts[0].subreddit.clone();
    let collection = PostCollection::new(subreddit, posts).expect("collection");
    let filtered = filter_posts(&collection, 2, true);
    let pairs = pair_posts(&filtered, &PairingConfig::default()).expect("pairs");
    let table = Arc::new(
        EmbeddingTable::load(std::path::Path::new(&vectors), 300).expect("embeddings"),
    );
    let reports = kfold_cv(
        &pairs,
        FOLDS,
        CV_SEED,
        &table,
        &main_model_config(),
        OovPolicy::Drop,
        &main_train_config(),
    )
    .expect("cv");
    let accuracy = mean(&reports.iter().map(|r| r.accuracy).collect::<Vec<_>>());
    let outcome = if (0.55..=0.70).contains(&accuracy) {
        Ok(format!(
            "CV accuracy {accuracy:.4} within [0.55, 0.70] ({} pairs, {} parsed posts)",
            pairs.len(),
            stats.parsed
        ))
    } else {
        Err(format!(
            "CV accuracy {accuracy:.4} outside [0.55, 0.70] ({} pairs)",
            pairs.len()
        ))
    };
    verdict("c11", "real-data pipeline", outcome);
}

// ---------------------------------------------------------------------------
// Planted-corpus module examples that need the expensive fixture
// ---------------------------------------------------------------------------

#[test]
fn planted_training_accuracy_example() {
    let fx = fixture();
    let final_accuracy = *fx
        .full_report
        .epoch_accuracies
        .last()
        .expect("at least one epoch");
    let outcome = if final_accuracy >= 0.95 {
        Ok(format!("full-data training accuracy {final_accuracy:.4}"))
    } else {
        Err(format!(
            "full-data training accuracy {final_accuracy:.4} below 0.95"
        ))
    };
    verdict("x01", "training accuracy on the planted corpus", outcome);
}

#[test]
fn planted_onehot_weight_example() {
    let fx = fixture();
    let BaselineModel::Onehot(model) = &fx.onehot else {
        panic!("fixture holds a logistic baseline");
    };
    let mut sorted: Vec<f64> = model.params.weights.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[sorted.len() / 2];
    let ranked = top_onehot_weights(&model.vocab, &model.params, model.vocab.len());
    let weight_of: HashMap<&str, f64> = ranked
        .iter()
        .map(|(token, w)| (token.as_str(), *w))
        .collect();
    let below: Vec<&String> = fx
        .positive_tokens
        .iter()
        .filter(|t| weight_of.get(t.as_str()).map_or(true, |w| *w <= median))
        .collect();
    let outcome = if below.is_empty() {
        Ok(format!(
            "all 15 positive plants above the median weight {median:.4}"
        ))
    } else {
        Err(format!("plants at or below the median weight: {below:?}"))
    };
    verdict("x02", "planted 1-hot weights above the median", outcome);
}

#[test]
fn planted_quartile_separation_example() {
    let fx = fixture();
    let table = quartile_word_scores(&fx.corpus, 10, 100, 150, 9).expect("quartiles");
    let quartile_of: HashMap<&str, usize> = table
        .entries
        .iter()
        .map(|e| (e.token.as_str(), e.quartile))
        .collect();
    let pos_wrong: Vec<&String> = fx
        .positive_tokens
        .iter()
        .filter(|t| quartile_of.get(t.as_str()) != Some(&3))
        .collect();
    let neg_wrong: Vec<&String> = fx
        .negative_tokens
        .iter()
        .filter(|t| quartile_of.get(t.as_str()) != Some(&0))
        .collect();
    let outcome = if pos_wrong.is_empty() && neg_wrong.is_empty() {
        Ok(format!(
            "15/15 positive plants in quartile 3 and 15/15 negative in quartile 0 of {} tokens",
            table.entries.len()
        ))
    } else {
        Err(format!(
            "positive plants outside quartile 3: {pos_wrong:?}; negative outside quartile 0: {neg_wrong:?}"
        ))
    };
    verdict("x03", "plants separate into extreme quartiles", outcome);
}

#[test]
fn disjoint_plants_comparison_example() {
    single_threaded();
    // Two corpora over one shared embedding table; each plants a different
    // positive set. Attention boosts are off and the per-word noise is
    // large, so the plants carry no shared geometric marker and each model
    // must learn its own vocabulary from the word identities alone.
    let base = SynthConfig {
        n_posts: 1200,
        vocab_size: 300,
        embed_dim: 48,
        positive_tokens: (0..5).map(|i| format!("pa{i}")).collect(),
        negative_tokens: Vec::new(),
        p_negative: 0.0,
        bigrams: Vec::new(),
        p_bigram: 0.0,
        p_positive: 0.5,
        plant_attention_boost: 1.0,
        negative_tie_strength: 0.0,
        component_sd: 0.8,
        seed: 51,
        ..SynthConfig::default()
    };
    let config_a = base.clone();
    let config_b = SynthConfig {
        positive_tokens: (0..5).map(|i| format!("pb{i}")).collect(),
        seed: 52,
        ..base.clone()
    };
    let out_a = generate(&config_a).expect("corpus a");
    let out_b = generate(&config_b).expect("corpus b");

    // Shared table: corpus A's fillers and plants plus corpus B's plant
    // vectors, so both rankers embed every probe token identically.
    let mut entries = out_a.embeddings.clone();
    let b_plants: HashSet<&str> = config_b.positive_tokens.iter().map(String::as_str).collect();
    entries.extend(
        out_b
            .embeddings
            .iter()
            .filter(|(t, _)| b_plants.contains(t.as_str()))
            .cloned(),
    );
    let table = Arc::new(
        EmbeddingTable::from_entries(base.embed_dim, entries.into_iter()).expect("table"),
    );

    let model_config = ModelConfig {
        dim: base.embed_dim,
        ..main_model_config()
    };
    // Memorizing a private vocabulary is slower than reading the shared
    // geometry, so this test trains longer and hotter than the fixture.
    let train_config = TrainConfig {
        epochs: 40,
        learning_rate: 5e-2,
        ..main_train_config()
    };
    let train_on = |posts: &[Post], seed: u64| {
        let corpus = PostCollection::new("synthetic", posts.to_vec()).expect("collection");
        let pairs = pair_posts(&corpus, &PairingConfig::default()).expect("pairs");
        assert!(pairs.len() >= 50, "only {} pairs", pairs.len());
        train(
            &pairs,
            &table,
            &model_config,
            OovPolicy::Drop,
            &TrainConfig {
                seed,
                ..train_config
            },
        )
        .expect("train")
        .0
    };
    let ranker_a = train_on(&out_a.posts, 61);
    let ranker_b = train_on(&out_b.posts, 62);

    // Probe titles mixing one plant from each side with neutral fillers.
    let mut correct = 0usize;
    let mut total = 0usize;
    for i in 0..5 {
        let title = format!("w0001 pa{i} w0002 pb{i} w0003");
        let rows = compare_title(
            &title,
            &ranker_a,
            &ranker_b,
            AttentionAggregation::IncomingOffDiagonal,
        )
        .expect("compare");
        for row in rows {
            let delta = row.loo_delta_a - row.loo_delta_b;
            if row.token.starts_with("pa") {
                total += 1;
                if delta > 0.0 {
                    correct += 1;
                }
            } else if row.token.starts_with("pb") {
                total += 1;
                if delta < 0.0 {
                    correct += 1;
                }
            }
        }
    }
    let outcome = if correct == total && total == 10 {
        Ok(format!(
            "sign of (Δa - Δb) matches plant ownership on {correct}/{total} probes"
        ))
    } else {
        Err(format!("sign test: {correct}/{total} probes correct"))
    };
    verdict("x04", "disjoint-plant model comparison sign test", outcome);
}

#[test]
fn planted_significance_example() {
    let fx = fixture();
    // Paired t-test between the main model's fold accuracies and the
    // logistic baseline's. Reported here; the significance threshold itself
    // depends on fold noise, so only validity is asserted.
    let result = paired_t_test(&fx.main_accuracies, &fx.logistic_accuracies).expect("t test");
    let ok = result.p_value.is_finite() && (0.0..=1.0).contains(&result.p_value);
    let outcome = if ok {
        Ok(format!(
            "main vs logistic: t {:.3}, p {:.4}, mean diff {:.4}",
            result.t_statistic, result.p_value, result.mean_diff
        ))
    } else {
        Err(format!("invalid p-value {}", result.p_value))
    };
    verdict("x05", "fold-accuracy significance test runs", outcome);
}
