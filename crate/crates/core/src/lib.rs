//! Interpretable attention-based pairwise ranking of post titles.
//!
//! The pipeline runs: corpus filtering and time-controlled pairing of
//! posts, frozen word embeddings, parameter-free scaled dot-product
//! self-attention, a 1-D convolution, and a dense layer producing one
//! scalar score per title. Training is contrastive with a max-margin
//! hinge loss and hand-derived gradients. Evaluation is k-fold
//! cross-validated pairwise accuracy against two baselines with a paired
//! t-test, and the attention weights feed interpretation exports: top-word
//! tables, directed attention graphs, cross-model title comparisons, and
//! quartile word scores.
//!
//! Everything seeded is deterministic: the same inputs, configuration and
//! seeds reproduce results bit for bit.

pub mod baselines;
pub mod checkpoint;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod interpret;
pub mod model;
pub mod pairing;
pub mod stopwords;
pub mod synth;
pub mod text;
pub mod train;

pub use baselines::{
    build_vocab, train_baseline, BaselineConfig, BaselineKind, BaselineModel, LossKind,
    Vocabulary,
};
pub use checkpoint::{
    load_baseline, load_model, save_baseline, save_model, write_model_meta, BaselineCheckpoint,
    ModelCheckpoint,
};
pub use corpus::{filter_posts, read_posts, subsample, ParseStats, Post, PostCollection};
pub use error::{Error, Result};
pub use eval::{
    kfold_cv, kfold_cv_with, paired_t_test, pairwise_accuracy, FoldReport, Scorer,
    SignificanceResult,
};
pub use interpret::{
    attention_graph, compare_title, quartile_word_scores, top_k_words, word_attention_weights,
    AttentionAggregation, AttentionGraph, QuartileTable, TokenComparison, WordWeight,
};
pub use model::{forward, init_params, self_attention, Activation, ModelConfig, ModelParams};
pub use pairing::{pair_posts, validate_pair, PairingConfig, PostPair};
pub use synth::{generate, PlantManifest, SynthConfig, SynthOutput};
pub use text::{embed_title, tokenize, EmbeddingTable, OovPolicy};
pub use train::{hinge_loss, train, Optimizer, TitleRanker, TrainConfig, TrainReport};
