//! Shared fixtures for the criterion benchmarks: one planted corpus,
//! its frozen embedding table, the pairs formed from it and a trained
//! ranker for inference timing.

use std::sync::Arc;

use titlerank_core::corpus::PostCollection;
use titlerank_core::model::ModelConfig;
use titlerank_core::pairing::{pair_posts, PairingConfig, PostPair};
use titlerank_core::synth::{generate, SynthConfig};
use titlerank_core::text::{EmbeddingTable, OovPolicy};
use titlerank_core::train::{train, Optimizer, TitleRanker, TrainConfig};

pub struct Fixture {
    pub pairs: Vec<PostPair>,
    pub table: Arc<EmbeddingTable>,
    pub titles: Vec<String>,
}

/// Planted corpus at the production embedding width, sized so one
/// benchmark iteration stays well under a second.
pub fn fixture() -> Fixture {
    let config = SynthConfig {
        n_posts: 2000,
        vocab_size: 800,
        seed: 5,
        ..SynthConfig::default()
    };
    let output = generate(&config).expect("default-shaped config is valid");
    let titles: Vec<String> = output.posts.iter().map(|p| p.title.clone()).collect();
    let table = Arc::new(output.embedding_table().expect("generator output is consistent"));
    let collection = PostCollection::new(config.subreddit.clone(), output.posts)
        .expect("generator emits one subreddit");
    let pairing = PairingConfig {
        max_gap_seconds: 1800,
        min_score_diff: 20,
        min_score_ratio: 2.0,
    };
    let pairs = pair_posts(&collection, &pairing).expect("corpus is pairable");
    Fixture {
        pairs,
        table,
        titles,
    }
}

pub fn model_config() -> ModelConfig {
    ModelConfig::default()
}

pub fn train_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 64,
        learning_rate: 2e-2,
        margin: 1.0,
        seed: 7,
        optimizer: Optimizer::Sgd,
        cache_contexts: true,
    }
}

pub fn trained_ranker(fixture: &Fixture) -> TitleRanker {
    let (ranker, _) = train(
        &fixture.pairs,
        &fixture.table,
        &model_config(),
        OovPolicy::Drop,
        &train_config(2),
    )
    .expect("training on the fixture succeeds");
    ranker
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_is_nonempty_and_scorable() {
        let f = fixture();
        assert!(f.pairs.len() >= 100, "only {} pairs", f.pairs.len());
        assert_eq!(f.table.dim(), model_config().dim);
        let ranker = trained_ranker(&f);
        let score = ranker.score(&f.titles[0]).unwrap();
        assert!(score.is_finite());
    }
}
