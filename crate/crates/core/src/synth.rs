//! Synthetic planted-signal corpus generator.
//!
//! The real corpus cannot be redistributed, so evaluation rests on
//! generated data with known ground truth: designated positive-plant
//! tokens raise a post's score additively, negative plants lower it, and
//! everything else is noise. Scores follow
//! `round(base + positive_effect·[has positive] + negative_effect·[has
//! negative] + N(0, noise_sd))`, making the configured effects
//! recoverable by ordinary least squares on plant indicators.
//!
//! Embedding geometry is part of the ground truth, because attention here
//! has no trainable parameters and sees only the frozen vectors. Every
//! token's vector is `alpha·mu + sd·z` for one shared direction `mu` and
//! private noise `z`; positive plants get a boosted `alpha`, which lifts
//! the logit of every other position attending to them and makes them
//! rank at the top of attention tables. Each bigram pair additionally
//! shares a private tie direction, so the pair's mutual attention edge is
//! strong while the rest of their geometry stays ordinary.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::Post;
use crate::error::{Error, Result};
use crate::text::EmbeddingTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_posts: usize,
    /// Number of filler tokens (`w0000`, `w0001`, ...). Plants and bigram
    /// tokens come on top of this.
    pub vocab_size: usize,
    pub positive_tokens: Vec<String>,
    pub negative_tokens: Vec<String>,
    /// Token pairs always inserted adjacently, first then second.
    pub bigrams: Vec<(String, String)>,
    pub base_score: f64,
    pub positive_effect: f64,
    pub negative_effect: f64,
    pub noise_sd: f64,
    /// Probability a title carries one positive plant.
    pub p_positive: f64,
    pub p_negative: f64,
    pub p_bigram: f64,
    /// Inclusive filler-token count range per title; plant and bigram
    /// insertions extend it by up to four.
    pub title_len: (usize, usize),
    pub embed_dim: usize,
    /// Shared-direction coefficient of ordinary tokens.
    pub mean_component: f64,
    /// Multiplier on `mean_component` for positive plants; > 1 makes them
    /// attention magnets.
    pub plant_attention_boost: f64,
    /// Coefficient of a direction shared by all negative plants. Gives the
    /// negative class a linear signature without touching its attention
    /// profile.
    pub negative_tie_strength: f64,
    /// Coefficient of the private direction a bigram pair shares.
    pub bigram_tie_strength: f64,
    /// Standard deviation of each token's private embedding noise.
    pub component_sd: f64,
    pub subreddit: String,
    pub start_utc: i64,
    /// Posts are spaced by uniform random gaps in [1, this].
    pub max_post_gap_seconds: i64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_posts: 5000,
            vocab_size: 2000,
            positive_tokens: (0..15).map(|i| format!("up{i:02}")).collect(),
            negative_tokens: (0..15).map(|i| format!("dn{i:02}")).collect(),
            bigrams: vec![
                ("bga0".into(), "bgb0".into()),
                ("bga1".into(), "bgb1".into()),
            ],
            base_score: 30.0,
            positive_effect: 50.0,
            negative_effect: -20.0,
            noise_sd: 4.0,
            p_positive: 0.35,
            p_negative: 0.35,
            p_bigram: 0.10,
            title_len: (5, 12),
            embed_dim: 300,
            mean_component: 4.0,
            plant_attention_boost: 2.0,
            negative_tie_strength: 3.0,
            bigram_tie_strength: 6.0,
            component_sd: 0.15,
            subreddit: "synthetic".into(),
            start_utc: 1_500_000_000,
            max_post_gap_seconds: 240,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn filler_token(&self, i: usize) -> String {
        format!("w{i:04}")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_posts == 0 || self.vocab_size == 0 || self.embed_dim == 0 {
            return Err(Error::Config(
                "n_posts, vocab_size and embed_dim must all be at least 1".into(),
            ));
        }
        if self.title_len.0 == 0 || self.title_len.0 > self.title_len.1 {
            return Err(Error::Config(format!(
                "title_len range {:?} is invalid",
                self.title_len
            )));
        }
        for (name, p) in [
            ("p_positive", self.p_positive),
            ("p_negative", self.p_negative),
            ("p_bigram", self.p_bigram),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::Config(format!(
                "noise_sd must be non-negative, got {}",
                self.noise_sd
            )));
        }
        if self.max_post_gap_seconds < 1 {
            return Err(Error::Config(
                "max_post_gap_seconds must be at least 1".into(),
            ));
        }
        // All special tokens must be distinct from each other and from the
        // filler namespace.
        let mut seen = std::collections::HashSet::new();
        let bigram_tokens: Vec<&String> = self
            .bigrams
            .iter()
            .flat_map(|(a, b)| [a, b])
            .collect();
        for token in self
            .positive_tokens
            .iter()
            .chain(&self.negative_tokens)
            .chain(bigram_tokens)
        {
            if token.is_empty() {
                return Err(Error::Config("plant tokens must be non-empty".into()));
            }
            if !seen.insert(token.as_str()) {
                return Err(Error::Config(format!(
                    "plant sets overlap on token {token:?}"
                )));
            }
        }
        for i in 0..self.vocab_size {
            let filler = self.filler_token(i);
            if seen.contains(filler.as_str()) {
                return Err(Error::Config(format!(
                    "plant token {filler:?} collides with the filler namespace"
                )));
            }
        }
        Ok(())
    }
}

/// Ground truth shipped next to the generated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantManifest {
    pub positive_tokens: Vec<String>,
    pub negative_tokens: Vec<String>,
    pub bigrams: Vec<(String, String)>,
    pub base_score: f64,
    pub positive_effect: f64,
    pub negative_effect: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub posts: Vec<Post>,
    /// Token vectors in a fixed order: fillers, positive plants, negative
    /// plants, bigram tokens.
    pub embeddings: Vec<(String, Vec<f64>)>,
    pub manifest: PlantManifest,
}

impl SynthOutput {
    pub fn embedding_table(&self) -> Result<EmbeddingTable> {
        EmbeddingTable::from_entries(
            self.embeddings.first().map_or(0, |(_, v)| v.len()),
            self.embeddings.iter().cloned(),
        )
    }
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("valid parameters");
    let mut v: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    // A zero draw has probability zero; guard anyway.
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    } else {
        v[0] = 1.0;
    }
    v
}

/// `alpha·mu + tie + sd·z` with fresh private noise z.
fn token_vector(
    rng: &mut ChaCha8Rng,
    mu: &[f64],
    alpha: f64,
    tie: Option<(&[f64], f64)>,
    sd: f64,
) -> Vec<f64> {
    let normal = Normal::new(0.0, sd).expect("valid parameters");
    mu.iter()
        .enumerate()
        .map(|(k, m)| {
            let tied = tie.map_or(0.0, |(w, c)| c * w[k]);
            alpha * m + tied + normal.sample(rng)
        })
        .collect()
}

/// Generate the corpus, its embedding table and the plant manifest.
/// Deterministic per seed.
pub fn generate(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dim = config.embed_dim;
    let mu = unit_vector(&mut rng, dim);
    let nu = unit_vector(&mut rng, dim);
    let sd = config.component_sd;

    let mut embeddings: Vec<(String, Vec<f64>)> = Vec::new();
    let fillers: Vec<String> = (0..config.vocab_size)
        .map(|i| config.filler_token(i))
        .collect();
    for token in &fillers {
        embeddings.push((
            token.clone(),
            token_vector(&mut rng, &mu, config.mean_component, None, sd),
        ));
    }
    let boosted = config.mean_component * config.plant_attention_boost;
    for token in &config.positive_tokens {
        embeddings.push((
            token.clone(),
            token_vector(&mut rng, &mu, boosted, None, sd),
        ));
    }
    let nu_tie = Some((nu.as_slice(), config.negative_tie_strength));
    for token in &config.negative_tokens {
        embeddings.push((
            token.clone(),
            token_vector(&mut rng, &mu, config.mean_component, nu_tie, sd),
        ));
    }
    for (first, second) in &config.bigrams {
        let tie = unit_vector(&mut rng, dim);
        let tie_ref = Some((tie.as_slice(), config.bigram_tie_strength));
        embeddings.push((
            first.clone(),
            token_vector(&mut rng, &mu, config.mean_component, tie_ref, sd),
        ));
        embeddings.push((
            second.clone(),
            token_vector(&mut rng, &mu, config.mean_component, tie_ref, sd),
        ));
    }

    let noise = Normal::new(0.0, config.noise_sd.max(f64::MIN_POSITIVE))
        .expect("valid parameters");
    let mut posts = Vec::with_capacity(config.n_posts);
    let mut created_utc = config.start_utc;
    for idx in 0..config.n_posts {
        let len = rng.gen_range(config.title_len.0..=config.title_len.1);
        let mut tokens: Vec<String> = (0..len)
            .map(|_| fillers.choose(&mut rng).expect("fillers nonempty").clone())
            .collect();

        let insert_at_random = |tokens: &mut Vec<String>, rng: &mut ChaCha8Rng, t: String| {
            let at = rng.gen_range(0..=tokens.len());
            tokens.insert(at, t);
        };

        let has_positive = !config.positive_tokens.is_empty() && rng.gen_bool(config.p_positive);
        if has_positive {
            let t = config.positive_tokens.choose(&mut rng).unwrap().clone();
            insert_at_random(&mut tokens, &mut rng, t);
        }
        let has_negative = !config.negative_tokens.is_empty() && rng.gen_bool(config.p_negative);
        if has_negative {
            let t = config.negative_tokens.choose(&mut rng).unwrap().clone();
            insert_at_random(&mut tokens, &mut rng, t);
        }
        if !config.bigrams.is_empty() && rng.gen_bool(config.p_bigram) {
            let (first, second) = config.bigrams.choose(&mut rng).unwrap().clone();
            let at = rng.gen_range(0..=tokens.len());
            tokens.insert(at, second);
            tokens.insert(at, first);
        }

        let mut score = config.base_score;
        if has_positive {
            score += config.positive_effect;
        }
        if has_negative {
            score += config.negative_effect;
        }
        if config.noise_sd > 0.0 {
            score += noise.sample(&mut rng);
        }

        created_utc += rng.gen_range(1..=config.max_post_gap_seconds);
        posts.push(Post {
            id: format!("s{idx:06}"),
            title: tokens.join(" "),
            score: score.round() as i64,
            subreddit: config.subreddit.clone(),
            created_utc,
            stickied: false,
        });
    }

    let manifest = PlantManifest {
        positive_tokens: config.positive_tokens.clone(),
        negative_tokens: config.negative_tokens.clone(),
        bigrams: config.bigrams.clone(),
        base_score: config.base_score,
        positive_effect: config.positive_effect,
        negative_effect: config.negative_effect,
        noise_sd: config.noise_sd,
        seed: config.seed,
    };
    Ok(SynthOutput {
        posts,
        embeddings,
        manifest,
    })
}

/// Write the embedding table in the loader's text format, six decimals.
pub fn write_embeddings(path: &Path, embeddings: &[(String, Vec<f64>)]) -> Result<()> {
    let mut out = String::new();
    for (token, vector) in embeddings {
        out.push_str(token);
        for v in vector {
            out.push_str(&format!(" {v:.6}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_manifest(path: &Path, manifest: &PlantManifest) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::Data(format!("encoding plant manifest: {e}")))?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}
