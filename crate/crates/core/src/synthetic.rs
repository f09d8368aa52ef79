//! Seeded purchase logs with planted complementary pairs.
//!
//! Each pattern has two interchangeable anchor items (twins) and one
//! complement bought shortly after either anchor. Users also buy uniform
//! noise items. Embeddings place the twins close together and everything
//! else at random, so a held-out anchor can be proxied by its twin.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Interaction, InteractionLog};
use crate::error::{Error, Result};
use crate::model::EmbeddingTable;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub n_users: usize,
    pub n_patterns: usize,
    pub n_noise_items: usize,
    pub n_categories: usize,
    /// Patterns each user completes.
    pub patterns_per_user: usize,
    /// Noise purchases per user.
    pub noise_per_user: usize,
    /// Chance that a purchase shares its predecessor's timestamp.
    pub tie_rate: f64,
    pub embedding_dim: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_users: 300,
            n_patterns: 40,
            n_noise_items: 60,
            n_categories: 5,
            patterns_per_user: 3,
            noise_per_user: 3,
            tie_rate: 0.0,
            embedding_dim: 16,
            seed: 7,
        }
    }
}

pub struct SyntheticData {
    pub log: InteractionLog,
    pub embeddings: EmbeddingTable,
}

pub fn anchor_id(pattern: usize, twin: usize) -> String {
    format!("a{pattern}_{twin}")
}

pub fn complement_id(pattern: usize) -> String {
    format!("c{pattern}")
}

pub fn noise_id(n: usize) -> String {
    format!("n{n}")
}

const DAY: u64 = 86_400;

pub fn generate(config: &SyntheticConfig) -> Result<SyntheticData> {
    let c = config;
    if c.n_users == 0 || c.n_patterns == 0 || c.n_categories == 0 || c.embedding_dim == 0 {
        return Err(Error::invalid("synthetic sizes must be positive"));
    }
    if !(0.0..=1.0).contains(&c.tie_rate) {
        return Err(Error::invalid(format!("tie rate {} outside [0, 1]", c.tie_rate)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let anchor_cat = |p: usize| format!("cat{}", p % c.n_categories);
    let complement_cat = |p: usize| format!("cat{}", (p + 1) % c.n_categories);

    let mut records = Vec::new();
    for u in 0..c.n_users {
        let user = format!("u{u}");
        let mut basket: Vec<(String, String)> = Vec::new();
        for _ in 0..c.patterns_per_user {
            let p = rng.random_range(0..c.n_patterns);
            let twin = rng.random_range(0..2);
            basket.push((anchor_id(p, twin), anchor_cat(p)));
            // noise inserted below may push the complement further back
            basket.push((complement_id(p), complement_cat(p)));
        }
        if c.n_noise_items > 0 {
            for _ in 0..c.noise_per_user {
                let n = rng.random_range(0..c.n_noise_items);
                let at = rng.random_range(0..=basket.len());
                basket.insert(at, (noise_id(n), format!("cat{}", n % c.n_categories)));
            }
        }
        let mut t = 1_600_000_000 + rng.random_range(0..365) * DAY;
        for (n, (item, cat)) in basket.into_iter().enumerate() {
            if n > 0 && !rng.random_bool(c.tie_rate) {
                t += rng.random_range(1..=3) * DAY;
            }
            records.push(Interaction::new(user.clone(), item, t, cat));
        }
    }
    let log = InteractionLog::from_interactions(records)?;

    let mut embeddings = EmbeddingTable::new(c.embedding_dim)?;
    let random_vec = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..c.embedding_dim).map(|_| rng.random_range(-1.0..1.0)).collect() };
    for p in 0..c.n_patterns {
        let base = random_vec(&mut rng);
        for twin in 0..2 {
            let v = base.iter().map(|x| x + rng.random_range(-0.05..0.05)).collect();
            embeddings.insert(anchor_id(p, twin), v)?;
        }
        embeddings.insert(complement_id(p), random_vec(&mut rng))?;
    }
    for n in 0..c.n_noise_items {
        embeddings.insert(noise_id(n), random_vec(&mut rng))?;
    }
    Ok(SyntheticData { log, embeddings })
}
