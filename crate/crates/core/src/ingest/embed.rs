//! Signed feature-hashing embedder over token n-grams.
//!
//! Each n-gram is hashed with a seeded 64-bit hash. The low bits pick a bucket in
//! `[0, d)` and the top bit picks a sign. Signed counts are accumulated and the
//! result is L2-normalized. No vocabulary is stored, so the embedder is stateless
//! and identical across processes for a fixed `(tokens, config)`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::text::TokenList;
use super::IngestError;

pub const DEFAULT_DIMENSION: usize = 256;
pub const DEFAULT_HASH_SEED: u64 = 0x005E_ED0F_5E47;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedderConfig {
    pub dimension: usize,
    pub ngram_orders: BTreeSet<usize>,
    pub hash_seed: u64,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            dimension: DEFAULT_DIMENSION,
            ngram_orders: [1, 2].into_iter().collect(),
            hash_seed: DEFAULT_HASH_SEED,
        }
    }
}

impl EmbedderConfig {
    pub fn new(
        dimension: usize,
        ngram_orders: impl IntoIterator<Item = usize>,
        hash_seed: u64,
    ) -> Result<Self, IngestError> {
        let config = Self {
            dimension,
            ngram_orders: ngram_orders.into_iter().collect(),
            hash_seed,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if self.dimension == 0 {
            return Err(IngestError::InvalidEmbedder("dimension must be at least 1".into()));
        }
        if self.ngram_orders.is_empty() {
            return Err(IngestError::InvalidEmbedder("ngram_orders must be nonempty".into()));
        }
        if self.ngram_orders.contains(&0) {
            return Err(IngestError::InvalidEmbedder("n-gram order 0 is not allowed".into()));
        }
        Ok(())
    }

    /// Number of n-grams `embed` will hash for a token list of length `len`.
    pub fn ngram_count(&self, len: usize) -> usize {
        self.ngram_orders
            .iter()
            .map(|&n| (len + 1).saturating_sub(n))
            .sum()
    }
}

/// A `d`-dimensional embedding. Unit L2 norm, or all zeros for empty input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn zeros(dimension: usize) -> Self {
        Self(vec![0.0; dimension])
    }

    /// Wraps raw values, rejecting non-finite entries.
    pub fn from_values(values: Vec<f64>) -> Result<Self, IngestError> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(IngestError::NonFinite { index: i });
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl AsRef<[f64]> for EmbeddingVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Seeded 64-bit hash of one n-gram: FNV-1a over `seed (LE) ‖ order ‖ tokens joined by ' '`,
/// followed by the splitmix64 finalizer.
pub fn ngram_hash(seed: u64, gram: &[String]) -> u64 {
    let mut h = FNV_OFFSET;
    let mut feed = |b: u8| {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    };
    for b in seed.to_le_bytes() {
        feed(b);
    }
    feed(gram.len() as u8);
    for (i, token) in gram.iter().enumerate() {
        if i > 0 {
            feed(b' ');
        }
        for &b in token.as_bytes() {
            feed(b);
        }
    }
    mix64(h)
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Bucket index and sign selected by a hash.
#[inline]
pub fn bucket(hash: u64, dimension: usize) -> (usize, f64) {
    let index = (hash % dimension as u64) as usize;
    let sign = if hash >> 63 == 0 { 1.0 } else { -1.0 };
    (index, sign)
}

pub fn embed(tokens: &TokenList, config: &EmbedderConfig) -> EmbeddingVector {
    let d = config.dimension;
    let mut values = vec![0.0f64; d];
    let toks = tokens.tokens();
    for &n in &config.ngram_orders {
        if n > toks.len() {
            continue;
        }
        for gram in toks.windows(n) {
            let (index, sign) = bucket(ngram_hash(config.hash_seed, gram), d);
            values[index] += sign;
        }
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    // Signed counts can cancel to zero even for nonempty input; leave those as zeros.
    if norm > 0.0 {
        for v in &mut values {
            *v /= norm;
        }
    }
    EmbeddingVector(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::preprocess;

    fn cfg(d: usize, seed: u64) -> EmbedderConfig {
        EmbedderConfig::new(d, [1, 2], seed).unwrap()
    }

    #[test]
    fn empty_tokens_give_zero_vector() {
        let v = embed(&TokenList::default(), &cfg(16, 7));
        assert_eq!(v.values(), &[0.0; 16]);
    }

    #[test]
    fn deterministic() {
        let t = preprocess("good");
        assert_eq!(embed(&t, &cfg(64, 1)), embed(&t, &cfg(64, 1)));
        assert_ne!(embed(&t, &cfg(64, 1)), embed(&t, &cfg(64, 2)));
    }

    // Frozen from a standalone scalar implementation of the same hash pipeline.
    #[test]
    fn good_movie_golden() {
        let grams = |t: &[&str]| t.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert_eq!(ngram_hash(42, &grams(&["good"])), 0x7ab7_953f_d2a2_6519);
        assert_eq!(ngram_hash(42, &grams(&["movie"])), 0x880e_5975_55b4_e669);
        assert_eq!(ngram_hash(42, &grams(&["good", "movie"])), 0x507f_cec4_f2b9_f712);
        // "good" and "movie" land in bucket 1 with opposite signs and cancel.
        let v = embed(&preprocess("good movie"), &cfg(8, 42));
        assert_eq!(v.values(), &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);

        let v = embed(&preprocess("I love it so much"), &cfg(16, 7));
        let a = -0.377_964_473_009_227_2;
        assert_eq!(v.values(), &[a, 0.0, a, a, a, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, a, 0.0, 0.0, a, a]);
    }

    #[test]
    fn config_validation() {
        assert!(EmbedderConfig::new(0, [1], 0).is_err());
        assert!(EmbedderConfig::new(4, [], 0).is_err());
        assert!(EmbedderConfig::new(4, [0, 1], 0).is_err());
    }

    #[test]
    fn ngram_count_matches_windows() {
        let c = EmbedderConfig::new(8, [1, 2, 3], 0).unwrap();
        assert_eq!(c.ngram_count(0), 0);
        assert_eq!(c.ngram_count(1), 1);
        assert_eq!(c.ngram_count(2), 3);
        assert_eq!(c.ngram_count(5), 5 + 4 + 3);
    }

    #[test]
    fn unit_norm_for_nonempty() {
        for text in ["a", "good movie", "the quick brown fox jumps over the lazy dog"] {
            let v = embed(&preprocess(text), &cfg(32, 3));
            assert!((v.norm() - 1.0).abs() < 1e-12, "{text}: {}", v.norm());
        }
    }
}
