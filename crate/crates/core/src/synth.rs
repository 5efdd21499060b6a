//! Synthetic labeled tweets with two Gaussian token-frequency regimes.
//!
//! The vocabulary is a fixed list of pseudo-words built from consonant-vowel
//! syllables. Negative documents draw token ranks around `0.3 V`, positive ones around
//! `0.7 V`, so the classes are nearly separable on bag-of-words features. The default
//! vocabulary is small enough that hashing into 256 buckets keeps most words apart.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::ingest::{Document, Sentiment};

pub const SAMPLE_SEED: u64 = 20_240_140;
pub const SAMPLE_EXAMPLES: usize = 20_000;

const SYLLABLES: [&str; 20] = [
    "ba", "ke", "mi", "lo", "tu", "ra", "se", "di", "no", "pu", "ga", "fe", "ri", "mo", "zu", "ha", "ve", "ni", "to",
    "ju",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub examples: usize,
    pub vocab: usize,
    /// Standard deviation of token rank, as a fraction of `vocab`.
    pub spread: f64,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { examples: SAMPLE_EXAMPLES, vocab: 150, spread: 0.08, min_tokens: 4, max_tokens: 16, seed: SAMPLE_SEED }
    }
}

/// Pseudo-word for rank `i`: three base-20 syllables.
pub fn word(i: usize) -> String {
    let n = SYLLABLES.len();
    [i / (n * n) % n, i / n % n, i % n].iter().map(|&s| SYLLABLES[s]).collect()
}

pub fn generate(cfg: &SynthConfig) -> Vec<Document> {
    let v = cfg.vocab as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let neg = Normal::new(0.3 * v, cfg.spread * v).expect("finite spread");
    let pos = Normal::new(0.7 * v, cfg.spread * v).expect("finite spread");
    let vocab: Vec<String> = (0..cfg.vocab).map(word).collect();
    (0..cfg.examples)
        .map(|i| {
            let label = if rng.random_bool(0.5) { Sentiment::Positive } else { Sentiment::Negative };
            let dist = if label == Sentiment::Positive { &pos } else { &neg };
            let len = rng.random_range(cfg.min_tokens..=cfg.max_tokens);
            let words: Vec<&str> = (0..len)
                .map(|_| {
                    let rank = dist.sample(&mut rng).round().clamp(0.0, v - 1.0) as usize;
                    vocab[rank].as_str()
                })
                .collect();
            Document { id: 1_000_000 + i as u64, label, raw_text: words.join(" ") }
        })
        .collect()
}

/// Writes the six-field layout `label,id,date,query,user,text` with every field quoted.
pub fn write_sentiment140<W: Write>(docs: &[Document], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().quote_style(csv::QuoteStyle::Always).from_writer(out);
    for d in docs {
        let label = match d.label {
            Sentiment::Negative => "0",
            Sentiment::Positive => "4",
        };
        let id = d.id.to_string();
        let user = format!("user{}", d.id % 997);
        w.write_record([label, &id, "Mon Apr 06 22:19:45 PDT 2009", "NO_QUERY", &user, &d.raw_text])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{CsvDocuments, CsvSchema};

    #[test]
    fn words_are_distinct_and_plain() {
        let words: std::collections::BTreeSet<_> = (0..8000).map(word).collect();
        assert_eq!(words.len(), 8000);
        assert_eq!(word(0), "bababa");
        assert!(words.iter().all(|w| w.bytes().all(|b| b.is_ascii_lowercase())));
    }

    #[test]
    fn deterministic_and_round_trips() {
        let cfg = SynthConfig { examples: 50, ..Default::default() };
        let docs = generate(&cfg);
        assert_eq!(docs, generate(&cfg));
        let mut buf = Vec::new();
        write_sentiment140(&docs, &mut buf).unwrap();
        let (back, counts) = CsvDocuments::from_reader(buf.as_slice(), CsvSchema::sentiment140()).collect_all().unwrap();
        assert_eq!(back, docs);
        assert_eq!(counts.malformed, 0);
    }

    #[test]
    fn lengths_in_range_and_both_labels() {
        let docs = generate(&SynthConfig { examples: 400, ..Default::default() });
        assert!(docs.iter().all(|d| (4..=16).contains(&d.raw_text.split(' ').count())));
        let positives = docs.iter().filter(|d| d.label == Sentiment::Positive).count();
        assert!((150..250).contains(&positives), "{positives}");
    }
}
