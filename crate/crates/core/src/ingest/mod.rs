//! Ingestion: labeled CSV reading, text normalization, and deterministic embeddings.

mod csv;
mod embed;
mod embedfile;
mod text;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::csv::{
    read_csv, CsvDocuments, CsvSchema, Document, LabelAction, ReadCounts, Sentiment, TextEncoding,
};
pub use self::embed::{
    bucket, embed, ngram_hash, EmbedderConfig, EmbeddingVector, DEFAULT_DIMENSION, DEFAULT_HASH_SEED,
};
pub use self::embedfile::{load_embeddings, write_embeddings, EmbeddingRecords};
pub use self::text::{preprocess, TokenList};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot open {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("read failed: {0}")]
    Read(#[source] std::io::Error),
    #[error("csv input failed: {0}")]
    Csv(#[from] ::csv::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("dimension mismatch{}: expected {expected}, found {found}", record.map(|r| format!(" at record {r}")).unwrap_or_default())]
    DimensionMismatch {
        record: Option<usize>,
        expected: usize,
        found: usize,
    },
    #[error("non-finite embedding value at index {index}")]
    NonFinite { index: usize },
    #[error("invalid embedder config: {0}")]
    InvalidEmbedder(String),
}

/// An embedded example with a binary label (0 negative, 1 positive).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub embedding: EmbeddingVector,
    pub label: u8,
}

impl LabeledExample {
    pub fn new(values: Vec<f64>, label: u8) -> Result<Self, IngestError> {
        if label > 1 {
            return Err(IngestError::Format { line: 0, message: format!("label {label} is not 0 or 1") });
        }
        Ok(Self { embedding: EmbeddingVector::from_values(values)?, label })
    }

    pub fn x(&self) -> &[f64] {
        self.embedding.values()
    }

    pub fn y(&self) -> f64 {
        f64::from(self.label)
    }
}

/// Preprocesses and embeds one document.
pub fn embed_document(doc: &Document, config: &EmbedderConfig) -> LabeledExample {
    LabeledExample {
        embedding: embed(&preprocess(&doc.raw_text), config),
        label: doc.label.as_label(),
    }
}
