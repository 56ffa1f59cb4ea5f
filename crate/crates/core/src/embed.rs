//! Deterministic signed-hash bag-of-words embedder.
//!
//! Text is lowercased and split into tokens on every non-alphanumeric
//! character. Each token is hashed with 64-bit FNV-1a over its UTF-8 bytes;
//! the hash picks bucket `hash % dim` and sign `+1` when bit 32 is clear,
//! `-1` otherwise. Per-bucket sums are L2-normalized. Text without tokens
//! maps to the all-zero vector.

use alloc::string::String;
use alloc::vec;

use crate::domain::Embedding;
use crate::hash::fnv1a64;

pub const DEFAULT_DIM: usize = 256;
pub const DEFAULT_MODEL_ID: &str = "reference-fnv1a";

/// Lowercased alphanumeric tokens of `text`, in order.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.chars().flat_map(char::to_lowercase).collect())
}

/// Bucket index and sign for one token.
pub fn token_slot(token: &str, dim: usize) -> (usize, f64) {
    let h = fnv1a64(token.as_bytes());
    let bucket = (h % dim as u64) as usize;
    let sign = if (h >> 32) & 1 == 0 { 1.0 } else { -1.0 };
    (bucket, sign)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceEmbedder {
    dim: usize,
    model_id: String,
}

impl ReferenceEmbedder {
    /// # Panics
    /// If `dim` is zero.
    pub fn new(dim: usize, model_id: impl Into<String>) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self {
            dim,
            model_id: model_id.into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn embed(&self, text: &str) -> Embedding {
        let mut acc = vec![0.0f64; self.dim];
        for token in tokenize(text) {
            let (bucket, sign) = token_slot(&token, self.dim);
            acc[bucket] += sign;
        }
        Embedding::normalized(&acc, self.model_id.as_str())
    }
}

impl Default for ReferenceEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIM, DEFAULT_MODEL_ID)
    }
}
