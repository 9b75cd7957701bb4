//! Offline hashing embedder and a content-addressed embedding cache.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use sha2::{Digest, Sha256};

use super::{EmbeddingVector, Embedder, GatewayError};

pub const HASH_EMBED_DIM: usize = 256;

/// Feature-hashing embedder: each lowercased whitespace token adds ±1 to one
/// of `dim` buckets, then the vector is L2-normalized.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self { dim: HASH_EMBED_DIM }
    }
}

impl HashEmbedder {
    pub fn with_dim(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl Embedder for HashEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        let mut values = vec![0.0; self.dim];
        let mut tokens = 0usize;
        for token in text.split_whitespace() {
            let h = fnv1a(token.to_lowercase().as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            values[bucket] += sign;
            tokens += 1;
        }
        if tokens == 0 {
            return Err(GatewayError::EmptyText);
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            // Every token cancelled out; fall back to a deterministic unit vector.
            let h = fnv1a(text.as_bytes());
            values[(h % self.dim as u64) as usize] = 1.0;
        } else {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        EmbeddingVector::new(values)
    }
}

/// Memoizes an inner embedder by SHA-256 of the input text.
pub struct CachedEmbedder<E> {
    inner: E,
    cache: Mutex<HashMap<[u8; 32], EmbeddingVector>>,
    misses: AtomicU64,
}

impl<E: Embedder> CachedEmbedder<E> {
    pub fn new(inner: E) -> Self {
        Self {
            inner,
            cache: Mutex::new(HashMap::new()),
            misses: AtomicU64::new(0),
        }
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    /// Number of calls forwarded to the inner embedder.
    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }
}

impl<E: Embedder> Embedder for CachedEmbedder<E> {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        if text.trim().is_empty() {
            return Err(GatewayError::EmptyText);
        }
        let key: [u8; 32] = Sha256::digest(text.as_bytes()).into();
        if let Some(hit) = self.cache.lock().expect("embedding cache poisoned").get(&key) {
            return Ok(hit.clone());
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let vector = self.inner.embed(text)?;
        self.cache
            .lock()
            .expect("embedding cache poisoned")
            .entry(key)
            .or_insert_with(|| vector.clone());
        Ok(vector)
    }
}
