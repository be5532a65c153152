use super::{Embedder, EmbeddingVector};
use crate::error::{Error, Result};
use crate::tokenization::tokenize;

/// Signed feature-hashing bag-of-tokens embedder.
///
/// Each lowercased token is hashed with FNV-1a 64; `h % dim` picks the bucket
/// and the top bit of `h` picks the sign. The accumulated vector is
/// L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    dim: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1, "hashing embedder needs a positive dim");
        Self { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Unnormalized bucket counts.
    pub fn bag(&self, text: &str) -> Vec<f32> {
        let mut values = vec![0.0f32; self.dim];
        for token in tokenize(text) {
            let h = fnv1a_64(token.text.to_lowercase().as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            values[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
        }
        values
    }

    pub fn embed(&self, text: &str) -> EmbeddingVector {
        EmbeddingVector::normalized(self.bag(text))
    }
}

impl Embedder for HashingEmbedder {
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        if texts.is_empty() {
            return Err(Error::InvalidParameter("embed_batch needs at least one text".into()));
        }
        Ok(texts.iter().map(|t| self.embed(t)).collect())
    }

    fn describe(&self) -> String {
        format!("hashing(dim={})", self.dim)
    }
}

pub fn fnv1a_64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        // Published FNV-1a 64 test vectors.
        assert_eq!(fnv1a_64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a_64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a_64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn empty_text_is_zero_vector() {
        let e = HashingEmbedder::new(256).embed("");
        assert_eq!(e.dim(), 256);
        assert!(e.values().iter().all(|&v| v == 0.0));
        assert!(!e.is_normalized());
    }

    #[test]
    fn repetition_and_order_invariance() {
        let h = HashingEmbedder::new(256);
        assert_eq!(h.embed("cat cat"), h.embed("cat"));
        assert_eq!(h.embed("alpha beta"), h.embed("beta alpha"));
        assert_eq!(h.embed("Alpha"), h.embed("alpha"));
    }

    #[test]
    fn normalized_output() {
        let e = HashingEmbedder::new(64).embed("the quick brown fox jumps over the lazy dog");
        assert!((e.norm() - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn batch_preserves_order_and_refuses_empty() {
        let h = HashingEmbedder::new(32);
        let out = h.embed_batch(&["one", "two", "one"]).unwrap();
        assert_eq!(out[0], out[2]);
        assert_eq!(out[0], h.embed("one"));
        assert!(h.embed_batch(&[]).is_err());
    }
}
