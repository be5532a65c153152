//! Text embedding providers and cosine similarity.

mod hashing;
mod remote;

use serde::{Deserialize, Serialize};

pub use hashing::{fnv1a_64, HashingEmbedder};
pub use remote::RemoteEmbedder;

use crate::error::{Error, ProviderError, Result};
use crate::http::RetryPolicy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f32>,
    /// False for the zero vector, which cannot be normalized.
    normalized: bool,
}

impl EmbeddingVector {
    /// L2-normalize `values`. The zero vector passes through unnormalized.
    pub fn normalized(mut values: Vec<f32>) -> Self {
        let norm = l2_norm(&values);
        if norm == 0.0 {
            return Self {
                values,
                normalized: false,
            };
        }
        for v in values.iter_mut() {
            *v = (f64::from(*v) / norm) as f32;
        }
        Self {
            values,
            normalized: true,
        }
    }

    /// Wrap values as-is. Used when loading persisted vectors.
    pub fn from_parts(values: Vec<f32>, normalized: bool) -> Self {
        Self { values, normalized }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }
}

fn l2_norm(values: &[f32]) -> f64 {
    values
        .iter()
        .map(|&v| f64::from(v) * f64::from(v))
        .sum::<f64>()
        .sqrt()
}

/// Cosine similarity in `[-1, 1]`; 0 when either vector has zero norm.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::InvalidParameter(format!(
            "dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(cosine_unchecked(a.values(), b.values()))
}

pub(crate) fn cosine_unchecked(a: &[f32], b: &[f32]) -> f64 {
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

pub trait Embedder: Send + Sync {
    /// Embed `texts`, preserving order. Every returned vector has the same dim
    /// and is L2-normalized unless it is the zero vector.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>>;

    /// Short human-readable identity, e.g. `hashing(dim=256)`.
    fn describe(&self) -> String;

    fn embed_one(&self, text: &str) -> Result<EmbeddingVector> {
        let mut out = self.embed_batch(&[text])?;
        out.pop()
            .ok_or_else(|| ProviderError::Malformed("empty embedding batch".into()).into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    Remote,
    #[default]
    Hashing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingProviderConfig {
    pub kind: EmbedderKind,
    pub endpoint_url: Option<String>,
    pub model_name: Option<String>,
    /// Hashing embedder only.
    pub dim: usize,
    pub batch_size: usize,
    pub api_key_env: String,
    /// Remote only; longer inputs are refused before sending.
    pub max_input_tokens: Option<usize>,
    pub retry: RetryPolicy,
}

impl Default for EmbeddingProviderConfig {
    fn default() -> Self {
        Self {
            kind: EmbedderKind::Hashing,
            endpoint_url: None,
            model_name: None,
            dim: 256,
            batch_size: 32,
            api_key_env: crate::DEFAULT_API_KEY_ENV.to_string(),
            max_input_tokens: None,
            retry: RetryPolicy::default(),
        }
    }
}

impl EmbeddingProviderConfig {
    pub fn validate(&self) -> std::result::Result<(), ProviderError> {
        if self.batch_size == 0 {
            return Err(ProviderError::Config("batch_size must be >= 1".into()));
        }
        match self.kind {
            EmbedderKind::Hashing if self.dim < 8 => {
                Err(ProviderError::Config("hashing dim must be >= 8".into()))
            }
            EmbedderKind::Remote if self.endpoint_url.is_none() => Err(ProviderError::Config(
                "remote embedder requires endpoint_url".into(),
            )),
            EmbedderKind::Remote if self.model_name.is_none() => Err(ProviderError::Config(
                "remote embedder requires model_name".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn build(&self) -> std::result::Result<Box<dyn Embedder>, ProviderError> {
        self.validate()?;
        Ok(match self.kind {
            EmbedderKind::Hashing => Box::new(HashingEmbedder::new(self.dim)),
            EmbedderKind::Remote => Box::new(RemoteEmbedder::new(self)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(values: &[f32]) -> EmbeddingVector {
        EmbeddingVector::from_parts(values.to_vec(), false)
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn cosine_basics() {
        assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[1.0, 0.0])).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        let h = std::f32::consts::FRAC_1_SQRT_2;
        let c = cosine_similarity(&v(&[h, h]), &v(&[1.0, 0.0])).unwrap();
        assert!((c - 0.7071).abs() < 1e-4);
    }

    #[test]
    fn cosine_zero_norm_and_mismatch() {
        assert_eq!(cosine_similarity(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])).unwrap(), 0.0);
        assert!(matches!(
            cosine_similarity(&v(&[1.0]), &v(&[1.0, 0.0])),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn normalization() {
        let e = EmbeddingVector::normalized(vec![3.0, 4.0]);
        assert!(e.is_normalized());
        assert!((e.norm() - 1.0).abs() <= 1e-6);
        let z = EmbeddingVector::normalized(vec![0.0; 4]);
        assert!(!z.is_normalized());
        assert_eq!(z.dim(), 4);
    }

    #[test]
    fn config_validation() {
        let mut cfg = EmbeddingProviderConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.dim = 4;
        assert!(cfg.validate().is_err());
        cfg.dim = 256;
        cfg.batch_size = 0;
        assert!(cfg.validate().is_err());
        let remote = EmbeddingProviderConfig {
            kind: EmbedderKind::Remote,
            ..Default::default()
        };
        assert!(remote.validate().is_err());
    }

    proptest::proptest! {
        #[test]
        fn cosine_symmetric_and_self_one(
            a in proptest::collection::vec(-10.0f32..10.0, 16),
            b in proptest::collection::vec(-10.0f32..10.0, 16),
        ) {
            let (a, b) = (v(&a), v(&b));
            let ab = cosine_similarity(&a, &b).unwrap();
            proptest::prop_assert_eq!(ab.to_bits(), cosine_similarity(&b, &a).unwrap().to_bits());
            proptest::prop_assert!((-1.0..=1.0).contains(&ab));
            if a.norm() > 0.0 {
                proptest::prop_assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() <= 1e-6);
            }
        }
    }
}
