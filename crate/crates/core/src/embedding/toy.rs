use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use super::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::matrix::EmbeddingMatrix;

/// Magnitude of every component of the shared bias vector.
pub const TOY_BIAS: f64 = 5.0;

const BIAS_STREAM: u64 = 0x6269_6173_5f76_6563;

/// Hash-seeded Gaussian encoder with a large shared offset.
///
/// Each text gets `dim` standard-normal draws from a ChaCha stream keyed on
/// `seed ^ sha256(text)[..8]`, plus a bias vector whose components are
/// `±TOY_BIAS` (signs drawn once from `seed`). The bias dominates, so raw
/// cosines between unrelated texts sit well above 0.9.
#[derive(Debug, Clone)]
pub struct ToyEncoder {
    dim: usize,
    seed: u64,
    bias: Vec<f64>,
}

impl ToyEncoder {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("toy encoder dim must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ BIAS_STREAM);
        let bias = (0..dim)
            .map(|_| {
                if rng.gen::<bool>() {
                    TOY_BIAS
                } else {
                    -TOY_BIAS
                }
            })
            .collect();
        Ok(Self { dim, seed, bias })
    }

    pub fn encode(&self, text: &str) -> Vec<f64> {
        let digest = Sha256::digest(text.as_bytes());
        let head = u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"));
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ head);
        self.bias
            .iter()
            .map(|b| b + rng.sample::<f64, _>(StandardNormal))
            .collect()
    }
}

/// One-shot form of [`ToyEncoder::encode`].
pub fn toy_encode(text: &str, dim: usize, seed: u64) -> Result<Vec<f64>> {
    Ok(ToyEncoder::new(dim, seed)?.encode(text))
}

impl EmbeddingProvider for ToyEncoder {
    fn dim(&self) -> Option<usize> {
        Some(self.dim)
    }

    fn embed(&self, texts: &[&str]) -> Result<EmbeddingMatrix> {
        let mut flat = Vec::with_capacity(texts.len() * self.dim);
        for t in texts {
            flat.extend(self.encode(t));
        }
        EmbeddingMatrix::from_shape_vec(texts.len(), self.dim, flat)
    }
}
