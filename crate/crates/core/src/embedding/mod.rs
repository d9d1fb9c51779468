//! Sentence-embedding providers.
//!
//! Three backends sit behind [`EmbeddingProvider`]: a content-addressed
//! JSONL store of precomputed vectors, a deterministic toy encoder for
//! offline runs, and an HTTP client for a remote embedding service.

mod remote;
mod store;
mod toy;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use remote::{RemoteEncoder, DEFAULT_BACKOFF, MAX_BATCH, MAX_RETRIES};
pub use store::{EmbeddingStore, StoreRecord};
pub use toy::{toy_encode, ToyEncoder, TOY_BIAS};

use crate::error::{Error, Result};
use crate::matrix::EmbeddingMatrix;

/// Maps sentence texts to fixed-width vectors. Row `i` of the output
/// belongs to `texts[i]`.
pub trait EmbeddingProvider: Send + Sync {
    /// Declared vector width, when known before the first call.
    fn dim(&self) -> Option<usize>;

    fn embed(&self, texts: &[&str]) -> Result<EmbeddingMatrix>;
}

/// Convenience wrapper accepting owned strings.
pub fn get_embeddings<S: AsRef<str>>(
    provider: &dyn EmbeddingProvider,
    texts: &[S],
) -> Result<EmbeddingMatrix> {
    let refs: Vec<&str> = texts.iter().map(AsRef::as_ref).collect();
    provider.embed(&refs)
}

/// Lowercase hex SHA-256 of the UTF-8 text, the store key.
pub fn text_key(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    FileStore,
    Toy,
    Remote,
}

impl std::str::FromStr for ProviderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "file_store" => Ok(Self::FileStore),
            "toy" => Ok(Self::Toy),
            "remote" => Ok(Self::Remote),
            other => Err(Error::Config(format!(
                "unknown provider kind {other:?} (expected file_store, toy or remote)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default = "default_toy_seed")]
    pub toy_seed: u64,
}

fn default_toy_seed() -> u64 {
    7
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Toy,
            dim: Some(32),
            path: None,
            endpoint: None,
            toy_seed: default_toy_seed(),
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == Some(0) {
            return Err(Error::Config("provider dim must be >= 1".into()));
        }
        match self.kind {
            ProviderKind::FileStore => {
                if self.path.is_none() || self.endpoint.is_some() {
                    return Err(Error::Config(
                        "file_store provider needs `path` and no `endpoint`".into(),
                    ));
                }
            }
            ProviderKind::Remote => {
                if self.endpoint.is_none() || self.path.is_some() {
                    return Err(Error::Config(
                        "remote provider needs `endpoint` and no `path`".into(),
                    ));
                }
            }
            ProviderKind::Toy => {
                if self.path.is_some() || self.endpoint.is_some() {
                    return Err(Error::Config(
                        "toy provider takes neither `path` nor `endpoint`".into(),
                    ));
                }
                if self.dim.is_none() {
                    return Err(Error::Config("toy provider needs `dim`".into()));
                }
            }
        }
        Ok(())
    }

    /// Instantiates the configured backend. File stores are read eagerly.
    pub fn build(&self) -> Result<Box<dyn EmbeddingProvider>> {
        self.validate()?;
        Ok(match self.kind {
            ProviderKind::Toy => Box::new(ToyEncoder::new(
                self.dim.expect("validated"),
                self.toy_seed,
            )?),
            ProviderKind::FileStore => {
                let store = EmbeddingStore::read(self.path.as_ref().expect("validated"))?;
                if let Some(d) = self.dim {
                    if d != store.dim() {
                        return Err(Error::Validation(format!(
                            "configured dim {d} but store holds {}-dimensional vectors",
                            store.dim()
                        )));
                    }
                }
                Box::new(store)
            }
            ProviderKind::Remote => Box::new(RemoteEncoder::new(
                self.endpoint.as_deref().expect("validated"),
                self.dim,
            )),
        })
    }
}
