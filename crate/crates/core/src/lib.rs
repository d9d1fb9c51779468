//! Cross-lingual semantic relatedness with whitened sentence embeddings.
//!
//! The crate covers the offline half of the pipeline:
//!
//! * [`corpus`]: pair datasets, per-language balancing, sentence pools.
//! * [`embedding`]: providers mapping sentences to vectors (JSONL store,
//!   toy encoder, remote HTTP service).
//! * [`whitening`]: mean/covariance estimation, eigendecomposition and the
//!   top-k whitening transform.
//! * [`metrics`]: cosine scoring, Spearman correlation, score histograms.
//! * [`filter`]: source-language probing against a target-fitted whitening,
//!   training-set assembly and target prediction.
//! * [`pipeline`]: configuration and the file-level commands behind the CLI.
//!
//! Data-parallel loops run on rayon when the default `parallel` feature is
//! enabled and fall back to plain iteration otherwise. Both paths give
//! bitwise-identical results.

pub mod corpus;
pub mod embedding;
pub mod error;
pub mod exec;
pub mod filter;
pub mod matrix;
pub mod metrics;
pub mod pipeline;
pub mod synthetic;
pub mod whitening;

pub use corpus::{
    balance_language, load_dataset, unique_sentences, BalanceConfig, PairDataset, PairRecord,
};
pub use embedding::{get_embeddings, EmbeddingProvider, ProviderConfig, ProviderKind};
pub use error::{Error, Result};
pub use exec::Execution;
pub use filter::{
    build_training_set, filter_languages, predict_target, probe_source, FilterConfig, FilterReport,
    PredictConfig, SourceProbe,
};
pub use matrix::EmbeddingMatrix;
pub use metrics::{
    cosine_similarity, histogram, score_pairs, spearman, HistogramReport, ScoreReport,
};
pub use whitening::{
    apply_whitening, compute_covariance, compute_mean, fit_whitening, WhiteningConfig,
    WhiteningParams,
};
