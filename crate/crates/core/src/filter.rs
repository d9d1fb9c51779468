//! Source-language selection for a target language without target labels.
//!
//! Whitening is fitted once on the target language's unlabeled sentences.
//! Each labeled source language is then scored twice, with raw cosines and
//! with target-whitened cosines, and compared against its gold labels. A
//! source whose Spearman drops by more than `delta` under target whitening
//! is excluded from the training pool.

use serde::{Deserialize, Serialize};

use crate::corpus::{balance_language, unique_sentences, BalanceConfig, PairDataset};
use crate::embedding::{get_embeddings, text_key, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::metrics::{score_pairs_with, spearman};
use crate::whitening::{fit_whitening_with, WhiteningConfig, WhiteningParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceProbe {
    pub lang: String,
    pub rho_baseline: f64,
    pub rho_whitened: f64,
    pub margin: f64,
    pub kept: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub target_lang: String,
    pub delta: f64,
    pub seed: u64,
    pub probes: Vec<SourceProbe>,
    pub kept_langs: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct FilterConfig {
    pub whitening: WhiteningConfig,
    /// Tolerated Spearman drop before a source is excluded.
    pub delta: f64,
    /// Balancing seed, recorded in the report.
    pub seed: u64,
}

impl FilterConfig {
    pub fn new(k: usize, delta: f64, seed: u64) -> Self {
        Self {
            whitening: WhiteningConfig::new(k),
            delta,
            seed,
        }
    }

    fn exec(&self) -> Execution {
        self.whitening.exec
    }
}

/// Fits whitening on the embeddings of `texts`.
pub fn fit_on_texts<S: AsRef<str>>(
    texts: &[S],
    provider: &dyn EmbeddingProvider,
    cfg: &WhiteningConfig,
) -> Result<WhiteningParams> {
    if texts.is_empty() {
        return Err(Error::Empty("no sentences to fit whitening on"));
    }
    let m = get_embeddings(provider, texts)?;
    let out = fit_whitening_with(&m, cfg)?;
    Ok(out.params)
}

/// Scores one labeled source with raw and with `params`-whitened vectors.
pub fn probe_with_params(
    params: &WhiteningParams,
    source: &PairDataset,
    provider: &dyn EmbeddingProvider,
    delta: f64,
    exec: Execution,
) -> Result<SourceProbe> {
    let lang = source.single_lang()?.to_string();
    let tag = |e: Error| Error::Probe {
        lang: lang.clone(),
        source: Box::new(e),
    };
    let gold = source
        .labels()
        .ok_or_else(|| tag(Error::Validation("source has unlabeled pairs".into())))?;
    let raw = score_pairs_with(source, provider, None, exec).map_err(tag)?;
    let white = score_pairs_with(source, provider, Some(params), exec).map_err(tag)?;
    let rho_baseline = spearman(&gold, &raw).map_err(tag)?;
    let rho_whitened = spearman(&gold, &white).map_err(tag)?;
    let margin = rho_whitened - rho_baseline;
    Ok(SourceProbe {
        lang,
        rho_baseline,
        rho_whitened,
        margin,
        kept: margin >= -delta,
    })
}

/// Fits whitening on `target_texts` and probes a single source with it.
pub fn probe_source<S: AsRef<str>>(
    target_texts: &[S],
    source: &PairDataset,
    provider: &dyn EmbeddingProvider,
    cfg: &FilterConfig,
) -> Result<SourceProbe> {
    let params =
        fit_on_texts(target_texts, provider, &cfg.whitening).map_err(|e| Error::Probe {
            lang: source.langs().iter().next().cloned().unwrap_or_default(),
            source: Box::new(e),
        })?;
    probe_with_params(&params, source, provider, cfg.delta, cfg.exec())
}

fn check_sources(target_lang: &str, sources: &[PairDataset]) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for s in sources {
        let lang = s.single_lang()?;
        if lang == target_lang {
            return Err(Error::Validation(format!(
                "target language {lang} is also a source"
            )));
        }
        if !seen.insert(lang) {
            return Err(Error::Validation(format!(
                "source language {lang} given twice"
            )));
        }
    }
    Ok(())
}

/// Probes every source with the same target-fitted params and assembles
/// the report. Does not fail when every source is excluded.
pub fn probe_all(
    target_lang: &str,
    params: &WhiteningParams,
    sources: &[PairDataset],
    provider: &dyn EmbeddingProvider,
    cfg: &FilterConfig,
) -> Result<FilterReport> {
    check_sources(target_lang, sources)?;
    let probes = cfg.exec().try_map(sources.len(), |i| {
        probe_with_params(
            params,
            &sources[i],
            provider,
            cfg.delta,
            Execution::Sequential,
        )
    })?;
    let mut kept: Vec<&SourceProbe> = probes.iter().filter(|p| p.kept).collect();
    kept.sort_by(|a, b| {
        b.margin
            .total_cmp(&a.margin)
            .then_with(|| a.lang.cmp(&b.lang))
    });
    Ok(FilterReport {
        target_lang: target_lang.to_string(),
        delta: cfg.delta,
        seed: cfg.seed,
        kept_langs: kept.into_iter().map(|p| p.lang.clone()).collect(),
        probes,
    })
}

/// Full filtering step: fit on target text, probe each source, and keep
/// sources whose margin is at least `-delta`.
pub fn filter_languages<S: AsRef<str>>(
    target_lang: &str,
    target_texts: &[S],
    sources: &[PairDataset],
    provider: &dyn EmbeddingProvider,
    cfg: &FilterConfig,
) -> Result<FilterReport> {
    check_sources(target_lang, sources)?;
    let params = fit_on_texts(target_texts, provider, &cfg.whitening)?;
    let report = probe_all(target_lang, &params, sources, provider, cfg)?;
    if report.kept_langs.is_empty() {
        return Err(Error::EmptyTrainingPool);
    }
    Ok(report)
}

/// Balanced concatenation of the listed languages, in list order.
pub fn training_set_for(
    langs: &[String],
    sources: &[PairDataset],
    cfg: &BalanceConfig,
) -> Result<PairDataset> {
    if langs.is_empty() {
        return Err(Error::EmptyTrainingPool);
    }
    let mut records = Vec::with_capacity(langs.len() * cfg.target_count);
    for lang in langs {
        let src = sources
            .iter()
            .find(|s| s.langs().len() == 1 && s.langs().contains(lang))
            .ok_or_else(|| Error::Validation(format!("no source dataset for {lang}")))?;
        records.extend(balance_language(src.records(), cfg)?);
    }
    Ok(PairDataset::from_records_unchecked(records))
}

/// Training pool for the kept languages of `report`.
pub fn build_training_set(
    report: &FilterReport,
    sources: &[PairDataset],
    cfg: &BalanceConfig,
) -> Result<PairDataset> {
    training_set_for(&report.kept_langs, sources, cfg)
}

/// Unique sentences of all datasets, ordered by content hash so the fit
/// does not depend on how the datasets were concatenated.
pub fn fit_sentences(datasets: &[&PairDataset]) -> Vec<String> {
    let mut keyed: Vec<(String, String)> = datasets
        .iter()
        .flat_map(|d| unique_sentences(d))
        .map(|s| (text_key(&s), s))
        .collect();
    keyed.sort_unstable();
    keyed.dedup_by(|a, b| a.0 == b.0);
    keyed.into_iter().map(|(_, s)| s).collect()
}

#[derive(Debug, Clone, Copy)]
pub struct PredictConfig {
    pub whitening: WhiteningConfig,
    /// Also fit on the target pairs' own sentences.
    pub include_target_in_fit: bool,
}

impl PredictConfig {
    pub fn new(k: usize) -> Self {
        Self {
            whitening: WhiteningConfig::new(k),
            include_target_in_fit: false,
        }
    }
}

/// Fits whitening on the training sentences (optionally joined by the
/// target's) and returns those params.
pub fn fit_for_prediction(
    training: &PairDataset,
    target_pairs: &PairDataset,
    provider: &dyn EmbeddingProvider,
    cfg: &PredictConfig,
) -> Result<WhiteningParams> {
    if training.is_empty() {
        return Err(Error::Empty("training set is empty"));
    }
    let sentences = if cfg.include_target_in_fit {
        fit_sentences(&[training, target_pairs])
    } else {
        fit_sentences(&[training])
    };
    fit_on_texts(&sentences, provider, &cfg.whitening)
}

/// Whitened cosine scores for the target pairs, in dataset order.
pub fn predict_target(
    training: &PairDataset,
    target_pairs: &PairDataset,
    provider: &dyn EmbeddingProvider,
    cfg: &PredictConfig,
) -> Result<Vec<f64>> {
    let params = fit_for_prediction(training, target_pairs, provider, cfg)?;
    score_pairs_with(target_pairs, provider, Some(&params), cfg.whitening.exec)
}

impl FilterReport {
    pub fn probe(&self, lang: &str) -> Option<&SourceProbe> {
        self.probes.iter().find(|p| p.lang == lang)
    }

    pub fn excluded_langs(&self) -> Vec<&str> {
        self.probes
            .iter()
            .filter(|p| !p.kept)
            .map(|p| p.lang.as_str())
            .collect()
    }
}
