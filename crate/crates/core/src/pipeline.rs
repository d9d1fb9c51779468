//! Run configuration and the file-level commands used by the CLI.
//!
//! Every command reads its inputs, runs deterministically from the config
//! (seeds included) and writes its outputs atomically.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{load_dataset, unique_sentences, write_dataset, BalanceConfig, PairDataset};
use crate::embedding::{EmbeddingProvider, ProviderConfig};
use crate::error::{Error, Result};
use crate::filter::{
    build_training_set, filter_languages, fit_for_prediction, fit_on_texts, fit_sentences,
    FilterConfig, FilterReport, PredictConfig,
};
use crate::metrics::{score_pairs, ScoreReport};
use crate::whitening::{fit_whitening_with, Retain, WhiteningConfig, WhiteningParams, DEFAULT_K};

pub const FILTER_REPORT_FILE: &str = "filter_report.json";
pub const TRAINING_FILE: &str = "training.csv";
pub const PARAMS_FILE: &str = "params.json";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const TARGET_REPORT_FILE: &str = "target_scores.json";

/// Optional default paths, so a config file can describe a whole run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub dataset: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub sources: Vec<PathBuf>,
    pub params: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub provider: ProviderConfig,
    pub k: usize,
    pub retain: Retain,
    pub balance: BalanceConfig,
    pub delta: f64,
    pub include_target_in_fit: bool,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            provider: ProviderConfig::default(),
            k: DEFAULT_K,
            retain: Retain::Largest,
            balance: BalanceConfig::default(),
            delta: 0.0,
            include_target_in_fit: false,
            paths: PathsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        if !self.delta.is_finite() || self.delta < 0.0 {
            return Err(Error::Config(format!(
                "delta must be finite and >= 0, got {}",
                self.delta
            )));
        }
        if self.balance.target_count == 0 {
            return Err(Error::Config("balance.target_count must be >= 1".into()));
        }
        self.provider.validate()
    }

    pub fn whitening(&self) -> WhiteningConfig {
        WhiteningConfig {
            retain: self.retain,
            ..WhiteningConfig::new(self.k)
        }
    }

    pub fn filter(&self) -> FilterConfig {
        FilterConfig {
            whitening: self.whitening(),
            delta: self.delta,
            seed: self.balance.seed,
        }
    }

    pub fn predict(&self) -> PredictConfig {
        PredictConfig {
            whitening: self.whitening(),
            include_target_in_fit: self.include_target_in_fit,
        }
    }

    pub fn build_provider(&self) -> Result<Box<dyn EmbeddingProvider>> {
        self.provider.build()
    }
}

/// Writes `bytes` to `path` through a temp file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("report types serialise");
    out.push(b'\n');
    out
}

fn csv_bytes(ds: &PairDataset) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_dataset(ds, &mut buf)?;
    Ok(buf)
}

/// Loads and merges source files, then splits them per language.
pub fn load_sources(paths: &[PathBuf]) -> Result<Vec<PairDataset>> {
    if paths.is_empty() {
        return Err(Error::Config("no source datasets given".into()));
    }
    let loaded = paths.iter().map(load_dataset).collect::<Result<Vec<_>>>()?;
    Ok(PairDataset::concat(&loaded)?.split_by_lang())
}

#[derive(Debug, Clone, Serialize)]
pub struct FitSummary {
    pub fingerprint: String,
    pub dim: usize,
    pub k: usize,
    pub requested_k: usize,
    pub rank: usize,
    pub fit_count: usize,
}

impl FitSummary {
    pub fn clamped(&self) -> bool {
        self.k < self.requested_k
    }
}

/// Fits whitening on the dataset's unique sentences and writes params JSON.
pub fn cmd_fit(cfg: &RunConfig, dataset: &Path, out: &Path) -> Result<FitSummary> {
    cfg.validate()?;
    let ds = load_dataset(dataset)?;
    let provider = cfg.build_provider()?;
    let sentences = unique_sentences(&ds);
    let m = crate::embedding::get_embeddings(provider.as_ref(), &sentences)?;
    let fit = fit_whitening_with(&m, &cfg.whitening())?;
    write_atomic(out, fit.params.to_json().as_bytes())?;
    Ok(FitSummary {
        fingerprint: fit.params.fingerprint().to_string(),
        dim: fit.params.dim(),
        k: fit.params.k(),
        requested_k: fit.requested_k,
        rank: fit.rank,
        fit_count: fit.params.fit_count(),
    })
}

/// How `cmd_score` obtains its whitening.
#[derive(Debug, Clone)]
pub enum ScoreWhitening {
    /// Raw cosines.
    None,
    /// Params read from a file.
    Params(PathBuf),
    /// Fit on the scored dataset's own sentences.
    SelfFit,
}

/// Scores a dataset and writes the score report JSON.
pub fn cmd_score(
    cfg: &RunConfig,
    dataset: &Path,
    whitening: &ScoreWhitening,
    out: &Path,
) -> Result<ScoreReport> {
    cfg.validate()?;
    let ds = load_dataset(dataset)?;
    let provider = cfg.build_provider()?;
    let params = match whitening {
        ScoreWhitening::None => None,
        ScoreWhitening::Params(p) => Some(WhiteningParams::read(p)?),
        ScoreWhitening::SelfFit => Some(fit_on_texts(
            &fit_sentences(&[&ds]),
            provider.as_ref(),
            &cfg.whitening(),
        )?),
    };
    let scores = score_pairs(&ds, provider.as_ref(), params.as_ref())?;
    let gold = ds.labels();
    let report = ScoreReport::new(scores, gold.as_deref())?;
    write_atomic(out, &json_bytes(&report))?;
    Ok(report)
}

fn load_target(path: &Path) -> Result<(PairDataset, String)> {
    let target = load_dataset(path)?;
    let lang = target.single_lang()?.to_string();
    Ok((target, lang))
}

/// Runs source-language filtering; writes the report and the balanced
/// training CSV of the kept languages.
pub fn cmd_filter(
    cfg: &RunConfig,
    target: &Path,
    sources: &[PathBuf],
    report_out: &Path,
    training_out: &Path,
) -> Result<FilterReport> {
    cfg.validate()?;
    let (target, target_lang) = load_target(target)?;
    let sources = load_sources(sources)?;
    let provider = cfg.build_provider()?;
    let texts = unique_sentences(&target);
    let report = filter_languages(
        &target_lang,
        &texts,
        &sources,
        provider.as_ref(),
        &cfg.filter(),
    )?;
    let training = build_training_set(&report, &sources, &cfg.balance)?;
    write_atomic(report_out, &json_bytes(&report))?;
    write_atomic(training_out, &csv_bytes(&training)?)?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct PipelineSummary {
    pub filter: FilterReport,
    pub training_pairs: usize,
    pub params_fingerprint: String,
    pub scores: ScoreReport,
}

/// Filter → balance → fit → predict, writing every intermediate artifact
/// into `out_dir`.
pub fn cmd_pipeline(
    cfg: &RunConfig,
    target: &Path,
    sources: &[PathBuf],
    out_dir: &Path,
) -> Result<PipelineSummary> {
    cfg.validate()?;
    let (target, target_lang) = load_target(target)?;
    let sources = load_sources(sources)?;
    let provider = cfg.build_provider()?;
    let provider = provider.as_ref();

    let texts = unique_sentences(&target);
    log::info!(
        "probing {} source languages against {target_lang} ({} sentences)",
        sources.len(),
        texts.len()
    );
    let report = filter_languages(&target_lang, &texts, &sources, provider, &cfg.filter())?;
    log::info!("kept {}", report.kept_langs.join(", "));
    let training = build_training_set(&report, &sources, &cfg.balance)?;
    let params = fit_for_prediction(&training, &target, provider, &cfg.predict())?;
    log::info!(
        "fit on {} sentences from {} training pairs, k {}",
        params.fit_count(),
        training.len(),
        params.k()
    );
    let scores = score_pairs(&target, provider, Some(&params))?;
    let gold = target.labels();
    let score_report = ScoreReport::new(scores, gold.as_deref())?;

    let mut predictions = String::from("pair_id,score\n");
    for (r, s) in target.records().iter().zip(&score_report.scores) {
        let _ = writeln!(predictions, "{},{}", csv_field(&r.pair_id), s);
    }

    write_atomic(&out_dir.join(FILTER_REPORT_FILE), &json_bytes(&report))?;
    write_atomic(&out_dir.join(TRAINING_FILE), &csv_bytes(&training)?)?;
    write_atomic(&out_dir.join(PARAMS_FILE), params.to_json().as_bytes())?;
    write_atomic(
        &out_dir.join(TARGET_REPORT_FILE),
        &json_bytes(&score_report),
    )?;
    write_atomic(&out_dir.join(PREDICTIONS_FILE), predictions.as_bytes())?;

    Ok(PipelineSummary {
        filter: report,
        training_pairs: training.len(),
        params_fingerprint: params.fingerprint().to_string(),
        scores: score_report,
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Converts a score report's histogram to CSV rows `bin_lo,bin_hi,count`.
pub fn cmd_export_hist(report: &Path, out: &Path) -> Result<String> {
    let text = std::fs::read_to_string(report).map_err(|e| Error::io(report, e))?;
    let report: ScoreReport =
        serde_json::from_str(&text).map_err(|e| Error::Validation(format!("score report: {e}")))?;
    let h = &report.histogram;
    if h.bin_edges.len() != h.counts.len() + 1 {
        return Err(Error::Validation(
            "histogram edges and counts disagree".into(),
        ));
    }
    let mut csv = String::from("bin_lo,bin_hi,count\n");
    for (i, c) in h.counts.iter().enumerate() {
        let _ = writeln!(csv, "{},{},{}", h.bin_edges[i], h.bin_edges[i + 1], c);
    }
    write_atomic(out, csv.as_bytes())?;
    Ok(csv)
}

/// Plain-text table of probe results.
pub fn render_filter_table(report: &FilterReport) -> String {
    let mut s = format!(
        "target {}  delta {}\n{:<8} {:>12} {:>12} {:>10}  verdict\n",
        report.target_lang, report.delta, "lang", "rho_raw", "rho_white", "margin"
    );
    for p in &report.probes {
        let _ = writeln!(
            s,
            "{:<8} {:>12.4} {:>12.4} {:>+10.4}  {}",
            p.lang,
            p.rho_baseline,
            p.rho_whitened,
            p.margin,
            if p.kept { "keep" } else { "exclude" }
        );
    }
    let _ = writeln!(s, "kept: {}", report.kept_langs.join(", "));
    s
}

/// Plain-text summary of a score report.
pub fn render_score_summary(report: &ScoreReport) -> String {
    let rho = report
        .spearman
        .map_or_else(|| "n/a".to_string(), |r| format!("{r:.4}"));
    let h = &report.histogram;
    let mut s = format!(
        "pairs {}  spearman {}  mean cos {:.4}  sd {:.4}\n",
        report.n, rho, h.mean, h.stddev
    );
    let max = h.counts.iter().copied().max().unwrap_or(0).max(1);
    for (i, c) in h.counts.iter().enumerate() {
        let bar = "#".repeat((c * 40 / max) as usize);
        let _ = writeln!(
            s,
            "[{:>5.2},{:>5.2}) {:>7} {}",
            h.bin_edges[i],
            h.bin_edges[i + 1],
            c,
            bar
        );
    }
    s
}
