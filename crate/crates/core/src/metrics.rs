//! Pair scoring and evaluation: cosine similarity, Spearman rank
//! correlation with average ranks for ties, and fixed-geometry histograms
//! of score distributions.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{unique_sentences, PairDataset};
use crate::embedding::{get_embeddings, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::whitening::WhiteningParams;

pub const HIST_BINS: usize = 20;

/// `a·b / (‖a‖‖b‖)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedCosine);
    }
    Ok((dot / (na * nb).sqrt()).clamp(-1.0, 1.0))
}

/// Fractional ranks starting at 1; tied values share the mean of the
/// positions they occupy.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rho: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation("need at least 2 observations"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Validation("spearman input must be finite".into()));
    }
    pearson(&average_ranks(x), &average_ranks(y)).ok_or(Error::UndefinedCorrelation(
        "constant input has no rank variance",
    ))
}

/// Cosine score for every pair, in dataset order. With `params`, both
/// sentence vectors are whitened first; without, raw vectors are compared.
pub fn score_pairs(
    pairs: &PairDataset,
    provider: &dyn EmbeddingProvider,
    params: Option<&WhiteningParams>,
) -> Result<Vec<f64>> {
    score_pairs_with(pairs, provider, params, Execution::default())
}

pub fn score_pairs_with(
    pairs: &PairDataset,
    provider: &dyn EmbeddingProvider,
    params: Option<&WhiteningParams>,
    exec: Execution,
) -> Result<Vec<f64>> {
    let sentences = unique_sentences(pairs);
    let mut vectors = get_embeddings(provider, &sentences)?;
    if let Some(p) = params {
        vectors = p.apply_with(&vectors, exec)?;
    }
    let row_of: HashMap<&str, usize> = sentences
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let records = pairs.records();
    exec.try_map(records.len(), |i| {
        let r = &records[i];
        let a = vectors.row(row_of[r.sentence_1.as_str()]);
        let b = vectors.row(row_of[r.sentence_2.as_str()]);
        cosine_similarity(a, b).map_err(|e| Error::Pair {
            pair_id: r.pair_id.clone(),
            source: Box::new(e),
        })
    })
}

/// 20 equal bins over `[-1, 1]`, the last one closed on the right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramReport {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub mean: f64,
    pub stddev: f64,
}

impl HistogramReport {
    /// Fraction of scores whose bin lies inside `[lo, hi]`.
    pub fn mass_within(&self, lo: f64, hi: f64) -> f64 {
        let total: u64 = self.counts.iter().sum();
        if total == 0 {
            return 0.0;
        }
        let inside: u64 = self
            .counts
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                self.bin_edges[*i] >= lo - 1e-12 && self.bin_edges[i + 1] <= hi + 1e-12
            })
            .map(|(_, c)| c)
            .sum();
        inside as f64 / total as f64
    }
}

pub fn bin_edges() -> Vec<f64> {
    (0..=HIST_BINS)
        .map(|i| (i as f64 - (HIST_BINS / 2) as f64) / (HIST_BINS / 2) as f64)
        .collect()
}

pub fn histogram(scores: &[f64]) -> HistogramReport {
    let edges = bin_edges();
    let mut counts = vec![0u64; HIST_BINS];
    for &s in scores {
        let s = s.clamp(-1.0, 1.0);
        let mut b = (((s + 1.0) * (HIST_BINS / 2) as f64).floor() as usize).min(HIST_BINS - 1);
        while b > 0 && s < edges[b] {
            b -= 1;
        }
        while b + 1 < HIST_BINS && s >= edges[b + 1] {
            b += 1;
        }
        counts[b] += 1;
    }
    let n = scores.len() as f64;
    let (mean, stddev) = if scores.is_empty() {
        (0.0, 0.0)
    } else {
        let mean = scores.iter().sum::<f64>() / n;
        let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    };
    HistogramReport {
        bin_edges: edges,
        counts,
        mean,
        stddev,
    }
}

/// Scores plus their evaluation, as written to score report files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub n: usize,
    pub spearman: Option<f64>,
    pub scores: Vec<f64>,
    pub histogram: HistogramReport,
}

impl ScoreReport {
    /// Builds a report; Spearman is computed only when gold labels exist.
    pub fn new(scores: Vec<f64>, gold: Option<&[f64]>) -> Result<Self> {
        let spearman = gold.map(|g| spearman(g, &scores)).transpose()?;
        Ok(Self {
            n: scores.len(),
            spearman,
            histogram: histogram(&scores),
            scores,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::PairRecord;
    use crate::embedding::{EmbeddingStore, ToyEncoder};

    /// O(n²) reference: rank = 1 + #less + (#equal − 1)/2.
    fn brute_rank(v: &[f64]) -> Vec<f64> {
        v.iter()
            .map(|a| {
                let less = v.iter().filter(|b| *b < a).count() as f64;
                let eq = v.iter().filter(|b| *b == a).count() as f64;
                1.0 + less + (eq - 1.0) / 2.0
            })
            .collect()
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let expect = 32.0 / (14f64.sqrt() * 77f64.sqrt());
        let got = cosine_similarity(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((got - expect).abs() < 1e-15);
        assert!((got - 0.974632).abs() < 1e-6);
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::UndefinedCosine)
        ));
    }

    #[test]
    fn spearman_examples() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        let x = [1.0, 2.0, 2.0, 4.0];
        let y = [1.0, 3.0, 2.0, 4.0];
        assert_eq!(average_ranks(&x), brute_rank(&x));
        let expect = pearson(&brute_rank(&x), &brute_rank(&y)).unwrap();
        assert!((spearman(&x, &y).unwrap() - expect).abs() < 1e-12);
        // hand value: ranks (1,2.5,2.5,4) vs (1,3,2,4) → 4.5/√(4.5·5) = √0.9
        assert!((expect - 0.9f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn spearman_errors() {
        assert!(matches!(
            spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(spearman(&[1.0], &[1.0]).is_err());
        assert!(spearman(&[1.0, 2.0], &[1.0]).is_err());
        assert!(spearman(&[1.0, f64::NAN], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn histogram_edges() {
        let h = histogram(&[1.0, 1.0, 1.0]);
        assert_eq!(h.counts[19], 3);
        assert_eq!(h.counts.iter().sum::<u64>(), 3);
        let h = histogram(&[-1.0, 1.0]);
        assert_eq!(h.counts[0], 1);
        assert_eq!(h.counts[19], 1);
        assert_eq!(h.bin_edges.len(), 21);
        assert_eq!(h.bin_edges[0], -1.0);
        assert_eq!(h.bin_edges[20], 1.0);
        // 0.9 sits on the left edge of the last bin
        assert_eq!(histogram(&[0.9]).counts[19], 1);
        assert_eq!(histogram(&[-0.95]).counts[0], 1);
    }

    fn pairs(rows: &[(&str, &str)]) -> PairDataset {
        PairDataset::new(
            rows.iter()
                .enumerate()
                .map(|(i, (a, b))| PairRecord {
                    pair_id: format!("p{i}"),
                    lang: "eng".into(),
                    sentence_1: a.to_string(),
                    sentence_2: b.to_string(),
                    label: None,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn identical_sentences_score_one() {
        let enc = ToyEncoder::new(16, 1).unwrap();
        let ds = pairs(&[("same text", "same text"), ("a", "b"), ("c", "d")]);
        let raw = score_pairs(&ds, &enc, None).unwrap();
        assert!((raw[0] - 1.0).abs() < 1e-15);
        let sentences = unique_sentences(&ds);
        let m = get_embeddings(&enc, &sentences).unwrap();
        let p = crate::whitening::fit_whitening(&m, 4).unwrap();
        let white = score_pairs(&ds, &enc, Some(&p)).unwrap();
        assert!((white[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_vector_error_carries_pair_id() {
        let mut store = EmbeddingStore::new(2);
        store.insert("z", "eng", vec![0.0, 0.0]).unwrap();
        store.insert("a", "eng", vec![1.0, 0.0]).unwrap();
        let ds = pairs(&[("a", "a"), ("a", "z")]);
        match score_pairs(&ds, &store, None).unwrap_err() {
            Error::Pair { pair_id, source } => {
                assert_eq!(pair_id, "p1");
                assert!(matches!(*source, Error::UndefinedCosine));
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn identity_whitening_matches_raw() {
        let enc = ToyEncoder::new(8, 3).unwrap();
        let ds = pairs(&[("a", "b"), ("c", "d"), ("e", "a")]);
        let raw = score_pairs(&ds, &enc, None).unwrap();
        let id = WhiteningParams::identity(8).unwrap();
        let white = score_pairs(&ds, &enc, Some(&id)).unwrap();
        for (a, b) in raw.iter().zip(&white) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn report_without_labels_has_null_spearman() {
        let r = ScoreReport::new(vec![0.1, 0.5], None).unwrap();
        let json = serde_json::to_value(&r).unwrap();
        assert!(json["spearman"].is_null());
        assert_eq!(json["n"], 2);
        assert_eq!(json["histogram"]["counts"].as_array().unwrap().len(), 20);
    }
}
