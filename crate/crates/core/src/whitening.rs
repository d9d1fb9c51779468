//! Whitening of sentence-embedding sets.
//!
//! Fitting estimates the mean `mu` and population covariance `Σ` of a set of
//! vectors, decomposes `Σ = U Λ Uᵀ`, and keeps `W = U Λ^{-1/2}` restricted to
//! `k` columns. Applying maps each row `x` to `(x − mu) W`, which gives the
//! fitting set zero mean and identity covariance on the retained block.
//!
//! Columns of `W` follow descending eigenvalue order, and each column is
//! sign-normalised so that its largest-magnitude entry is positive. Together
//! with a fixed summation order this makes fits bitwise reproducible.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::matrix::EmbeddingMatrix;

/// Retained dimension used when nothing else is configured.
pub const DEFAULT_K: usize = 256;

/// Eigenvalues below `RANK_TOL * λ_max` count as numerically zero.
pub const RANK_TOL: f64 = 1e-12;

/// Which end of the eigen-spectrum the top-k truncation keeps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Retain {
    #[default]
    Largest,
    Smallest,
}

#[derive(Debug, Clone, Copy)]
pub struct WhiteningConfig {
    pub k: usize,
    pub retain: Retain,
    pub exec: Execution,
}

impl WhiteningConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            retain: Retain::Largest,
            exec: Execution::default(),
        }
    }
}

impl Default for WhiteningConfig {
    fn default() -> Self {
        Self::new(DEFAULT_K)
    }
}

/// Fitted whitening transform.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningParams {
    dim: usize,
    k: usize,
    fit_count: usize,
    mu: Vec<f64>,
    /// `dim × k`, row-major.
    w: Vec<f64>,
    fingerprint: String,
}

/// Everything a fit produced, including diagnostics that are not persisted.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub params: WhiteningParams,
    /// Covariance eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    pub rank: usize,
    pub requested_k: usize,
}

impl FitOutcome {
    pub fn was_clamped(&self) -> bool {
        self.params.k < self.requested_k
    }
}

/// Column means of `s`.
pub fn compute_mean(s: &EmbeddingMatrix) -> Result<Vec<f64>> {
    let n = s.nrows();
    if n == 0 {
        return Err(Error::Empty("mean of an empty matrix"));
    }
    let mut sum = vec![0.0; s.ncols()];
    for i in 0..n {
        for (acc, v) in sum.iter_mut().zip(s.row(i)) {
            *acc += v;
        }
    }
    let inv = n as f64;
    Ok(sum.into_iter().map(|v| v / inv).collect())
}

/// Population covariance `(1/n) Σ (s_i − mu)ᵀ (s_i − mu)`, row-major `d × d`.
pub fn compute_covariance(s: &EmbeddingMatrix, mu: &[f64]) -> Result<Vec<f64>> {
    compute_covariance_with(s, mu, Execution::default())
}

pub fn compute_covariance_with(
    s: &EmbeddingMatrix,
    mu: &[f64],
    exec: Execution,
) -> Result<Vec<f64>> {
    let (n, d) = (s.nrows(), s.ncols());
    if n == 0 {
        return Err(Error::Empty("covariance of an empty matrix"));
    }
    if mu.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: mu.len(),
        });
    }

    let mut centered = s.as_slice().to_vec();
    for row in centered.chunks_mut(d) {
        for (v, m) in row.iter_mut().zip(mu) {
            *v -= m;
        }
    }

    // Each output row i accumulates over samples in order, so every entry is
    // summed identically under either execution strategy.
    let mut cov = vec![0.0; d * d];
    let nf = n as f64;
    exec.for_each_chunk(&mut cov, d, |i, out| {
        for row in centered.chunks(d) {
            let a = row[i];
            if a == 0.0 {
                continue;
            }
            for (o, b) in out[i..].iter_mut().zip(&row[i..]) {
                *o += a * b;
            }
        }
        for o in out[i..].iter_mut() {
            *o /= nf;
        }
    });
    for i in 0..d {
        for j in 0..i {
            cov[i * d + j] = cov[j * d + i];
        }
    }
    Ok(cov)
}

/// Fits a whitening transform keeping `k_config` directions.
pub fn fit_whitening(s: &EmbeddingMatrix, k_config: usize) -> Result<WhiteningParams> {
    Ok(fit_whitening_with(s, &WhiteningConfig::new(k_config))?.params)
}

pub fn fit_whitening_with(s: &EmbeddingMatrix, cfg: &WhiteningConfig) -> Result<FitOutcome> {
    let (n, d) = (s.nrows(), s.ncols());
    if cfg.k == 0 {
        return Err(Error::Validation("k must be >= 1".into()));
    }
    if n < 2 {
        return Err(Error::DegenerateFit(format!(
            "need at least 2 vectors, got {n}"
        )));
    }
    if d == 0 {
        return Err(Error::DegenerateFit("zero-dimensional vectors".into()));
    }

    let mu = compute_mean(s)?;
    let cov = compute_covariance_with(s, &mu, cfg.exec)?;

    let eig = SymmetricEigen::new(DMatrix::from_row_slice(d, d, &cov));
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();

    let lambda_max = eigenvalues[0];
    if !lambda_max.is_finite() || lambda_max <= 0.0 {
        return Err(Error::DegenerateFit("covariance is all zero".into()));
    }
    let cutoff = RANK_TOL * lambda_max;
    let rank = eigenvalues.iter().take_while(|&&l| l >= cutoff).count();
    let k = cfg.k.min(rank);
    if k < cfg.k {
        log::warn!(
            "requested k = {} exceeds numerical rank {rank}; keeping {k} directions",
            cfg.k
        );
    }

    let picked = match cfg.retain {
        Retain::Largest => 0..k,
        Retain::Smallest => rank - k..rank,
    };

    let mut w = vec![0.0; d * k];
    for (col, pos) in picked.enumerate() {
        let src = order[pos];
        let vec = eig.eigenvectors.column(src);
        let (mut best, mut best_abs) = (0usize, -1.0f64);
        for (j, v) in vec.iter().enumerate() {
            if v.abs() > best_abs {
                best = j;
                best_abs = v.abs();
            }
        }
        let sign = if vec[best] < 0.0 { -1.0 } else { 1.0 };
        let scale = sign / eigenvalues[pos].sqrt();
        for j in 0..d {
            w[j * k + col] = vec[j] * scale;
        }
    }

    let params = WhiteningParams::from_parts(d, k, n, mu, w)?;
    Ok(FitOutcome {
        params,
        eigenvalues,
        rank,
        requested_k: cfg.k,
    })
}

/// Maps every row `x` of the matrix to `(x − mu) W`.
pub fn apply_whitening(params: &WhiteningParams, x: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    params.apply_with(x, Execution::default())
}

impl WhiteningParams {
    /// Assembles params from raw parts and computes the fingerprint.
    pub fn from_parts(
        dim: usize,
        k: usize,
        fit_count: usize,
        mu: Vec<f64>,
        w: Vec<f64>,
    ) -> Result<Self> {
        if k == 0 || k > dim {
            return Err(Error::Validation(format!("k = {k} must lie in 1..={dim}")));
        }
        if mu.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: mu.len(),
            });
        }
        if w.len() != dim * k {
            return Err(Error::DimensionMismatch {
                expected: dim * k,
                actual: w.len(),
            });
        }
        if mu.iter().chain(&w).any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite whitening parameter".into()));
        }
        let fingerprint = fingerprint(dim, k, fit_count, &mu, &w);
        Ok(Self {
            dim,
            k,
            fit_count,
            mu,
            w,
            fingerprint,
        })
    }

    /// `mu = 0`, `W = I`: leaves vectors untouched.
    pub fn identity(dim: usize) -> Result<Self> {
        let mut w = vec![0.0; dim * dim];
        for i in 0..dim {
            w[i * dim + i] = 1.0;
        }
        Self::from_parts(dim, dim, 0, vec![0.0; dim], w)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn fit_count(&self) -> usize {
        self.fit_count
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// Row-major `dim × k` transform.
    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn w_entry(&self, row: usize, col: usize) -> f64 {
        self.w[row * self.k + col]
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn apply(&self, x: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        self.apply_with(x, Execution::default())
    }

    pub fn apply_with(&self, x: &EmbeddingMatrix, exec: Execution) -> Result<EmbeddingMatrix> {
        if x.ncols() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: x.ncols(),
            });
        }
        let (n, k) = (x.nrows(), self.k);
        let mut out = vec![0.0; n * k];
        exec.for_each_chunk(&mut out, k, |i, dst| self.apply_row(x.row(i), dst));
        EmbeddingMatrix::from_shape_vec(n, k, out)
    }

    /// Whitens a single vector into `out` (length `k`).
    pub fn apply_row(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (j, (xv, m)) in x.iter().zip(&self.mu).enumerate() {
            let c = xv - m;
            if c == 0.0 {
                continue;
            }
            let wrow = &self.w[j * self.k..(j + 1) * self.k];
            for (o, wv) in out.iter_mut().zip(wrow) {
                *o += c * wv;
            }
        }
    }

    /// Serialises to the params JSON document. Floats carry 17 significant
    /// digits so a read gives back identical bits.
    pub fn to_json(&self) -> String {
        let mut s = String::with_capacity(32 * (self.dim * (self.k + 1)) + 128);
        s.push_str(&format!(
            "{{\"dim\":{},\"k\":{},\"fit_count\":{},\"mu\":",
            self.dim, self.k, self.fit_count
        ));
        push_f64_array(&mut s, &self.mu);
        s.push_str(",\"w\":[");
        for (j, row) in self.w.chunks(self.k).enumerate() {
            if j > 0 {
                s.push(',');
            }
            push_f64_array(&mut s, row);
        }
        s.push_str(&format!("],\"fingerprint\":\"{}\"}}\n", self.fingerprint));
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ParamsFile = serde_json::from_str(text)
            .map_err(|e| Error::Validation(format!("params file: {e}")))?;
        if file.w.len() != file.dim {
            return Err(Error::DimensionMismatch {
                expected: file.dim,
                actual: file.w.len(),
            });
        }
        let mut w = Vec::with_capacity(file.dim * file.k);
        for row in &file.w {
            if row.len() != file.k {
                return Err(Error::DimensionMismatch {
                    expected: file.k,
                    actual: row.len(),
                });
            }
            w.extend_from_slice(row);
        }
        let params = Self::from_parts(file.dim, file.k, file.fit_count, file.mu, w)?;
        if params.fingerprint != file.fingerprint {
            return Err(Error::Validation(format!(
                "params fingerprint mismatch: file says {}, content hashes to {}",
                file.fingerprint, params.fingerprint
            )));
        }
        Ok(params)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Deserialize)]
struct ParamsFile {
    dim: usize,
    k: usize,
    fit_count: usize,
    mu: Vec<f64>,
    w: Vec<Vec<f64>>,
    fingerprint: String,
}

/// Formats a finite float with 17 significant digits.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn push_f64_array(s: &mut String, values: &[f64]) {
    s.push('[');
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str(&fmt_f64(*v));
    }
    s.push(']');
}

fn fingerprint(dim: usize, k: usize, fit_count: usize, mu: &[f64], w: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in [dim, k, fit_count] {
        h.update((v as u64).to_le_bytes());
    }
    for v in mu.iter().chain(w) {
        h.update(v.to_bits().to_le_bytes());
    }
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn m(rows: &[&[f64]]) -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(rows, rows[0].len()).unwrap()
    }

    fn four_point() -> EmbeddingMatrix {
        m(&[&[1.0, 0.0], &[-1.0, 0.0], &[0.0, 2.0], &[0.0, -2.0]])
    }

    fn gaussian(n: usize, d: usize, seed: u64) -> EmbeddingMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * d)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        EmbeddingMatrix::from_shape_vec(n, d, data).unwrap()
    }

    #[test]
    fn mean_examples() {
        assert_eq!(
            compute_mean(&m(&[&[1.0, 2.0], &[3.0, 4.0]])).unwrap(),
            [2.0, 3.0]
        );
        assert_eq!(compute_mean(&m(&[&[7.5, -1.0]])).unwrap(), [7.5, -1.0]);
        assert_eq!(
            compute_mean(&m(&[&[1.0, 0.0], &[-1.0, 0.0]])).unwrap(),
            [0.0, 0.0]
        );
        assert!(compute_mean(&EmbeddingMatrix::empty(3)).is_err());
    }

    #[test]
    fn covariance_examples() {
        let c = compute_covariance(&m(&[&[1.0, 0.0], &[-1.0, 0.0]]), &[0.0, 0.0]).unwrap();
        assert_eq!(c, [1.0, 0.0, 0.0, 0.0]);

        let same = m(&[&[3.0, 1.0], &[3.0, 1.0], &[3.0, 1.0]]);
        let c = compute_covariance(&same, &[3.0, 1.0]).unwrap();
        assert_eq!(c, [0.0; 4]);

        let c = compute_covariance(&four_point(), &[0.0, 0.0]).unwrap();
        assert_eq!(c, [0.5, 0.0, 0.0, 2.0]);

        assert!(matches!(
            compute_covariance(&four_point(), &[0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn hand_svd_fixture() {
        let p = fit_whitening(&four_point(), 2).unwrap();
        assert_eq!(p.mu(), [0.0, 0.0]);
        let expect = [0.0, 2f64.sqrt(), 1.0 / 2f64.sqrt(), 0.0];
        for (a, b) in p.w().iter().zip(expect) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        let y = p.apply(&m(&[&[1.0, 0.0]])).unwrap();
        assert_abs_diff_eq!(y.row(0)[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(y.row(0)[1], 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn isotropic_input_gives_orthogonal_w() {
        // Rows ±e_i scaled so the empirical covariance is exactly I.
        let s = m(&[
            &[2f64.sqrt(), 0.0],
            &[-(2f64.sqrt()), 0.0],
            &[0.0, 2f64.sqrt()],
            &[0.0, -(2f64.sqrt())],
        ]);
        let p = fit_whitening(&s, 2).unwrap();
        // WᵀW = I
        for a in 0..2 {
            for b in 0..2 {
                let dot: f64 = (0..2).map(|j| p.w_entry(j, a) * p.w_entry(j, b)).sum();
                assert_abs_diff_eq!(dot, if a == b { 1.0 } else { 0.0 }, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn gaussian_moments_after_whitening() {
        let s = gaussian(500, 32, 3);
        let p = fit_whitening(&s, 32).unwrap();
        let t = p.apply(&s).unwrap();
        let mu = compute_mean(&t).unwrap();
        assert!(mu.iter().all(|v| v.abs() < 1e-8));
        let cov = compute_covariance(&t, &mu).unwrap();
        for i in 0..32 {
            for j in 0..32 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((cov[i * 32 + j] - target).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn row_at_mean_maps_to_zero() {
        let s = gaussian(50, 4, 1);
        let p = fit_whitening(&s, 4).unwrap();
        let at_mu = EmbeddingMatrix::from_rows(&[p.mu().to_vec()], 4).unwrap();
        let y = p.apply(&at_mu).unwrap();
        assert!(y.row(0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rank_deficient_fit_clamps_k() {
        // 10 points in 20 dimensions span at most 9 centered directions.
        let s = gaussian(10, 20, 5);
        let out = fit_whitening_with(&s, &WhiteningConfig::new(16)).unwrap();
        assert_eq!(out.rank, 9);
        assert_eq!(out.params.k(), 9);
        assert!(out.was_clamped());
    }

    #[test]
    fn degenerate_inputs() {
        let same = m(&[&[1.0, 1.0], &[1.0, 1.0]]);
        assert!(matches!(
            fit_whitening(&same, 2),
            Err(Error::DegenerateFit(_))
        ));
        assert!(matches!(
            fit_whitening(&m(&[&[1.0, 2.0]]), 2),
            Err(Error::DegenerateFit(_))
        ));
        assert!(fit_whitening(&four_point(), 0).is_err());
    }

    #[test]
    fn smallest_retention_picks_low_variance_direction() {
        let cfg = WhiteningConfig {
            retain: Retain::Smallest,
            ..WhiteningConfig::new(1)
        };
        let p = fit_whitening_with(&four_point(), &cfg).unwrap().params;
        assert_abs_diff_eq!(p.w_entry(0, 0), 2f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(p.w_entry(1, 0), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn apply_rejects_wrong_width() {
        let p = fit_whitening(&four_point(), 2).unwrap();
        assert!(matches!(
            p.apply(&m(&[&[1.0, 2.0, 3.0]])),
            Err(Error::DimensionMismatch {
                expected: 2,
                actual: 3
            })
        ));
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let p = fit_whitening(&gaussian(40, 6, 11), 4).unwrap();
        let back = WhiteningParams::from_json(&p.to_json()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn tampered_json_fails_fingerprint() {
        let p = fit_whitening(&four_point(), 2).unwrap();
        let json = p
            .to_json()
            .replacen("\"fit_count\":4", "\"fit_count\":5", 1);
        assert!(WhiteningParams::from_json(&json).is_err());
    }

    #[test]
    fn sequential_and_default_execution_agree_bitwise() {
        let s = gaussian(120, 16, 8);
        let seq = WhiteningConfig {
            exec: Execution::Sequential,
            ..WhiteningConfig::new(16)
        };
        let a = fit_whitening_with(&s, &seq).unwrap().params;
        let b = fit_whitening(&s, 16).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_eq!(
            a.apply_with(&s, Execution::Sequential).unwrap(),
            b.apply(&s).unwrap()
        );
    }
}
