//! Closed-form kernel ridge regression, validation-driven grid search,
//! error metrics, and the trivial constant baselines.
//!
//! A model is fit by solving (K + alpha*I) c = y with a Cholesky
//! factorization; prediction is the inner product of a kernel row with
//! the dual coefficients.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RidgeError {
    #[error("kernel matrix of {len} values is not {n} x {n}")]
    NotSquare { len: usize, n: usize },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("regularization strength must be positive, got {0}")]
    AlphaNonPositive(f64),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("factorization of K + {alpha}*I failed; try a larger alpha")]
    Factorization { alpha: f64 },
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("metric inputs must be non-empty")]
    Empty,
    #[error("prediction and target lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
}

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("the average baseline needs a non-empty training set")]
    EmptyTrainingSet,
}

/// Dual-form ridge model: prediction is <k_cross, dual_coeffs>.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub dual_coeffs: Vec<f64>,
    pub alpha: f64,
    pub train_row_ids: Vec<String>,
}

/// Dense symmetric positive-definite solve via Cholesky factorization.
/// Returns None when a pivot is not strictly positive.
fn cholesky_solve(a: &[f64], n: usize, y: &[f64]) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= l[j * n + k] * l[j * n + k];
        }
        if !diag.is_finite() || diag <= 0.0 {
            return None;
        }
        let dj = diag.sqrt();
        l[j * n + j] = dj;
        for i in (j + 1)..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = v / dj;
        }
    }
    let mut z = vec![0.0; n];
    for i in 0..n {
        let mut v = y[i];
        for k in 0..i {
            v -= l[i * n + k] * z[k];
        }
        z[i] = v / l[i * n + i];
    }
    let mut c = vec![0.0; n];
    for i in (0..n).rev() {
        let mut v = z[i];
        for k in (i + 1)..n {
            v -= l[k * n + i] * c[k];
        }
        c[i] = v / l[i * n + i];
    }
    Some(c)
}

const RESIDUAL_TOLERANCE: f64 = 1e-6;

fn solve_with(k_train: &[f64], n: usize, y: &[f64], alpha: f64) -> Option<Vec<f64>> {
    let mut a = k_train.to_vec();
    for i in 0..n {
        a[i * n + i] += alpha;
    }
    let c = cholesky_solve(&a, n, y)?;
    // Enforce the solve contract ||(K + alpha I) c - y|| <= 1e-6 ||y||.
    let mut residual2 = 0.0;
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            acc += a[i * n + j] * c[j];
        }
        residual2 += (acc - y[i]) * (acc - y[i]);
    }
    let y_norm2: f64 = y.iter().map(|v| v * v).sum();
    if residual2.sqrt() <= RESIDUAL_TOLERANCE * y_norm2.sqrt().max(f64::MIN_POSITIVE) {
        Some(c)
    } else {
        None
    }
}

/// Fits dual coefficients by solving (K + alpha*I) c = y. On a failed
/// factorization, retries once with alpha lifted to 1e-8 * trace(K)/n.
pub fn ridge_fit(
    k_train: &[f64],
    n: usize,
    y: &[f64],
    alpha: f64,
    train_row_ids: Vec<String>,
) -> Result<RidgeModel, RidgeError> {
    if n == 0 {
        return Err(RidgeError::EmptyTrainingSet);
    }
    if k_train.len() != n * n {
        return Err(RidgeError::NotSquare {
            len: k_train.len(),
            n,
        });
    }
    if y.len() != n {
        return Err(RidgeError::LengthMismatch {
            expected: n,
            got: y.len(),
        });
    }
    if train_row_ids.len() != n {
        return Err(RidgeError::LengthMismatch {
            expected: n,
            got: train_row_ids.len(),
        });
    }
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(RidgeError::AlphaNonPositive(alpha));
    }
    if let Some(c) = solve_with(k_train, n, y, alpha) {
        return Ok(RidgeModel {
            dual_coeffs: c,
            alpha,
            train_row_ids,
        });
    }
    let trace: f64 = (0..n).map(|i| k_train[i * n + i]).sum();
    let lifted = alpha.max(1e-8 * trace / n as f64);
    if lifted > alpha {
        if let Some(c) = solve_with(k_train, n, y, lifted) {
            return Ok(RidgeModel {
                dual_coeffs: c,
                alpha: lifted,
                train_row_ids,
            });
        }
    }
    Err(RidgeError::Factorization { alpha })
}

/// Predicts one value from the kernel row between a query item and the
/// training rows. Negative outputs are not clipped.
pub fn ridge_predict(model: &RidgeModel, k_cross: &[f64]) -> Result<f64, RidgeError> {
    if k_cross.len() != model.dual_coeffs.len() {
        return Err(RidgeError::LengthMismatch {
            expected: model.dual_coeffs.len(),
            got: k_cross.len(),
        });
    }
    Ok(k_cross
        .iter()
        .zip(&model.dual_coeffs)
        .map(|(k, c)| k * c)
        .sum())
}

pub fn ridge_predict_batch(model: &RidgeModel, rows: &[Vec<f64>]) -> Result<Vec<f64>, RidgeError> {
    rows.iter().map(|r| ridge_predict(model, r)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    pub mae: f64,
}

/// Root mean squared error and mean absolute error.
pub fn metrics(y_hat: &[f64], y: &[f64]) -> Result<Metrics, MetricsError> {
    if y_hat.len() != y.len() {
        return Err(MetricsError::LengthMismatch {
            left: y_hat.len(),
            right: y.len(),
        });
    }
    if y.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = y.len() as f64;
    let mut sq = 0.0;
    let mut abs = 0.0;
    for (a, b) in y_hat.iter().zip(y) {
        let d = a - b;
        sq += d * d;
        abs += d.abs();
    }
    Ok(Metrics {
        rmse: (sq / n).sqrt(),
        mae: abs / n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Zero,
    Avg,
}

/// The constant predictor of a trivial baseline: 0, or the training mean.
pub fn baseline_predict(kind: BaselineKind, train_y: &[f64]) -> Result<f64, BaselineError> {
    match kind {
        BaselineKind::Zero => Ok(0.0),
        BaselineKind::Avg => {
            if train_y.is_empty() {
                Err(BaselineError::EmptyTrainingSet)
            } else {
                Ok(train_y.iter().sum::<f64>() / train_y.len() as f64)
            }
        }
    }
}

/// One point of the trick grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum TrickConfig {
    Linear,
    Poly { power: u32, radix: f64 },
    Rbf { sigma2: f64 },
}

impl TrickConfig {
    pub fn family(&self) -> &'static str {
        match self {
            TrickConfig::Linear => "linear",
            TrickConfig::Poly { .. } => "poly",
            TrickConfig::Rbf { .. } => "rbf",
        }
    }

    /// The tuned parameter, if the family has one.
    pub fn param(&self) -> Option<f64> {
        match self {
            TrickConfig::Linear => None,
            TrickConfig::Poly { radix, .. } => Some(*radix),
            TrickConfig::Rbf { sigma2 } => Some(*sigma2),
        }
    }
}

impl fmt::Display for TrickConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrickConfig::Linear => f.write_str("linear"),
            TrickConfig::Poly { power, radix } => write!(f, "poly(p={power}, r={radix})"),
            TrickConfig::Rbf { sigma2 } => write!(f, "rbf(2s2={sigma2})"),
        }
    }
}

/// Cell outcome status, mirroring the failure-tolerant result tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    Oom,
    Nan,
}

impl fmt::Display for CellStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellStatus::Ok => f.write_str("ok"),
            CellStatus::Oom => f.write_str("oom"),
            CellStatus::Nan => f.write_str("nan"),
        }
    }
}

/// Why a trick's designs could not be built.
#[derive(Debug, Clone)]
pub enum BuildFailure {
    Oom(String),
    Nan(String),
}

impl BuildFailure {
    fn status(&self) -> CellStatus {
        match self {
            BuildFailure::Oom(_) => CellStatus::Oom,
            BuildFailure::Nan(_) => CellStatus::Nan,
        }
    }

    fn detail(&self) -> &str {
        match self {
            BuildFailure::Oom(d) | BuildFailure::Nan(d) => d,
        }
    }
}

/// Kernel designs of one pattern under one trick: the training kernel
/// matrix and the cross-kernel rows of the validation items.
#[derive(Debug, Clone)]
pub struct PatternDesigns {
    pub n_train: usize,
    pub k_train: Vec<f64>,
    pub train_row_ids: Vec<String>,
    pub valid_rows: Vec<Vec<f64>>,
}

/// Per-configuration grid search record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigOutcome {
    pub trick: TrickConfig,
    pub alpha: f64,
    pub status: CellStatus,
    pub valid_mse: Option<f64>,
    pub detail: Option<String>,
}

#[derive(Debug)]
pub struct GridSearchResult {
    pub trick: TrickConfig,
    pub alpha: f64,
    pub model: RidgeModel,
    pub valid_mse: f64,
    pub outcomes: Vec<ConfigOutcome>,
}

#[derive(Debug, Error)]
pub enum GridSearchError {
    #[error("all {} grid configurations failed", .outcomes.len())]
    Exhausted { outcomes: Vec<ConfigOutcome> },
    #[error("designs are inconsistent with the labels: {0}")]
    Design(String),
}

/// Selects (trick, alpha) by validation mean squared error, fitting on
/// the training designs the builder provides per trick. Ties keep the
/// first configuration in grid order; configurations with non-finite
/// fits or predictions are recorded and skipped.
pub fn grid_search(
    builder: &mut dyn FnMut(&TrickConfig) -> Result<PatternDesigns, BuildFailure>,
    train_y: &[f64],
    valid_y: &[f64],
    tricks: &[TrickConfig],
    alphas: &[f64],
) -> Result<GridSearchResult, GridSearchError> {
    let mut outcomes = Vec::with_capacity(tricks.len() * alphas.len());
    let mut best: Option<(f64, TrickConfig, f64, RidgeModel)> = None;
    for &trick in tricks {
        let designs = match builder(&trick) {
            Ok(d) => d,
            Err(failure) => {
                for &alpha in alphas {
                    outcomes.push(ConfigOutcome {
                        trick,
                        alpha,
                        status: failure.status(),
                        valid_mse: None,
                        detail: Some(failure.detail().to_string()),
                    });
                }
                continue;
            }
        };
        if designs.n_train != train_y.len() || designs.valid_rows.len() != valid_y.len() {
            return Err(GridSearchError::Design(format!(
                "designs provide {} train rows and {} valid rows for {} / {} labels",
                designs.n_train,
                designs.valid_rows.len(),
                train_y.len(),
                valid_y.len()
            )));
        }
        let finite = designs.k_train.iter().all(|v| v.is_finite())
            && designs
                .valid_rows
                .iter()
                .all(|r| r.iter().all(|v| v.is_finite()));
        for &alpha in alphas {
            if !finite {
                outcomes.push(ConfigOutcome {
                    trick,
                    alpha,
                    status: CellStatus::Nan,
                    valid_mse: None,
                    detail: Some("non-finite kernel values".to_string()),
                });
                continue;
            }
            let fit = ridge_fit(
                &designs.k_train,
                designs.n_train,
                train_y,
                alpha,
                designs.train_row_ids.clone(),
            );
            let model = match fit {
                Ok(m) => m,
                Err(e) => {
                    outcomes.push(ConfigOutcome {
                        trick,
                        alpha,
                        status: CellStatus::Nan,
                        valid_mse: None,
                        detail: Some(e.to_string()),
                    });
                    continue;
                }
            };
            let predictions = ridge_predict_batch(&model, &designs.valid_rows)
                .expect("row lengths checked by design");
            if predictions.iter().any(|p| !p.is_finite()) {
                outcomes.push(ConfigOutcome {
                    trick,
                    alpha,
                    status: CellStatus::Nan,
                    valid_mse: None,
                    detail: Some("non-finite validation prediction".to_string()),
                });
                continue;
            }
            let mse = predictions
                .iter()
                .zip(valid_y)
                .map(|(p, y)| (p - y) * (p - y))
                .sum::<f64>()
                / valid_y.len().max(1) as f64;
            outcomes.push(ConfigOutcome {
                trick,
                alpha,
                status: CellStatus::Ok,
                valid_mse: Some(mse),
                detail: None,
            });
            let improves = match &best {
                None => true,
                Some((best_mse, ..)) => mse < *best_mse,
            };
            if improves {
                best = Some((mse, trick, alpha, model));
            }
        }
    }
    match best {
        Some((valid_mse, trick, alpha, model)) => Ok(GridSearchResult {
            trick,
            alpha,
            model,
            valid_mse,
            outcomes,
        }),
        None => Err(GridSearchError::Exhausted { outcomes }),
    }
}

/// The hyperparameter ladders searched per trick family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRanges {
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_radixes")]
    pub radixes: Vec<f64>,
    #[serde(default = "default_sigmas")]
    pub sigmas: Vec<f64>,
    #[serde(default = "default_poly_power")]
    pub poly_power: u32,
}

impl Default for GridRanges {
    fn default() -> Self {
        GridRanges {
            alphas: default_alphas(),
            radixes: default_radixes(),
            sigmas: default_sigmas(),
            poly_power: default_poly_power(),
        }
    }
}

/// alpha in {1e-4, ..., 1e2}, decade steps.
pub fn default_alphas() -> Vec<f64> {
    (-4..=2).map(|e| 10f64.powi(e)).collect()
}

/// radix in {2e-5, 2e-4, ..., 2e-1, 1}.
pub fn default_radixes() -> Vec<f64> {
    let mut v: Vec<f64> = (-5..=-1).map(|e| 2.0 * 10f64.powi(e)).collect();
    v.push(1.0);
    v
}

/// 2*sigma^2 in {1e-5, ..., 1e5}, decade steps.
pub fn default_sigmas() -> Vec<f64> {
    (-5..=5).map(|e| 10f64.powi(e)).collect()
}

fn default_poly_power() -> u32 {
    3
}

impl GridRanges {
    /// The trick configurations of one family, in grid order.
    pub fn tricks_for(&self, family: &str) -> Vec<TrickConfig> {
        match family {
            "linear" => vec![TrickConfig::Linear],
            "poly" => self
                .radixes
                .iter()
                .map(|&radix| TrickConfig::Poly {
                    power: self.poly_power,
                    radix,
                })
                .collect(),
            "rbf" => self
                .sigmas
                .iter()
                .map(|&sigma2| TrickConfig::Rbf { sigma2 })
                .collect(),
            other => panic!("unknown trick family {other:?}"),
        }
    }
}

/// Per-pattern evaluation record inside a report cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatternOutcome {
    pub pattern: String,
    pub status: CellStatus,
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
    pub alpha: Option<f64>,
    pub trick_param: Option<f64>,
    pub detail: Option<String>,
}

/// One (kernel, trick, nie, normalized) experiment cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportCell {
    pub kernel: String,
    pub trick: String,
    pub nie: bool,
    pub normalized: bool,
    pub status: CellStatus,
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
    pub patterns: Vec<PatternOutcome>,
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineRow {
    pub name: String,
    pub rmse: f64,
    pub mae: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub graphs: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

/// Full evaluation report of one run: per-cell and per-pattern errors
/// on the evaluation split, plus the trivial baselines.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub split: String,
    pub dataset: DatasetSummary,
    pub patterns: Vec<String>,
    pub cells: Vec<ReportCell>,
    pub baselines: Vec<BaselineRow>,
}

impl EvalReport {
    /// Flat CSV, one row per pattern and configuration. Cells without
    /// pattern rows (whole-cell failures) emit a single `-` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "kernel,trick,nie,normalized,pattern,status,alpha,trick_param,rmse,mae\n",
        );
        let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for cell in &self.cells {
            if cell.patterns.is_empty() {
                out.push_str(&format!(
                    "{},{},{},{},-,{},,,,\n",
                    cell.kernel, cell.trick, cell.nie, cell.normalized, cell.status
                ));
            }
            for p in &cell.patterns {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{}\n",
                    cell.kernel,
                    cell.trick,
                    cell.nie,
                    cell.normalized,
                    p.pattern,
                    p.status,
                    fmt_opt(p.alpha),
                    fmt_opt(p.trick_param),
                    fmt_opt(p.rmse),
                    fmt_opt(p.mae),
                ));
            }
        }
        for b in &self.baselines {
            out.push_str(&format!("{},,,,*,ok,,,{},{}\n", b.name, b.rmse, b.mae));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn identity(n: usize) -> Vec<f64> {
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            k[i * n + i] = 1.0;
        }
        k
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("r{i}")).collect()
    }

    #[test]
    fn identity_kernel_with_unit_alpha_halves_targets() {
        let y = vec![2.0, -4.0, 6.0];
        let m = ridge_fit(&identity(3), 3, &y, 1.0, ids(3)).unwrap();
        for (c, yi) in m.dual_coeffs.iter().zip(&y) {
            assert!((c - yi / 2.0).abs() < 1e-12);
        }
        // Training-row prediction under K = I is the coefficient itself.
        let p = ridge_predict(&m, &[1.0, 0.0, 0.0]).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tiny_alpha_interpolates_training_targets() {
        let y = vec![3.0, 5.0];
        let m = ridge_fit(&identity(2), 2, &y, 1e-4, ids(2)).unwrap();
        let p0 = ridge_predict(&m, &[1.0, 0.0]).unwrap();
        assert!((p0 - 3.0).abs() / 3.0 < 1e-3);
    }

    #[test]
    fn unit_basis_prediction_closed_form() {
        for alpha in [1e-3, 0.1, 1.0, 10.0] {
            let y = vec![7.0, -2.0, 0.5, 9.0];
            let m = ridge_fit(&identity(4), 4, &y, alpha, ids(4)).unwrap();
            for i in 0..4 {
                let mut e = vec![0.0; 4];
                e[i] = 1.0;
                let p = ridge_predict(&m, &e).unwrap();
                assert!((p - y[i] / (1.0 + alpha)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_cross_row_predicts_zero() {
        let m = ridge_fit(&identity(3), 3, &[1.0, 2.0, 3.0], 1.0, ids(3)).unwrap();
        assert_eq!(ridge_predict(&m, &[0.0, 0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn predict_rejects_length_mismatch() {
        let m = ridge_fit(&identity(2), 2, &[1.0, 2.0], 1.0, ids(2)).unwrap();
        assert!(matches!(
            ridge_predict(&m, &[1.0]).unwrap_err(),
            RidgeError::LengthMismatch { .. }
        ));
    }

    #[test]
    fn fit_rejects_bad_alpha() {
        assert!(matches!(
            ridge_fit(&identity(2), 2, &[1.0, 2.0], 0.0, ids(2)).unwrap_err(),
            RidgeError::AlphaNonPositive(_)
        ));
    }

    fn random_psd(n: usize, seed: u64) -> Vec<f64> {
        // xorshift-based fill, then K = B^T B.
        let mut state = seed | 1;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let b: Vec<f64> = (0..n * n).map(|_| next()).collect();
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for t in 0..n {
                    acc += b[t * n + i] * b[t * n + j];
                }
                k[i * n + j] = acc;
            }
        }
        k
    }

    #[test]
    fn solution_matches_explicit_inverse() {
        let n = 5;
        let k = random_psd(n, 42);
        let y = vec![1.0, -2.0, 3.0, 0.5, -0.25];
        let alpha = 0.3;
        let m = ridge_fit(&k, n, &y, alpha, ids(n)).unwrap();
        let mut a = nalgebra::DMatrix::from_row_slice(n, n, &k);
        for i in 0..n {
            a[(i, i)] += alpha;
        }
        let inv = a.try_inverse().expect("regularized matrix is invertible");
        let expect = inv * nalgebra::DVector::from_row_slice(&y);
        for i in 0..n {
            assert!((m.dual_coeffs[i] - expect[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn solve_residual_is_within_contract() {
        for seed in 1..20u64 {
            let n = 4 + (seed as usize % 40);
            let k = random_psd(n, seed);
            let y: Vec<f64> = (0..n).map(|i| (i as f64).sin() * 10.0).collect();
            let m = ridge_fit(&k, n, &y, 1e-2, ids(n)).unwrap();
            let mut residual2 = 0.0;
            for i in 0..n {
                let mut acc = m.dual_coeffs[i] * m.alpha;
                for j in 0..n {
                    acc += k[i * n + j] * m.dual_coeffs[j];
                }
                residual2 += (acc - y[i]) * (acc - y[i]);
            }
            let y_norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(residual2.sqrt() <= 1e-6 * y_norm, "seed {seed}");
        }
    }

    #[test]
    fn training_mse_is_monotone_in_alpha() {
        let n = 12;
        let k = random_psd(n, 7);
        let y: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).cos() * 5.0).collect();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| k[i * n + j]).collect())
            .collect();
        let mut previous = -1.0;
        for alpha in default_alphas() {
            let m = ridge_fit(&k, n, &y, alpha, ids(n)).unwrap();
            let predictions = ridge_predict_batch(&m, &rows).unwrap();
            let mse = predictions
                .iter()
                .zip(&y)
                .map(|(p, t)| (p - t) * (p - t))
                .sum::<f64>()
                / n as f64;
            assert!(mse >= previous - 1e-9 * mse.abs().max(1.0), "alpha {alpha}");
            previous = mse;
        }
    }

    #[test]
    fn metrics_examples() {
        let m = metrics(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!(m.rmse, 0.0);
        assert_eq!(m.mae, 0.0);
        let m = metrics(&[3.0, -4.0], &[0.0, 0.0]).unwrap();
        assert!((m.rmse - 12.5f64.sqrt()).abs() < 1e-12);
        assert!((m.mae - 3.5).abs() < 1e-12);
        assert!(matches!(metrics(&[], &[]).unwrap_err(), MetricsError::Empty));
    }

    #[test]
    fn baselines_are_constant() {
        assert_eq!(baseline_predict(BaselineKind::Zero, &[]).unwrap(), 0.0);
        assert_eq!(
            baseline_predict(BaselineKind::Avg, &[2.0, 4.0]).unwrap(),
            3.0
        );
        assert!(baseline_predict(BaselineKind::Avg, &[]).is_err());
    }

    #[test]
    fn zero_baseline_mae_equals_mean_count() {
        let counts = vec![4.0, 0.0, 9.0, 2.0];
        let zero = vec![0.0; counts.len()];
        let m = metrics(&zero, &counts).unwrap();
        let mean = counts.iter().sum::<f64>() / counts.len() as f64;
        assert_eq!(m.mae, mean);
    }

    fn designs_from(k: Vec<f64>, n: usize, valid_rows: Vec<Vec<f64>>) -> PatternDesigns {
        PatternDesigns {
            n_train: n,
            k_train: k,
            train_row_ids: ids(n),
            valid_rows,
        }
    }

    #[test]
    fn single_config_grid_returns_it() {
        let mut builder = |_t: &TrickConfig| {
            Ok(designs_from(
                identity(2),
                2,
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            ))
        };
        let result = grid_search(
            &mut builder,
            &[1.0, 2.0],
            &[0.5, 1.0],
            &[TrickConfig::Linear],
            &[1.0],
        )
        .unwrap();
        assert_eq!(result.trick, TrickConfig::Linear);
        assert_eq!(result.alpha, 1.0);
        assert_eq!(result.outcomes.len(), 1);
    }

    #[test]
    fn grid_prefers_strictly_lower_validation_mse() {
        // Validation targets equal the training targets; a smaller alpha
        // tracks them more closely on an identity kernel.
        let mut builder = |_t: &TrickConfig| {
            Ok(designs_from(
                identity(2),
                2,
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            ))
        };
        let result = grid_search(
            &mut builder,
            &[1.0, 2.0],
            &[1.0, 2.0],
            &[TrickConfig::Linear],
            &[1e-4, 1.0],
        )
        .unwrap();
        assert_eq!(result.alpha, 1e-4);
    }

    #[test]
    fn overflowing_poly_is_skipped_for_finite_rbf() {
        let mut builder = |t: &TrickConfig| match t {
            TrickConfig::Poly { .. } => Ok(designs_from(
                vec![f64::NAN; 4],
                2,
                vec![vec![f64::NAN, f64::NAN]],
            )),
            _ => Ok(designs_from(identity(2), 2, vec![vec![1.0, 0.0]])),
        };
        let tricks = [
            TrickConfig::Poly { power: 3, radix: 1.0 },
            TrickConfig::Rbf { sigma2: 1.0 },
        ];
        let result = grid_search(&mut builder, &[1.0, 2.0], &[1.0], &tricks, &[1.0]).unwrap();
        assert!(matches!(result.trick, TrickConfig::Rbf { .. }));
        assert_eq!(result.outcomes[0].status, CellStatus::Nan);
        assert_eq!(result.outcomes[1].status, CellStatus::Ok);
    }

    #[test]
    fn exhausted_grid_reports_statuses() {
        let mut builder =
            |_t: &TrickConfig| Err(BuildFailure::Oom("budget exceeded".to_string()));
        let err = grid_search(
            &mut builder,
            &[1.0],
            &[1.0],
            &[TrickConfig::Linear],
            &[0.1, 1.0],
        )
        .unwrap_err();
        match err {
            GridSearchError::Exhausted { outcomes } => {
                assert_eq!(outcomes.len(), 2);
                assert!(outcomes.iter().all(|o| o.status == CellStatus::Oom));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn grid_search_is_deterministic() {
        let run = || {
            let mut builder = |_t: &TrickConfig| {
                Ok(designs_from(
                    random_psd(6, 3),
                    6,
                    (0..3)
                        .map(|i| (0..6).map(|j| ((i + j) as f64).sin()).collect())
                        .collect(),
                ))
            };
            let tricks = [TrickConfig::Linear];
            let result = grid_search(
                &mut builder,
                &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
                &[1.5, 2.5, 3.5],
                &tricks,
                &default_alphas(),
            )
            .unwrap();
            (result.alpha, result.model.dual_coeffs)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn default_grids_match_the_tuning_protocol() {
        assert_eq!(default_alphas().len(), 7);
        assert_eq!(default_sigmas().len(), 11);
        let radixes = default_radixes();
        assert_eq!(radixes.len(), 6);
        assert!((radixes[0] - 2e-5).abs() < 1e-18);
        assert_eq!(*radixes.last().unwrap(), 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn rmse_dominates_mae(
            pairs in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 1..50),
        ) {
            let y_hat: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let m = metrics(&y_hat, &y).unwrap();
            prop_assert!(m.rmse >= m.mae - 1e-12);
            prop_assert!(m.mae >= 0.0);
        }
    }
}
