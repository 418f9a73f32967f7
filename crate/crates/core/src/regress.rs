//! Linear model `r = b0 + b1 H + b2 C + b3 ell + e`, fitted by ordinary least
//! squares and by iteratively reweighted least squares.

use std::collections::BTreeMap;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::kuramoto::SyncRecord;
use crate::metrics::MetricsRecord;

pub const COLUMNS: [&str; 4] = ["intercept", "H", "C", "ell"];
pub const N_PARAMS: usize = COLUMNS.len();
/// Fewest rows accepted for a fit: predictors + 2.
pub const MIN_ROWS: usize = N_PARAMS + 2;

pub const BISQUARE_C: f64 = 4.685;
pub const HUBER_C: f64 = 1.345;
/// Consistency constant turning the MAD into a Gaussian sigma estimate.
pub const MAD_NORMALIZER: f64 = 0.6745;
pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub window: usize,
    pub entropy: f64,
    pub clustering: f64,
    pub path_length: f64,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSample {
    rows: Vec<SampleRow>,
}

impl RegressionSample {
    pub fn new(rows: Vec<SampleRow>) -> Result<Self> {
        if rows.len() < MIN_ROWS {
            return Err(Error::InsufficientSamples {
                needed: MIN_ROWS,
                actual: rows.len(),
            });
        }
        if let Some(row) = rows.iter().find(|r| {
            ![r.entropy, r.clustering, r.path_length, r.r]
                .iter()
                .all(|v| v.is_finite())
        }) {
            return Err(Error::Malformed(format!(
                "non-finite value in window {}",
                row.window
            )));
        }
        Ok(RegressionSample { rows })
    }

    pub fn rows(&self) -> &[SampleRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn windows(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.window).collect()
    }

    pub fn response(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.r).collect()
    }

    fn design(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows.len(), N_PARAMS, |i, j| {
            let row = &self.rows[i];
            match j {
                0 => 1.0,
                1 => row.entropy,
                2 => row.clustering,
                _ => row.path_length,
            }
        })
    }
}

/// Keeps the windows starting at `0, width, 2 width, ...` and joins metrics
/// with synchronization by window index.
pub fn select_disjoint(
    metrics: &[MetricsRecord],
    sync: &[SyncRecord],
    width: usize,
) -> Result<RegressionSample> {
    if width == 0 {
        return Err(Error::Config("window width must be positive".into()));
    }
    let by_window_m: BTreeMap<usize, &MetricsRecord> =
        metrics.iter().map(|m| (m.window, m)).collect();
    let by_window_s: BTreeMap<usize, &SyncRecord> = sync.iter().map(|s| (s.window, s)).collect();

    let mut selected: Vec<usize> = metrics
        .iter()
        .filter(|m| m.start % width == 0)
        .map(|m| m.window)
        .chain(
            sync.iter()
                .filter(|s| s.start % width == 0)
                .map(|s| s.window),
        )
        .collect();
    selected.sort_unstable();
    selected.dedup();

    let mut rows = Vec::with_capacity(selected.len());
    for window in selected {
        let m = by_window_m.get(&window).ok_or(Error::MissingWindow {
            window,
            source_name: "metrics",
        })?;
        let s = by_window_s.get(&window).ok_or(Error::MissingWindow {
            window,
            source_name: "sync",
        })?;
        if m.start != s.start || m.end != s.end {
            return Err(Error::Dimension(format!(
                "window {window} spans [{}, {}) in metrics but [{}, {}) in sync",
                m.start, m.end, s.start, s.end
            )));
        }
        rows.push(SampleRow {
            window,
            entropy: m.entropy,
            clustering: m.clustering,
            path_length: m.path_length,
            r: s.terminal_r,
        });
    }
    if rows.is_empty() {
        return Err(Error::InsufficientSamples {
            needed: MIN_ROWS,
            actual: 0,
        });
    }
    RegressionSample::new(rows)
}

/// Robustness weight as a function of the scaled residual `u`.
pub trait WeightFunction {
    fn weight(&self, u: f64) -> f64;
    fn name(&self) -> String;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Estimator {
    Bisquare { c: f64 },
    Huber { c: f64 },
}

impl Default for Estimator {
    fn default() -> Self {
        Estimator::Bisquare { c: BISQUARE_C }
    }
}

impl WeightFunction for Estimator {
    fn weight(&self, u: f64) -> f64 {
        let a = u.abs();
        match *self {
            Estimator::Bisquare { c } => {
                if a <= c {
                    let t = 1.0 - (a / c).powi(2);
                    t * t
                } else {
                    0.0
                }
            }
            Estimator::Huber { c } => {
                if a <= c {
                    1.0
                } else {
                    c / a
                }
            }
        }
    }

    fn name(&self) -> String {
        match self {
            Estimator::Bisquare { .. } => "bisquare".into(),
            Estimator::Huber { .. } => "huber".into(),
        }
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bisquare" => Ok(Estimator::Bisquare { c: BISQUARE_C }),
            "huber" => Ok(Estimator::Huber { c: HUBER_C }),
            other => Err(Error::Config(format!("unknown estimator {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustFit {
    pub estimator: String,
    pub beta: [f64; N_PARAMS],
    pub std_errors: [f64; N_PARAMS],
    pub weights: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Robust residual scale (MAD / 0.6745) from the last reweighting; 0 for OLS.
    pub scale: f64,
    pub sigma: f64,
    pub windows: Vec<usize>,
}

struct WlsSolution {
    beta: [f64; N_PARAMS],
    std_errors: [f64; N_PARAMS],
    residuals: Vec<f64>,
    sigma: f64,
}

/// Weighted least squares by QR of `sqrt(W) X`.
fn solve_wls(x: &DMatrix<f64>, y: &[f64], weights: &[f64]) -> Result<WlsSolution> {
    let n = x.nrows();
    let sw: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let xw = DMatrix::from_fn(n, N_PARAMS, |i, j| x[(i, j)] * sw[i]);
    let yw = DVector::from_iterator(n, y.iter().zip(&sw).map(|(v, s)| v * s));

    let qr = xw.clone().qr();
    let r = qr.r();
    for k in 0..N_PARAMS {
        let col_norm = xw.column(k).norm();
        if !(r[(k, k)].abs() > 1e-10 * col_norm.max(f64::MIN_POSITIVE)) {
            return Err(Error::RankDeficient {
                column: COLUMNS[k].to_owned(),
            });
        }
    }
    let qty = qr.q().transpose() * &yw;
    let beta_vec = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::RankDeficient {
            column: "unknown".into(),
        })?;
    let mut beta = [0.0; N_PARAMS];
    beta.copy_from_slice(beta_vec.as_slice());

    let fitted = x * &beta_vec;
    let residuals: Vec<f64> = y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
    let dof = (n - N_PARAMS) as f64;
    let wrss: f64 = residuals.iter().zip(weights).map(|(e, w)| w * e * e).sum();
    let sigma = (wrss / dof).sqrt();

    // cov = sigma^2 (R^T R)^{-1}
    let r_inv = r.try_inverse().ok_or_else(|| Error::RankDeficient {
        column: "unknown".into(),
    })?;
    let cov_unit = &r_inv * r_inv.transpose();
    let mut std_errors = [0.0; N_PARAMS];
    for (k, se) in std_errors.iter_mut().enumerate() {
        *se = sigma * cov_unit[(k, k)].sqrt();
    }
    Ok(WlsSolution {
        beta,
        std_errors,
        residuals,
        sigma,
    })
}

pub fn ols_fit(sample: &RegressionSample) -> Result<RobustFit> {
    let x = sample.design();
    let y = sample.response();
    let weights = vec![1.0; sample.len()];
    let sol = solve_wls(&x, &y, &weights)?;
    Ok(RobustFit {
        estimator: "ols".into(),
        beta: sol.beta,
        std_errors: sol.std_errors,
        weights,
        iterations: 1,
        converged: true,
        scale: 0.0,
        sigma: sol.sigma,
        windows: sample.windows(),
    })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Median absolute deviation of the residuals, divided by 0.6745.
pub fn mad_scale(residuals: &[f64]) -> f64 {
    let mut r = residuals.to_vec();
    let center = median(&mut r);
    let mut dev: Vec<f64> = residuals.iter().map(|e| (e - center).abs()).collect();
    median(&mut dev) / MAD_NORMALIZER
}

pub fn irls_robust_fit(
    sample: &RegressionSample,
    estimator: Estimator,
    tolerance: f64,
    max_iter: usize,
) -> Result<RobustFit> {
    irls_with(sample, &estimator, tolerance, max_iter)
}

/// IRLS with an arbitrary weight function. Iteration 1 is OLS; each later
/// iteration reweights by the previous residuals and re-solves.
pub fn irls_with<W: WeightFunction + ?Sized>(
    sample: &RegressionSample,
    weight_fn: &W,
    tolerance: f64,
    max_iter: usize,
) -> Result<RobustFit> {
    if !(tolerance > 0.0) {
        return Err(Error::Config("tolerance must be positive".into()));
    }
    if max_iter == 0 {
        return Err(Error::Config("max_iter must be at least 1".into()));
    }
    let x = sample.design();
    let y = sample.response();
    let n = sample.len();
    let mut weights = vec![1.0; n];
    let mut sol = solve_wls(&x, &y, &weights)?;
    let mut iterations = 1;
    let mut converged = false;
    let mut scale = 0.0;
    let y_scale = y.iter().fold(0.0_f64, |m, v| m.max(v.abs()));

    while iterations < max_iter {
        scale = mad_scale(&sol.residuals);
        if !(scale > 1e-12 * (1.0 + y_scale)) {
            // essentially exact fit: nothing left to downweight
            converged = true;
            break;
        }
        weights = sol
            .residuals
            .iter()
            .map(|e| weight_fn.weight(e / scale).clamp(0.0, 1.0))
            .collect();
        if weights.iter().all(|&w| w == 0.0) {
            return Err(Error::AllWeightsZero);
        }
        let next = solve_wls(&x, &y, &weights)?;
        iterations += 1;
        let change = next
            .beta
            .iter()
            .zip(&sol.beta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        sol = next;
        if change < tolerance {
            converged = true;
            break;
        }
    }

    Ok(RobustFit {
        estimator: weight_fn.name(),
        beta: sol.beta,
        std_errors: sol.std_errors,
        weights,
        iterations,
        converged,
        scale,
        sigma: sol.sigma,
        windows: sample.windows(),
    })
}

/// `(Φ⁻¹((i − 0.5)/n), x_(i))` for the sorted sample.
pub fn normal_prob_plot(values: &[f64]) -> Result<Vec<(f64, f64)>> {
    let n = values.len();
    if n < 3 {
        return Err(Error::InsufficientSamples {
            needed: 3,
            actual: n,
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Malformed(
            "non-finite value in normal plot sample".into(),
        ));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[n - 1] {
        return Err(Error::Degenerate(
            "constant sample has no normal plot".into(),
        ));
    }
    let std_normal = Normal::standard();
    Ok(sorted
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let p = (i as f64 + 0.5) / n as f64;
            (std_normal.inverse_cdf(p), v)
        })
        .collect())
}

/// Least-squares line `value = slope * quantile + intercept`.
pub fn fit_line(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
