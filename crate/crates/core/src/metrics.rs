//! Estimation error statistics: per-step absolute errors, per-run mean
//! square estimation error (MSEE) and its average over runs (AMSEE).

use thiserror::Error;

use crate::smallmat::Vector4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("sequence lengths differ: truth {truth}, ckf {ckf}, mukf {mukf}")]
    LengthMismatch { truth: usize, ckf: usize, mukf: usize },
    #[error("error trace is empty")]
    EmptyTrace,
    #[error("no runs to average")]
    EmptySequence,
    #[error("series variance {0:e} is too small for autocorrelation")]
    DegenerateSeries(f64),
    #[error("series of length {len} is too short for lag {max_lag}")]
    TooShort { len: usize, max_lag: usize },
}

/// Elementwise absolute errors of both filters, one entry per step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorTrace {
    /// covariance-form filter
    pub beta: Vec<Vector4>,
    /// information-form filter
    pub gamma: Vec<Vector4>,
}

impl ErrorTrace {
    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }
}

/// Per-state MSEE of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseeRecord {
    pub run_index: usize,
    pub kappa: Vector4,
    pub gamma: Vector4,
}

/// Per-state MSEE averaged over `runs` runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmseeRecord {
    pub xi_kappa: Vector4,
    pub xi_gamma: Vector4,
    pub runs: usize,
}

pub fn collect_errors(
    truth: &[Vector4],
    est_ckf: &[Vector4],
    est_mukf: &[Vector4],
) -> Result<ErrorTrace, MetricsError> {
    if truth.len() != est_ckf.len() || truth.len() != est_mukf.len() {
        return Err(MetricsError::LengthMismatch {
            truth: truth.len(),
            ckf: est_ckf.len(),
            mukf: est_mukf.len(),
        });
    }
    let abs_err = |est: &[Vector4]| truth.iter().zip(est).map(|(x, e)| (*x - *e).abs()).collect();
    Ok(ErrorTrace { beta: abs_err(est_ckf), gamma: abs_err(est_mukf) })
}

fn mean_square(errors: &[Vector4]) -> Vector4 {
    let n = errors.len() as f64;
    let sum = errors.iter().fold(Vector4::ZERO, |acc, e| acc + e.map(|v| v * v));
    sum.scale(1.0 / n)
}

pub fn msee(trace: &ErrorTrace, run_index: usize) -> Result<MseeRecord, MetricsError> {
    if trace.beta.is_empty() || trace.gamma.is_empty() {
        return Err(MetricsError::EmptyTrace);
    }
    Ok(MseeRecord { run_index, kappa: mean_square(&trace.beta), gamma: mean_square(&trace.gamma) })
}

pub fn amsee(records: &[MseeRecord]) -> Result<AmseeRecord, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptySequence);
    }
    let n = records.len() as f64;
    let (k, g) = records
        .iter()
        .fold((Vector4::ZERO, Vector4::ZERO), |(k, g), r| (k + r.kappa, g + r.gamma));
    Ok(AmseeRecord { xi_kappa: k.scale(1.0 / n), xi_gamma: g.scale(1.0 / n), runs: records.len() })
}

/// Mean of a plain series; the table averaging column.
pub fn average(values: &[f64]) -> Result<f64, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptySequence);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Sample autocorrelation of a mean-removed series for lags `0..=max_lag`.
///
/// Index `l` of the result holds lag `l`, so element 0 is always 1.
pub fn innovation_autocorr(innovations: &[f64], max_lag: usize) -> Result<Vec<f64>, MetricsError> {
    let n = innovations.len();
    if n <= max_lag || n < 2 {
        return Err(MetricsError::TooShort { len: n, max_lag });
    }
    let mean = innovations.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = innovations.iter().map(|e| e - mean).collect();
    let c0 = centered.iter().map(|e| e * e).sum::<f64>();
    if c0 / (n as f64) < 1e-300 {
        return Err(MetricsError::DegenerateSeries(c0 / n as f64));
    }
    Ok((0..=max_lag)
        .map(|lag| {
            centered[..n - lag].iter().zip(&centered[lag..]).map(|(a, b)| a * b).sum::<f64>() / c0
        })
        .collect())
}
