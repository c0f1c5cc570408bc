//! Trajectory-level validation metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::odes::{Ensemble, Trajectory};
use crate::par;

/// Relative-error threshold of the exceedance statistic.
pub const DEFAULT_THRESHOLD: f64 = 0.1;

/// `sum (y - yhat)^2 / sum (y - mean(y))^2` over the instants present in
/// both series.
pub fn validation_error(pred: &Trajectory, truth: &Trajectory) -> Result<f64> {
    if pred.grid != truth.grid {
        return Err(Error::InvalidArgument("prediction and truth grids differ".into()));
    }
    relative_error(&pred.values, &truth.values)
}

/// [`validation_error`] on raw series, truncated to the shorter one.
pub fn relative_error(pred: &[f64], truth: &[f64]) -> Result<f64> {
    let len = pred.len().min(truth.len());
    if len == 0 {
        return Err(Error::InvalidArgument("no shared instants".into()));
    }
    let (pred, truth) = (&pred[..len], &truth[..len]);
    let mean = truth.iter().sum::<f64>() / len as f64;
    let den: f64 = truth.iter().map(|y| (y - mean).powi(2)).sum();
    if !(den > 0.0) {
        return Err(Error::DegenerateVariance);
    }
    let num: f64 = truth.iter().zip(pred).map(|(y, p)| (y - p).powi(2)).sum();
    Ok(num / den)
}

/// Fraction of `errors` strictly above `threshold`.
pub fn exceedance_fraction(errors: &[f64], threshold: f64) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::InvalidArgument("no errors to summarize".into()));
    }
    Ok(errors.iter().filter(|&&e| !(e <= threshold)).count() as f64 / errors.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Per-trajectory relative errors; failed predictions are infinite.
    pub errors: Vec<f64>,
    /// Fraction of the horizon each prediction covered.
    pub coverage: Vec<f64>,
    pub threshold: f64,
    pub exceedance: f64,
    pub failures: usize,
    pub mean_error: Option<f64>,
    pub std_error: Option<f64>,
    pub runtime_seconds: f64,
}

impl ValidationReport {
    /// Scores `predict` on every row of `truth`.
    pub fn evaluate<F>(truth: &Ensemble, threshold: f64, predict: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Result<Trajectory> + Sync,
    {
        let start = std::time::Instant::now();
        let len = truth.grid.len() as f64;
        let scored = par::map_range(truth.len(), |i| {
            let t = truth.trajectory(i);
            match predict(&truth.design.physical_row(i)) {
                Ok(p) => (
                    validation_error(&p, &t).unwrap_or(f64::INFINITY),
                    p.present() as f64 / len,
                    false,
                ),
                Err(_) => (f64::INFINITY, 0.0, true),
            }
        });
        let errors: Vec<f64> = scored.iter().map(|s| s.0).collect();
        let coverage = scored.iter().map(|s| s.1).collect();
        let failures = scored.iter().filter(|s| s.2).count();
        Ok(Self {
            exceedance: exceedance_fraction(&errors, threshold)?,
            errors,
            coverage,
            threshold,
            failures,
            mean_error: None,
            std_error: None,
            runtime_seconds: start.elapsed().as_secs_f64(),
        })
    }
}
