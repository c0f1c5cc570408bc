//! Closed-form leave-one-out error of a least-squares fit.

use nalgebra::DMatrix;
use ndarray::Array2;

use crate::error::{Error, Result};

/// Leverages at or above `1 - LEVERAGE_GUARD` are rejected.
pub const LEVERAGE_GUARD: f64 = 1e-10;

/// Relative threshold on the diagonal of `R` below which the information
/// matrix is treated as rank deficient.
const RANK_TOL: f64 = 1e-12;

/// Empirical variance with the `n - 1` divisor.
pub fn sample_variance(y: &[f64]) -> f64 {
    let n = y.len();
    if n < 2 {
        return 0.0;
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
}

/// Absolute and normalized leave-one-out errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LooError {
    pub abs: f64,
    pub norm: f64,
}

/// `Err_LOO = (1/n) sum ((y_i - yhat_i) / (1 - h_i))^2` with `h_i` the
/// diagonal of `A (A^T A)^{-1} A^T`, taken from a QR factorization of `A`.
/// The normalized error divides by the sample variance of `y` (zero when
/// the variance vanishes).
pub fn loo_error(a: &Array2<f64>, y: &[f64], coefficients: &[f64]) -> Result<LooError> {
    let (n, p) = a.dim();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: y.len(),
        });
    }
    if coefficients.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            actual: coefficients.len(),
        });
    }
    if n <= p {
        return Err(Error::InvalidArgument(format!(
            "leave-one-out needs more samples than regressors ({n} <= {p})"
        )));
    }
    let m = DMatrix::from_fn(n, p, |i, j| a[[i, j]]);
    let qr = m.qr();
    let r = qr.r();
    let scale = (0..p).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    if scale == 0.0 || (0..p).any(|j| r[(j, j)].abs() <= RANK_TOL * scale) {
        return Err(Error::RankDeficient);
    }
    let q = qr.q();
    let mut acc = 0.0;
    for i in 0..n {
        let h: f64 = (0..p).map(|j| q[(i, j)] * q[(i, j)]).sum();
        if h >= 1.0 - LEVERAGE_GUARD {
            return Err(Error::IllConditioned {
                sample: i,
                leverage: h,
            });
        }
        let fitted: f64 = (0..p).map(|j| a[[i, j]] * coefficients[j]).sum();
        let d = (y[i] - fitted) / (1.0 - h);
        acc += d * d;
    }
    let abs = acc / n as f64;
    let var = sample_variance(y);
    let norm = if var > 0.0 { abs / var } else { 0.0 };
    Ok(LooError { abs, norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Ordinary least squares through the normal equations, solved by
    /// Cholesky: deliberately a different route than the QR above.
    fn ols(a: &Array2<f64>, y: &[f64]) -> Vec<f64> {
        let (n, p) = a.dim();
        let m = DMatrix::from_fn(n, p, |i, j| a[[i, j]]);
        let v = nalgebra::DVector::from_column_slice(y);
        let g = m.transpose() * &m;
        let b = m.transpose() * v;
        g.cholesky().unwrap().solve(&b).iter().copied().collect()
    }

    /// Explicit leave-one-out: n refits on n-1 points.
    fn brute_force_loo(a: &Array2<f64>, y: &[f64]) -> f64 {
        let (n, p) = a.dim();
        let mut acc = 0.0;
        for k in 0..n {
            let rows: Vec<usize> = (0..n).filter(|&i| i != k).collect();
            let sub = Array2::from_shape_fn((n - 1, p), |(i, j)| a[[rows[i], j]]);
            let ys: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
            let c = ols(&sub, &ys);
            let pred: f64 = (0..p).map(|j| a[[k, j]] * c[j]).sum();
            acc += (y[k] - pred).powi(2);
        }
        acc / n as f64
    }

    #[test]
    fn exact_linear_targets() {
        let n = 10;
        let a = Array2::from_shape_fn((n, 2), |(i, j)| if j == 0 { 1.0 } else { i as f64 / 9.0 * 2.0 - 1.0 });
        let y: Vec<f64> = (0..n).map(|i| 2.0 + 3.0 * a[[i, 1]]).collect();
        let c = ols(&a, &y);
        let e = loo_error(&a, &y, &c).unwrap();
        assert!(e.abs <= 1e-20, "{}", e.abs);
        assert_eq!(e.norm, e.abs / sample_variance(&y));
    }

    #[test]
    fn matches_refit_oracle_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let (n, p) = (10, 3);
            let a = Array2::from_shape_fn((n, p), |_| rng.random_range(-1.0..1.0));
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let c = ols(&a, &y);
            let e = loo_error(&a, &y, &c).unwrap();
            let oracle = brute_force_loo(&a, &y);
            assert!(((e.abs - oracle) / oracle).abs() <= 1e-10, "{} vs {}", e.abs, oracle);
            assert_eq!(e.norm, e.abs / sample_variance(&y));
        }
    }

    #[test]
    fn degenerate_cases() {
        // Duplicate column.
        let a = Array2::from_shape_fn((5, 2), |(i, _)| i as f64);
        let y = [1.0, 2.0, 0.0, 1.0, 3.0];
        assert!(matches!(loo_error(&a, &y, &[0.0, 0.0]), Err(Error::RankDeficient)));
        // An indicator column gives the matching sample leverage one.
        let a = Array2::from_shape_fn((5, 2), |(i, j)| if j == 0 { 1.0 } else if i == 3 { 1.0 } else { 0.0 });
        assert!(matches!(
            loo_error(&a, &y, &[0.0, 0.0]),
            Err(Error::IllConditioned { sample: 3, .. })
        ));
        assert!(loo_error(&a, &y[..4], &[0.0, 0.0]).is_err());
    }
}
