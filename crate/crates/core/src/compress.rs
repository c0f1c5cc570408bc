//! Principal component compression of warped ensembles.

use nalgebra::DMatrix;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaReduction {
    pub mean: Vec<f64>,
    /// Retained eigenvectors, one per row.
    pub eigenvectors: Vec<Vec<f64>>,
    /// All empirical eigenvalues, non-increasing.
    pub eigenvalues: Vec<f64>,
    pub retained: usize,
    pub epsilon1: f64,
    /// Set when the target could not be met with `n - 1` components.
    pub capped: bool,
}

impl PcaReduction {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// `1 - sum_{i < k} lambda_i / sum_i lambda_i` (zero for a zero spectrum).
pub fn truncation_error(eigenvalues: &[f64], k: usize) -> f64 {
    let total: f64 = eigenvalues.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let tail: f64 = eigenvalues.iter().skip(k).sum();
    (tail / total).max(0.0)
}

/// Gram eigenvalues below this fraction of the largest are treated as zero.
const ZERO_EIGEN: f64 = 1e-13;

/// PCA of the rows of `y` (n x K) keeping the fewest components with
/// truncation error at most `epsilon_target`.
pub fn fit_pca(y: &Array2<f64>, epsilon_target: f64) -> Result<PcaReduction> {
    let (n, k) = y.dim();
    if n < 2 || k == 0 {
        return Err(Error::InvalidArgument(format!("PCA needs n >= 2 rows and K >= 1 columns, got {n} x {k}")));
    }
    if !(epsilon_target >= 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon target must be >= 0, got {epsilon_target}")));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("PCA input has non-finite entries".into()));
    }
    let mean: Vec<f64> = y.columns().into_iter().map(|c| c.sum() / n as f64).collect();
    let centered = DMatrix::from_fn(n, k, |i, j| y[[i, j]] - mean[j]);
    let (eigenvalues, directions) = spectrum(&centered);

    let cap = (n - 1).min(eigenvalues.len());
    let mut retained = 0;
    while retained < cap && truncation_error(&eigenvalues, retained) > epsilon_target {
        retained += 1;
    }
    let epsilon1 = truncation_error(&eigenvalues, retained);
    let capped = epsilon1 > epsilon_target;
    if capped {
        log::warn!("PCA truncation error {epsilon1:.3e} exceeds target {epsilon_target:.3e} with {retained} components");
    }

    let eigenvectors = directions
        .into_iter()
        .take(retained)
        .map(|mut v| {
            let lead = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if lead < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    Ok(PcaReduction {
        mean,
        eigenvectors,
        eigenvalues,
        retained,
        epsilon1,
        capped,
    })
}

/// Eigenvalues (`s^2 / (n - 1)`, non-increasing) and unit principal
/// directions of the centered `n x K` matrix, from the symmetric
/// eigenproblem of the smaller Gram matrix. Directions of numerically zero
/// eigenvalues are omitted and those eigenvalues set to zero.
fn spectrum(centered: &DMatrix<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let (n, k) = centered.shape();
    let scale = (n - 1) as f64;
    let wide = n <= k;
    let gram = if wide {
        centered * centered.transpose()
    } else {
        centered.transpose() * centered
    };
    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = order.first().map_or(0.0, |&i| eig.eigenvalues[i].max(0.0));
    let floor = top * ZERO_EIGEN;
    let mut values = Vec::with_capacity(order.len());
    let mut directions = Vec::new();
    for &i in &order {
        let mu = eig.eigenvalues[i];
        if !(mu > floor) {
            values.push(0.0);
            continue;
        }
        values.push(mu / scale);
        let u = eig.eigenvectors.column(i);
        let v: Vec<f64> = if wide {
            let s = mu.sqrt();
            (centered.transpose() * u).iter().map(|x| x / s).collect()
        } else {
            u.iter().copied().collect()
        };
        directions.push(v);
    }
    (values, directions)
}

/// Scores `(Y - mean) v_i`, one row per row of `y`.
pub fn pca_scores(y: &Array2<f64>, reduction: &PcaReduction) -> Result<Array2<f64>> {
    let (n, k) = y.dim();
    if k != reduction.len() {
        return Err(Error::DimensionMismatch {
            expected: reduction.len(),
            actual: k,
        });
    }
    let mut out = Array2::zeros((n, reduction.retained));
    for (i, row) in y.rows().into_iter().enumerate() {
        for (c, v) in reduction.eigenvectors.iter().enumerate() {
            out[[i, c]] = row
                .iter()
                .zip(&reduction.mean)
                .zip(v)
                .map(|((y, m), v)| (y - m) * v)
                .sum();
        }
    }
    Ok(out)
}

/// `mean + sum_i scores_i v_i`.
pub fn pca_reconstruct(reduction: &PcaReduction, scores: &[f64]) -> Result<Vec<f64>> {
    if scores.len() != reduction.retained {
        return Err(Error::DimensionMismatch {
            expected: reduction.retained,
            actual: scores.len(),
        });
    }
    let mut out = reduction.mean.clone();
    for (a, v) in scores.iter().zip(&reduction.eigenvectors) {
        for (o, x) in out.iter_mut().zip(v) {
            *o += a * x;
        }
    }
    Ok(out)
}

/// Upper bound `(sqrt(eps1) + sqrt(eps2))^2` on the total relative error of
/// PCA truncation plus score surrogates.
pub fn error_bound(epsilon1: f64, epsilon2: f64) -> f64 {
    (epsilon1.max(0.0).sqrt() + epsilon2.max(0.0).sqrt()).powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_ensemble(n: usize, k: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        Array2::from_shape_fn((n, k), |(i, j)| {
            let t = j as f64 * 0.05;
            t.sin() + a[i] * (2.0 * t).cos() + 0.3 * b[i] * (3.0 * t + a[i]).sin() + 0.01 * rng.random_range(-1.0..1.0)
        })
    }

    #[test]
    fn rank_deficient_spectrum_matches_reference() {
        let y = Array2::from_shape_vec(
            (3, 3),
            vec![
                -4.624177570074116,
                3.0143515197730624,
                -2.384332212913111,
                -4.41813702390161,
                3.403216973551867,
                4.655271953708208,
                -2.3225879217236387,
                -1.3002493172827807,
                0.8964134065000835,
            ],
        )
        .unwrap();
        let r = fit_pca(&y, 0.0).unwrap();
        // LAPACK values of s^2 / (n - 1).
        assert!((r.eigenvalues[0] - 12.613744183018079).abs() < 1e-12);
        assert!((r.eigenvalues[1] - 8.2310927751342664).abs() < 1e-12);
        assert_eq!(r.eigenvalues[2], 0.0);
        assert_eq!(r.retained, 2);
        assert_eq!(r.epsilon1, 0.0);
    }

    #[test]
    fn rank_one_data() {
        let v: Vec<f64> = (0..40).map(|j| (j as f64 * 0.3).sin()).collect();
        let y = Array2::from_shape_fn((10, 40), |(i, j)| 2.0 + (i as f64 - 4.5) * v[j]);
        let r = fit_pca(&y, 1e-6).unwrap();
        assert_eq!(r.retained, 1);
        assert!(r.epsilon1 <= 1e-12);
        assert!(!r.capped);
    }

    #[test]
    fn spectrum_and_orthonormality() {
        let y = random_ensemble(30, 200, 1);
        let r = fit_pca(&y, 1e-6).unwrap();
        assert!(r.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        assert!(r.eigenvalues.iter().all(|&l| l >= 0.0));
        for (a, va) in r.eigenvectors.iter().enumerate() {
            for (b, vb) in r.eigenvectors.iter().enumerate() {
                let d: f64 = va.iter().zip(vb).map(|(x, y)| x * y).sum();
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((d - expect).abs() < 1e-10);
            }
            let lead = va.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            assert!(lead > 0.0);
        }
        let mut prev = f64::INFINITY;
        for k in 0..r.eigenvalues.len() {
            let e = truncation_error(&r.eigenvalues, k);
            assert!(e <= prev);
            prev = e;
        }
    }

    #[test]
    fn score_statistics() {
        let y = random_ensemble(25, 150, 2);
        let r = fit_pca(&y, 1e-8).unwrap();
        let s = pca_scores(&y, &r).unwrap();
        for c in 0..r.retained {
            let col = s.column(c);
            let m = col.sum() / col.len() as f64;
            assert!(m.abs() <= 1e-10);
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (col.len() - 1) as f64;
            assert!(((var - r.eigenvalues[c]) / r.eigenvalues[c]).abs() <= 1e-8);
        }
    }

    #[test]
    fn full_rank_reconstruction_and_tail_identity() {
        let y = random_ensemble(20, 120, 3);
        let full = fit_pca(&y, 0.0).unwrap();
        let s = pca_scores(&y, &full).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..20 {
            let rec = pca_reconstruct(&full, &s.row(i).to_vec()).unwrap();
            for j in 0..120 {
                num += (rec[j] - y[[i, j]]).powi(2);
                den += y[[i, j]].powi(2);
            }
        }
        assert!((num / den).sqrt() <= 1e-8);

        for target in [1e-1, 1e-2, 1e-3] {
            let r = fit_pca(&y, target).unwrap();
            let s = pca_scores(&y, &r).unwrap();
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..20 {
                let rec = pca_reconstruct(&r, &s.row(i).to_vec()).unwrap();
                for j in 0..120 {
                    num += (rec[j] - y[[i, j]]).powi(2);
                    den += (y[[i, j]] - r.mean[j]).powi(2);
                }
            }
            assert!((num / den - r.epsilon1).abs() <= 1e-8);
            assert!(num / den <= target + 1e-10);
        }
    }

    #[test]
    fn reconstruction_is_affine() {
        let y = random_ensemble(15, 60, 4);
        let r = fit_pca(&y, 1e-3).unwrap();
        assert_eq!(pca_reconstruct(&r, &vec![0.0; r.retained]).unwrap(), r.mean);
        let a: Vec<f64> = (0..r.retained).map(|i| i as f64 * 0.3 - 1.0).collect();
        let b: Vec<f64> = (0..r.retained).map(|i| 0.7 - i as f64 * 0.1).collect();
        let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let (ra, rb, rab) = (
            pca_reconstruct(&r, &a).unwrap(),
            pca_reconstruct(&r, &b).unwrap(),
            pca_reconstruct(&r, &ab).unwrap(),
        );
        for j in 0..60 {
            assert!((rab[j] - (ra[j] + rb[j] - r.mean[j])).abs() < 1e-12);
        }
        assert!(pca_reconstruct(&r, &[1.0; 100]).is_err());
    }

    #[test]
    fn constant_shift_moves_only_the_mean() {
        let y = random_ensemble(20, 80, 5);
        let shifted = y.mapv(|v| v + 7.5);
        let a = fit_pca(&y, 1e-3).unwrap();
        let b = fit_pca(&shifted, 1e-3).unwrap();
        assert_eq!(a.retained, b.retained);
        for (x, z) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            assert!((x - z).abs() <= 1e-10 * a.eigenvalues[0]);
        }
        for (va, vb) in a.eigenvectors.iter().zip(&b.eigenvectors) {
            for (x, z) in va.iter().zip(vb) {
                assert!((x - z).abs() <= 1e-10);
            }
        }
        for (x, z) in a.mean.iter().zip(&b.mean) {
            assert!((z - x - 7.5).abs() < 1e-12);
        }
    }

    #[test]
    fn cap_flag_when_target_unreachable() {
        let y = random_ensemble(4, 50, 6);
        let r = fit_pca(&y, 0.0).unwrap();
        assert_eq!(r.retained, 3);
        let z = Array2::from_shape_fn((5, 30), |(i, j)| ((i * 31 + j * 17) % 11) as f64);
        let r = fit_pca(&z, 0.0).unwrap();
        assert!(r.retained <= 4);
        assert_eq!(r.capped, r.epsilon1 > 0.0);
    }

    #[test]
    fn error_bound_examples() {
        assert_eq!(error_bound(0.0, 0.0), 0.0);
        assert!((error_bound(1e-3, 0.0) - 1e-3).abs() < 1e-18);
        // (sqrt(1e-3) + sqrt(7.7e-3))^2 = 8.7e-3 + 2 sqrt(7.7e-6).
        let expect = 8.7e-3 + 2.0 * 7.7e-6f64.sqrt();
        assert!((error_bound(1e-3, 7.7e-3) - expect).abs() < 1e-15);
        assert!((error_bound(1e-3, 7.7e-3) - 1.4250e-2).abs() < 1e-5);
    }

    #[test]
    fn serialization_round_trip() {
        let r = fit_pca(&random_ensemble(10, 40, 7), 1e-3).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        let back: PcaReduction = serde_json::from_str(&s).unwrap();
        assert_eq!(r, back);
    }
}
