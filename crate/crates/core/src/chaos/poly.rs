//! Univariate orthonormal polynomial families.

use serde::{Deserialize, Serialize};

use crate::prob::Marginal;

/// Orthonormal family: Legendre w.r.t. the uniform density on `[-1, 1]`,
/// Hermite (probabilists') w.r.t. the standard normal density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Legendre,
    Hermite,
}

impl Family {
    pub fn for_marginal(m: &Marginal) -> Self {
        match m {
            Marginal::Uniform { .. } => Family::Legendre,
            Marginal::Gaussian { .. } => Family::Hermite,
        }
    }

    /// Writes `psi_0(u) ..= psi_max_degree(u)` into `out`.
    pub fn eval_all(self, max_degree: usize, u: f64, out: &mut [f64]) {
        debug_assert!(out.len() > max_degree);
        out[0] = 1.0;
        if max_degree == 0 {
            return;
        }
        match self {
            Family::Legendre => {
                out[1] = 3f64.sqrt() * u;
                for n in 1..max_degree {
                    let nf = n as f64;
                    let a_n = nf / (4.0 * nf * nf - 1.0).sqrt();
                    let a_n1 = (nf + 1.0) / (4.0 * (nf + 1.0) * (nf + 1.0) - 1.0).sqrt();
                    out[n + 1] = (u * out[n] - a_n * out[n - 1]) / a_n1;
                }
            }
            Family::Hermite => {
                out[1] = u;
                for n in 1..max_degree {
                    let nf = n as f64;
                    out[n + 1] = (u * out[n] - nf.sqrt() * out[n - 1]) / (nf + 1.0).sqrt();
                }
            }
        }
    }

    pub fn eval(self, degree: usize, u: f64) -> f64 {
        let mut buf = vec![0.0; degree + 1];
        self.eval_all(degree, u, &mut buf);
        buf[degree]
    }
}

/// Univariate evaluation `psi_k(u)`.
pub fn eval_univariate(family: Family, degree: usize, u: f64) -> f64 {
    family.eval(degree, u)
}

#[cfg(test)]
pub(crate) mod quadrature {
    //! Gauss rules used as an independent oracle for orthonormality.

    /// Gauss–Legendre nodes and weights on [-1, 1] (weights sum to 2),
    /// Newton iteration on the classical three-term recurrence.
    pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, z);
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
                let dz = p1 / dp;
                z -= dz;
                if dz.abs() < 1e-15 {
                    break;
                }
            }
            x[i] = -z;
            x[n - 1 - i] = z;
            let wi = 2.0 / ((1.0 - z * z) * dp * dp);
            w[i] = wi;
            w[n - 1 - i] = wi;
        }
        (x, w)
    }

    /// Gauss–Hermite rule for the standard normal weight (weights sum to 1).
    /// Nodes from the Jacobi matrix; weights from the Christoffel function
    /// evaluated with the unnormalized `He_k` recurrence, which keeps the
    /// tail weights relatively accurate.
    pub fn gauss_hermite_prob(n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut j = nalgebra::DMatrix::<f64>::zeros(n, n);
        for k in 1..n {
            let b = (k as f64).sqrt();
            j[(k, k - 1)] = b;
            j[(k - 1, k)] = b;
        }
        let eig = j.symmetric_eigen();
        let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        nodes.sort_by(|a, b| a.total_cmp(b));
        let weights = nodes
            .iter()
            .map(|&x| {
                let (mut h0, mut h1) = (1.0f64, x);
                let mut fact = 1.0f64;
                let mut sum = 1.0 + x * x;
                for k in 1..n - 1 {
                    let h2 = x * h1 - k as f64 * h0;
                    h0 = h1;
                    h1 = h2;
                    fact *= (k + 1) as f64;
                    sum += h1 * h1 / fact;
                }
                1.0 / sum
            })
            .collect();
        (nodes, weights)
    }
}

#[cfg(test)]
mod tests {
    use super::quadrature::*;
    use super::*;

    #[test]
    fn examples() {
        for fam in [Family::Legendre, Family::Hermite] {
            for u in [-0.7, 0.0, 0.4, 2.5] {
                assert_eq!(eval_univariate(fam, 0, u), 1.0);
            }
        }
        assert!((eval_univariate(Family::Legendre, 1, 1.0) - 1.7320508075688772).abs() < 1e-15);
        assert!(eval_univariate(Family::Hermite, 2, 1.0).abs() < 1e-15);
    }

    /// Unnormalized Legendre by Bonnet recursion, scaled by sqrt(2n+1):
    /// a separate route to the normalized values.
    #[test]
    fn legendre_matches_bonnet_recursion() {
        for &u in &[-1.0, -0.3, 0.2, 0.9, 1.0] {
            let (mut p0, mut p1) = (1.0, u);
            for n in 2..=15usize {
                let nf = n as f64;
                let p2 = ((2.0 * nf - 1.0) * u * p1 - (nf - 1.0) * p0) / nf;
                p0 = p1;
                p1 = p2;
                let expected = (2.0 * nf + 1.0).sqrt() * p1;
                assert!((Family::Legendre.eval(n, u) - expected).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn orthonormality_up_to_degree_20() {
        let p = 20;
        let (x, w) = gauss_legendre(64);
        let (xh, wh) = gauss_hermite_prob(64);
        for (fam, nodes, weights, scale) in [
            (Family::Legendre, &x, &w, 0.5),
            (Family::Hermite, &xh, &wh, 1.0),
        ] {
            let vals: Vec<Vec<f64>> = nodes
                .iter()
                .map(|&u| {
                    let mut b = vec![0.0; p + 1];
                    fam.eval_all(p, u, &mut b);
                    b
                })
                .collect();
            for j in 0..=p {
                for k in 0..=p {
                    let g: f64 = (0..nodes.len())
                        .map(|q| scale * weights[q] * vals[q][j] * vals[q][k])
                        .sum();
                    let delta = if j == k { 1.0 } else { 0.0 };
                    assert!((g - delta).abs() < 1e-10, "{fam:?} ({j},{k}) -> {g}");
                }
            }
        }
    }
}
