//! Independent random inputs, the map to standard space and experimental
//! design sampling.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Offsets added to a master seed to derive per-purpose streams.
pub mod seeds {
    pub const DESIGN: u64 = 0;
    pub const VALIDATION: u64 = 1;
    pub const SURROGATE_MOMENTS: u64 = 2;

    /// Derives the sub-seed for `purpose` from `master`.
    pub fn derive(master: u64, purpose: u64) -> u64 {
        master.wrapping_add(purpose.wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }
}

/// Univariate marginal of one input parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Marginal {
    Uniform { lower: f64, upper: f64 },
    Gaussian { mean: f64, std: f64 },
}

impl Marginal {
    pub fn uniform(lower: f64, upper: f64) -> Result<Self> {
        let m = Marginal::Uniform { lower, upper };
        m.validate()?;
        Ok(m)
    }

    pub fn gaussian(mean: f64, std: f64) -> Result<Self> {
        let m = Marginal::Gaussian { mean, std };
        m.validate()?;
        Ok(m)
    }

    /// Uniform marginal given by its mean and standard deviation.
    pub fn uniform_from_moments(mean: f64, std: f64) -> Result<Self> {
        let half = std * 3f64.sqrt();
        Self::uniform(mean - half, mean + half)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Marginal::Uniform { lower, upper } => {
                if !(lower.is_finite() && upper.is_finite() && lower < upper) {
                    return Err(Error::InvalidMarginal(format!(
                        "uniform bounds must satisfy lower < upper, got [{lower}, {upper}]"
                    )));
                }
            }
            Marginal::Gaussian { mean, std } => {
                if !(mean.is_finite() && std.is_finite() && std > 0.0) {
                    return Err(Error::InvalidMarginal(format!(
                        "gaussian needs finite mean and std > 0, got ({mean}, {std})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Marginal::Uniform { lower, upper } => 0.5 * (lower + upper),
            Marginal::Gaussian { mean, .. } => mean,
        }
    }

    /// Maps a physical value to standard space: `[-1, 1]` for uniform
    /// marginals, the standard normal for gaussian ones.
    pub fn standardize(&self, x: f64) -> Result<f64> {
        self.standardize_coordinate(0, x)
    }

    pub(crate) fn standardize_coordinate(&self, coordinate: usize, x: f64) -> Result<f64> {
        match *self {
            Marginal::Uniform { lower, upper } => {
                if !(x >= lower && x <= upper) {
                    return Err(Error::OutOfSupport {
                        coordinate,
                        value: x,
                        lower,
                        upper,
                    });
                }
                Ok(((2.0 * x - (lower + upper)) / (upper - lower)).clamp(-1.0, 1.0))
            }
            Marginal::Gaussian { mean, std } => {
                if !x.is_finite() {
                    return Err(Error::OutOfSupport {
                        coordinate,
                        value: x,
                        lower: f64::NEG_INFINITY,
                        upper: f64::INFINITY,
                    });
                }
                Ok((x - mean) / std)
            }
        }
    }

    pub fn destandardize(&self, u: f64) -> f64 {
        match *self {
            Marginal::Uniform { lower, upper } => 0.5 * ((lower + upper) + u * (upper - lower)),
            Marginal::Gaussian { mean, std } => mean + std * u,
        }
    }

    /// Inverse CDF at probability `q` in (0, 1).
    pub fn quantile(&self, q: f64) -> f64 {
        match *self {
            Marginal::Uniform { lower, upper } => lower + q * (upper - lower),
            Marginal::Gaussian { mean, std } => {
                let z = Normal::standard().inverse_cdf(q);
                mean + std * z
            }
        }
    }
}

/// Vector of mutually independent marginals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomVector {
    marginals: Vec<Marginal>,
}

impl RandomVector {
    pub fn new(marginals: Vec<Marginal>) -> Result<Self> {
        if marginals.is_empty() {
            return Err(Error::InvalidArgument(
                "a random vector needs at least one marginal".into(),
            ));
        }
        for m in &marginals {
            m.validate()?;
        }
        Ok(Self { marginals })
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    pub fn marginals(&self) -> &[Marginal] {
        &self.marginals
    }

    pub fn mean(&self) -> Vec<f64> {
        self.marginals.iter().map(Marginal::mean).collect()
    }

    pub fn standardize(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        self.marginals
            .iter()
            .zip(x)
            .enumerate()
            .map(|(j, (m, &v))| m.standardize_coordinate(j, v))
            .collect()
    }

    pub fn destandardize(&self, u: &[f64]) -> Vec<f64> {
        self.marginals
            .iter()
            .zip(u)
            .map(|(m, &v)| m.destandardize(v))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingScheme {
    MonteCarlo,
    LatinHypercube,
}

/// Input sample in physical and standardized coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub physical: Array2<f64>,
    pub standardized: Array2<f64>,
    pub seed: u64,
    pub scheme: SamplingScheme,
}

impl DesignMatrix {
    /// Builds a design from given physical points.
    pub fn from_physical(
        rv: &RandomVector,
        physical: Array2<f64>,
        seed: u64,
        scheme: SamplingScheme,
    ) -> Result<Self> {
        if physical.ncols() != rv.dim() {
            return Err(Error::DimensionMismatch {
                expected: rv.dim(),
                actual: physical.ncols(),
            });
        }
        let mut standardized = Array2::zeros(physical.raw_dim());
        for (i, row) in physical.rows().into_iter().enumerate() {
            for (j, (&x, m)) in row.iter().zip(rv.marginals()).enumerate() {
                standardized[[i, j]] = m.standardize_coordinate(j, x)?;
            }
        }
        Ok(Self {
            physical,
            standardized,
            seed,
            scheme,
        })
    }

    pub fn len(&self) -> usize {
        self.physical.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.physical.ncols()
    }

    pub fn physical_row(&self, i: usize) -> Vec<f64> {
        self.physical.row(i).to_vec()
    }

    pub fn standardized_row(&self, i: usize) -> Vec<f64> {
        self.standardized.row(i).to_vec()
    }
}

/// Draws `n` points from `rv`. Deterministic in `(rv, n, scheme, seed)`.
pub fn sample_design(
    rv: &RandomVector,
    n: usize,
    scheme: SamplingScheme,
    seed: u64,
) -> Result<DesignMatrix> {
    if n == 0 {
        return Err(Error::InvalidArgument("design size must be at least 1".into()));
    }
    let m = rv.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probs = Array2::<f64>::zeros((n, m));
    match scheme {
        SamplingScheme::MonteCarlo => {
            for i in 0..n {
                for j in 0..m {
                    probs[[i, j]] = open_unit(&mut rng);
                }
            }
        }
        SamplingScheme::LatinHypercube => {
            let mut strata: Vec<usize> = (0..n).collect();
            for j in 0..m {
                strata.shuffle(&mut rng);
                for (i, &s) in strata.iter().enumerate() {
                    let q = (s as f64 + open_unit(&mut rng)) / n as f64;
                    probs[[i, j]] = q;
                }
            }
        }
    }
    let mut physical = Array2::zeros((n, m));
    let mut standardized = Array2::zeros((n, m));
    for i in 0..n {
        for (j, marginal) in rv.marginals().iter().enumerate() {
            let x = marginal.quantile(probs[[i, j]]);
            physical[[i, j]] = x;
            standardized[[i, j]] = marginal.standardize_coordinate(j, x)?;
        }
    }
    Ok(DesignMatrix {
        physical,
        standardized,
        seed,
        scheme,
    })
}

/// Uniform draw in the open interval (0, 1).
fn open_unit<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn standardize_examples() {
        let u = Marginal::uniform(-1.0, 1.0).unwrap();
        assert_eq!(u.standardize(0.3).unwrap(), 0.3);
        let u = Marginal::uniform(2.0, 4.0).unwrap();
        assert_eq!(u.standardize(3.0).unwrap(), 0.0);
        let g = Marginal::gaussian(104.0, 1.04).unwrap();
        assert!((g.standardize(105.04).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_support_names_coordinate() {
        let rv = RandomVector::new(vec![
            Marginal::uniform(0.0, 1.0).unwrap(),
            Marginal::uniform(0.0, 1.0).unwrap(),
        ])
        .unwrap();
        match rv.standardize(&[0.5, 1.5]) {
            Err(Error::OutOfSupport { coordinate, .. }) => assert_eq!(coordinate, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_marginals_rejected() {
        assert!(Marginal::uniform(1.0, 1.0).is_err());
        assert!(Marginal::gaussian(0.0, 0.0).is_err());
        assert!(RandomVector::new(vec![]).is_err());
    }

    #[test]
    fn design_support_and_determinism() {
        let rv = RandomVector::new(vec![Marginal::uniform(-1.0, 1.0).unwrap()]).unwrap();
        for scheme in [SamplingScheme::MonteCarlo, SamplingScheme::LatinHypercube] {
            let d = sample_design(&rv, 50, scheme, 7).unwrap();
            assert_eq!(d.standardized.dim(), (50, 1));
            assert!(d.standardized.iter().all(|u| (-1.0..=1.0).contains(u)));
            let again = sample_design(&rv, 50, scheme, 7).unwrap();
            assert_eq!(d, again);
        }
        assert!(sample_design(&rv, 0, SamplingScheme::MonteCarlo, 0).is_err());
    }

    #[test]
    fn latin_hypercube_one_point_per_stratum() {
        let rv = RandomVector::new(vec![Marginal::uniform(0.0, 1.0).unwrap()]).unwrap();
        let d = sample_design(&rv, 4, SamplingScheme::LatinHypercube, 3).unwrap();
        let mut strata: Vec<usize> = d.physical.iter().map(|x| (x * 4.0) as usize).collect();
        strata.sort_unstable();
        assert_eq!(strata, vec![0, 1, 2, 3]);
    }

    #[test]
    fn monte_carlo_mean_within_five_standard_errors() {
        let (a, b) = (2.0, 5.0);
        let rv = RandomVector::new(vec![Marginal::uniform(a, b).unwrap()]).unwrap();
        let n = 100_000;
        let d = sample_design(&rv, n, SamplingScheme::MonteCarlo, 11).unwrap();
        let mean = d.physical.sum() / n as f64;
        let se = (b - a) / 12f64.sqrt() / (n as f64).sqrt();
        assert!((mean - 0.5 * (a + b)).abs() < 5.0 * se);
    }

    proptest! {
        #[test]
        fn round_trip(x in -10.0f64..10.0, mean in -5.0f64..5.0, std in 0.01f64..3.0) {
            let g = Marginal::gaussian(mean, std).unwrap();
            let back = g.destandardize(g.standardize(x).unwrap());
            prop_assert!((back - x).abs() <= 1e-12 * x.abs().max(1.0));
            let u = Marginal::uniform(-10.0, 10.0 + std).unwrap();
            let back = u.destandardize(u.standardize(x).unwrap());
            prop_assert!((back - x).abs() <= 1e-12 * x.abs().max(1.0));
        }

        #[test]
        fn lhs_stratified_every_dimension(n in 1usize..40, seed in 0u64..1000) {
            let rv = RandomVector::new(vec![
                Marginal::uniform(0.0, 1.0).unwrap(),
                Marginal::uniform(0.0, 1.0).unwrap(),
                Marginal::uniform(0.0, 1.0).unwrap(),
            ]).unwrap();
            let d = sample_design(&rv, n, SamplingScheme::LatinHypercube, seed).unwrap();
            for col in d.physical.columns() {
                let mut s: Vec<usize> = col.iter().map(|x| (x * n as f64) as usize).collect();
                s.sort_unstable();
                prop_assert_eq!(s, (0..n).collect::<Vec<_>>());
            }
        }
    }
}
