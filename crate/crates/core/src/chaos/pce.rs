//! Sparse polynomial chaos expansions: degree-adaptive fitting, prediction
//! and moments.

use serde::{Deserialize, Serialize};

use std::sync::OnceLock;

use super::basis::{BasisSet, MultiIndex};
use super::lars::{hybrid_lars, PathBest, Regressors};
use super::loo::sample_variance;
use super::poly::Family;
use crate::error::{Error, Result};

/// Settings of the degree-adaptive sparse fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Largest total degree tried.
    pub max_degree: usize,
    /// Candidates with more than `floor(size_guard * n)` terms are skipped.
    pub size_guard: f64,
    /// Stop the degree loop after this many consecutive degrees without
    /// improvement over the best model so far.
    pub early_stop: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_degree: 20,
            size_guard: 0.9,
            early_stop: 2,
        }
    }
}

impl FitOptions {
    pub fn with_max_degree(max_degree: usize) -> Self {
        Self {
            max_degree,
            ..Self::default()
        }
    }
}

/// A fitted sparse expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsePce {
    pub basis: BasisSet,
    pub coefficients: Vec<f64>,
    pub loo_abs: f64,
    pub loo_norm: f64,
    pub sample_variance: f64,
    /// Total degree of the candidate set the model was selected from.
    pub degree: usize,
    /// Set when the training targets were all identical.
    #[serde(default)]
    pub zero_variance: bool,
}

impl SparsePce {
    /// Constant model `c`.
    pub fn constant(families: Vec<Family>, c: f64) -> Self {
        let dim = families.len();
        Self {
            basis: BasisSet {
                families,
                indices: vec![MultiIndex::zero(dim)],
            },
            coefficients: vec![c],
            loo_abs: 0.0,
            loo_norm: 0.0,
            sample_variance: 0.0,
            degree: 0,
            zero_variance: true,
        }
    }

    /// Model from an explicit basis and coefficients (no error estimates).
    pub fn from_terms(basis: BasisSet, coefficients: Vec<f64>) -> Result<Self> {
        if basis.len() != coefficients.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                actual: coefficients.len(),
            });
        }
        let degree = basis.indices.iter().map(MultiIndex::total_degree).max().unwrap_or(0);
        Ok(Self {
            basis,
            coefficients,
            loo_abs: 0.0,
            loo_norm: 0.0,
            sample_variance: 0.0,
            degree,
            zero_variance: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn predict(&self, u: &[f64]) -> Result<f64> {
        let row = self.basis.eval_row(u)?;
        Ok(row.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum())
    }

    /// Mean and variance from the coefficients.
    pub fn moments(&self) -> (f64, f64) {
        let mut mean = 0.0;
        let mut var = 0.0;
        for (a, c) in self.basis.indices.iter().zip(&self.coefficients) {
            if a.is_zero() {
                mean += c;
            } else {
                var += c * c;
            }
        }
        (mean, var)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Evaluates `model` at the standardized point `u`.
pub fn pce_predict(model: &SparsePce, u: &[f64]) -> Result<f64> {
    model.predict(u)
}

/// `(mean, variance)` of the expansion under its input measure.
pub fn pce_moments(model: &SparsePce) -> (f64, f64) {
    model.moments()
}

/// Experimental design in standardized space. Candidate matrices are built
/// lazily per degree and shared by every fit on the same points, e.g. one
/// fit per time instant.
#[derive(Debug)]
pub struct PceDesign {
    families: Vec<Family>,
    points: Vec<Vec<f64>>,
    blocks: Vec<OnceLock<Candidates>>,
}

#[derive(Debug)]
struct Candidates {
    indices: Vec<MultiIndex>,
    regressors: Regressors,
}

impl PceDesign {
    pub fn new(families: Vec<Family>, points: Vec<Vec<f64>>, max_degree: usize) -> Result<Self> {
        let dim = families.len();
        if let Some(bad) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: bad.len(),
            });
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite design point".into()));
        }
        Ok(Self {
            families,
            points,
            blocks: (0..=max_degree).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn families(&self) -> &[Family] {
        &self.families
    }

    pub fn max_degree(&self) -> usize {
        self.blocks.len() - 1
    }

    fn candidates(&self, p: usize) -> Result<&Candidates> {
        if let Some(c) = self.blocks[p].get() {
            return Ok(c);
        }
        let basis = BasisSet::total_degree(self.families.clone(), p);
        let a = basis.information_matrix(&self.points)?;
        let built = Candidates {
            regressors: Regressors::new(&a, self.points.len()),
            indices: basis.indices,
        };
        Ok(self.blocks[p].get_or_init(|| built))
    }

    /// Degree-adaptive hybrid-LARS fit of the targets `y`.
    pub fn fit(&self, y: &[f64], opts: &FitOptions) -> Result<SparsePce> {
        let n = self.points.len();
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: y.len(),
            });
        }
        if n < 3 {
            return Err(Error::InvalidArgument(format!(
                "sparse fit needs at least 3 samples, got {n}"
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite target".into()));
        }
        let first = y[0];
        if y.iter().all(|&v| v == first) {
            return Ok(SparsePce::constant(self.families.clone(), first));
        }
        let variance = sample_variance(y);
        let max_terms = (opts.size_guard * n as f64).floor() as usize;
        if max_terms < 1 {
            return Err(Error::NoCandidate);
        }
        let top = opts.max_degree.min(self.max_degree());

        let mut best: Option<SparsePce> = None;
        let mut stale = 0usize;
        for p in 0..=top {
            let cand = self.candidates(p)?;
            let Some(path) = hybrid_lars(&cand.regressors, y, max_terms) else {
                continue;
            };
            let better = best.as_ref().is_none_or(|b| path.loo_abs < b.loo_abs);
            if better {
                best = Some(self.assemble(cand, &path, variance, p));
                stale = 0;
            } else {
                stale += 1;
                if stale >= opts.early_stop {
                    break;
                }
            }
        }
        best.ok_or(Error::NoCandidate)
    }

    fn assemble(&self, cand: &Candidates, path: &PathBest, variance: f64, degree: usize) -> SparsePce {
        // Active terms in candidate (graded) order, constant first.
        let mut terms: Vec<(usize, f64)> = std::iter::once((0, path.coefficients[0]))
            .chain(path.active.iter().copied().zip(path.coefficients[1..].iter().copied()))
            .collect();
        terms.sort_by_key(|t| t.0);
        SparsePce {
            basis: BasisSet {
                families: self.families.clone(),
                indices: terms.iter().map(|&(j, _)| cand.indices[j].clone()).collect(),
            },
            coefficients: terms.iter().map(|&(_, c)| c).collect(),
            loo_abs: path.loo_abs,
            loo_norm: if variance > 0.0 { path.loo_abs / variance } else { 0.0 },
            sample_variance: variance,
            degree,
            zero_variance: false,
        }
    }
}

/// Degree-adaptive hybrid-LARS fit on standardized points `u` with
/// targets `y`.
pub fn fit_sparse_pce(
    families: &[Family],
    u: &[Vec<f64>],
    y: &[f64],
    opts: &FitOptions,
) -> Result<SparsePce> {
    if y.len() != u.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            actual: y.len(),
        });
    }
    PceDesign::new(families.to_vec(), u.to_vec(), opts.max_degree)?.fit(y, opts)
}
