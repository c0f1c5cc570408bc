//! Multi-indices, total-degree truncation and tensor-product evaluation.

use serde::{Deserialize, Serialize};

use super::poly::Family;
use crate::error::{Error, Result};

/// Degrees of the univariate factors of one multivariate polynomial.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn zero(dim: usize) -> Self {
        MultiIndex(vec![0; dim])
    }

    pub fn total_degree(&self) -> usize {
        self.0.iter().map(|&a| a as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&a| a == 0)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn max_degree(&self) -> usize {
        self.0.iter().copied().max().unwrap_or(0) as usize
    }
}

/// All multi-indices with total degree at most `p`, graded by degree and
/// ordered within a degree by descending leading components.
pub fn total_degree_set(dim: usize, p: usize) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    let mut buf = vec![0u32; dim];
    for d in 0..=p {
        compositions(d, 0, &mut buf, &mut out);
    }
    out
}

fn compositions(remaining: usize, pos: usize, buf: &mut [u32], out: &mut Vec<MultiIndex>) {
    if pos + 1 == buf.len() {
        buf[pos] = remaining as u32;
        out.push(MultiIndex(buf.to_vec()));
        return;
    }
    for a in (0..=remaining).rev() {
        buf[pos] = a as u32;
        compositions(remaining - a, pos + 1, buf, out);
    }
    buf[pos] = 0;
}

/// Families per input dimension plus an ordered list of multi-indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSet {
    pub families: Vec<Family>,
    pub indices: Vec<MultiIndex>,
}

impl BasisSet {
    pub fn new(families: Vec<Family>, indices: Vec<MultiIndex>) -> Result<Self> {
        let dim = families.len();
        if let Some(bad) = indices.iter().find(|a| a.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: bad.dim(),
            });
        }
        let mut seen = std::collections::HashSet::with_capacity(indices.len());
        for a in &indices {
            if !seen.insert(a) {
                return Err(Error::InvalidArgument(format!("duplicate multi-index {:?}", a.0)));
            }
        }
        if !indices.is_empty() && !indices.iter().any(MultiIndex::is_zero) {
            return Err(Error::InvalidArgument(
                "a non-empty basis must contain the constant term".into(),
            ));
        }
        Ok(Self { families, indices })
    }

    pub fn total_degree(families: Vec<Family>, p: usize) -> Self {
        let indices = total_degree_set(families.len(), p);
        Self { families, indices }
    }

    pub fn dim(&self) -> usize {
        self.families.len()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    fn max_degree(&self) -> usize {
        self.indices.iter().map(MultiIndex::max_degree).max().unwrap_or(0)
    }

    /// Per-dimension tables `table[j][d] = psi_d(u_j)`.
    fn univariate_table(&self, u: &[f64], max_deg: usize) -> Vec<Vec<f64>> {
        self.families
            .iter()
            .zip(u)
            .map(|(fam, &x)| {
                let mut row = vec![0.0; max_deg + 1];
                fam.eval_all(max_deg, x, &mut row);
                row
            })
            .collect()
    }

    /// Row of basis evaluations at the standardized point `u`.
    pub fn eval_row(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: u.len(),
            });
        }
        let table = self.univariate_table(u, self.max_degree());
        Ok(self
            .indices
            .iter()
            .map(|a| {
                a.0.iter()
                    .zip(&table)
                    .map(|(&d, row)| row[d as usize])
                    .product::<f64>()
            })
            .collect())
    }

    /// Column-major information matrix: entry `(i, j)` is at
    /// `j * n + i` for `n` sample points.
    pub fn information_matrix(&self, points: &[Vec<f64>]) -> Result<Vec<f64>> {
        let n = points.len();
        let max_deg = self.max_degree();
        let mut out = vec![0.0; n * self.len()];
        for (i, u) in points.iter().enumerate() {
            if u.len() != self.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.dim(),
                    actual: u.len(),
                });
            }
            let table = self.univariate_table(u, max_deg);
            for (j, a) in self.indices.iter().enumerate() {
                let mut v = 1.0;
                for (&d, row) in a.0.iter().zip(&table) {
                    if d != 0 {
                        v *= row[d as usize];
                    }
                }
                out[j * n + i] = v;
            }
        }
        Ok(out)
    }
}

/// Tensor-product evaluation, see [`BasisSet::eval_row`].
pub fn eval_basis_row(basis: &BasisSet, u: &[f64]) -> Result<Vec<f64>> {
    basis.eval_row(u)
}
