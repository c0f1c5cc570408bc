//! Orthonormal polynomial bases and sparse polynomial chaos expansions.

pub mod basis;
mod lars;
pub mod loo;
pub mod pce;
pub mod poly;

pub use basis::{eval_basis_row, total_degree_set, BasisSet, MultiIndex};
pub use loo::{loo_error, sample_variance, LooError};
pub use pce::{fit_sparse_pce, pce_moments, pce_predict, FitOptions, PceDesign, SparsePce};
pub use poly::{eval_univariate, Family};
