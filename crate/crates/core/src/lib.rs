//! Polynomial chaos surrogates of uncertain oscillatory dynamical systems,
//! with instant-wise ("time-frozen") expansions and stochastic time warping.

pub mod benchmarks;
pub mod chaos;
pub mod compress;
pub mod error;
pub mod odes;
pub mod par;
pub mod prob;
pub mod surrogate;
pub mod warp;

pub use error::{Error, Result};
pub use par::is_parallel;
