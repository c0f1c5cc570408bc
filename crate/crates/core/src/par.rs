//! Data-parallel helpers.
//!
//! With the `parallel` feature the maps below run on the rayon global pool;
//! without it they fall back to plain sequential iteration. Output order is
//! the index order in both cases, so results do not depend on the backend.

use crate::error::Result;

/// `(0..n).map(f).collect()`, parallel when the feature is enabled.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Fallible variant of [`map_range`]. The error reported is the one with
/// the smallest index.
pub fn try_map_range<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let results = map_range(n, f);
    results.into_iter().collect()
}

/// Whether the crate was compiled with the rayon backend.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
