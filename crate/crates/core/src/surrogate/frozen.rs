//! Instant-wise ("time-frozen") sparse PCE surrogates.

use serde::{Deserialize, Serialize};

use crate::chaos::{FitOptions, Family, PceDesign, SparsePce};
use crate::error::{Error, Result};
use crate::odes::{Ensemble, TimeGrid, Trajectory};
use crate::par;
use crate::prob::RandomVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeFrozenSurrogate {
    pub rv: RandomVector,
    pub grid: TimeGrid,
    pub models: Vec<SparsePce>,
}

pub(crate) fn families(rv: &RandomVector) -> Vec<Family> {
    rv.marginals().iter().map(Family::for_marginal).collect()
}

pub(crate) fn standardized_points(ensemble: &Ensemble) -> Vec<Vec<f64>> {
    (0..ensemble.design.len())
        .map(|i| ensemble.design.standardized_row(i))
        .collect()
}

/// One sparse fit per instant of `ensemble`, all sharing the candidate
/// matrices of the design.
pub fn fit_time_frozen(rv: &RandomVector, ensemble: &Ensemble, opts: &FitOptions) -> Result<TimeFrozenSurrogate> {
    if ensemble.design.dim() != rv.dim() {
        return Err(Error::DimensionMismatch {
            expected: rv.dim(),
            actual: ensemble.design.dim(),
        });
    }
    if ensemble.trajectories.nrows() != ensemble.design.len() {
        return Err(Error::DimensionMismatch {
            expected: ensemble.design.len(),
            actual: ensemble.trajectories.nrows(),
        });
    }
    let design = PceDesign::new(families(rv), standardized_points(ensemble), opts.max_degree)?;
    let models = par::try_map_range(ensemble.grid.len(), |j| {
        let y: Vec<f64> = ensemble.trajectories.column(j).to_vec();
        design.fit(&y, opts).map_err(|e| e.at_instant(j))
    })?;
    Ok(TimeFrozenSurrogate {
        rv: rv.clone(),
        grid: ensemble.grid,
        models,
    })
}

impl TimeFrozenSurrogate {
    pub fn predict(&self, xi: &[f64]) -> Result<Trajectory> {
        let u = self.rv.standardize(xi)?;
        let values = self
            .models
            .iter()
            .map(|m| m.predict(&u))
            .collect::<Result<Vec<f64>>>()?;
        Trajectory::new(self.grid, values)
    }

    /// Mean and standard deviation per instant from the coefficients.
    pub fn moments(&self) -> (Vec<f64>, Vec<f64>) {
        self.models
            .iter()
            .map(|m| {
                let (mean, var) = m.moments();
                (mean, var.sqrt())
            })
            .unzip()
    }

    pub fn loo_norms(&self) -> Vec<f64> {
        self.models.iter().map(|m| m.loo_norm).collect()
    }
}

/// See [`TimeFrozenSurrogate::predict`].
pub fn predict_time_frozen(surrogate: &TimeFrozenSurrogate, xi: &[f64]) -> Result<Trajectory> {
    surrogate.predict(xi)
}

/// See [`TimeFrozenSurrogate::moments`].
pub fn moments_time_frozen(surrogate: &TimeFrozenSurrogate) -> (Vec<f64>, Vec<f64>) {
    surrogate.moments()
}
