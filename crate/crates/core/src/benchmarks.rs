//! Default settings of the five benchmark studies.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::odes::ModelKind;
use crate::prob::Marginal;
use crate::warp::WarpForm;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub kind: ModelKind,
    pub marginals: Vec<Marginal>,
    pub dt: f64,
    /// Prediction and validation horizon.
    pub horizon: f64,
    /// Horizon of the training simulations of the warping pipeline.
    pub train_horizon: f64,
    pub n_design: usize,
    /// Design size of the time-frozen baseline.
    pub n_frozen: usize,
    pub warp_form: WarpForm,
    pub epsilon_target: f64,
    pub p_max: usize,
    /// Degree cap of the time-frozen baseline; lowered where the number of
    /// inputs and the design size make degree-20 candidate sets too costly
    /// to fit at every instant.
    pub p_max_frozen: usize,
}

fn uniform(lower: f64, upper: f64) -> Marginal {
    Marginal::Uniform { lower, upper }
}

/// Uniform marginal with the given mean and standard deviation.
fn uniform_ms(mean: f64, std: f64) -> Marginal {
    let h = std * 3f64.sqrt();
    Marginal::Uniform {
        lower: mean - h,
        upper: mean + h,
    }
}

impl Benchmark {
    pub fn for_kind(kind: ModelKind) -> Self {
        match kind {
            ModelKind::RigidBody => Self {
                kind,
                marginals: vec![uniform(-1.0, 1.0)],
                dt: 0.01,
                horizon: 50.0,
                train_horizon: 200.0,
                n_design: 50,
                n_frozen: 50,
                warp_form: WarpForm::ScaleOnly,
                epsilon_target: 1e-3,
                p_max: 20,
                p_max_frozen: 20,
            },
            ModelKind::KraichnanOrszag => Self {
                kind,
                marginals: vec![uniform(-1.0, 1.0)],
                dt: 0.01,
                horizon: 50.0,
                train_horizon: 100.0,
                n_design: 50,
                n_frozen: 50,
                warp_form: WarpForm::ScaleOnly,
                epsilon_target: 1e-3,
                p_max: 20,
                p_max_frozen: 20,
            },
            ModelKind::Oregonator => Self {
                kind,
                marginals: vec![
                    uniform(1.8, 2.2),
                    uniform(0.095, 0.105),
                    Marginal::Gaussian { mean: 104.0, std: 1.04 },
                    uniform(0.0076, 0.0084),
                    uniform(23.4, 28.6),
                ],
                dt: 0.01,
                horizon: 40.0,
                train_horizon: 60.0,
                n_design: 50,
                n_frozen: 500,
                warp_form: WarpForm::ScaleShift,
                epsilon_target: 1e-2,
                p_max: 20,
                p_max_frozen: 5,
            },
            ModelKind::BoucWen => Self {
                kind,
                marginals: vec![
                    uniform_ms(0.02, 0.002),
                    uniform_ms(2.0 * PI, 0.2 * PI),
                    uniform_ms(50.0, 5.0),
                    uniform_ms(1.0, 0.1),
                    uniform_ms(PI, 0.1 * PI),
                ],
                dt: 0.005,
                horizon: 30.0,
                train_horizon: 50.0,
                n_design: 100,
                n_frozen: 100,
                warp_form: WarpForm::ScaleOnly,
                epsilon_target: 1e-3,
                p_max: 20,
                p_max_frozen: 6,
            },
            ModelKind::Duffing => Self {
                kind,
                marginals: vec![uniform(0.015, 0.045), uniform(PI, 3.0 * PI), uniform(-0.75, -0.25)],
                dt: 0.005,
                horizon: 10.0,
                train_horizon: 40.0,
                n_design: 50,
                n_frozen: 200,
                warp_form: WarpForm::ScaleShift,
                epsilon_target: 1e-3,
                p_max: 20,
                p_max_frozen: 10,
            },
        }
    }

    pub fn all() -> Vec<Self> {
        [
            ModelKind::RigidBody,
            ModelKind::KraichnanOrszag,
            ModelKind::Oregonator,
            ModelKind::BoucWen,
            ModelKind::Duffing,
        ]
        .into_iter()
        .map(Self::for_kind)
        .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tabulated_moments() {
        let b = Benchmark::for_kind(ModelKind::BoucWen);
        for (m, (mean, std)) in b.marginals.iter().zip([
            (0.02, 0.002),
            (2.0 * PI, 0.2 * PI),
            (50.0, 5.0),
            (1.0, 0.1),
            (PI, 0.1 * PI),
        ]) {
            let Marginal::Uniform { lower, upper } = *m else { panic!() };
            assert!(((lower + upper) / 2.0 - mean).abs() < 1e-12 * mean);
            assert!(((upper - lower) / 12f64.sqrt() - std).abs() < 1e-12 * std);
        }
        let o = Benchmark::for_kind(ModelKind::Oregonator);
        let Marginal::Uniform { lower, upper } = o.marginals[0] else { panic!() };
        assert!(((upper - lower) / 12f64.sqrt() - 0.2 / 3f64.sqrt()).abs() < 1e-12);
        let d = Benchmark::for_kind(ModelKind::Duffing);
        let Marginal::Uniform { lower, upper } = d.marginals[1] else { panic!() };
        assert!(((upper - lower) / 12f64.sqrt() - PI / 3f64.sqrt()).abs() < 1e-12);
        for b in Benchmark::all() {
            assert_eq!(b.marginals.len(), b.kind.param_dim());
            assert!(b.train_horizon >= b.horizon);
        }
    }
}
