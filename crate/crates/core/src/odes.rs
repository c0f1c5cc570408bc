//! Benchmark dynamical systems and an adaptive Dormand–Prince integrator
//! sampled on uniform output grids.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::prob::DesignMatrix;

/// Largest state dimension among the benchmark systems.
pub const MAX_STATE: usize = 3;

type State = [f64; MAX_STATE];

/// Uniform time grid `t_j = j * dt`, `j = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub dt: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, steps: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) || steps == 0 {
            return Err(Error::InvalidArgument(format!(
                "time grid needs dt > 0 and at least one step, got dt = {dt}, steps = {steps}"
            )));
        }
        Ok(Self { dt, steps })
    }

    /// Grid with step `dt` covering `[0, horizon]`.
    pub fn with_horizon(dt: f64, horizon: f64) -> Result<Self> {
        let steps = (horizon / dt).round() as usize;
        Self::new(dt, steps)
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.dt
    }

    pub fn end(&self) -> f64 {
        self.time(self.steps)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.time(j)).collect()
    }

    /// Index of the instant closest to `t`, clamped to the grid.
    pub fn index_of(&self, t: f64) -> usize {
        ((t / self.dt).round().max(0.0) as usize).min(self.steps)
    }
}

/// Scalar series on a uniform grid. Only a prefix of the grid may be
/// present: `values.len() <= grid.len()`, later instants are absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
}

impl Trajectory {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() > grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                actual: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    /// Number of present instants.
    pub fn present(&self) -> usize {
        self.values.len()
    }

    pub fn is_complete(&self) -> bool {
        self.values.len() == self.grid.len()
    }

    /// Time of the last present instant.
    pub fn last_time(&self) -> Option<f64> {
        self.values.len().checked_sub(1).map(|j| self.grid.time(j))
    }

    /// Linear interpolation at `t`; `None` outside the present span.
    pub fn interpolate(&self, t: f64) -> Option<f64> {
        let last = self.last_time()?;
        if !(t >= 0.0 && t <= last) {
            return None;
        }
        let x = t / self.grid.dt;
        let j = (x.floor() as usize).min(self.values.len() - 1);
        if j + 1 >= self.values.len() {
            return Some(self.values[j]);
        }
        let w = x - j as f64;
        Some(self.values[j] + w * (self.values[j + 1] - self.values[j]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    RigidBody,
    KraichnanOrszag,
    Oregonator,
    BoucWen,
    Duffing,
}

impl ModelKind {
    pub fn state_dim(self) -> usize {
        match self {
            ModelKind::Duffing => 2,
            _ => 3,
        }
    }

    pub fn param_dim(self) -> usize {
        match self {
            ModelKind::RigidBody | ModelKind::KraichnanOrszag => 1,
            ModelKind::Oregonator | ModelKind::BoucWen => 5,
            ModelKind::Duffing => 3,
        }
    }

    pub fn default_observable(self) -> usize {
        0
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::RigidBody => "rigid_body",
            ModelKind::KraichnanOrszag => "kraichnan_orszag",
            ModelKind::Oregonator => "oregonator",
            ModelKind::BoucWen => "bouc_wen",
            ModelKind::Duffing => "duffing",
        }
    }
}

/// A benchmark system together with the state component it reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeModel {
    pub kind: ModelKind,
    pub observable: usize,
}

impl OdeModel {
    pub fn new(kind: ModelKind, observable: usize) -> Result<Self> {
        if observable >= kind.state_dim() {
            return Err(Error::InvalidArgument(format!(
                "observable {observable} out of range for {} (state dimension {})",
                kind.name(),
                kind.state_dim()
            )));
        }
        Ok(Self { kind, observable })
    }

    pub fn with_default_observable(kind: ModelKind) -> Self {
        Self {
            kind,
            observable: kind.default_observable(),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.kind.state_dim()
    }

    pub fn param_dim(&self) -> usize {
        self.kind.param_dim()
    }

    pub fn initial_state(&self, xi: &[f64]) -> Result<Vec<f64>> {
        self.check_params(xi)?;
        Ok(match self.kind {
            ModelKind::RigidBody => vec![0.0, 1.0, 1.0],
            ModelKind::KraichnanOrszag => vec![0.99 + 0.01 * xi[0], 1.0, 1.0],
            ModelKind::Oregonator => vec![6000.0, 6000.0, 6000.0],
            ModelKind::BoucWen => vec![0.0, 0.0, 0.0],
            ModelKind::Duffing => vec![1.0, 0.0],
        })
    }

    fn check_params(&self, xi: &[f64]) -> Result<()> {
        if xi.len() != self.param_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.param_dim(),
                actual: xi.len(),
            });
        }
        Ok(())
    }

    /// Right-hand side `dy/dt = f(y, xi, t)`.
    pub fn evaluate_rhs(&self, xi: &[f64], t: f64, state: &[f64]) -> Result<Vec<f64>> {
        self.check_params(xi)?;
        if state.len() != self.state_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.state_dim(),
                actual: state.len(),
            });
        }
        let mut s = [0.0; MAX_STATE];
        s[..state.len()].copy_from_slice(state);
        let d = self.rhs(xi, t, &s);
        Ok(d[..self.state_dim()].to_vec())
    }

    #[inline]
    fn rhs(&self, xi: &[f64], t: f64, s: &State) -> State {
        match self.kind {
            ModelKind::RigidBody => {
                let (x, y, z) = (s[0], s[1], s[2]);
                [y * z, xi[0] * x * z, -x * y]
            }
            ModelKind::KraichnanOrszag => {
                let (x, y, z) = (s[0], s[1], s[2]);
                [y * z, z * x, -2.0 * x * y]
            }
            ModelKind::Oregonator => {
                let (x, y, z) = (s[0], s[1], s[2]);
                let (k1, k2, k3, k4, k5) = (xi[0], xi[1], xi[2], xi[3], xi[4]);
                [
                    k1 * y - k2 * x * y + k3 * x - k4 * x * x,
                    -k1 * y - k2 * x * y + k5 * z,
                    k3 * x - k5 * z,
                ]
            }
            ModelKind::BoucWen => {
                // rho = 0, gamma = 1, n = 1, beta = 0
                let (_y, v, z) = (s[0], s[1], s[2]);
                let (zeta, omega, alpha, amp, omega_x) = (xi[0], xi[1], xi[2], xi[3], xi[4]);
                let excitation = amp * (omega_x * t).sin();
                [
                    v,
                    -2.0 * zeta * omega * v - omega * omega * z - excitation,
                    v - alpha * v.abs() * z,
                ]
            }
            ModelKind::Duffing => {
                let (y, v) = (s[0], s[1]);
                let (zeta, omega, eps) = (xi[0], xi[1], xi[2]);
                [
                    v,
                    -2.0 * omega * zeta * v - omega * omega * (y + eps * y * y * y),
                    0.0,
                ]
            }
        }
    }
}

/// Integration tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub rel: f64,
    pub abs: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rel: 1e-8,
            abs: 1e-10,
        }
    }
}

/// Full-state solution sampled on a grid: row `j` is the state at `t_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub grid: TimeGrid,
    pub states: Array2<f64>,
}

impl Solution {
    pub fn component(&self, c: usize) -> Array1<f64> {
        self.states.column(c).to_owned()
    }
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Continuous extension (Hairer, Nørsett & Wanner).
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const MAX_STEPS: usize = 50_000_000;

/// Integrates `model` at parameters `xi` and samples every state component
/// at the grid instants.
pub fn integrate(model: &OdeModel, xi: &[f64], grid: TimeGrid, tol: Tolerances) -> Result<Solution> {
    if !(tol.rel > 0.0 && tol.abs > 0.0) {
        return Err(Error::InvalidArgument("tolerances must be positive".into()));
    }
    let dim = model.state_dim();
    let y0 = model.initial_state(xi)?;
    let mut y: State = [0.0; MAX_STATE];
    y[..dim].copy_from_slice(&y0);

    let mut out = Array2::<f64>::zeros((grid.len(), dim));
    for c in 0..dim {
        out[[0, c]] = y[c];
    }
    let t_end = grid.end();
    let mut next = 1usize;

    let f = |t: f64, s: &State| model.rhs(xi, t, s);
    let err_norm = |y: &State, y_new: &State, e: &State| -> f64 {
        let mut acc = 0.0;
        for i in 0..dim {
            let sc = tol.abs + tol.rel * y[i].abs().max(y_new[i].abs());
            let r = e[i] / sc;
            acc += r * r;
        }
        (acc / dim as f64).sqrt()
    };

    let mut t = 0.0;
    let mut k1 = f(t, &y);
    let mut h = initial_step(&f, dim, t, &y, &k1, tol, t_end);
    let beta = 0.04;
    let expo1 = 0.2 - 0.75 * beta;
    let (fac_min, fac_max, safety) = (0.2, 10.0, 0.9);
    let mut err_old: f64 = 1e-4;
    let mut rejected_last = false;
    let mut steps = 0usize;

    while next < grid.len() {
        steps += 1;
        if steps > MAX_STEPS {
            return Err(Error::Integration {
                time: t,
                reason: "maximum number of steps exceeded".into(),
            });
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::Integration {
                time: t,
                reason: format!("step size underflow (h = {h:e})"),
            });
        }
        let final_step = t + 1.01 * h >= t_end;
        if final_step {
            h = t_end - t;
        }

        let mut tmp = [0.0; MAX_STATE];
        let stage = |coef: &[(f64, &State)], tmp: &mut State| {
            for i in 0..dim {
                let mut acc = y[i];
                for (c, k) in coef {
                    acc += h * c * k[i];
                }
                tmp[i] = acc;
            }
        };
        stage(&[(A21, &k1)], &mut tmp);
        let k2 = f(t + C2 * h, &tmp);
        stage(&[(A31, &k1), (A32, &k2)], &mut tmp);
        let k3 = f(t + C3 * h, &tmp);
        stage(&[(A41, &k1), (A42, &k2), (A43, &k3)], &mut tmp);
        let k4 = f(t + C4 * h, &tmp);
        stage(&[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], &mut tmp);
        let k5 = f(t + C5 * h, &tmp);
        stage(
            &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            &mut tmp,
        );
        let k6 = f(t + h, &tmp);
        let mut y_new = [0.0; MAX_STATE];
        stage(
            &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
            &mut y_new,
        );
        let k7 = f(t + h, &y_new);

        let mut e = [0.0; MAX_STATE];
        for i in 0..dim {
            e[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let err = err_norm(&y, &y_new, &e);
        if !err.is_finite() || y_new[..dim].iter().any(|v| !v.is_finite()) {
            // Treat as a rejection with a strong reduction.
            h *= fac_min;
            rejected_last = true;
            continue;
        }

        if err <= 1.0 {
            let t_new = t + h;
            // Dense output on [t, t_new].
            let mut r2 = [0.0; MAX_STATE];
            let mut r3 = [0.0; MAX_STATE];
            let mut r4 = [0.0; MAX_STATE];
            let mut r5 = [0.0; MAX_STATE];
            for i in 0..dim {
                let ydiff = y_new[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                r2[i] = ydiff;
                r3[i] = bspl;
                r4[i] = ydiff - h * k7[i] - bspl;
                r5[i] = h
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            while next < grid.len() && (final_step || grid.time(next) <= t_new) {
                let tj = grid.time(next);
                if next == grid.steps && final_step {
                    for c in 0..dim {
                        out[[next, c]] = y_new[c];
                    }
                } else {
                    let theta = ((tj - t) / h).min(1.0);
                    let theta1 = 1.0 - theta;
                    for c in 0..dim {
                        out[[next, c]] = y[c]
                            + theta * (r2[c] + theta1 * (r3[c] + theta * (r4[c] + theta1 * r5[c])));
                    }
                }
                next += 1;
            }
            t = t_new;
            y = y_new;
            k1 = k7;

            let err_c = err.max(1e-10);
            let mut fac = safety * err_c.powf(-expo1) * err_old.powf(beta);
            fac = fac.clamp(fac_min, fac_max);
            if rejected_last {
                fac = fac.min(1.0);
            }
            h *= fac;
            err_old = err_c.max(1e-4);
            rejected_last = false;
        } else {
            let fac = (safety * err.powf(-expo1)).max(fac_min);
            h *= fac;
            rejected_last = true;
        }
    }

    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Integration {
            time: t,
            reason: "non-finite state".into(),
        });
    }
    Ok(Solution { grid, states: out })
}

fn initial_step<F: Fn(f64, &State) -> State>(
    f: &F,
    dim: usize,
    t: f64,
    y: &State,
    f0: &State,
    tol: Tolerances,
    t_end: f64,
) -> f64 {
    let scale = |i: usize| tol.abs + tol.rel * y[i].abs();
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..dim {
        d0 += (y[i] / scale(i)).powi(2);
        d1 += (f0[i] / scale(i)).powi(2);
    }
    d0 = (d0 / dim as f64).sqrt();
    d1 = (d1 / dim as f64).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(t_end);
    let mut y1 = [0.0; MAX_STATE];
    for i in 0..dim {
        y1[i] = y[i] + h0 * f0[i];
    }
    let f1 = f(t + h0, &y1);
    let mut d2 = 0.0;
    for i in 0..dim {
        d2 += ((f1[i] - f0[i]) / scale(i)).powi(2);
    }
    d2 = (d2 / dim as f64).sqrt() / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(t_end)
}

/// Ensemble of observable trajectories, one row per design point.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub design: DesignMatrix,
    pub grid: TimeGrid,
    pub trajectories: Array2<f64>,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.trajectories.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn trajectory(&self, i: usize) -> Trajectory {
        Trajectory {
            grid: self.grid,
            values: self.trajectories.row(i).to_vec(),
        }
    }

    /// Restriction to the first `grid.len()` instants of a shorter grid
    /// with the same step.
    pub fn truncated(&self, grid: TimeGrid) -> Result<Ensemble> {
        if (grid.dt - self.grid.dt).abs() > 1e-15 * self.grid.dt || grid.steps > self.grid.steps {
            return Err(Error::InvalidArgument(
                "truncation grid must share the step and not exceed the ensemble horizon".into(),
            ));
        }
        Ok(Ensemble {
            design: self.design.clone(),
            grid,
            trajectories: self
                .trajectories
                .slice(ndarray::s![.., ..grid.len()])
                .to_owned(),
        })
    }
}

/// Integrates every design row and keeps the observable component.
pub fn run_ensemble(
    model: &OdeModel,
    design: &DesignMatrix,
    grid: TimeGrid,
    tol: Tolerances,
) -> Result<Ensemble> {
    if design.dim() != model.param_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.param_dim(),
            actual: design.dim(),
        });
    }
    let rows = par::try_map_range(design.len(), |i| {
        let xi = design.physical_row(i);
        integrate(model, &xi, grid, tol)
            .map(|s| s.component(model.observable))
            .map_err(|e| e.at_row(i))
    })?;
    let mut trajectories = Array2::zeros((design.len(), grid.len()));
    for (i, row) in rows.into_iter().enumerate() {
        trajectories.row_mut(i).assign(&row);
    }
    Ok(Ensemble {
        design: design.clone(),
        grid,
        trajectories,
    })
}
