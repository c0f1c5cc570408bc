//! Stochastic time warping: per-trajectory linear relabelings
//! `tau = k t + phi` that phase-align an ensemble with a reference.

mod simplex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::odes::{TimeGrid, Trajectory};
use simplex::nelder_mead;

/// Default objective-evaluation budget of [`find_warp`].
pub const DEFAULT_EVAL_BUDGET: usize = 2000;
/// Default early-time blend threshold (s).
pub const DEFAULT_T0: f64 = 0.2;
/// Default minimum overlap, as a fraction of the reference span.
pub const DEFAULT_MIN_OVERLAP: f64 = 0.5;

/// Log-spaced coarse `k` values per multistart grid (the period ratio is
/// always added).
const K_GRID: usize = 9;
/// Objective values closer than this count as ties.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarpForm {
    ScaleOnly,
    ScaleShift,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarpParams {
    pub k: f64,
    pub phi: f64,
}

impl WarpParams {
    pub const IDENTITY: WarpParams = WarpParams { k: 1.0, phi: 0.0 };
}

/// Result of a warp search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarpFit {
    pub params: WarpParams,
    pub objective: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpConfig {
    pub form: WarpForm,
    pub reference: Trajectory,
    /// Dominant period of the reference.
    pub period: f64,
    pub t0: f64,
    pub virtual_grid: TimeGrid,
    /// Explicit search interval for `k`. When absent, each trajectory is
    /// searched over `[ratio / 4, 4 ratio]` around its period ratio.
    pub k_bounds: Option<(f64, f64)>,
    pub eval_budget: usize,
    pub min_overlap: f64,
}

impl WarpConfig {
    /// Configuration with defaults; the virtual grid starts as the
    /// reference grid.
    pub fn new(form: WarpForm, reference: Trajectory) -> Result<Self> {
        if !reference.is_complete() {
            return Err(Error::InvalidArgument("reference trajectory has absent instants".into()));
        }
        let period = dominant_period(&reference.values, reference.grid.dt).ok_or_else(|| {
            Error::InvalidArgument("reference trajectory has no dominant period".into())
        })?;
        Ok(Self {
            form,
            virtual_grid: reference.grid,
            reference,
            period,
            t0: DEFAULT_T0,
            k_bounds: None,
            eval_budget: DEFAULT_EVAL_BUDGET,
            min_overlap: DEFAULT_MIN_OVERLAP,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t0 > 0.0) {
            return Err(Error::InvalidArgument(format!("t0 must be positive, got {}", self.t0)));
        }
        if self.virtual_grid.dt > self.reference.grid.dt * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(
                "virtual grid spacing exceeds the reference spacing".into(),
            ));
        }
        if let Some((lo, hi)) = self.k_bounds {
            if !(lo > 0.0 && hi > lo) {
                return Err(Error::InvalidArgument(format!("invalid k bounds [{lo}, {hi}]")));
            }
        }
        if !(self.min_overlap > 0.0 && self.min_overlap <= 1.0) {
            return Err(Error::InvalidArgument("min_overlap must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Largest admissible `|phi|`.
    pub fn phi_bound(&self) -> f64 {
        match self.form {
            WarpForm::ScaleOnly => 0.0,
            WarpForm::ScaleShift => self.period / 4.0,
        }
    }
}

/// `|a . b| / (|a| |b|)`.
pub fn similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::InvalidArgument("similarity needs at least two samples".into()));
    }
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return Err(Error::DegenerateSignal);
    }
    Ok((ab.abs() / (aa.sqrt() * bb.sqrt())).min(1.0))
}

/// Mean spacing of successive up-crossings of the series mean. `None`
/// with fewer than two crossings.
pub fn dominant_period(values: &[f64], dt: f64) -> Option<f64> {
    if values.len() < 3 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let mut first = None;
    let mut last = 0.0;
    let mut count = 0usize;
    for (j, w) in values.windows(2).enumerate() {
        if w[0] < mean && w[1] >= mean {
            let t = (j as f64 + (mean - w[0]) / (w[1] - w[0])) * dt;
            first.get_or_insert(t);
            last = t;
            count += 1;
        }
    }
    let first = first?;
    (count >= 2).then(|| (last - first) / (count - 1) as f64)
}

/// Similarity between the relabeled trajectory `traj((tau - phi) / k)` and
/// the reference, over the reference instants the relabeled trajectory
/// covers.
pub fn warp_objective(traj: &Trajectory, config: &WarpConfig, k: f64, phi: f64) -> Result<f64> {
    if !(k > 0.0) {
        return Err(Error::InfeasibleWarp { k, phi });
    }
    let reference = &config.reference;
    let end = traj.last_time().ok_or(Error::InsufficientOverlap { fraction: 0.0 })?;
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    let mut count = 0usize;
    for (j, &r) in reference.values.iter().enumerate() {
        let s = (reference.grid.time(j) - phi) / k;
        if s < 0.0 || s > end {
            continue;
        }
        let Some(v) = traj.interpolate(s) else { continue };
        ab += v * r;
        aa += v * v;
        bb += r * r;
        count += 1;
    }
    let fraction = count as f64 / reference.values.len() as f64;
    if count < 2 || fraction < config.min_overlap {
        return Err(Error::InsufficientOverlap { fraction });
    }
    if aa == 0.0 || bb == 0.0 {
        return Err(Error::DegenerateSignal);
    }
    Ok((ab.abs() / (aa.sqrt() * bb.sqrt())).min(1.0))
}

fn preferred(candidate: (WarpParams, f64), incumbent: Option<(WarpParams, f64)>) -> bool {
    let Some((best, g)) = incumbent else {
        return true;
    };
    let (p, v) = candidate;
    if v > g + TIE_TOL {
        return true;
    }
    if v < g - TIE_TOL {
        return false;
    }
    let (a, b) = (p.phi.abs(), best.phi.abs());
    if a != b {
        return a < b;
    }
    (p.k - 1.0).abs() < (best.k - 1.0).abs()
}

/// Multistart search for the `(k, phi)` maximizing [`warp_objective`]
/// subject to `|phi| <= T_r / 4`. `index` labels errors.
pub fn find_warp(traj: &Trajectory, config: &WarpConfig, index: usize) -> Result<WarpFit> {
    config.validate()?;
    let fail = |reason: String| Error::WarpFailure { index, reason };
    if traj.present() < 3 {
        return Err(fail("trajectory too short".into()));
    }
    let ratio = dominant_period(&traj.values, traj.grid.dt)
        .map(|p| config.period / p)
        .filter(|r| r.is_finite() && *r > 0.0)
        .unwrap_or(1.0);
    let (k_lo, k_hi) = config.k_bounds.unwrap_or((ratio / 4.0, ratio * 4.0));
    let phi_max = config.phi_bound();
    let budget = config.eval_budget.max(1);

    let mut evals = 0usize;
    let objective = |k: f64, phi: f64| warp_objective(traj, config, k, phi).ok();

    let mut ks: Vec<f64> = (0..K_GRID)
        .map(|i| k_lo * (k_hi / k_lo).powf(i as f64 / (K_GRID - 1) as f64))
        .collect();
    ks.push(ratio.clamp(k_lo, k_hi));
    let phis: Vec<f64> = match config.form {
        WarpForm::ScaleOnly => vec![0.0],
        WarpForm::ScaleShift => vec![-phi_max, 0.0, phi_max],
    };

    let mut best: Option<(WarpParams, f64)> = None;
    let mut starts: Vec<(WarpParams, f64)> = Vec::new();
    for &k in &ks {
        for &phi in &phis {
            if evals >= budget {
                break;
            }
            evals += 1;
            if let Some(g) = objective(k, phi) {
                let p = WarpParams { k, phi };
                starts.push((p, g));
                if preferred((p, g), best) {
                    best = Some((p, g));
                }
            }
        }
    }
    starts.sort_by(|a, b| b.1.total_cmp(&a.1));

    let dim = match config.form {
        WarpForm::ScaleOnly => 1,
        WarpForm::ScaleShift => 2,
    };
    let (lower, upper) = if dim == 1 {
        (vec![k_lo], vec![k_hi])
    } else {
        (vec![k_lo, -phi_max], vec![k_hi, phi_max])
    };
    for (s, (start, _)) in starts.iter().enumerate() {
        let remaining = budget.saturating_sub(evals);
        if remaining < dim + 2 {
            break;
        }
        let share = remaining / (starts.len() - s);
        let x0: Vec<f64> = if dim == 1 { vec![start.k] } else { vec![start.k, start.phi] };
        let step: Vec<f64> = if dim == 1 {
            vec![0.05 * start.k]
        } else {
            vec![0.05 * start.k, config.period / 20.0]
        };
        let m = nelder_mead(
            |x| {
                let phi = if dim == 1 { 0.0 } else { x[1] };
                objective(x[0], phi).map_or(f64::INFINITY, |g| -g)
            },
            &x0,
            &step,
            &lower,
            &upper,
            share.max(dim + 2),
        );
        evals += m.evals;
        if m.f.is_finite() {
            let p = WarpParams {
                k: m.x[0],
                phi: if dim == 1 { 0.0 } else { m.x[1] },
            };
            if preferred((p, -m.f), best) {
                best = Some((p, -m.f));
            }
        }
    }

    let (params, g) = best.ok_or_else(|| fail("no feasible starting point".into()))?;
    Ok(WarpFit {
        params,
        objective: g,
        evaluations: evals,
    })
}

/// Forward relabeling `t -> tau`: linear through the origin up to `t0`,
/// affine `k t + phi` beyond.
pub fn relabel(params: WarpParams, t0: f64, t: f64) -> f64 {
    if t <= t0 {
        (params.k * t0 + params.phi) / t0 * t
    } else {
        params.k * t + params.phi
    }
}

/// Inverse of [`relabel`].
pub fn inverse_relabel(params: WarpParams, t0: f64, tau: f64) -> f64 {
    let knee = params.k * t0 + params.phi;
    if tau <= knee {
        tau / (knee / t0)
    } else {
        (tau - params.phi) / params.k
    }
}

fn check_feasible(params: WarpParams, t0: f64) -> Result<()> {
    if !(params.k > 0.0) || !(params.k * t0 + params.phi > 0.0) {
        return Err(Error::InfeasibleWarp {
            k: params.k,
            phi: params.phi,
        });
    }
    Ok(())
}

/// Linear interpolation of the knots `(x_j, v_j)` (strictly increasing
/// `x`) at the increasing query points `queries`; stops at the first query
/// beyond the last knot.
fn interpolate_monotone(x: &[f64], v: &[f64], queries: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out = Vec::new();
    let Some(&last) = x.last() else {
        return out;
    };
    let mut j = 0usize;
    for q in queries {
        if q > last || q < x[0] {
            if q > last {
                break;
            }
            continue;
        }
        while j + 1 < x.len() && x[j + 1] <= q {
            j += 1;
        }
        if j + 1 == x.len() || x[j] == q {
            out.push(v[j]);
        } else {
            let w = (q - x[j]) / (x[j + 1] - x[j]);
            out.push(v[j] + w * (v[j + 1] - v[j]));
        }
    }
    out
}

/// Relabels `traj` with `params` and interpolates it onto the virtual grid
/// of `config`. Virtual instants beyond the relabeled span are absent.
pub fn to_virtual(traj: &Trajectory, params: WarpParams, config: &WarpConfig) -> Result<Trajectory> {
    to_virtual_grid(traj, params, config.t0, config.virtual_grid)
}

pub(crate) fn to_virtual_grid(
    traj: &Trajectory,
    params: WarpParams,
    t0: f64,
    virtual_grid: TimeGrid,
) -> Result<Trajectory> {
    check_feasible(params, t0)?;
    let taus: Vec<f64> = (0..traj.present())
        .map(|j| relabel(params, t0, traj.grid.time(j)))
        .collect();
    let values = interpolate_monotone(&taus, &traj.values, (0..virtual_grid.len()).map(|m| virtual_grid.time(m)));
    Trajectory::new(virtual_grid, values)
}

/// Maps a virtual-time series back to physical time through the inverse
/// relabeling and interpolates it onto `physical_grid`. Physical instants
/// beyond the mapped span are absent.
pub fn from_virtual(
    values: &Trajectory,
    params: WarpParams,
    t0: f64,
    physical_grid: TimeGrid,
) -> Result<Trajectory> {
    check_feasible(params, t0)?;
    let ts: Vec<f64> = (0..values.present())
        .map(|m| inverse_relabel(params, t0, values.grid.time(m)))
        .collect();
    let out = interpolate_monotone(&ts, &values.values, (0..physical_grid.len()).map(|j| physical_grid.time(j)));
    Trajectory::new(physical_grid, out)
}

/// Largest virtual time reached by relabeling `[0, horizon]`.
pub fn virtual_end(params: WarpParams, t0: f64, horizon: f64) -> f64 {
    relabel(params, t0, horizon)
}
