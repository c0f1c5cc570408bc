//! Time-warping PCE surrogates: alignment, PCA of the aligned ensemble and
//! sparse PCEs of warp parameters and principal scores.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::frozen::{families, standardized_points};
use crate::chaos::{FitOptions, PceDesign, SparsePce};
use crate::compress::{fit_pca, pca_reconstruct, pca_scores, PcaReduction};
use crate::error::{Error, Result};
use crate::odes::{Ensemble, TimeGrid, Trajectory};
use crate::par;
use crate::prob::{sample_design, DesignMatrix, RandomVector, SamplingScheme};
use crate::warp::{find_warp, from_virtual, relabel, to_virtual, WarpConfig, WarpFit, WarpForm, WarpParams};

/// Margin applied when the blend threshold must grow to keep every
/// training warp feasible.
const T0_MARGIN: f64 = 2.0;
/// Relative extension of the virtual window beyond the largest training
/// need, so that inputs slightly outside the training warps still cover the
/// horizon.
const SPAN_MARGIN: f64 = 1.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpingOptions {
    pub form: WarpForm,
    pub fit: FitOptions,
    pub epsilon_target: f64,
    pub t0: f64,
    pub eval_budget: usize,
    /// Physical horizon the surrogate must predict over.
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub design_seed: u64,
    pub n_train: usize,
    pub train_horizon: f64,
    pub warps: Vec<WarpFit>,
    pub k_loo: f64,
    pub phi_loo: Option<f64>,
    pub score_loo: Vec<f64>,
    pub epsilon1: f64,
    pub retained: usize,
    pub pca_capped: bool,
    pub virtual_span: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeWarpSurrogate {
    pub rv: RandomVector,
    pub warp_config: WarpConfig,
    pub k_model: SparsePce,
    pub phi_model: Option<SparsePce>,
    pub reduction: PcaReduction,
    pub score_models: Vec<SparsePce>,
    pub training_meta: TrainingMeta,
}

/// Fits the full pipeline on `ensemble`, aligning against `reference` (the
/// response at the mean input, sampled over the prediction horizon).
pub fn fit_time_warping(
    rv: &RandomVector,
    ensemble: &Ensemble,
    reference: Trajectory,
    opts: &WarpingOptions,
) -> Result<TimeWarpSurrogate> {
    let n = ensemble.len();
    if ensemble.design.dim() != rv.dim() {
        return Err(Error::DimensionMismatch {
            expected: rv.dim(),
            actual: ensemble.design.dim(),
        });
    }
    if n < 3 {
        return Err(Error::InvalidArgument(format!("time warping needs at least 3 trajectories, got {n}")));
    }
    if !(opts.horizon > 0.0) || opts.horizon > ensemble.grid.end() * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "prediction horizon {} must lie in (0, {}]",
            opts.horizon,
            ensemble.grid.end()
        )));
    }

    let mut config = WarpConfig::new(opts.form, reference)?;
    config.t0 = opts.t0;
    config.eval_budget = opts.eval_budget;
    config.validate()?;

    // Warp estimation.
    let warps = par::try_map_range(n, |i| find_warp(&ensemble.trajectory(i), &config, i))?;

    // Blend threshold large enough for every training warp.
    let worst = warps
        .iter()
        .map(|w| -w.params.phi / w.params.k)
        .fold(0.0f64, f64::max);
    config.t0 = config.t0.max(T0_MARGIN * worst);

    // Common virtual window: long enough for the prediction horizon, never
    // beyond what every training trajectory covers.
    let needed = warps
        .iter()
        .map(|w| relabel(w.params, config.t0, opts.horizon))
        .fold(0.0f64, f64::max);
    let wanted = SPAN_MARGIN * needed;
    let covered = warps
        .iter()
        .map(|w| relabel(w.params, config.t0, ensemble.grid.end()))
        .fold(f64::INFINITY, f64::min);
    let span = wanted.min(covered);
    let dt = ensemble.grid.dt;
    let steps = ((span / dt) * (1.0 + 1e-12)).floor() as usize;
    config.virtual_grid = TimeGrid::new(dt, steps)?;
    if needed > covered {
        log::warn!(
            "training horizon covers virtual time {covered:.3} but predictions over [0, {}] need {needed:.3}",
            opts.horizon
        );
    }

    // Projection onto the virtual time line.
    let warped = par::try_map_range(n, |i| {
        let v = to_virtual(&ensemble.trajectory(i), warps[i].params, &config)?;
        if !v.is_complete() {
            return Err(Error::WarpFailure {
                index: i,
                reason: format!("covers {} of {} virtual instants", v.present(), v.grid.len()),
            });
        }
        Ok(v.values)
    })?;
    let kt = config.virtual_grid.len();
    let y = Array2::from_shape_fn((n, kt), |(i, j)| warped[i][j]);

    // Compression and score surrogates.
    let reduction = fit_pca(&y, opts.epsilon_target)?;
    let scores = pca_scores(&y, &reduction)?;
    let design = PceDesign::new(families(rv), standardized_points(ensemble), opts.fit.max_degree)?;
    let score_models = par::try_map_range(reduction.retained, |c| design.fit(&scores.column(c).to_vec(), &opts.fit))?;

    // Warp-parameter surrogates.
    let ks: Vec<f64> = warps.iter().map(|w| w.params.k).collect();
    let k_model = design.fit(&ks, &opts.fit)?;
    let phi_model = match opts.form {
        WarpForm::ScaleOnly => None,
        WarpForm::ScaleShift => {
            let phis: Vec<f64> = warps.iter().map(|w| w.params.phi).collect();
            Some(design.fit(&phis, &opts.fit)?)
        }
    };

    let training_meta = TrainingMeta {
        design_seed: ensemble.design.seed,
        n_train: n,
        train_horizon: ensemble.grid.end(),
        warps,
        k_loo: k_model.loo_norm,
        phi_loo: phi_model.as_ref().map(|m| m.loo_norm),
        score_loo: score_models.iter().map(|m| m.loo_norm).collect(),
        epsilon1: reduction.epsilon1,
        retained: reduction.retained,
        pca_capped: reduction.capped,
        virtual_span: config.virtual_grid.end(),
    };
    Ok(TimeWarpSurrogate {
        rv: rv.clone(),
        warp_config: config,
        k_model,
        phi_model,
        reduction,
        score_models,
        training_meta,
    })
}

impl TimeWarpSurrogate {
    /// Predicted warp parameters at the physical input `xi`.
    pub fn predict_warp(&self, xi: &[f64]) -> Result<WarpParams> {
        let u = self.rv.standardize(xi)?;
        self.warp_at(&u, xi)
    }

    fn warp_at(&self, u: &[f64], xi: &[f64]) -> Result<WarpParams> {
        let k = self.k_model.predict(u)?;
        let phi = match &self.phi_model {
            Some(m) => m.predict(u)?,
            None => 0.0,
        };
        if !(k > 0.0) || !(k * self.warp_config.t0 + phi > 0.0) {
            return Err(Error::Prediction {
                xi: xi.to_vec(),
                reason: format!("predicted warp (k = {k}, phi = {phi}) is infeasible"),
            });
        }
        Ok(WarpParams { k, phi })
    }

    /// Predicted series on the virtual time line.
    pub fn predict_virtual(&self, xi: &[f64]) -> Result<Trajectory> {
        let u = self.rv.standardize(xi)?;
        self.virtual_at(&u)
    }

    fn virtual_at(&self, u: &[f64]) -> Result<Trajectory> {
        let scores = self
            .score_models
            .iter()
            .map(|m| m.predict(u))
            .collect::<Result<Vec<f64>>>()?;
        let values = pca_reconstruct(&self.reduction, &scores)?;
        Trajectory::new(self.warp_config.virtual_grid, values)
    }

    /// Prediction on `grid`; instants beyond the inverse-warped span are
    /// absent.
    pub fn predict(&self, xi: &[f64], grid: TimeGrid) -> Result<Trajectory> {
        let u = self.rv.standardize(xi)?;
        let params = self.warp_at(&u, xi)?;
        let virtual_series = self.virtual_at(&u)?;
        from_virtual(&virtual_series, params, self.warp_config.t0, grid)
    }
}

impl TimeWarpSurrogate {
    /// Physical-time moments of the predictions at the inputs of `design`.
    /// Pairing the inputs with a solver ensemble removes the sampling noise
    /// from surrogate-versus-solver moment comparisons.
    pub fn moments_on(&self, design: &DesignMatrix, grid: TimeGrid) -> Result<SampleMoments> {
        if design.dim() != self.rv.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.rv.dim(),
                actual: design.dim(),
            });
        }
        let n = design.len();
        if n < 2 {
            return Err(Error::InvalidArgument(format!("moments need at least 2 inputs, got {n}")));
        }
        let predictions = par::map_range(n, |i| self.predict(&design.physical_row(i), grid));
        let failures = predictions.iter().filter(|p| p.is_err()).count();
        let mut m = sample_moments(
            grid.len(),
            predictions.iter().filter_map(|p| p.as_ref().ok()).map(|t| t.values.as_slice()),
        );
        m.samples = n;
        let min = m.count.iter().copied().min().unwrap_or(0);
        if failures > 0 || 10 * min < 9 * n {
            m.coverage_warning = Some(format!(
                "{failures} failed predictions; only {min} of {n} samples cover every requested instant"
            ));
        }
        Ok(m)
    }
}

/// See [`TimeWarpSurrogate::predict`].
pub fn predict_time_warping(surrogate: &TimeWarpSurrogate, xi: &[f64], grid: TimeGrid) -> Result<Trajectory> {
    surrogate.predict(xi, grid)
}

/// Instant-wise moments of a set of trajectories that may miss trailing
/// instants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMoments {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Number of trajectories present at each instant.
    pub count: Vec<usize>,
    pub samples: usize,
    /// Set when some instant is covered by fewer than 90% of the samples
    /// (or predictions failed).
    pub coverage_warning: Option<String>,
}

/// Mean and standard deviation (`n - 1` divisor) per instant over the
/// present values of `trajectories`.
pub fn sample_moments<'a>(len: usize, trajectories: impl IntoIterator<Item = &'a [f64]>) -> SampleMoments {
    // Sums of deviations from the first value seen at each instant; stable
    // for typical shifts and exact for constant columns.
    let mut shift: Vec<Option<f64>> = vec![None; len];
    let mut sum = vec![0.0; len];
    let mut sq = vec![0.0; len];
    let mut count = vec![0usize; len];
    let mut samples = 0usize;
    for values in trajectories {
        for (j, &v) in values.iter().take(len).enumerate() {
            let d = v - *shift[j].get_or_insert(v);
            sum[j] += d;
            sq[j] += d * d;
            count[j] += 1;
        }
        samples += 1;
    }
    let mut mean = vec![f64::NAN; len];
    let mut std = vec![0.0; len];
    for j in 0..len {
        let c = count[j];
        if c == 0 {
            continue;
        }
        let cf = c as f64;
        mean[j] = shift[j].unwrap_or(0.0) + sum[j] / cf;
        if c > 1 {
            std[j] = ((sq[j] - sum[j] * sum[j] / cf).max(0.0) / (cf - 1.0)).sqrt();
        }
    }
    let min = count.iter().copied().min().unwrap_or(0);
    let coverage_warning = (10 * min < 9 * samples).then(|| {
        format!("only {min} of {samples} samples cover every requested instant")
    });
    SampleMoments {
        mean,
        std,
        count,
        samples,
        coverage_warning,
    }
}

/// Physical-time moments by Monte Carlo over the surrogate itself.
pub fn moments_time_warping(
    surrogate: &TimeWarpSurrogate,
    n_mc: usize,
    seed: u64,
    grid: TimeGrid,
) -> Result<SampleMoments> {
    if n_mc < 100 {
        return Err(Error::InvalidArgument(format!("n_mc must be at least 100, got {n_mc}")));
    }
    let design = sample_design(&surrogate.rv, n_mc, SamplingScheme::MonteCarlo, seed)?;
    surrogate.moments_on(&design, grid)
}
