//! Pipeline stages. Each stage has an in-memory form and a file form; the
//! end-to-end runner chains the in-memory forms, the subcommands chain the
//! file forms, and both write the same bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chronowarp::chaos::FitOptions;
use chronowarp::compress::error_bound;
use chronowarp::odes::{integrate, run_ensemble, Ensemble, OdeModel, TimeGrid, Trajectory};
use chronowarp::par;
use chronowarp::prob::{sample_design, DesignMatrix, SamplingScheme};
use chronowarp::surrogate::{
    exceedance_fraction, fit_time_frozen, fit_time_warping, moments_time_warping, relative_error, sample_moments,
    validation_error, SampleMoments, TimeFrozenSurrogate, TimeWarpSurrogate, WarpingOptions,
};
use chronowarp::warp::to_virtual;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::csvio::Table;
use crate::error::{CliError, Stage};
use crate::plot::{Chart, Series};

pub mod files {
    pub const CONFIG: &str = "config.toml";
    pub const DESIGN: &str = "design.csv";
    pub const ENSEMBLE: &str = "ensemble.csv";
    pub const DESIGN_FROZEN: &str = "design_frozen.csv";
    pub const ENSEMBLE_FROZEN: &str = "ensemble_frozen.csv";
    pub const SURROGATE: &str = "surrogate.json";
    pub const WARP_PARAMS: &str = "warp_params.csv";
    pub const LOO: &str = "loo.csv";
    pub const SURROGATE_MOMENTS: &str = "surrogate_moments.csv";
    pub const STATS: &str = "stats.json";
    pub const VALIDATION_REPORT: &str = "validation_report.csv";
    pub const MOMENTS: &str = "moments.csv";
    pub const VALIDATION: &str = "validation.json";
    pub const EXAMPLES: &str = "validation_examples.csv";
    pub const SUMMARY: &str = "summary.json";
    pub const TIMINGS: &str = "timings.json";
    pub const PLOTS: [&str; 6] = [
        "trajectories.svg",
        "warped.svg",
        "loo.svg",
        "mean.svg",
        "std.svg",
        "examples.svg",
    ];
}

/// Validation trajectories kept for the example plot.
const EXAMPLES: usize = 3;
/// Training trajectories drawn in the overlay plots.
const OVERLAY: usize = 10;

type Result<T> = std::result::Result<T, CliError>;

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    /// Training ensemble over the training horizon.
    pub ensemble: Ensemble,
    /// Separate time-frozen ensemble over the prediction horizon.
    pub frozen: Option<Ensemble>,
}

impl Simulation {
    /// The ensemble the time-frozen baseline is fitted on.
    pub fn frozen_ensemble(&self, cfg: &ExperimentConfig) -> Result<Ensemble> {
        match &self.frozen {
            Some(e) => Ok(e.clone()),
            None => self.ensemble.truncated(cfg.grid()).stage("simulate"),
        }
    }
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<Simulation> {
    let rv = cfg.rv();
    let design = sample_design(&rv, cfg.n, cfg.scheme, cfg.design_seed()).stage("design")?;
    let ensemble = run_ensemble(&cfg.model, &design, cfg.train_grid(), cfg.tolerances).stage("simulate")?;
    let frozen = if cfg.separate_frozen_design() {
        let d = sample_design(&rv, cfg.n_frozen, cfg.scheme, cfg.design_seed()).stage("design")?;
        Some(run_ensemble(&cfg.model, &d, cfg.grid(), cfg.tolerances).stage("simulate")?)
    } else {
        None
    };
    Ok(Simulation { ensemble, frozen })
}

pub fn write_simulation(cfg: &ExperimentConfig, out: &Path, sim: &Simulation) -> Result<()> {
    write_design(cfg, &out.join(files::DESIGN), &sim.ensemble.design)?;
    write_ensemble(&out.join(files::ENSEMBLE), &sim.ensemble)?;
    if let Some(f) = &sim.frozen {
        write_design(cfg, &out.join(files::DESIGN_FROZEN), &f.design)?;
        write_ensemble(&out.join(files::ENSEMBLE_FROZEN), f)?;
    }
    Ok(())
}

pub fn read_simulation(cfg: &ExperimentConfig, out: &Path) -> Result<Simulation> {
    let design = read_design(cfg, &out.join(files::DESIGN), cfg.n)?;
    let ensemble = read_ensemble(&out.join(files::ENSEMBLE), design, cfg.train_grid())?;
    let frozen = if cfg.separate_frozen_design() {
        let d = read_design(cfg, &out.join(files::DESIGN_FROZEN), cfg.n_frozen)?;
        Some(read_ensemble(&out.join(files::ENSEMBLE_FROZEN), d, cfg.grid())?)
    } else {
        None
    };
    Ok(Simulation { ensemble, frozen })
}

fn write_design(cfg: &ExperimentConfig, path: &Path, d: &DesignMatrix) -> Result<()> {
    let mut t = Table::new();
    t.push("index", (0..d.len()).map(|i| i as f64).collect());
    for (j, name) in cfg.input_names.iter().enumerate() {
        t.push(name.clone(), d.physical.column(j).to_vec());
    }
    // Standardized coordinates are stored too so that reloading is exact.
    for (j, name) in cfg.input_names.iter().enumerate() {
        t.push(format!("u_{name}"), d.standardized.column(j).to_vec());
    }
    t.write(path)
}

fn read_design(cfg: &ExperimentConfig, path: &Path, n: usize) -> Result<DesignMatrix> {
    let t = Table::read(path)?;
    if t.rows() != n {
        return Err(CliError::data(path, format!("expected {n} rows, found {}", t.rows())));
    }
    let m = cfg.input_names.len();
    let mut physical = Array2::zeros((n, m));
    let mut standardized = Array2::zeros((n, m));
    for (j, name) in cfg.input_names.iter().enumerate() {
        let x = t.require(name, path)?;
        let u = t.require(&format!("u_{name}"), path)?;
        for i in 0..n {
            physical[[i, j]] = x[i];
            standardized[[i, j]] = u[i];
        }
    }
    Ok(DesignMatrix {
        physical,
        standardized,
        seed: cfg.design_seed(),
        scheme: cfg.scheme,
    })
}

fn write_ensemble(path: &Path, e: &Ensemble) -> Result<()> {
    let mut t = Table::new();
    t.push("time", e.grid.times());
    for i in 0..e.len() {
        t.push(i.to_string(), e.trajectories.row(i).to_vec());
    }
    t.write(path)
}

fn read_ensemble(path: &Path, design: DesignMatrix, grid: TimeGrid) -> Result<Ensemble> {
    let t = Table::read(path)?;
    let n = design.len();
    if t.rows() != grid.len() || t.columns.len() != n + 1 {
        return Err(CliError::data(
            path,
            format!(
                "expected {} instants and {n} trajectories, found {} and {}",
                grid.len(),
                t.rows(),
                t.columns.len().saturating_sub(1)
            ),
        ));
    }
    let trajectories = Array2::from_shape_fn((n, grid.len()), |(i, j)| t.columns[i + 1][j]);
    Ok(Ensemble {
        design,
        grid,
        trajectories,
    })
}

// --------------------------------------------------------------------- fit

/// Serialized surrogate bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surrogates {
    pub model: OdeModel,
    pub input_names: Vec<String>,
    pub warping: Option<TimeWarpSurrogate>,
    pub frozen: Option<TimeFrozenSurrogate>,
}

pub fn reference_trajectory(cfg: &ExperimentConfig) -> Result<Trajectory> {
    let grid = cfg.grid();
    let sol = integrate(&cfg.model, &cfg.rv().mean(), grid, cfg.tolerances).stage("reference")?;
    Trajectory::new(grid, sol.component(cfg.model.observable).to_vec()).stage("reference")
}

pub fn fit(cfg: &ExperimentConfig, sim: &Simulation) -> Result<Surrogates> {
    let rv = cfg.rv();
    let warping = if cfg.method.warping() {
        let opts = WarpingOptions {
            form: cfg.warp_form,
            fit: FitOptions::with_max_degree(cfg.p_max),
            epsilon_target: cfg.epsilon_target,
            t0: cfg.t0,
            eval_budget: cfg.eval_budget,
            horizon: cfg.horizon,
        };
        let start = Instant::now();
        let s = fit_time_warping(&rv, &sim.ensemble, reference_trajectory(cfg)?, &opts).stage("fit time warping")?;
        log::info!("time-warping fit: {:.1}s, K' = {}", start.elapsed().as_secs_f64(), s.training_meta.retained);
        Some(s)
    } else {
        None
    };
    let frozen = if cfg.method.frozen() {
        let start = Instant::now();
        let e = sim.frozen_ensemble(cfg)?;
        let s = fit_time_frozen(&rv, &e, &FitOptions::with_max_degree(cfg.p_max_frozen)).stage("fit time frozen")?;
        log::info!("time-frozen fit: {:.1}s", start.elapsed().as_secs_f64());
        Some(s)
    } else {
        None
    };
    Ok(Surrogates {
        model: cfg.model,
        input_names: cfg.input_names.clone(),
        warping,
        frozen,
    })
}

pub fn write_fit(out: &Path, s: &Surrogates) -> Result<()> {
    let path = out.join(files::SURROGATE);
    let text = serde_json::to_string(s).map_err(|e| CliError::data(&path, e.to_string()))?;
    write_text(&path, &text)?;
    if let Some(w) = &s.warping {
        let warps = &w.training_meta.warps;
        let mut t = Table::new();
        t.push("index", (0..warps.len()).map(|i| i as f64).collect())
            .push("k", warps.iter().map(|w| w.params.k).collect())
            .push("phi", warps.iter().map(|w| w.params.phi).collect())
            .push("objective", warps.iter().map(|w| w.objective).collect())
            .push("evaluations", warps.iter().map(|w| w.evaluations as f64).collect());
        t.write(&out.join(files::WARP_PARAMS))?;
    }
    if let Some(f) = &s.frozen {
        let mut t = Table::new();
        t.push("time", f.grid.times()).push("frozen_loo", f.loo_norms());
        t.write(&out.join(files::LOO))?;
    }
    Ok(())
}

pub fn read_fit(out: &Path) -> Result<Surrogates> {
    let path = out.join(files::SURROGATE);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::data(&path, e.to_string()))
}

// ------------------------------------------------------------------- stats

#[derive(Debug, Clone, PartialEq)]
pub struct Stats {
    pub grid: TimeGrid,
    pub warping: Option<SampleMoments>,
    pub frozen: Option<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRecord {
    pub n_mc: usize,
    pub seed: u64,
    pub warping_coverage_warning: Option<String>,
}

pub fn stats(cfg: &ExperimentConfig, s: &Surrogates) -> Result<Stats> {
    let grid = cfg.grid();
    let warping = match &s.warping {
        Some(w) => Some(moments_time_warping(w, cfg.n_mc, cfg.moments_seed(), grid).stage("surrogate moments")?),
        None => None,
    };
    Ok(Stats {
        grid,
        warping,
        frozen: s.frozen.as_ref().map(|f| f.moments()),
    })
}

pub fn write_stats(cfg: &ExperimentConfig, out: &Path, st: &Stats) -> Result<()> {
    let mut t = Table::new();
    t.push("time", st.grid.times());
    if let Some(m) = &st.warping {
        t.push("warping_mean", m.mean.clone())
            .push("warping_std", m.std.clone())
            .push("warping_count", m.count.iter().map(|&c| c as f64).collect());
        if let Some(w) = &m.coverage_warning {
            log::warn!("surrogate moments: {w}");
        }
    }
    if let Some((mean, std)) = &st.frozen {
        t.push("frozen_mean", mean.clone()).push("frozen_std", std.clone());
    }
    t.write(&out.join(files::SURROGATE_MOMENTS))?;
    write_json(
        &out.join(files::STATS),
        &StatsRecord {
            n_mc: cfg.n_mc,
            seed: cfg.moments_seed(),
            warping_coverage_warning: st.warping.as_ref().and_then(|m| m.coverage_warning.clone()),
        },
    )
}

// ---------------------------------------------------------------- validate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodValidation {
    pub exceedance: f64,
    pub failures: usize,
    pub median_error: f64,
    /// Relative errors of the instant-wise mean and standard deviation
    /// against the solver ensemble.
    pub mean_error: Option<f64>,
    pub std_error: Option<f64>,
    pub min_coverage: f64,
    /// Fraction of predictions with a negative value somewhere.
    pub negative_fraction: f64,
    /// Smallest predicted value over all predictions.
    pub min_prediction: f64,
    pub coverage_warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub n_val: usize,
    pub seed: u64,
    pub threshold: f64,
    /// Smallest observable value over the solver ensemble.
    pub truth_min: f64,
    pub warping: Option<MethodValidation>,
    pub frozen: Option<MethodValidation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Validation {
    pub record: ValidationRecord,
    pub design: DesignMatrix,
    pub warping_errors: Option<(Vec<f64>, Vec<f64>)>,
    pub frozen_errors: Option<Vec<f64>>,
    pub truth_moments: SampleMoments,
    pub warping_moments: Option<SampleMoments>,
    pub frozen_moments: Option<(Vec<f64>, Vec<f64>)>,
    pub examples: Vec<(Trajectory, Option<Trajectory>, Option<Trajectory>)>,
}

#[derive(Clone, Copy)]
struct Scored {
    error: f64,
    coverage: f64,
    min: f64,
    failed: bool,
}

fn score(pred: chronowarp::Result<Trajectory>, truth: &Trajectory) -> Scored {
    match pred {
        Ok(p) => Scored {
            error: validation_error(&p, truth).unwrap_or(f64::INFINITY),
            coverage: p.present() as f64 / truth.grid.len() as f64,
            min: p.values.iter().copied().fold(f64::INFINITY, f64::min),
            failed: false,
        },
        Err(_) => Scored {
            error: f64::INFINITY,
            coverage: 0.0,
            min: f64::NAN,
            failed: true,
        },
    }
}

/// Moment error over the instants where the surrogate moments exist.
fn moment_error(pred: &[f64], truth: &[f64]) -> Option<f64> {
    let present = pred.iter().take_while(|v| v.is_finite()).count();
    relative_error(&pred[..present], truth).ok()
}

fn summarize(
    scored: &[Scored],
    threshold: f64,
    moments: Option<(&[f64], &[f64])>,
    truth: &SampleMoments,
    coverage_warning: Option<String>,
) -> Result<MethodValidation> {
    let errors: Vec<f64> = scored.iter().map(|s| s.error).collect();
    let mut sorted = errors.clone();
    sorted.sort_by(f64::total_cmp);
    let n = scored.len();
    Ok(MethodValidation {
        exceedance: exceedance_fraction(&errors, threshold).stage("validate")?,
        failures: scored.iter().filter(|s| s.failed).count(),
        median_error: sorted[n / 2],
        mean_error: moments.and_then(|(m, _)| moment_error(m, &truth.mean)),
        std_error: moments.and_then(|(_, s)| moment_error(s, &truth.std)),
        min_coverage: scored.iter().map(|s| s.coverage).fold(1.0, f64::min),
        negative_fraction: scored.iter().filter(|s| s.min < 0.0).count() as f64 / n as f64,
        min_prediction: scored.iter().map(|s| s.min).filter(|m| !m.is_nan()).fold(f64::INFINITY, f64::min),
        coverage_warning,
    })
}

pub fn validate(cfg: &ExperimentConfig, s: &Surrogates) -> Result<Validation> {
    let grid = cfg.grid();
    let rv = cfg.rv();
    let start = Instant::now();
    let design = sample_design(&rv, cfg.n_val, SamplingScheme::MonteCarlo, cfg.validation_seed).stage("design")?;
    let truth = run_ensemble(&cfg.model, &design, grid, cfg.tolerances).stage("validation ensemble")?;
    log::info!("validation ensemble: {:.1}s", start.elapsed().as_secs_f64());
    let truth_moments = sample_moments(
        grid.len(),
        truth.trajectories.rows().into_iter().map(|r| r.to_slice().expect("row-major rows")),
    );
    let truth_min = truth.trajectories.iter().copied().fold(f64::INFINITY, f64::min);

    let scored = par::map_range(truth.len(), |i| {
        let xi = design.physical_row(i);
        let t = truth.trajectory(i);
        (
            s.warping.as_ref().map(|w| score(w.predict(&xi, grid), &t)),
            s.frozen.as_ref().map(|f| score(f.predict(&xi), &t)),
        )
    });

    let (warping, warping_errors, warping_moments) = match &s.warping {
        Some(w) => {
            let sc: Vec<Scored> = scored.iter().map(|p| p.0.expect("scored")).collect();
            let m = w.moments_on(&design, grid).stage("paired moments")?;
            let rec = summarize(
                &sc,
                cfg.threshold,
                Some((&m.mean, &m.std)),
                &truth_moments,
                m.coverage_warning.clone(),
            )?;
            let errs = (sc.iter().map(|s| s.error).collect(), sc.iter().map(|s| s.coverage).collect());
            (Some(rec), Some(errs), Some(m))
        }
        None => (None, None, None),
    };
    let (frozen, frozen_errors, frozen_moments) = match &s.frozen {
        Some(f) => {
            let sc: Vec<Scored> = scored.iter().map(|p| p.1.expect("scored")).collect();
            let (mean, std) = f.moments();
            let rec = summarize(&sc, cfg.threshold, Some((&mean, &std)), &truth_moments, None)?;
            (Some(rec), Some(sc.iter().map(|s| s.error).collect()), Some((mean, std)))
        }
        None => (None, None, None),
    };

    let examples = (0..EXAMPLES.min(truth.len()))
        .map(|i| {
            let xi = design.physical_row(i);
            (
                truth.trajectory(i),
                s.warping.as_ref().and_then(|w| w.predict(&xi, grid).ok()),
                s.frozen.as_ref().and_then(|f| f.predict(&xi).ok()),
            )
        })
        .collect();

    Ok(Validation {
        record: ValidationRecord {
            n_val: cfg.n_val,
            seed: cfg.validation_seed,
            threshold: cfg.threshold,
            truth_min,
            warping,
            frozen,
        },
        design,
        warping_errors,
        frozen_errors,
        truth_moments,
        warping_moments,
        frozen_moments,
        examples,
    })
}

fn padded(values: &[f64], len: usize) -> Vec<f64> {
    let mut v = values.to_vec();
    v.resize(len, f64::NAN);
    v
}

pub fn write_validation(cfg: &ExperimentConfig, out: &Path, v: &Validation) -> Result<()> {
    let grid = cfg.grid();
    let n = v.design.len();

    let mut t = Table::new();
    t.push("index", (0..n).map(|i| i as f64).collect());
    for (j, name) in cfg.input_names.iter().enumerate() {
        t.push(name.clone(), v.design.physical.column(j).to_vec());
    }
    if let Some((e, c)) = &v.warping_errors {
        t.push("warping_error", e.clone()).push("warping_coverage", c.clone());
    }
    if let Some(e) = &v.frozen_errors {
        t.push("frozen_error", e.clone());
    }
    t.write(&out.join(files::VALIDATION_REPORT))?;

    let mut t = Table::new();
    t.push("time", grid.times())
        .push("mcs_mean", v.truth_moments.mean.clone())
        .push("mcs_std", v.truth_moments.std.clone());
    if let Some(m) = &v.warping_moments {
        t.push("warping_mean", m.mean.clone()).push("warping_std", m.std.clone());
    }
    if let Some((mean, std)) = &v.frozen_moments {
        t.push("frozen_mean", mean.clone()).push("frozen_std", std.clone());
    }
    t.write(&out.join(files::MOMENTS))?;

    let mut t = Table::new();
    t.push("time", grid.times());
    for (i, (truth, w, f)) in v.examples.iter().enumerate() {
        t.push(format!("truth_{i}"), truth.values.clone());
        if let Some(w) = w {
            t.push(format!("warping_{i}"), padded(&w.values, grid.len()));
        }
        if let Some(f) = f {
            t.push(format!("frozen_{i}"), padded(&f.values, grid.len()));
        }
    }
    t.write(&out.join(files::EXAMPLES))?;

    write_json(&out.join(files::VALIDATION), &v.record)
}

// ------------------------------------------------------------------ report

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpingSummary {
    pub retained: usize,
    pub epsilon1: f64,
    pub pca_capped: bool,
    pub virtual_span: f64,
    pub k_loo: f64,
    pub phi_loo: Option<f64>,
    pub score_loo: Vec<f64>,
    /// Eigenvalue-weighted mean of the score LOO errors.
    pub epsilon2: f64,
    pub error_bound: f64,
    pub exceedance: f64,
    pub failures: usize,
    pub median_error: f64,
    pub min_coverage: f64,
    /// Moment errors with surrogate moments taken at the validation inputs.
    pub mean_error: Option<f64>,
    pub std_error: Option<f64>,
    /// Moment errors with independent surrogate Monte Carlo moments.
    pub mc_mean_error: Option<f64>,
    pub mc_std_error: Option<f64>,
    pub negative_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrozenSummary {
    pub exceedance: f64,
    pub median_error: f64,
    pub mean_error: Option<f64>,
    pub std_error: Option<f64>,
    pub early_window: (f64, f64),
    pub late_window: (f64, f64),
    pub loo_median_early: f64,
    pub loo_median_late: f64,
    pub negative_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub model: String,
    pub n: usize,
    pub n_frozen: usize,
    pub n_val: usize,
    pub seed: u64,
    pub horizon: f64,
    pub threshold: f64,
    pub truth_min: f64,
    pub warping: Option<WarpingSummary>,
    pub frozen: Option<FrozenSummary>,
    pub warnings: Vec<String>,
    pub observations: Vec<String>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::data(path, e.to_string()))
}

fn median_between(times: &[f64], values: &[f64], lo: f64, hi: f64) -> f64 {
    let tol = 1e-9 * hi.abs().max(1.0);
    let mut v: Vec<f64> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= lo - tol && **t <= hi + tol)
        .map(|(_, v)| *v)
        .collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// Builds the summary record and the plots from the files in `out`.
pub fn report(cfg: &ExperimentConfig, out: &Path) -> Result<Summary> {
    let s = read_fit(out)?;
    let val: ValidationRecord = read_json(&out.join(files::VALIDATION))?;
    let stats: StatsRecord = read_json(&out.join(files::STATS))?;
    let moments_path = out.join(files::MOMENTS);
    let moments = Table::read(&moments_path)?;
    let sm_path = out.join(files::SURROGATE_MOMENTS);
    let surrogate_moments = Table::read(&sm_path)?;
    let times = moments.require("time", &moments_path)?.to_vec();
    let mut warnings = Vec::new();
    let mut observations = Vec::new();

    let warping = match (&s.warping, &val.warping) {
        (Some(w), Some(v)) => {
            let m = &w.training_meta;
            let ev = &w.reduction.eigenvalues[..m.retained];
            let total: f64 = ev.iter().sum();
            let epsilon2 = if total > 0.0 {
                ev.iter().zip(&m.score_loo).map(|(l, e)| l * e).sum::<f64>() / total
            } else {
                0.0
            };
            let mcs_mean = moments.require("mcs_mean", &moments_path)?;
            let mcs_std = moments.require("mcs_std", &moments_path)?;
            if let Some(wm) = &stats.warping_coverage_warning {
                warnings.push(format!("surrogate Monte Carlo moments: {wm}"));
            }
            if let Some(wm) = &v.coverage_warning {
                warnings.push(format!("paired surrogate moments: {wm}"));
            }
            if m.pca_capped {
                warnings.push("PCA retained every component without reaching the variance target".into());
            }
            Some(WarpingSummary {
                retained: m.retained,
                epsilon1: m.epsilon1,
                pca_capped: m.pca_capped,
                virtual_span: m.virtual_span,
                k_loo: m.k_loo,
                phi_loo: m.phi_loo,
                score_loo: m.score_loo.clone(),
                epsilon2,
                error_bound: error_bound(m.epsilon1, epsilon2),
                exceedance: v.exceedance,
                failures: v.failures,
                median_error: v.median_error,
                min_coverage: v.min_coverage,
                mean_error: v.mean_error,
                std_error: v.std_error,
                mc_mean_error: moment_error(surrogate_moments.require("warping_mean", &sm_path)?, mcs_mean),
                mc_std_error: moment_error(surrogate_moments.require("warping_std", &sm_path)?, mcs_std),
                negative_fraction: v.negative_fraction,
            })
        }
        _ => None,
    };

    let frozen = match (&s.frozen, &val.frozen) {
        (Some(f), Some(v)) => {
            let loo = f.loo_norms();
            let ft = f.grid.times();
            let early = (0.0, 0.1 * cfg.horizon);
            let late = (0.8 * cfg.horizon, cfg.horizon);
            Some(FrozenSummary {
                exceedance: v.exceedance,
                median_error: v.median_error,
                mean_error: v.mean_error,
                std_error: v.std_error,
                early_window: early,
                late_window: late,
                loo_median_early: median_between(&ft, &loo, early.0, early.1),
                loo_median_late: median_between(&ft, &loo, late.0, late.1),
                negative_fraction: v.negative_fraction,
            })
        }
        _ => None,
    };

    if val.truth_min > 0.0 {
        for (name, v) in [("time-warping", &val.warping), ("time-frozen", &val.frozen)] {
            if let Some(v) = v {
                observations.push(format!(
                    "solver responses are strictly positive (minimum {:.6e}); {:.2}% of {name} predictions go negative (minimum {:.6e})",
                    val.truth_min,
                    100.0 * v.negative_fraction,
                    v.min_prediction
                ));
            }
        }
    }

    let summary = Summary {
        model: cfg.kind().name().to_string(),
        n: cfg.n,
        n_frozen: cfg.n_frozen,
        n_val: cfg.n_val,
        seed: cfg.seed,
        horizon: cfg.horizon,
        threshold: cfg.threshold,
        truth_min: val.truth_min,
        warping,
        frozen,
        warnings,
        observations,
    };
    write_json(&out.join(files::SUMMARY), &summary)?;
    write_plots(cfg, out, &s, &times, &moments, &moments_path)?;
    Ok(summary)
}

fn write_plots(
    cfg: &ExperimentConfig,
    out: &Path,
    s: &Surrogates,
    times: &[f64],
    moments: &Table,
    moments_path: &Path,
) -> Result<()> {
    let name = cfg.kind().name();
    let grid = cfg.grid();
    let ensemble_path = out.join(files::ENSEMBLE);
    let ens = Table::read(&ensemble_path)?;
    let shown = (ens.columns.len() - 1).min(OVERLAY);

    let mut c = Chart::new(&format!("{name}: training trajectories"), "t", "response");
    for i in 0..shown {
        c.add(Series::unlabeled(
            times.to_vec(),
            ens.columns[i + 1][..grid.len()].to_vec(),
            i,
        ));
    }
    if let Some(w) = &s.warping {
        c.add(Series::new("reference", times.to_vec(), w.warp_config.reference.values.clone(), 7).dashed());
    }
    write_text(&out.join(files::PLOTS[0]), &c.render())?;

    let mut c = Chart::new(&format!("{name}: trajectories in virtual time"), "virtual time", "response");
    if let Some(w) = &s.warping {
        let train = TimeGrid::new(grid.dt, ens.rows() - 1).stage("report")?;
        for i in 0..shown {
            let traj = Trajectory::new(train, ens.columns[i + 1].clone()).stage("report")?;
            let v = to_virtual(&traj, w.training_meta.warps[i].params, &w.warp_config).stage("report")?;
            c.add(Series::unlabeled(v.grid.times()[..v.present()].to_vec(), v.values, i));
        }
    }
    write_text(&out.join(files::PLOTS[1]), &c.render())?;

    let mut c = Chart::new(&format!("{name}: leave-one-out error"), "t", "relative LOO error").log_y();
    if let Some(f) = &s.frozen {
        c.add(Series::new("time-frozen", f.grid.times(), f.loo_norms(), 0));
    }
    if let Some(w) = &s.warping {
        let flat = |v: f64| vec![v; times.len()];
        c.add(Series::new("warping: k", times.to_vec(), flat(w.training_meta.k_loo), 1).dashed());
        if let Some(p) = w.training_meta.phi_loo {
            c.add(Series::new("warping: phi", times.to_vec(), flat(p), 2).dashed());
        }
        if let Some(&l) = w.training_meta.score_loo.first() {
            c.add(Series::new("warping: score 1", times.to_vec(), flat(l), 3).dashed());
        }
    }
    write_text(&out.join(files::PLOTS[2]), &c.render())?;

    for (file, stat) in [(files::PLOTS[3], "mean"), (files::PLOTS[4], "std")] {
        let mut c = Chart::new(&format!("{name}: {stat}"), "t", stat);
        c.add(Series::new("solver MCS", times.to_vec(), moments.require(&format!("mcs_{stat}"), moments_path)?.to_vec(), 7));
        for (label, key, color) in [("time-warping", "warping", 1), ("time-frozen", "frozen", 0)] {
            if let Some(col) = moments.column(&format!("{key}_{stat}")) {
                c.add(Series::new(label, times.to_vec(), col.to_vec(), color).dashed());
            }
        }
        write_text(&out.join(file), &c.render())?;
    }

    let ex_path = out.join(files::EXAMPLES);
    let ex = Table::read(&ex_path)?;
    let mut c = Chart::new(&format!("{name}: validation examples"), "t", "response");
    for i in 0..EXAMPLES {
        for (key, label, dashed) in [("truth", "solver", false), ("warping", "time-warping", true), ("frozen", "time-frozen", true)] {
            if let Some(col) = ex.column(&format!("{key}_{i}")) {
                let mut sr = Series::new(format!("{label} #{i}"), times.to_vec(), col.to_vec(), i);
                if dashed {
                    sr = sr.dashed();
                }
                if key == "frozen" {
                    sr.width = 0.8;
                }
                c.add(sr);
            }
        }
    }
    write_text(&out.join(files::PLOTS[5]), &c.render())
}

// ---------------------------------------------------------------- plumbing

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::data(path, e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

/// Creates the output directory and writes the effective configuration.
pub fn prepare(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    write_text(&out.join(files::CONFIG), &cfg.to_toml())
}

/// Records a stage runtime in `timings.json`.
pub fn record_timing(out: &Path, stage: &str, seconds: f64) -> Result<()> {
    let path = out.join(files::TIMINGS);
    let mut map: BTreeMap<String, f64> = match fs::read_to_string(&path) {
        Ok(text) => serde_json::from_str(&text).unwrap_or_default(),
        Err(_) => BTreeMap::new(),
    };
    map.insert(stage.to_string(), seconds);
    write_json(&path, &map)
}

fn timed<T>(out: &Path, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let value = f()?;
    let secs = start.elapsed().as_secs_f64();
    log::info!("{stage}: {secs:.1}s");
    record_timing(out, stage, secs)?;
    Ok(value)
}

// Subcommand forms: read inputs from `out`, write outputs to `out`.

pub fn simulate_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    prepare(cfg, out)?;
    timed(out, "simulate", || write_simulation(cfg, out, &simulate(cfg)?))
}

pub fn fit_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    timed(out, "fit", || write_fit(out, &fit(cfg, &read_simulation(cfg, out)?)?))
}

pub fn stats_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    timed(out, "stats", || write_stats(cfg, out, &stats(cfg, &read_fit(out)?)?))
}

pub fn validate_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    timed(out, "validate", || write_validation(cfg, out, &validate(cfg, &read_fit(out)?)?))
}

pub fn report_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<Summary> {
    timed(out, "report", || report(cfg, out))
}

/// End-to-end run with in-memory hand-over between stages.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<Summary> {
    let start = Instant::now();
    prepare(cfg, out)?;
    let sim = timed(out, "simulate", || {
        let sim = simulate(cfg)?;
        write_simulation(cfg, out, &sim)?;
        Ok(sim)
    })?;
    let s = timed(out, "fit", || {
        let s = fit(cfg, &sim)?;
        write_fit(out, &s)?;
        Ok(s)
    })?;
    timed(out, "stats", || write_stats(cfg, out, &stats(cfg, &s)?))?;
    timed(out, "validate", || write_validation(cfg, out, &validate(cfg, &s)?))?;
    let summary = timed(out, "report", || report(cfg, out))?;
    record_timing(out, "total", start.elapsed().as_secs_f64())?;
    Ok(summary)
}

/// Predicts one trajectory per method at the physical input `xi`.
pub fn predict(cfg: &ExperimentConfig, out: &Path, xi: &[f64]) -> Result<Table> {
    let s = read_fit(out)?;
    if xi.len() != cfg.input_names.len() {
        return Err(CliError::Config {
            key: "--input".into(),
            line: None,
            message: format!("expected {} comma-separated values, got {}", cfg.input_names.len(), xi.len()),
        });
    }
    let grid = cfg.grid();
    let mut t = Table::new();
    t.push("time", grid.times());
    if let Some(w) = &s.warping {
        let p = w.predict(xi, grid).stage("predict")?;
        t.push("warping", padded(&p.values, grid.len()));
    }
    if let Some(f) = &s.frozen {
        let p = f.predict(xi).stage("predict")?;
        t.push("frozen", padded(&p.values, grid.len()));
    }
    Ok(t)
}

/// Every file a complete run leaves in its output directory, apart from
/// `timings.json`.
pub fn expected_files(cfg: &ExperimentConfig) -> Vec<PathBuf> {
    let mut names = vec![
        files::CONFIG,
        files::DESIGN,
        files::ENSEMBLE,
        files::SURROGATE,
        files::SURROGATE_MOMENTS,
        files::STATS,
        files::VALIDATION_REPORT,
        files::MOMENTS,
        files::VALIDATION,
        files::EXAMPLES,
        files::SUMMARY,
    ];
    if cfg.separate_frozen_design() {
        names.extend([files::DESIGN_FROZEN, files::ENSEMBLE_FROZEN]);
    }
    if cfg.method.warping() {
        names.push(files::WARP_PARAMS);
    }
    if cfg.method.frozen() {
        names.push(files::LOO);
    }
    names.extend(files::PLOTS);
    names.into_iter().map(PathBuf::from).collect()
}
