//! Experiment configuration: TOML parsing, validation and default
//! expansion from the benchmark tables.

use std::path::PathBuf;

use chronowarp::benchmarks::Benchmark;
use chronowarp::odes::{ModelKind, OdeModel, TimeGrid, Tolerances};
use chronowarp::prob::{seeds, Marginal, RandomVector, SamplingScheme};
use chronowarp::warp::{WarpForm, DEFAULT_EVAL_BUDGET, DEFAULT_T0};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const DEFAULT_MASTER_SEED: u64 = 20240601;
pub const DEFAULT_N_VAL: usize = 10_000;
pub const DEFAULT_N_MC: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Frozen,
    Warping,
    Both,
}

impl Method {
    pub fn frozen(self) -> bool {
        matches!(self, Method::Frozen | Method::Both)
    }

    pub fn warping(self) -> bool {
        matches!(self, Method::Warping | Method::Both)
    }
}

// Raw file layout. Every field except the model name may be omitted.

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub model: RawModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inputs: Option<Vec<RawInput>>,
    #[serde(default)]
    pub grid: RawGrid,
    #[serde(default)]
    pub design: RawDesign,
    #[serde(default)]
    pub surrogate: RawSurrogate,
    #[serde(default)]
    pub validation: RawValidation,
    #[serde(default)]
    pub solver: RawSolver,
    #[serde(default, skip_serializing_if = "RawOutput::is_empty")]
    pub output: RawOutput,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawModel {
    pub name: String,
    pub observable: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawInput {
    pub name: Option<String>,
    pub family: String,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGrid {
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub train_horizon: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDesign {
    pub n: Option<usize>,
    pub scheme: Option<SamplingScheme>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSurrogate {
    pub method: Option<Method>,
    pub p_max: Option<usize>,
    pub warp_form: Option<WarpForm>,
    pub epsilon_target: Option<f64>,
    pub eval_budget: Option<usize>,
    pub t0: Option<f64>,
    pub n_frozen: Option<usize>,
    pub p_max_frozen: Option<usize>,
    pub n_mc: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawValidation {
    pub n_val: Option<usize>,
    pub seed: Option<u64>,
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSolver {
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOutput {
    pub dir: Option<PathBuf>,
}

impl RawOutput {
    fn is_empty(&self) -> bool {
        self.dir.is_none()
    }
}

/// Fully resolved experiment settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: OdeModel,
    pub input_names: Vec<String>,
    pub marginals: Vec<Marginal>,
    pub dt: f64,
    pub horizon: f64,
    pub train_horizon: f64,
    pub n: usize,
    pub scheme: SamplingScheme,
    /// Master seed; per-purpose streams are derived from it.
    pub seed: u64,
    pub method: Method,
    pub p_max: usize,
    pub warp_form: WarpForm,
    pub epsilon_target: f64,
    pub eval_budget: usize,
    pub t0: f64,
    pub n_frozen: usize,
    pub p_max_frozen: usize,
    pub n_mc: usize,
    pub n_val: usize,
    pub validation_seed: u64,
    pub threshold: f64,
    pub tolerances: Tolerances,
    pub output_dir: PathBuf,
}

fn input_names(kind: ModelKind) -> Vec<String> {
    let names: &[&str] = match kind {
        ModelKind::RigidBody | ModelKind::KraichnanOrszag => &["xi"],
        ModelKind::Oregonator => &["k1", "k2", "k3", "k4", "k5"],
        ModelKind::BoucWen => &["zeta", "omega", "alpha", "amplitude", "omega_x"],
        ModelKind::Duffing => &["zeta", "omega", "epsilon"],
    };
    names.iter().map(|s| s.to_string()).collect()
}

/// 1-based line of `key` inside `[section]` (or the `index`-th
/// `[[section]]` table) of `source`.
fn locate(source: &str, section: &str, index: usize, key: &str) -> Option<usize> {
    let mut current = String::new();
    // Occurrences of `[[section]]` so far; plain tables count as one.
    let mut seen = 0usize;
    let mut array = false;
    for (no, line) in source.lines().enumerate() {
        let t = line.trim();
        if let Some(h) = t.strip_prefix("[[").and_then(|r| r.split("]]").next()) {
            current = h.trim().to_string();
            array = true;
            if current == section {
                seen += 1;
            }
            continue;
        }
        if let Some(h) = t.strip_prefix('[').and_then(|r| r.split(']').next()) {
            current = h.trim().to_string();
            array = false;
            continue;
        }
        let wanted = if array { seen == index + 1 } else { index == 0 };
        if current == section && wanted {
            if let Some((k, _)) = t.split_once('=') {
                if k.trim() == key {
                    return Some(no + 1);
                }
            }
        }
    }
    None
}

struct Checker<'a> {
    source: &'a str,
}

impl Checker<'_> {
    fn err(&self, section: &str, index: Option<usize>, key: &str, msg: impl std::fmt::Display) -> CliError {
        let line = locate(self.source, section, index.unwrap_or(0), key);
        let path = match index {
            Some(i) => format!("{section}[{i}].{key}"),
            None => format!("{section}.{key}"),
        };
        CliError::Config {
            key: path,
            line,
            message: msg.to_string(),
        }
    }
}

impl ExperimentConfig {
    /// Parses and resolves a TOML document.
    pub fn from_toml(source: &str) -> Result<Self, CliError> {
        Self::from_toml_with_seed(source, None)
    }

    /// As [`Self::from_toml`], with `seed` replacing the master seed before
    /// the derived seeds are resolved.
    pub fn from_toml_with_seed(source: &str, seed: Option<u64>) -> Result<Self, CliError> {
        let mut raw: RawConfig = toml::from_str(source).map_err(|e| CliError::from_toml(source, e))?;
        if seed.is_some() {
            raw.design.seed = seed;
        }
        Self::resolve(&raw, source)
    }

    pub fn from_file(path: &std::path::Path, seed: Option<u64>) -> Result<Self, CliError> {
        let source = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml_with_seed(&source, seed)
    }

    pub fn resolve(raw: &RawConfig, source: &str) -> Result<Self, CliError> {
        let c = Checker { source };
        let kind: ModelKind = serde_json::from_value(serde_json::Value::String(raw.model.name.clone())).map_err(|_| {
            c.err(
                "model",
                None,
                "name",
                format!(
                    "unknown model `{}` (expected rigid_body, kraichnan_orszag, oregonator, bouc_wen or duffing)",
                    raw.model.name
                ),
            )
        })?;
        let b = Benchmark::for_kind(kind);
        let model = match raw.model.observable {
            Some(o) => OdeModel::new(kind, o).map_err(|e| c.err("model", None, "observable", e))?,
            None => OdeModel::with_default_observable(kind),
        };

        let (input_names, marginals) = match &raw.inputs {
            None => (input_names(kind), b.marginals.clone()),
            Some(list) => {
                if list.len() != kind.param_dim() {
                    return Err(CliError::Config {
                        key: "inputs".into(),
                        line: locate(source, "inputs", 0, "family"),
                        message: format!("{} takes {} inputs, got {}", kind.name(), kind.param_dim(), list.len()),
                    });
                }
                let defaults = input_names(kind);
                let mut names = Vec::new();
                let mut ms = Vec::new();
                for (i, inp) in list.iter().enumerate() {
                    names.push(inp.name.clone().unwrap_or_else(|| defaults[i].clone()));
                    let need = |v: Option<f64>, key: &str| {
                        v.ok_or_else(|| c.err("inputs", Some(i), key, format!("required for family `{}`", inp.family)))
                    };
                    let m = match inp.family.as_str() {
                        "uniform" => match (inp.lower, inp.upper, inp.mean, inp.std) {
                            (Some(lo), Some(hi), None, None) => Marginal::uniform(lo, hi),
                            (None, None, Some(mu), Some(sd)) => Marginal::uniform_from_moments(mu, sd),
                            _ => {
                                return Err(c.err(
                                    "inputs",
                                    Some(i),
                                    "family",
                                    "uniform inputs take either lower and upper, or mean and std",
                                ))
                            }
                        },
                        "gaussian" => {
                            if inp.lower.is_some() || inp.upper.is_some() {
                                return Err(c.err("inputs", Some(i), "lower", "gaussian inputs take mean and std only"));
                            }
                            Marginal::gaussian(need(inp.mean, "mean")?, need(inp.std, "std")?)
                        }
                        other => {
                            return Err(c.err(
                                "inputs",
                                Some(i),
                                "family",
                                format!("unknown family `{other}` (expected uniform or gaussian)"),
                            ))
                        }
                    }
                    .map_err(|e| c.err("inputs", Some(i), "family", e))?;
                    ms.push(m);
                }
                (names, ms)
            }
        };

        let positive = |v: f64, section: &str, key: &str| -> Result<f64, CliError> {
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(c.err(section, None, key, format!("must be positive and finite, got {v}")))
            }
        };
        let dt = positive(raw.grid.dt.unwrap_or(b.dt), "grid", "dt")?;
        let horizon = positive(raw.grid.horizon.unwrap_or(b.horizon), "grid", "horizon")?;
        let train_horizon = positive(
            raw.grid.train_horizon.unwrap_or(b.train_horizon.max(horizon)),
            "grid",
            "train_horizon",
        )?;
        if train_horizon < horizon {
            return Err(c.err("grid", None, "train_horizon", "must not be shorter than the horizon"));
        }
        if (horizon / dt).round() < 1.0 {
            return Err(c.err("grid", None, "dt", "must be smaller than the horizon"));
        }

        let n = raw.design.n.unwrap_or(b.n_design);
        if n < 3 {
            return Err(c.err("design", None, "n", format!("must be at least 3, got {n}")));
        }
        let seed = raw.design.seed.unwrap_or(DEFAULT_MASTER_SEED);

        let s = &raw.surrogate;
        let epsilon_target = s.epsilon_target.unwrap_or(b.epsilon_target);
        if !(0.0..1.0).contains(&epsilon_target) {
            return Err(c.err("surrogate", None, "epsilon_target", format!("must lie in [0, 1), got {epsilon_target}")));
        }
        let t0 = positive(s.t0.unwrap_or(DEFAULT_T0), "surrogate", "t0")?;
        let eval_budget = s.eval_budget.unwrap_or(DEFAULT_EVAL_BUDGET);
        if eval_budget < 4 {
            return Err(c.err("surrogate", None, "eval_budget", format!("must be at least 4, got {eval_budget}")));
        }
        let n_frozen = s.n_frozen.unwrap_or(b.n_frozen);
        if n_frozen < 3 {
            return Err(c.err("surrogate", None, "n_frozen", format!("must be at least 3, got {n_frozen}")));
        }
        let n_mc = s.n_mc.unwrap_or(DEFAULT_N_MC);
        if n_mc < 100 {
            return Err(c.err("surrogate", None, "n_mc", format!("must be at least 100, got {n_mc}")));
        }

        let v = &raw.validation;
        let n_val = v.n_val.unwrap_or(DEFAULT_N_VAL);
        if n_val < 2 {
            return Err(c.err("validation", None, "n_val", format!("must be at least 2, got {n_val}")));
        }
        let threshold = positive(v.threshold.unwrap_or(chronowarp::surrogate::DEFAULT_THRESHOLD), "validation", "threshold")?;

        let tolerances = Tolerances {
            rel: positive(raw.solver.rel_tol.unwrap_or(Tolerances::default().rel), "solver", "rel_tol")?,
            abs: positive(raw.solver.abs_tol.unwrap_or(Tolerances::default().abs), "solver", "abs_tol")?,
        };

        Ok(Self {
            model,
            input_names,
            marginals,
            dt,
            horizon,
            train_horizon,
            n,
            scheme: raw.design.scheme.unwrap_or(SamplingScheme::LatinHypercube),
            seed,
            method: s.method.unwrap_or(Method::Both),
            p_max: s.p_max.unwrap_or(b.p_max),
            warp_form: s.warp_form.unwrap_or(b.warp_form),
            epsilon_target,
            eval_budget,
            t0,
            n_frozen,
            p_max_frozen: s.p_max_frozen.unwrap_or(b.p_max_frozen),
            n_mc,
            n_val,
            validation_seed: v.seed.unwrap_or_else(|| seeds::derive(seed, seeds::VALIDATION)),
            threshold,
            tolerances,
            output_dir: raw
                .output
                .dir
                .clone()
                .unwrap_or_else(|| PathBuf::from("runs").join(kind.name())),
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.model.kind
    }

    pub fn rv(&self) -> RandomVector {
        RandomVector::new(self.marginals.clone()).expect("marginals validated at resolution")
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid::with_horizon(self.dt, self.horizon).expect("grid validated at resolution")
    }

    pub fn train_grid(&self) -> TimeGrid {
        let grid = self.grid();
        let steps = ((self.train_horizon / self.dt).round() as usize).max(grid.steps);
        TimeGrid::new(self.dt, steps).expect("grid validated at resolution")
    }

    pub fn design_seed(&self) -> u64 {
        seeds::derive(self.seed, seeds::DESIGN)
    }

    pub fn moments_seed(&self) -> u64 {
        seeds::derive(self.seed, seeds::SURROGATE_MOMENTS)
    }

    /// Whether the time-frozen baseline needs its own design.
    pub fn separate_frozen_design(&self) -> bool {
        self.method.frozen() && self.n_frozen != self.n
    }

    /// The default-expanded configuration in file form. The output
    /// directory is left out: it is where the file is written.
    pub fn to_raw(&self) -> RawConfig {
        RawConfig {
            model: RawModel {
                name: self.kind().name().to_string(),
                observable: Some(self.model.observable),
            },
            inputs: Some(
                self.input_names
                    .iter()
                    .zip(&self.marginals)
                    .map(|(name, m)| match *m {
                        Marginal::Uniform { lower, upper } => RawInput {
                            name: Some(name.clone()),
                            family: "uniform".into(),
                            lower: Some(lower),
                            upper: Some(upper),
                            ..Default::default()
                        },
                        Marginal::Gaussian { mean, std } => RawInput {
                            name: Some(name.clone()),
                            family: "gaussian".into(),
                            mean: Some(mean),
                            std: Some(std),
                            ..Default::default()
                        },
                    })
                    .collect(),
            ),
            grid: RawGrid {
                dt: Some(self.dt),
                horizon: Some(self.horizon),
                train_horizon: Some(self.train_horizon),
            },
            design: RawDesign {
                n: Some(self.n),
                scheme: Some(self.scheme),
                seed: Some(self.seed),
            },
            surrogate: RawSurrogate {
                method: Some(self.method),
                p_max: Some(self.p_max),
                warp_form: Some(self.warp_form),
                epsilon_target: Some(self.epsilon_target),
                eval_budget: Some(self.eval_budget),
                t0: Some(self.t0),
                n_frozen: Some(self.n_frozen),
                p_max_frozen: Some(self.p_max_frozen),
                n_mc: Some(self.n_mc),
            },
            validation: RawValidation {
                n_val: Some(self.n_val),
                seed: Some(self.validation_seed),
                threshold: Some(self.threshold),
            },
            solver: RawSolver {
                rel_tol: Some(self.tolerances.rel),
                abs_tol: Some(self.tolerances.abs),
            },
            output: RawOutput::default(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_raw()).expect("plain data serializes")
    }
}
