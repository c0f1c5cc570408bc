//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit status
//! if any criterion fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use chronowarp::chaos::{loo_error, BasisSet, Family};
use chronowarp::compress::{fit_pca, pca_reconstruct, pca_scores, truncation_error};
use chronowarp::odes::{integrate, ModelKind, OdeModel, TimeGrid, Tolerances, Trajectory};
use chronowarp::warp::{find_warp, WarpConfig, WarpForm};
use chronowarp_cli::pipeline::{self, Summary};
use chronowarp_cli::ExperimentConfig;
use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Check {
    what: String,
    ok: bool,
}

fn check(what: impl Into<String>, ok: bool) -> Check {
    Check { what: what.into(), ok }
}

fn at_most(name: &str, value: Option<f64>, bound: f64) -> Check {
    match value {
        Some(v) => check(format!("{name} = {v:.4e} <= {bound:.1e}"), v <= bound),
        None => check(format!("{name} unavailable"), false),
    }
}

fn within(name: &str, value: usize, target: usize, tol: usize) -> Check {
    check(
        format!("{name} = {value} in {target} +/- {tol}"),
        value + tol >= target && value <= target + tol,
    )
}

struct Suite {
    failed: usize,
}

impl Suite {
    fn run(&mut self, no: usize, title: &str, f: impl FnOnce() -> Vec<Check>) {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f));
        let secs = start.elapsed().as_secs_f64();
        let (ok, lines) = match outcome {
            Ok(checks) => {
                let ok = !checks.is_empty() && checks.iter().all(|c| c.ok);
                let lines = checks
                    .into_iter()
                    .map(|c| format!("    [{}] {}", if c.ok { "ok" } else { "FAIL" }, c.what))
                    .collect();
                (ok, lines)
            }
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, vec![format!("    panicked: {msg}")])
            }
        };
        if !ok {
            self.failed += 1;
        }
        println!("{} criterion {no}: {title} ({secs:.1}s)", if ok { "PASS" } else { "FAIL" });
        for l in lines {
            println!("{l}");
        }
    }
}

fn bundled(name: &str) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(format!("{name}.toml"));
    ExperimentConfig::from_file(&path, None).expect("bundled config")
}

/// Runs a bundled benchmark; returns the summary and the wall time.
fn benchmark(root: &Path, name: &str) -> (Summary, f64) {
    let cfg = bundled(name);
    let out = root.join(name);
    let start = Instant::now();
    let summary = pipeline::run_experiment(&cfg, &out).expect("pipeline run");
    (summary, start.elapsed().as_secs_f64())
}

fn rigid_body(s: &Summary, secs: f64) -> Vec<Check> {
    let w = s.warping.as_ref().expect("time-warping results");
    vec![
        at_most("exceedance", Some(w.exceedance), 0.02),
        at_most("mean error", w.mean_error, 5e-3),
        at_most("std error", w.std_error, 5e-3),
        check(format!("epsilon1 = {:.3e} <= 1e-3", w.epsilon1), w.epsilon1 <= 1e-3),
        within("K'", w.retained, 18, 3),
        at_most("k LOO", Some(w.k_loo), 1e-2),
        check(format!("runtime {secs:.0}s <= 300s"), secs <= 300.0),
    ]
}

fn frozen_degradation(s: &Summary) -> Vec<Check> {
    let w = s.warping.as_ref().expect("time-warping results");
    let f = s.frozen.as_ref().expect("time-frozen results");
    let ratio = f.loo_median_late / f.loo_median_early;
    let std_ratio = f.std_error.unwrap_or(f64::NAN) / w.std_error.unwrap_or(f64::NAN);
    vec![
        check(
            format!(
                "median frozen LOO on [{}, {}] / on [{}, {}] = {ratio:.3e} >= 100",
                f.late_window.0, f.late_window.1, f.early_window.0, f.early_window.1
            ),
            ratio >= 100.0,
        ),
        check(format!("frozen / warping std error = {std_ratio:.3e} >= 10"), std_ratio >= 10.0),
    ]
}

fn kraichnan_orszag(s: &Summary) -> Vec<Check> {
    let w = s.warping.as_ref().expect("time-warping results");
    vec![
        at_most("exceedance", Some(w.exceedance), 0.03),
        at_most("mean error", w.mean_error, 5e-3),
        at_most("std error", w.std_error, 5e-3),
        at_most("k LOO", Some(w.k_loo), 1e-4),
    ]
}

fn oregonator(s: &Summary) -> Vec<Check> {
    let w = s.warping.as_ref().expect("time-warping results");
    let mut checks = vec![
        at_most("exceedance", Some(w.exceedance), 0.03),
        at_most("mean error", w.mean_error, 5e-3),
        at_most("std error", w.std_error, 2e-2),
        at_most("k LOO", Some(w.k_loo), 1e-3),
        at_most("phi LOO", w.phi_loo, 2e-1),
        check(format!("solver concentrations strictly positive (min {:.4e})", s.truth_min), s.truth_min > 0.0),
    ];
    for o in &s.observations {
        checks.push(check(format!("observation: {o}"), true));
    }
    checks
}

fn bouc_wen(s: &Summary) -> Vec<Check> {
    let w = s.warping.as_ref().expect("time-warping results");
    vec![
        at_most("exceedance", Some(w.exceedance), 0.08),
        at_most("mean error", w.mean_error, 1e-2),
        at_most("std error", w.std_error, 1e-2),
    ]
}

fn duffing(s: &Summary) -> Vec<Check> {
    let w = s.warping.as_ref().expect("time-warping results");
    vec![
        at_most("exceedance", Some(w.exceedance), 0.01),
        at_most("mean error", w.mean_error, 5e-3),
        at_most("std error", w.std_error, 5e-3),
        check(format!("epsilon1 = {:.3e} <= 1e-3", w.epsilon1), w.epsilon1 <= 1e-3),
        within("K'", w.retained, 8, 2),
    ]
}

fn sampled(f: impl Fn(f64) -> f64) -> Trajectory {
    let grid = TimeGrid::with_horizon(0.01, 20.0).unwrap();
    Trajectory::new(grid, grid.times().into_iter().map(f).collect()).unwrap()
}

fn calibration() -> Vec<Check> {
    use std::f64::consts::PI;
    let config = WarpConfig::new(WarpForm::ScaleShift, sampled(|t| (PI * t).sin())).unwrap();
    let fit = find_warp(&sampled(|t| (2.0 * PI * t).sin()), &config, 0).unwrap();
    vec![
        check(format!("k = {:.6}, |k - 2| <= 1e-2", fit.params.k), (fit.params.k - 2.0).abs() <= 1e-2),
        check(format!("phi = {:.3e}, |phi| <= 1e-2", fit.params.phi), fit.params.phi.abs() <= 1e-2),
        check(format!("{} objective evaluations <= 2000", fit.evaluations), fit.evaluations <= 2000),
    ]
}

// Property suites.

fn lstsq(a: &Array2<f64>, y: &[f64]) -> Vec<f64> {
    let (n, p) = a.dim();
    let m = DMatrix::from_fn(n, p, |i, j| a[[i, j]]);
    m.svd(true, true)
        .solve(&DVector::from_column_slice(y), 1e-14)
        .unwrap()
        .iter()
        .copied()
        .collect()
}

fn loo_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let dims = rng.random_range(1..4);
        let families: Vec<Family> = (0..dims)
            .map(|_| if rng.random_bool(0.5) { Family::Legendre } else { Family::Hermite })
            .collect();
        let basis = BasisSet::total_degree(families.clone(), rng.random_range(1..4));
        let p = basis.len();
        let n = p + rng.random_range(3..15);
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                families
                    .iter()
                    .map(|f| match f {
                        Family::Legendre => rng.random_range(-1.0..1.0),
                        Family::Hermite => rng.random_range(-2.5..2.5),
                    })
                    .collect()
            })
            .collect();
        let a = Array2::from_shape_vec((n, p), basis.information_matrix(&points).unwrap()).unwrap();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loo = loo_error(&a, &y, &lstsq(&a, &y)).unwrap();
        let mut sum = 0.0;
        for i in 0..n {
            let keep: Vec<usize> = (0..n).filter(|&r| r != i).collect();
            let sub = a.select(ndarray::Axis(0), &keep);
            let ys: Vec<f64> = keep.iter().map(|&r| y[r]).collect();
            let c = lstsq(&sub, &ys);
            let pred: f64 = (0..p).map(|j| a[[i, j]] * c[j]).sum();
            sum += (y[i] - pred).powi(2);
        }
        let oracle = sum / n as f64;
        worst = worst.max((loo.abs - oracle).abs() / oracle);
    }
    check(format!("LOO vs refits, 100 instances: worst relative gap {worst:.2e} <= 1e-10"), worst <= 1e-10)
}

/// Gauss rule from the Jacobi matrix of the monic three-term recurrence.
/// Gauss rule for the probability measure with monic recurrence coefficients
/// `beta`. Golub-Welsch starting nodes are polished by Newton on the
/// orthonormal recurrence, and weights are the Christoffel numbers.
fn gauss_rule(n: usize, beta: impl Fn(usize) -> f64) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::zeros(n, n);
    for k in 1..n {
        let b = beta(k).sqrt();
        j[(k, k - 1)] = b;
        j[(k - 1, k)] = b;
    }
    // Orthonormal values p_0..p_n and the derivative of p_n at x.
    let recur = |x: f64| {
        let mut p = vec![1.0, x / beta(1).sqrt()];
        let mut d = vec![0.0, 1.0 / beta(1).sqrt()];
        for k in 1..n {
            let (b1, b0) = (beta(k + 1).sqrt(), beta(k).sqrt());
            p.push((x * p[k] - b0 * p[k - 1]) / b1);
            d.push((p[k] + x * d[k] - b0 * d[k - 1]) / b1);
        }
        (p, d[n])
    };
    let mut nodes: Vec<f64> = j.symmetric_eigen().eigenvalues.iter().copied().collect();
    nodes.sort_by(f64::total_cmp);
    let mut weights = Vec::with_capacity(n);
    for x in &mut nodes {
        for _ in 0..4 {
            let (p, d) = recur(*x);
            *x -= p[n] / d;
        }
        let (p, _) = recur(*x);
        weights.push(1.0 / p[..n].iter().map(|v| v * v).sum::<f64>());
    }
    (nodes, weights)
}

fn orthonormality() -> Check {
    const DEG: usize = 20;
    let rules = [
        (Family::Legendre, gauss_rule(21, |k| (k * k) as f64 / (4.0 * (k * k) as f64 - 1.0))),
        (Family::Hermite, gauss_rule(21, |k| k as f64)),
    ];
    let mut worst = 0.0f64;
    for (family, (nodes, weights)) in &rules {
        for a in 0..=DEG {
            for b in 0..=a {
                let g: f64 = nodes
                    .iter()
                    .zip(weights)
                    .map(|(&x, &w)| w * family.eval(a, x) * family.eval(b, x))
                    .sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
    }
    check(format!("Legendre and Hermite Gram matrices to degree {DEG}: max deviation {worst:.2e} <= 1e-10"), worst <= 1e-10)
}

fn conservation() -> Check {
    let grid = TimeGrid::with_horizon(0.01, 50.0).unwrap();
    let mut worst = 0.0f64;
    let rb = OdeModel::with_default_observable(ModelKind::RigidBody);
    let ko = OdeModel::with_default_observable(ModelKind::KraichnanOrszag);
    for xi in [-1.0, -0.6, -0.1, 0.0, 0.45, 0.9, 1.0] {
        type Law = fn(&[f64], f64) -> f64;
        let laws: [(&OdeModel, Law); 4] = [
            (&rb, |s, _| s[0] * s[0] + s[2] * s[2]),
            (&rb, |s, xi| s[1] * s[1] - xi * s[0] * s[0]),
            (&ko, |s, _| s[0] * s[0] - s[1] * s[1]),
            (&ko, |s, _| 2.0 * s[1] * s[1] + s[2] * s[2]),
        ];
        for (model, law) in laws {
            let sol = integrate(model, &[xi], grid, Tolerances::default()).unwrap();
            let state = |j: usize| sol.states.row(j).to_vec();
            let c0 = law(&state(0), xi);
            for j in 0..grid.len() {
                worst = worst.max((law(&state(j), xi) - c0).abs());
            }
        }
    }
    check(format!("conserved quantities over [0, 50]: max drift {worst:.2e} <= 1e-6"), worst <= 1e-6)
}

fn pca_tail_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(3..30);
        let k = rng.random_range(2..60);
        let y = Array2::from_shape_fn((n, k), |_| rng.random_range(-3.0..3.0));
        let full = fit_pca(&y, 0.0).unwrap();
        let scores = pca_scores(&y, &full).unwrap();
        let total: f64 = full.eigenvalues.iter().sum();
        for kp in 0..=full.eigenvectors.len() {
            let mut part = full.clone();
            part.retained = kp;
            part.eigenvectors.truncate(kp);
            let mut resid = 0.0;
            for i in 0..n {
                let s: Vec<f64> = scores.row(i).iter().take(kp).copied().collect();
                let back = pca_reconstruct(&part, &s).unwrap();
                resid += (0..k).map(|j| (back[j] - y[[i, j]]).powi(2)).sum::<f64>();
            }
            let eps = resid / (n as f64 - 1.0) / total;
            worst = worst.max((eps - truncation_error(&full.eigenvalues, kp)).abs());
        }
    }
    check(format!("reconstruction residual vs tail eigenvalue share: max gap {worst:.2e} <= 1e-8"), worst <= 1e-8)
}

fn reruns(root: &Path) -> Check {
    let src = "[model]\nname = \"duffing\"\n[grid]\nhorizon = 4.0\ntrain_horizon = 16.0\n\
               [design]\nn = 20\n[surrogate]\np_max = 4\nn_frozen = 30\np_max_frozen = 3\nn_mc = 200\n\
               [validation]\nn_val = 50\n";
    let cfg = ExperimentConfig::from_toml(src).unwrap();
    let dirs: Vec<PathBuf> = (0..2).map(|i| root.join(format!("rerun{i}"))).collect();
    for d in &dirs {
        pipeline::run_experiment(&cfg, d).unwrap();
    }
    let mut compared = 0;
    let mut differing = Vec::new();
    for name in pipeline::expected_files(&cfg) {
        compared += 1;
        if fs::read(dirs[0].join(&name)).unwrap() != fs::read(dirs[1].join(&name)).unwrap() {
            differing.push(name.display().to_string());
        }
    }
    check(
        format!("{compared} output files byte-identical across reruns (differing: {differing:?})"),
        differing.is_empty(),
    )
}

fn main() {
    // `cargo test` passes harness flags; a name filter that excludes this
    // target skips it.
    let all: Vec<String> = std::env::args().skip(1).collect();
    if all.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let args: Vec<&String> = all.iter().filter(|a| !a.starts_with('-')).collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return;
    }
    let tmp = tempfile::tempdir().expect("temporary directory");
    let root = tmp.path();
    let mut suite = Suite { failed: 0 };

    let rb = catch_unwind(AssertUnwindSafe(|| benchmark(root, "rigid_body")));
    suite.run(1, "rigid body, time warping", || match &rb {
        Ok((s, secs)) => rigid_body(s, *secs),
        Err(_) => panic!("rigid body pipeline failed"),
    });
    suite.run(2, "time-frozen degradation on the rigid-body design", || match &rb {
        Ok((s, _)) => frozen_degradation(s),
        Err(_) => panic!("rigid body pipeline failed"),
    });
    suite.run(3, "Kraichnan-Orszag", || kraichnan_orszag(&benchmark(root, "kraichnan_orszag").0));
    suite.run(4, "Oregonator", || oregonator(&benchmark(root, "oregonator").0));
    suite.run(5, "Bouc-Wen", || bouc_wen(&benchmark(root, "bouc_wen").0));
    suite.run(6, "Duffing", || duffing(&benchmark(root, "duffing").0));
    suite.run(7, "calibration pair", calibration);
    suite.run(8, "property suites", || {
        vec![loo_oracle(), orthonormality(), conservation(), pca_tail_identity(), reruns(root)]
    });

    println!("{} of 8 criteria failed", suite.failed);
    if suite.failed > 0 {
        std::process::exit(1);
    }
}
