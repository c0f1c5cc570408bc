//! Hybrid least angle regression.
//!
//! The LARS path only decides the order in which regressors enter the model.
//! After every step the active set is refit by ordinary least squares and
//! scored by its leave-one-out error; the best step is returned. Regressors
//! are centered and scaled to unit norm for the path, the intercept is kept
//! outside of it.
//!
//! Least squares and leverages share one incrementally grown thin QR
//! factorization `[1/sqrt(n), Q]` (modified Gram–Schmidt with one
//! reorthogonalization pass); centered columns are orthogonal to the
//! constant, so the intercept block decouples.

use super::loo::LEVERAGE_GUARD;

/// Relative norm below which an entering column is considered to lie in
/// the span of the active set.
const DEPENDENCE_TOL: f64 = 1e-8;

/// Path terminates once the largest absolute correlation drops below this
/// fraction of its initial value.
const CORRELATION_TOL: f64 = 1e-12;

/// Best model found along one LARS path.
#[derive(Debug, Clone)]
pub(crate) struct PathBest {
    /// Candidate column positions of the active regressors (excluding the
    /// constant, which is column 0 and always present).
    pub active: Vec<usize>,
    /// Coefficients in the raw basis: `[constant, active...]`.
    pub coefficients: Vec<f64>,
    pub loo_abs: f64,
}

/// Steps without LOO improvement after which the path is abandoned.
const PATH_PATIENCE: usize = 20;

/// Candidate regressors centered and scaled to unit norm. Column 0 is the
/// constant and is not part of the path.
#[derive(Debug, Clone)]
pub(crate) struct Regressors {
    n: usize,
    p: usize,
    means: Vec<f64>,
    norms: Vec<f64>,
    x: Vec<f64>,
    usable: Vec<bool>,
}

impl Regressors {
    /// `a` is column-major with `n` rows.
    pub(crate) fn new(a: &[f64], n: usize) -> Self {
        let p = a.len() / n;
        debug_assert_eq!(a.len(), n * p);
        let nf = n as f64;
        let mut means = vec![0.0; p];
        let mut norms = vec![0.0; p];
        let mut x = vec![0.0; n * p];
        let mut usable = vec![false; p];
        for j in 1..p {
            let col = &a[j * n..(j + 1) * n];
            let mu = col.iter().sum::<f64>() / nf;
            let scale = col.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
            let s = col.iter().map(|v| (v - mu).powi(2)).sum::<f64>().sqrt();
            means[j] = mu;
            norms[j] = s;
            if s > 1e-10 * scale * nf.sqrt() {
                usable[j] = true;
                let dst = &mut x[j * n..(j + 1) * n];
                for (d, v) in dst.iter_mut().zip(col) {
                    *d = (v - mu) / s;
                }
            }
        }
        Self {
            n,
            p,
            means,
            norms,
            x,
            usable,
        }
    }
}

/// Runs a hybrid LARS path over `reg` and returns the step with the
/// smallest LOO error among models with at most `max_terms` terms. Returns
/// `None` only when not even the constant model is admissible.
pub(crate) fn hybrid_lars(reg: &Regressors, y: &[f64], max_terms: usize) -> Option<PathBest> {
    let (n, p) = (reg.n, reg.p);
    let (means, norms, x) = (&reg.means, &reg.norms, &reg.x);
    let mut usable = reg.usable.clone();
    let nf = n as f64;
    let y_mean = y.iter().sum::<f64>() / nf;
    let r0: Vec<f64> = y.iter().map(|v| v - y_mean).collect();

    // Constant model.
    if max_terms < 1 || n < 2 {
        return None;
    }
    let h0 = 1.0 / nf;
    let mut best = PathBest {
        active: Vec::new(),
        coefficients: vec![y_mean],
        loo_abs: loo_from(&r0, &vec![h0; n])?,
    };
    if p <= 1 || max_terms < 2 {
        return Some(best);
    }

    let mut corr = vec![0.0; p];
    for j in 1..p {
        if usable[j] {
            corr[j] = dot(&x[j * n..(j + 1) * n], &r0);
        }
    }
    let c_init = (1..p)
        .filter(|&j| usable[j])
        .map(|j| corr[j].abs())
        .fold(0.0, f64::max);
    if c_init <= 0.0 {
        return Some(best);
    }

    let mut state = QrState::new(n, &r0);
    let mut active: Vec<usize> = Vec::new();
    let mut in_active = vec![false; p];

    // Entering variable of the first step.
    let mut entering = argmax_abs(&corr, &usable, &in_active);
    let mut c_max = c_init;
    let mut stale = 0usize;

    loop {
        // Add the entering column (skip any that are numerically dependent).
        let mut added = false;
        while let Some(j) = entering {
            if state.push(&x[j * n..(j + 1) * n]) {
                active.push(j);
                in_active[j] = true;
                added = true;
                break;
            }
            usable[j] = false;
            entering = argmax_abs(&corr, &usable, &in_active);
        }
        if !added {
            break;
        }

        // Leverage saturates monotonically; nothing beyond can be scored.
        if state.h.iter().any(|&h| h >= 1.0 - LEVERAGE_GUARD) {
            break;
        }
        let terms = active.len() + 1;
        if terms > max_terms {
            break;
        }
        if let Some(loo) = loo_from(&state.e, &state.h) {
            if loo < best.loo_abs {
                let beta = state.solve();
                let mut coefficients = vec![y_mean; 1 + active.len()];
                for (k, &j) in active.iter().enumerate() {
                    coefficients[k + 1] = beta[k] / norms[j];
                    coefficients[0] -= beta[k] * means[j] / norms[j];
                }
                best = PathBest {
                    active: active.clone(),
                    coefficients,
                    loo_abs: loo,
                };
                stale = 0;
            } else {
                stale += 1;
                if stale >= PATH_PATIENCE {
                    break;
                }
            }
        } else {
            break;
        }
        if terms == max_terms || terms >= n {
            break;
        }

        // Equiangular direction and step length.
        match next_step(x, n, &corr, c_max, &state, &active, &usable, &in_active) {
            Some(step) => {
                for (k, c) in corr.iter_mut().enumerate() {
                    if usable[k] && !in_active[k] {
                        *c -= step.gamma * step.a_corr[k];
                    }
                }
                c_max -= step.gamma * step.equiangular_norm;
                for (&jj, s) in active.iter().zip(&step.signs) {
                    corr[jj] = c_max * s;
                }
                if c_max <= CORRELATION_TOL * c_init {
                    break;
                }
                entering = Some(step.entering);
            }
            None => break,
        }
    }
    Some(best)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn argmax_abs(corr: &[f64], usable: &[bool], in_active: &[bool]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, &c) in corr.iter().enumerate() {
        if usable[j] && !in_active[j] && best.is_none_or(|(_, b)| c.abs() > b) {
            best = Some((j, c.abs()));
        }
    }
    best.map(|(j, _)| j)
}

fn loo_from(e: &[f64], h: &[f64]) -> Option<f64> {
    let mut acc = 0.0;
    for (ei, hi) in e.iter().zip(h) {
        if *hi >= 1.0 - LEVERAGE_GUARD {
            return None;
        }
        let d = ei / (1.0 - hi);
        acc += d * d;
    }
    Some(acc / e.len() as f64)
}

struct Step {
    entering: usize,
    gamma: f64,
    /// Correlation of every column with the equiangular vector.
    a_corr: Vec<f64>,
    equiangular_norm: f64,
    signs: Vec<f64>,
}

/// LARS equiangular step from the current active set.
#[allow(clippy::too_many_arguments)]
fn next_step(
    x: &[f64],
    n: usize,
    corr: &[f64],
    c_max: f64,
    state: &QrState,
    active: &[usize],
    usable: &[bool],
    in_active: &[bool],
) -> Option<Step> {
    let p = corr.len();
    let signs: Vec<f64> = active.iter().map(|&j| corr[j].signum()).collect();
    let w = state.gram_solve(&signs);
    let s_dot_w: f64 = signs.iter().zip(&w).map(|(s, w)| s * w).sum();
    if s_dot_w <= 0.0 {
        return None;
    }
    let aa = 1.0 / s_dot_w.sqrt();
    let mut u = vec![0.0; n];
    for (k, &j) in active.iter().enumerate() {
        let coef = aa * w[k];
        for (ui, xi) in u.iter_mut().zip(&x[j * n..(j + 1) * n]) {
            *ui += coef * xi;
        }
    }
    let mut a_corr = vec![0.0; p];
    let mut best: Option<(usize, f64)> = None;
    for j in 1..p {
        if !usable[j] || in_active[j] {
            continue;
        }
        let aj = dot(&x[j * n..(j + 1) * n], &u);
        a_corr[j] = aj;
        let cj = corr[j];
        let mut g = f64::INFINITY;
        for (num, den) in [(c_max - cj, aa - aj), (c_max + cj, aa + aj)] {
            if den > 1e-300 {
                let cand = num / den;
                if cand > 1e-14 * c_max && cand < g {
                    g = cand;
                }
            }
        }
        if g.is_finite() && best.is_none_or(|(_, b)| g < b) {
            best = Some((j, g));
        }
    }
    best.map(|(entering, gamma)| Step {
        entering,
        gamma,
        a_corr,
        equiangular_norm: aa,
        signs,
    })
}

/// Incremental thin QR of the centered active regressors plus the OLS
/// residual and leverages of the model `[1, active]`.
struct QrState {
    n: usize,
    q: Vec<Vec<f64>>,
    /// Column `k` of the upper-triangular factor, length `k + 1`.
    r: Vec<Vec<f64>>,
    /// `Q^T r0`.
    qty: Vec<f64>,
    e: Vec<f64>,
    h: Vec<f64>,
}

impl QrState {
    fn new(n: usize, r0: &[f64]) -> Self {
        Self {
            n,
            q: Vec::new(),
            r: Vec::new(),
            qty: Vec::new(),
            e: r0.to_vec(),
            h: vec![1.0 / n as f64; n],
        }
    }

    /// Appends a unit-norm column; returns `false` when it is dependent on
    /// the current columns.
    fn push(&mut self, col: &[f64]) -> bool {
        let k = self.q.len();
        let mut v = col.to_vec();
        let mut rcol = vec![0.0; k + 1];
        for _ in 0..2 {
            for (i, qi) in self.q.iter().enumerate() {
                let proj = dot(qi, &v);
                rcol[i] += proj;
                for (vj, qj) in v.iter_mut().zip(qi) {
                    *vj -= proj * qj;
                }
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm <= DEPENDENCE_TOL {
            return false;
        }
        for vj in v.iter_mut() {
            *vj /= norm;
        }
        rcol[k] = norm;
        let coef = dot(&v, &self.e);
        for ((ei, hi), qi) in self.e.iter_mut().zip(self.h.iter_mut()).zip(&v) {
            *ei -= coef * qi;
            *hi += qi * qi;
        }
        debug_assert_eq!(v.len(), self.n);
        self.qty.push(coef);
        self.q.push(v);
        self.r.push(rcol);
        true
    }

    /// Back-substitution `R beta = Q^T r0`.
    fn solve(&self) -> Vec<f64> {
        let k = self.r.len();
        let mut beta = self.qty.clone();
        for i in (0..k).rev() {
            for j in i + 1..k {
                beta[i] -= self.r[j][i] * beta[j];
            }
            beta[i] /= self.r[i][i];
        }
        beta
    }

    /// Solves `(R^T R) w = s`.
    fn gram_solve(&self, s: &[f64]) -> Vec<f64> {
        let k = self.r.len();
        // R^T z = s (forward).
        let mut z = s.to_vec();
        for i in 0..k {
            for j in 0..i {
                z[i] -= self.r[i][j] * z[j];
            }
            z[i] /= self.r[i][i];
        }
        // R w = z (backward).
        for i in (0..k).rev() {
            for j in i + 1..k {
                z[i] -= self.r[j][i] * z[j];
            }
            z[i] /= self.r[i][i];
        }
        z
    }
}
