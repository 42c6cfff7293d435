//! Cyclic coordinate descent for penalized least squares, OLS and post-selection OLS.
//!
//! Work happens on the normalized quadratic `βᵀCβ − 2bᵀβ` with `C = n⁻¹XᵀX` and
//! `b = n⁻¹Xᵀy`; the penalty enters through exact univariate updates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::model::{
    active_set, gram_partition, Fit, InitialEstimator, OneStepBase, PenaltySpec,
    RegressionProblem,
};
use crate::penalties::{mcp_derivative, mcp_value, penalty_derivative, scad_derivative, scad_value};

/// OLS initial coefficients below this magnitude are rejected for unbounded-weight penalties.
pub const MIN_INITIAL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub coord_tol: f64,
    pub kkt_tol: f64,
    pub zero_tol: f64,
    /// Record the penalized objective after each sweep.
    #[serde(default)]
    pub track_objective: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 100_000,
            coord_tol: 1e-10,
            kkt_tol: 1e-8,
            zero_tol: 1e-10,
            track_objective: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return invalid("max_iters must be at least 1");
        }
        for (name, v) in [
            ("coord_tol", self.coord_tol),
            ("kkt_tol", self.kkt_tol),
            ("zero_tol", self.zero_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return invalid(format!("{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

/// `sgn(z)·max(|z| − γ, 0)`.
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Minimizer of `d(t − z)² + P_SCAD(|t|)`; needs `2d > 1/(a−1)`.
pub fn scad_threshold(z: f64, d: f64, lambda: f64, a: f64) -> f64 {
    let az = z.abs();
    let t = if az <= lambda + lambda / (2.0 * d) {
        (az - lambda / (2.0 * d)).max(0.0)
    } else if az <= a * lambda {
        (2.0 * d * az - a * lambda / (a - 1.0)) / (2.0 * d - 1.0 / (a - 1.0))
    } else {
        az
    };
    t.copysign(z)
}

/// Minimizer of `d(t − z)² + P_MCP(|t|)`; needs `2d > 1/a`.
pub fn mcp_threshold(z: f64, d: f64, lambda: f64, a: f64) -> f64 {
    let az = z.abs();
    let t = if az <= a * lambda {
        (2.0 * d * az - lambda).max(0.0) / (2.0 * d - 1.0 / a)
    } else {
        az
    };
    t.copysign(z)
}

/// Univariate penalty rule inside coordinate descent.
#[derive(Debug, Clone, Copy)]
enum Rule<'a> {
    Weighted(&'a [f64]),
    Scad { lambda: f64, a: f64 },
    Mcp { lambda: f64, a: f64 },
}

impl Rule<'_> {
    fn update(&self, j: usize, z: f64, d: f64) -> f64 {
        match *self {
            Rule::Weighted(w) => {
                if w[j].is_infinite() {
                    0.0
                } else {
                    soft_threshold(z, w[j] / (2.0 * d))
                }
            }
            Rule::Scad { lambda, a } => scad_threshold(z, d, lambda, a),
            Rule::Mcp { lambda, a } => mcp_threshold(z, d, lambda, a),
        }
    }

    /// Linearized ℓ1 weight at `|βⱼ|`.
    fn weight(&self, j: usize, abs_beta: f64) -> f64 {
        match *self {
            Rule::Weighted(w) => w[j],
            Rule::Scad { lambda, a } => scad_derivative(lambda, a, abs_beta),
            Rule::Mcp { lambda, a } => mcp_derivative(lambda, a, abs_beta),
        }
    }

    fn value(&self, beta: &[f64]) -> f64 {
        beta.iter()
            .enumerate()
            .map(|(j, b)| match *self {
                Rule::Weighted(w) => {
                    if *b == 0.0 {
                        0.0
                    } else {
                        w[j] * b.abs()
                    }
                }
                Rule::Scad { lambda, a } => scad_value(lambda, a, b.abs()),
                Rule::Mcp { lambda, a } => mcp_value(lambda, a, b.abs()),
            })
            .sum()
    }
}

/// KKT violation of a weighted ℓ1 problem in normalized units, with gradient `g = 2(Cβ − b)`.
pub fn kkt_violation(gram: &DMatrix<f64>, b: &[f64], beta: &[f64], weights: &[f64]) -> f64 {
    let p = beta.len();
    let cb = gram * DVector::from_column_slice(beta);
    (0..p)
        .map(|j| kkt_coord(2.0 * (cb[j] - b[j]), beta[j], weights[j]))
        .fold(0.0, f64::max)
}

fn kkt_coord(g: f64, beta: f64, w: f64) -> f64 {
    if w.is_infinite() {
        // excluded coordinate
        return if beta == 0.0 { 0.0 } else { f64::INFINITY };
    }
    if beta != 0.0 {
        (g + w * beta.signum()).abs()
    } else {
        (g.abs() - w).max(0.0)
    }
}

struct CdOutcome {
    beta: Vec<f64>,
    sweeps: usize,
    kkt: f64,
    history: Vec<f64>,
}

fn coordinate_descent(
    gram: &DMatrix<f64>,
    b: &[f64],
    yy: f64,
    rule: Rule<'_>,
    start: Vec<f64>,
    cfg: &SolverConfig,
) -> Result<CdOutcome> {
    let p = b.len();
    let c = gram.as_slice();
    let mut beta = start;
    let mut cb = vec![0.0; p];
    for (k, &bk) in beta.iter().enumerate() {
        if bk != 0.0 {
            for (i, v) in cb.iter_mut().enumerate() {
                *v += c[k * p + i] * bk;
            }
        }
    }
    let objective = |beta: &[f64], cb: &[f64]| {
        let quad: f64 = beta.iter().zip(cb).map(|(x, y)| x * y).sum();
        let lin: f64 = beta.iter().zip(b).map(|(x, y)| x * y).sum();
        quad - 2.0 * lin + yy + rule.value(beta)
    };
    let mut history = Vec::new();
    if cfg.track_objective {
        history.push(objective(&beta, &cb));
    }
    let kkt_now = |beta: &[f64], cb: &[f64]| {
        (0..p)
            .map(|j| kkt_coord(2.0 * (cb[j] - b[j]), beta[j], rule.weight(j, beta[j].abs())))
            .fold(0.0, f64::max)
    };

    let mut kkt = f64::INFINITY;
    for sweep in 1..=cfg.max_iters {
        let mut max_change = 0.0_f64;
        for j in 0..p {
            let d = c[j * p + j];
            let old = beta[j];
            let new = if d <= 0.0 {
                0.0
            } else {
                let z = old + (b[j] - cb[j]) / d;
                let t = rule.update(j, z, d);
                if t.abs() <= cfg.zero_tol {
                    0.0
                } else {
                    t
                }
            };
            let delta = new - old;
            if delta != 0.0 {
                beta[j] = new;
                let col = &c[j * p..(j + 1) * p];
                for (v, cj) in cb.iter_mut().zip(col) {
                    *v += cj * delta;
                }
                max_change = max_change.max(delta.abs());
            }
        }
        if cfg.track_objective {
            history.push(objective(&beta, &cb));
        }
        if max_change <= cfg.coord_tol {
            // refresh the running product against drift before judging optimality
            let fresh = gram * DVector::from_column_slice(&beta);
            cb.copy_from_slice(fresh.as_slice());
            kkt = kkt_now(&beta, &cb);
            if kkt <= cfg.kkt_tol || max_change == 0.0 {
                return Ok(CdOutcome {
                    beta,
                    sweeps: sweep,
                    kkt,
                    history,
                });
            }
        }
    }
    if kkt.is_infinite() {
        kkt = kkt_now(&beta, &cb);
    }
    Err(Error::NotConverged {
        iterations: cfg.max_iters,
        kkt_residual: kkt,
        last_iterate: beta,
    })
}

/// Least squares on `support` (all columns when `None`), zeros elsewhere.
pub fn fit_ols(problem: &RegressionProblem, support: Option<&[usize]>) -> Result<Fit> {
    let p = problem.p();
    let support: Vec<usize> = match support {
        Some(s) => s.to_vec(),
        None => (0..p).collect(),
    };
    let blocks = gram_partition(problem, &support)?;
    let k = blocks.active.len();
    let spec = PenaltySpec::Lasso { lambda: 0.0 };
    if k == 0 {
        return Ok(Fit::from_beta(problem, vec![0.0; p], spec));
    }
    if k > problem.n() {
        return invalid(format!(
            "OLS needs at most n = {} columns, got {k}",
            problem.n()
        ));
    }
    let b_full = problem.scaled_xt(problem.response());
    let b = DVector::from_iterator(k, blocks.active.iter().map(|&j| b_full[j]));
    let mut x = linalg::spd_solve(&blocks.c11, &b, "OLS Gram block")?;
    // one step of iterative refinement
    let r = &b - &blocks.c11 * &x;
    x += linalg::spd_solve(&blocks.c11, &r, "OLS Gram block")?;
    let mut beta = vec![0.0; p];
    for (slot, &j) in blocks.active.iter().enumerate() {
        beta[j] = x[slot];
    }
    let mut fit = Fit::from_beta(problem, beta, spec);
    fit.active_set = active_set(&fit.beta);
    Ok(fit)
}

/// Initial estimate `β̃` for adaptive and one-step penalties.
pub fn initial_estimate(
    problem: &RegressionProblem,
    initial: InitialEstimator,
    config: &SolverConfig,
) -> Result<Vec<f64>> {
    match initial {
        InitialEstimator::Ols => {
            if problem.p() > problem.n() {
                return invalid(format!(
                    "OLS initial estimator needs p ≤ n (p = {}, n = {}); use a Lasso initial estimator",
                    problem.p(),
                    problem.n()
                ));
            }
            Ok(fit_ols(problem, None)?.beta)
        }
        InitialEstimator::Lasso { lambda_tilde } => {
            let spec = PenaltySpec::Lasso {
                lambda: lambda_tilde,
            };
            Ok(fit_penalized(problem, &spec, config)?.beta)
        }
    }
}

fn unbounded_at_zero(spec: &PenaltySpec) -> bool {
    matches!(
        spec,
        PenaltySpec::AdaptiveLasso { .. }
            | PenaltySpec::OneStep {
                base: OneStepBase::Power { .. } | OneStepBase::Log,
                ..
            }
    )
}

/// Per-coordinate ℓ1 weights for an adaptive or one-step penalty given `β̃`.
///
/// Coordinates a Lasso initial estimator set to zero are excluded (infinite weight).
pub fn weights_from_initial(
    spec: &PenaltySpec,
    initial_beta: &[f64],
    n: usize,
) -> Result<Vec<f64>> {
    let init = spec.initial().ok_or_else(|| {
        Error::InvalidInput(format!("{} has no initial estimator", spec.name()))
    })?;
    initial_beta
        .iter()
        .enumerate()
        .map(|(j, &bj)| {
            if unbounded_at_zero(spec) {
                match init {
                    InitialEstimator::Lasso { .. } if bj == 0.0 => return Ok(f64::INFINITY),
                    InitialEstimator::Ols if bj.abs() < MIN_INITIAL => {
                        return Err(Error::ZeroInitial {
                            index: j,
                            hint: format!(
                                "|initial| = {:e} below {MIN_INITIAL:e}; use a Lasso initial estimator",
                                bj.abs()
                            ),
                        })
                    }
                    _ => {}
                }
            }
            penalty_derivative(spec, 0.0, Some(bj.abs()), n).map_err(|_| Error::ZeroInitial {
                index: j,
                hint: "initial coefficient gives an infinite weight".into(),
            })
        })
        .collect()
}

fn uniform_weights(p: usize, lambda: f64, n: usize) -> Vec<f64> {
    vec![lambda / n as f64; p]
}

fn convexity_ok(problem: &RegressionProblem, spec: &PenaltySpec) -> bool {
    let g = problem.gram();
    let bound = match *spec {
        PenaltySpec::Scad { a, .. } => 1.0 / (a - 1.0),
        PenaltySpec::Mcp { a, .. } => 1.0 / a,
        _ => return true,
    };
    (0..problem.p()).all(|j| 2.0 * g[(j, j)] > bound)
}

fn yy_scaled(problem: &RegressionProblem) -> f64 {
    problem.response().iter().map(|v| v * v).sum::<f64>() / problem.n() as f64
}

/// Runs weighted-ℓ1 coordinate descent from `start`.
pub fn fit_weighted_l1(
    problem: &RegressionProblem,
    weights: &[f64],
    start: Option<Vec<f64>>,
    config: &SolverConfig,
) -> Result<(Vec<f64>, usize, f64, Vec<f64>)> {
    config.validate()?;
    let p = problem.p();
    if weights.len() != p {
        return Err(Error::Dimension(format!(
            "{} weights for {p} coefficients",
            weights.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0)) {
        return invalid(format!("weights must be nonnegative, got {w}"));
    }
    let b = problem.scaled_xt(problem.response());
    let out = coordinate_descent(
        problem.gram(),
        &b,
        yy_scaled(problem),
        Rule::Weighted(weights),
        start.unwrap_or_else(|| vec![0.0; p]),
        config,
    )?;
    Ok((out.beta, out.sweeps, out.kkt, out.history))
}

/// Penalized least squares under `spec`, started at zero.
pub fn fit_penalized(
    problem: &RegressionProblem,
    spec: &PenaltySpec,
    config: &SolverConfig,
) -> Result<Fit> {
    fit_penalized_from(problem, spec, config, None)
}

/// As [`fit_penalized`] with an optional warm start.
pub fn fit_penalized_from(
    problem: &RegressionProblem,
    spec: &PenaltySpec,
    config: &SolverConfig,
    start: Option<Vec<f64>>,
) -> Result<Fit> {
    let spec = spec.validated()?;
    config.validate()?;
    let (n, p) = (problem.n(), problem.p());
    if let Some(s) = &start {
        if s.len() != p {
            return Err(Error::Dimension(format!("warm start has length {}", s.len())));
        }
    }
    match spec {
        PenaltySpec::Lasso { lambda } => {
            let w = uniform_weights(p, lambda, n);
            let (beta, sweeps, kkt, hist) = fit_weighted_l1(problem, &w, start, config)?;
            Ok(finish(problem, spec, beta, sweeps, kkt, hist, None, Some(w)))
        }
        PenaltySpec::Scad { lambda, a } | PenaltySpec::Mcp { lambda, a } => {
            if !convexity_ok(problem, &spec) {
                let base = match spec {
                    PenaltySpec::Scad { .. } => OneStepBase::Scad { a },
                    _ => OneStepBase::Mcp { a },
                };
                let initial = if p < n {
                    InitialEstimator::Ols
                } else {
                    InitialEstimator::Lasso {
                        lambda_tilde: n as f64 * lambda,
                    }
                };
                let surrogate = PenaltySpec::OneStep {
                    lambda,
                    base,
                    initial,
                };
                let mut fit = fit_penalized_from(problem, &surrogate, config, start)?;
                fit.fallback = Some(format!(
                    "{} univariate updates not convex for this design; used one-step surrogate",
                    spec.name()
                ));
                fit.penalty = spec;
                return Ok(fit);
            }
            let rule = match spec {
                PenaltySpec::Scad { .. } => Rule::Scad { lambda, a },
                _ => Rule::Mcp { lambda, a },
            };
            let b = problem.scaled_xt(problem.response());
            let out = coordinate_descent(
                problem.gram(),
                &b,
                yy_scaled(problem),
                rule,
                start.unwrap_or_else(|| vec![0.0; p]),
                config,
            )?;
            Ok(finish(
                problem,
                spec,
                out.beta,
                out.sweeps,
                out.kkt,
                out.history,
                None,
                None,
            ))
        }
        PenaltySpec::AdaptiveLasso { initial, .. } | PenaltySpec::OneStep { initial, .. } => {
            let beta_tilde = initial_estimate(problem, initial, config)?;
            let w = weights_from_initial(&spec, &beta_tilde, n)?;
            let (beta, sweeps, kkt, hist) = fit_weighted_l1(problem, &w, start, config)?;
            Ok(finish(
                problem,
                spec,
                beta,
                sweeps,
                kkt,
                hist,
                Some(beta_tilde),
                Some(w),
            ))
        }
        PenaltySpec::PostSelectionOls { lambda } => {
            let sel = PenaltySpec::Lasso { lambda };
            let lasso = fit_penalized_from(problem, &sel, config, start)?;
            let mut fit = fit_ols(problem, Some(&lasso.active_set))?;
            fit.penalty = spec;
            fit.iterations = lasso.iterations;
            fit.active_set = active_set(&fit.beta);
            fit.initial = Some(lasso.beta);
            fit.kkt_residual = kkt_residual(problem, &spec, &fit.beta)?;
            Ok(fit)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    problem: &RegressionProblem,
    spec: PenaltySpec,
    beta: Vec<f64>,
    sweeps: usize,
    kkt: f64,
    history: Vec<f64>,
    initial: Option<Vec<f64>>,
    weights: Option<Vec<f64>>,
) -> Fit {
    let mut fit = Fit::from_beta(problem, beta, spec);
    fit.iterations = sweeps;
    fit.kkt_residual = kkt;
    fit.objective_history = history;
    fit.initial = initial;
    fit.weights = weights;
    fit
}

/// Stationarity violation of `beta` under `spec`, in normalized units.
///
/// SCAD and MCP are linearized at `beta`; adaptive and one-step penalties
/// recompute their initial estimate on `problem`. For post-selection OLS it is
/// the normal-equation residual on the support of `beta`.
pub fn kkt_residual(problem: &RegressionProblem, spec: &PenaltySpec, beta: &[f64]) -> Result<f64> {
    let (n, p) = (problem.n(), problem.p());
    if beta.len() != p {
        return Err(Error::Dimension(format!("beta has length {}, p = {p}", beta.len())));
    }
    let weights: Vec<f64> = match *spec {
        PenaltySpec::Lasso { lambda } => uniform_weights(p, lambda, n),
        PenaltySpec::Scad { lambda, a } => beta
            .iter()
            .map(|b| scad_derivative(lambda, a, b.abs()))
            .collect(),
        PenaltySpec::Mcp { lambda, a } => beta
            .iter()
            .map(|b| mcp_derivative(lambda, a, b.abs()))
            .collect(),
        PenaltySpec::AdaptiveLasso { initial, .. } | PenaltySpec::OneStep { initial, .. } => {
            let bt = initial_estimate(problem, initial, &SolverConfig::default())?;
            weights_from_initial(spec, &bt, n)?
        }
        PenaltySpec::PostSelectionOls { .. } => beta
            .iter()
            .map(|b| if *b != 0.0 { 0.0 } else { f64::INFINITY })
            .collect(),
    };
    let b = problem.scaled_xt(problem.response());
    Ok(kkt_violation(problem.gram(), &b, beta, &weights))
}

/// `max_j |(C₂₁)_j· C₁₁⁻¹ sgn(β⁽¹⁾)|` over inactive `j`.
pub fn check_irrepresentable(
    problem: &RegressionProblem,
    true_active: &[usize],
    true_signs: &[f64],
) -> Result<f64> {
    if true_active.len() != true_signs.len() {
        return Err(Error::Dimension(format!(
            "{} active indices but {} signs",
            true_active.len(),
            true_signs.len()
        )));
    }
    if true_active.is_empty() {
        return invalid("irrepresentable check needs a nonempty active set");
    }
    let mut pairs: Vec<(usize, f64)> = true_active
        .iter()
        .copied()
        .zip(true_signs.iter().map(|s| s.signum()))
        .collect();
    pairs.sort_by_key(|(j, _)| *j);
    let active: Vec<usize> = pairs.iter().map(|(j, _)| *j).collect();
    let blocks = gram_partition(problem, &active)?;
    if blocks.active.len() != active.len() {
        return invalid("duplicate indices in active set");
    }
    let s = DVector::from_iterator(pairs.len(), pairs.iter().map(|(_, s)| *s));
    let v = linalg::spd_solve(&blocks.c11, &s, "C11 in irrepresentable check")?;
    let u = &blocks.c21 * v;
    Ok(u.iter().fold(0.0, |m, x| m.max(x.abs())))
}

/// `2‖Xᵀy‖∞`, the smallest Lasso λ giving the zero solution.
pub fn lambda_max(problem: &RegressionProblem) -> f64 {
    let n = problem.n() as f64;
    2.0 * n
        * problem
            .scaled_xt(problem.response())
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Lasso fits over `lambdas`, solved in decreasing order with warm starts from λ_max.
/// Results are returned in the input order.
pub fn lasso_path(
    problem: &RegressionProblem,
    lambdas: &[f64],
    config: &SolverConfig,
) -> Result<Vec<Fit>> {
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&a, &b| lambdas[b].total_cmp(&lambdas[a]));
    let mut warm = vec![0.0; problem.p()];
    let mut out: Vec<Option<Fit>> = vec![None; lambdas.len()];
    for idx in order {
        let spec = PenaltySpec::lasso(lambdas[idx])?;
        let fit = fit_penalized_from(problem, &spec, config, Some(warm.clone()))?;
        warm.clone_from(&fit.beta);
        out[idx] = Some(fit);
    }
    Ok(out.into_iter().flatten().collect())
}
