//! Residual and perturbation bootstrap replicates.
//!
//! Replicate `i` of a run draws from `derive_seed(master_seed, i)`, so runs are
//! reproducible under any thread schedule. Perturbation replicates are fitted
//! on pseudo-values `zᵢ = ŷᵢ + ε̂ᵢ(Gᵢ − μ)/μ`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{Fit, PenaltySpec, RegressionProblem};
use crate::rng::{derive_seed, rng_from_seed, uniform_index};
use crate::solvers::{fit_penalized, SolverConfig};
use crate::weights::WeightDistribution;

/// Largest tolerated share of failed replicates.
pub const MAX_FAILURE_RATE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum BootMethod {
    Residual,
    Perturbation { dist: WeightDistribution },
}

impl BootMethod {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Residual => "residual",
            Self::Perturbation { .. } => "perturbation",
        }
    }
}

/// One bootstrap refit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replicate {
    pub index: usize,
    pub seed: u64,
    pub beta_star: Vec<f64>,
    pub active_star: Vec<usize>,
    /// `σ*` (residual) or `σ**` (perturbation).
    pub residual_scale: f64,
    /// Bootstrap initial estimate `β̃*` for adaptive and one-step penalties.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_star: Option<Vec<f64>>,
    /// The multipliers `G*` of a perturbation replicate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_star: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub index: usize,
    pub seed: u64,
    pub message: String,
}

/// Replicates of a run, ordered by index, plus the excluded failures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapRun {
    #[serde(flatten)]
    pub method: BootMethod,
    pub b: usize,
    pub master_seed: u64,
    pub replicates: Vec<Replicate>,
    #[serde(default)]
    pub failures: Vec<ReplicateFailure>,
}

fn check_fit(fit: &Fit, problem: &RegressionProblem) -> Result<()> {
    if fit.n() != problem.n() || fit.p() != problem.p() {
        return Err(Error::Dimension(format!(
            "fit is {}×{} but problem is {}×{}",
            fit.n(),
            fit.p(),
            problem.n(),
            problem.p()
        )));
    }
    Ok(())
}

/// Resamples `ε*` with replacement from the centered residuals.
pub fn resample_residuals(fit: &Fit, seed: u64) -> Vec<f64> {
    let n = fit.n();
    let mean = fit.residuals.iter().sum::<f64>() / n as f64;
    let pool: Vec<f64> = fit.residuals.iter().map(|e| e - mean).collect();
    let mut rng = rng_from_seed(seed);
    (0..n).map(|_| pool[uniform_index(&mut rng, n)]).collect()
}

/// Refit on `y* = Xβ̂ + ε*`.
pub fn residual_replicate(
    fit: &Fit,
    problem: &RegressionProblem,
    spec: &PenaltySpec,
    seed: u64,
    config: &SolverConfig,
) -> Result<Replicate> {
    check_fit(fit, problem)?;
    let eps = resample_residuals(fit, seed);
    residual_replicate_with(fit, problem, spec, &eps, config).map(|mut r| {
        r.seed = seed;
        r
    })
}

/// Residual replicate for a given `ε*`.
pub fn residual_replicate_with(
    fit: &Fit,
    problem: &RegressionProblem,
    spec: &PenaltySpec,
    eps_star: &[f64],
    config: &SolverConfig,
) -> Result<Replicate> {
    check_fit(fit, problem)?;
    if eps_star.len() != problem.n() {
        return Err(Error::Dimension("ε* has the wrong length".into()));
    }
    let y_star: Vec<f64> = fit.fitted.iter().zip(eps_star).map(|(f, e)| f + e).collect();
    let refit = fit_penalized(&problem.with_response(y_star)?, spec, config)?;
    let n = problem.n() as f64;
    let sigma = (eps_star.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    Ok(Replicate {
        index: 0,
        seed: 0,
        beta_star: refit.beta,
        active_star: refit.active_set,
        residual_scale: sigma,
        initial_star: refit.initial,
        g_star: None,
    })
}

/// `zᵢ = ŷᵢ + ε̂ᵢ(Gᵢ − μ)/μ`.
pub fn pseudo_values(fit: &Fit, mu: f64, g: &[f64]) -> Vec<f64> {
    fit.fitted
        .iter()
        .zip(&fit.residuals)
        .zip(g)
        .map(|((yhat, e), gi)| yhat + e * (gi - mu) / mu)
        .collect()
}

/// Perturbation replicate with `G*` drawn from `dist` under `seed`.
pub fn perturbation_replicate(
    fit: &Fit,
    problem: &RegressionProblem,
    spec: &PenaltySpec,
    dist: &WeightDistribution,
    seed: u64,
    config: &SolverConfig,
) -> Result<Replicate> {
    check_fit(fit, problem)?;
    let mut g = vec![0.0; problem.n()];
    dist.sample_into(&mut rng_from_seed(seed), &mut g)?;
    perturbation_replicate_with(fit, problem, spec, dist.mu(), g, config).map(|mut r| {
        r.seed = seed;
        r
    })
}

/// Perturbation replicate for given multipliers `g` with mean `mu`.
pub fn perturbation_replicate_with(
    fit: &Fit,
    problem: &RegressionProblem,
    spec: &PenaltySpec,
    mu: f64,
    g: Vec<f64>,
    config: &SolverConfig,
) -> Result<Replicate> {
    check_fit(fit, problem)?;
    if g.len() != problem.n() {
        return Err(Error::Dimension("G* has the wrong length".into()));
    }
    if !(mu > 0.0) {
        return invalid(format!("perturbation mean must be positive, got {mu}"));
    }
    let z = pseudo_values(fit, mu, &g);
    let refit = fit_penalized(&problem.with_response(z)?, spec, config)?;
    let fitted = problem.predict(&refit.beta);
    let n = problem.n() as f64;
    let s: f64 = problem
        .response()
        .iter()
        .zip(&fitted)
        .zip(&g)
        .map(|((y, f), gi)| {
            let e = y - f;
            e * e * (gi - mu) * (gi - mu)
        })
        .sum();
    Ok(Replicate {
        index: 0,
        seed: 0,
        beta_star: refit.beta,
        active_star: refit.active_set,
        residual_scale: (s / n).sqrt() / mu,
        initial_star: refit.initial,
        g_star: Some(g),
    })
}

/// `B` replicates in parallel, aggregated by index.
pub fn run_bootstrap(
    fit: &Fit,
    problem: &RegressionProblem,
    spec: &PenaltySpec,
    method: &BootMethod,
    b: usize,
    master_seed: u64,
    config: &SolverConfig,
) -> Result<BootstrapRun> {
    if b < 1 {
        return invalid("B must be at least 1");
    }
    check_fit(fit, problem)?;
    let outcomes: Vec<(usize, u64, Result<Replicate>)> = (0..b)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(master_seed, i as u64);
            let rep = match method {
                BootMethod::Residual => residual_replicate(fit, problem, spec, seed, config),
                BootMethod::Perturbation { dist } => {
                    perturbation_replicate(fit, problem, spec, dist, seed, config)
                }
            };
            (i, seed, rep)
        })
        .collect();
    let mut replicates = Vec::with_capacity(b);
    let mut failures = Vec::new();
    for (index, seed, rep) in outcomes {
        match rep {
            Ok(mut r) => {
                r.index = index;
                replicates.push(r);
            }
            Err(e) => failures.push(ReplicateFailure {
                index,
                seed,
                message: e.to_string(),
            }),
        }
    }
    if failures.len() as f64 > MAX_FAILURE_RATE * b as f64 {
        return Err(Error::TooManyFailures {
            failed: failures.len(),
            total: b,
            context: format!(
                "{} bootstrap; first failure: {}",
                method.name(),
                failures[0].message
            ),
        });
    }
    Ok(BootstrapRun {
        method: method.clone(),
        b,
        master_seed,
        replicates,
        failures,
    })
}
