//! Oracle normal approximation and Monte Carlo estimates of `Δₙ` for scalar
//! contrasts.
//!
//! For q = 1 the convex sets are intervals. With `D(x) = F̂(x) − Φ(x/s)` the
//! sup over intervals of `|P̂(I) − Φ(I)|` is `max D − min D`, taken over the
//! left and right limits of `D` at every sample point together with the
//! value 0 at ±∞. The scan below computes it exactly.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::harness::{oracle_events, DgpSpec, Simulator};
use crate::intervals::normal_cdf;
use crate::model::{ContrastMatrix, PenaltySpec};
use crate::pivots::{active_projector, t_statistic};
use crate::rng::{derive_seed, derive_tagged, rng_from_seed, uniform_index, TAG_REPS};
use crate::solvers::{fit_penalized, SolverConfig};

/// Fewest Monte Carlo repetitions accepted by [`estimate_delta`].
pub const MIN_DELTA_REPS: usize = 100;
/// Largest tolerated share of failed fits.
pub const MAX_DELTA_FAILURE_RATE: f64 = 0.05;
/// Resamples used for the Monte Carlo standard error of `Δ̂`.
pub const DELTA_SE_RESAMPLES: usize = 200;

/// `Φ(b/s) − Φ(a/s)` with `s² = σ²Σ`.
pub fn oracle_interval_prob(a: f64, b: f64, sigma_sq: f64, big_sigma: f64) -> Result<f64> {
    let v = sigma_sq * big_sigma;
    if !(v > 0.0 && v.is_finite()) {
        return invalid(format!("oracle variance must be positive, got {v}"));
    }
    if a > b {
        return invalid(format!("interval endpoints out of order: {a} > {b}"));
    }
    let s = v.sqrt();
    Ok(normal_cdf(b / s) - normal_cdf(a / s))
}

fn cdf_gaps(samples: &[f64], mean: f64, sd: f64) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return invalid("no samples");
    }
    if !(sd > 0.0 && sd.is_finite()) {
        return invalid(format!("oracle standard deviation must be positive, got {sd}"));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("non-finite sample".into()));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() as f64;
    let mut gaps = Vec::with_capacity(2 * s.len() + 2);
    gaps.push(0.0);
    let mut i = 0;
    while i < s.len() {
        let v = s[i];
        let mut j = i;
        while j < s.len() && s[j] == v {
            j += 1;
        }
        let phi = normal_cdf((v - mean) / sd);
        gaps.push(i as f64 / m - phi);
        gaps.push(j as f64 / m - phi);
        i = j;
    }
    gaps.push(0.0);
    Ok(gaps)
}

/// Sup over intervals of `|P̂(I) − Φ(I)|` for `N(mean, sd²)`.
pub fn delta_hat(samples: &[f64], mean: f64, sd: f64) -> Result<f64> {
    let g = cdf_gaps(samples, mean, sd)?;
    let hi = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = g.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((hi - lo).clamp(0.0, 1.0))
}

/// Sup over half-lines `(−∞, x]`: the Kolmogorov distance.
pub fn ks_distance(samples: &[f64], mean: f64, sd: f64) -> Result<f64> {
    let g = cdf_gaps(samples, mean, sd)?;
    Ok(g.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
}

/// Bootstrap standard error of [`delta_hat`] over resamples of `samples`.
pub fn delta_hat_se(samples: &[f64], mean: f64, sd: f64, resamples: usize, seed: u64) -> Result<f64> {
    if resamples < 2 {
        return invalid("need at least two resamples");
    }
    let m = samples.len();
    let vals: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng_from_seed(derive_seed(seed, k as u64));
            let draw: Vec<f64> = (0..m).map(|_| samples[uniform_index(&mut rng, m)]).collect();
            delta_hat(&draw, mean, sd)
        })
        .collect::<Result<_>>()?;
    let k = vals.len() as f64;
    let mu = vals.iter().sum::<f64>() / k;
    Ok((vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (k - 1.0)).sqrt())
}

/// Monte Carlo summary of `Tₙ` against its oracle normal law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaEstimate {
    pub m: usize,
    pub delta_hat: f64,
    pub mc_se: f64,
    pub ks: f64,
    /// `√(σ²D⁽¹⁾C₁₁⁻¹D⁽¹⁾ᵀ)` on the true support.
    pub oracle_sd: f64,
    pub failures: usize,
    pub selection_rate: f64,
    pub strong_oracle_rate: f64,
}

/// Oracle standard deviation of `Tₙ` for the simulator's fixed design.
pub fn oracle_sd(sim: &Simulator, d: &ContrastMatrix) -> Result<f64> {
    let probe = crate::model::RegressionProblem::from_shared(sim.design().clone(), vec![0.0; sim.dgp().n])?;
    let active = sim.dgp().true_active();
    if active.is_empty() {
        return Err(Error::Degenerate("true support is empty".into()));
    }
    let proj = active_projector(&probe, d, &active)?;
    let da = d.active_columns(&active);
    let v = (proj * da.transpose())[(0, 0)] * sim.dgp().errors.variance();
    if !(v > 0.0) {
        return Err(Error::Degenerate("contrast has no weight on the true support".into()));
    }
    Ok(v.sqrt())
}

/// `Δ̂` from `m` simulated data sets of `dgp` fitted with `spec`.
pub fn estimate_delta(
    dgp: &DgpSpec,
    spec: &PenaltySpec,
    d: &ContrastMatrix,
    m: usize,
    seed: u64,
) -> Result<DeltaEstimate> {
    if m < MIN_DELTA_REPS {
        return invalid(format!("Δ̂ needs M ≥ {MIN_DELTA_REPS}, got {m}"));
    }
    if d.q() != 1 {
        return invalid("Δ̂ is computed for a single contrast row");
    }
    if dgp.redraw_design {
        return invalid("Δ̂ needs a fixed design");
    }
    let sim = Simulator::new(dgp)?;
    let sd = oracle_sd(&sim, d)?;
    let active = dgp.true_active();
    let solver = SolverConfig::default();
    let outcomes: Vec<Result<(f64, bool, bool)>> = (0..m)
        .into_par_iter()
        .map(|r| {
            let data = sim.dataset(derive_tagged(seed, TAG_REPS, r as u64))?;
            let fit = fit_penalized(&data.problem, spec, &solver)?;
            let t = t_statistic(&fit, &data.beta, d)?[0];
            let (sel, strong) = oracle_events(&fit, &data.problem, &active)?;
            Ok((t, sel, strong))
        })
        .collect();
    let ok: Vec<(f64, bool, bool)> = outcomes.into_iter().filter_map(|o| o.ok()).collect();
    let failures = m - ok.len();
    if failures as f64 > MAX_DELTA_FAILURE_RATE * m as f64 {
        return Err(Error::TooManyFailures {
            failed: failures,
            total: m,
            context: "Δ̂ fits".into(),
        });
    }
    let t: Vec<f64> = ok.iter().map(|o| o.0).collect();
    let k = ok.len() as f64;
    Ok(DeltaEstimate {
        m,
        delta_hat: delta_hat(&t, 0.0, sd)?,
        mc_se: delta_hat_se(&t, 0.0, sd, DELTA_SE_RESAMPLES, derive_seed(seed, 0xD1))?,
        ks: ks_distance(&t, 0.0, sd)?,
        oracle_sd: sd,
        failures,
        selection_rate: ok.iter().filter(|o| o.1).count() as f64 / k,
        strong_oracle_rate: ok.iter().filter(|o| o.2).count() as f64 / k,
    })
}

/// Normal draws `N(mean, sd²)`; stands in for `Tₙ` when checking [`delta_hat`].
pub fn synthetic_normal(m: usize, mean: f64, sd: f64, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    (0..m)
        .map(|_| mean + sd * rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect()
}
