//! Bootstrap quantiles, one-sided and symmetric intervals, and the
//! fourth-moment correction for perturbation intervals.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bootstrap::{BootMethod, BootstrapRun};
use crate::error::{invalid, Error, Result};
use crate::model::{ContrastMatrix, Fit, RegressionProblem};
use crate::pivots::{bootstrap_pivot, PivotBundle, PivotKind};
use crate::weights::WeightDistribution;

/// Fewest usable replicates accepted for a quantile.
pub const MIN_REPLICATES: usize = 20;

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// `Φ(x)`.
pub fn normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

/// `Φ⁻¹(p)` for `p ∈ (0, 1)`.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return invalid(format!("normal quantile needs p in (0, 1), got {p}"));
    }
    Ok(std_normal().inverse_cdf(p))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return invalid(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    Ok(())
}

fn order_statistic(mut v: Vec<f64>, prob: f64) -> Result<f64> {
    if v.is_empty() {
        return invalid("quantile of an empty sample");
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Degenerate("non-finite bootstrap pivot".into()));
    }
    v.sort_by(f64::total_cmp);
    let b = v.len();
    let k = ((prob * b as f64).ceil() as usize).clamp(1, b);
    Ok(v[k - 1])
}

/// `ĥ = inf{x : P*(|H*| ≤ x) ≥ 1 − α}`, the `⌈(1−α)B⌉`-th order statistic of `|H*|`.
pub fn boot_quantile_symmetric(pivots: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    order_statistic(pivots.iter().map(|v| v.abs()).collect(), 1.0 - alpha)
}

/// `inf{x : P*(H* ≤ x) ≥ prob}`.
pub fn boot_quantile(pivots: &[f64], prob: f64) -> Result<f64> {
    if !(prob > 0.0 && prob <= 1.0) {
        return invalid(format!("quantile level must lie in (0, 1], got {prob}"));
    }
    order_statistic(pivots.to_vec(), prob)
}

/// Sample moments entering `ω₂` and `ω₄`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionMoments {
    pub n: usize,
    /// `σ̌²`.
    pub sigma_check_sq: f64,
    /// `Σ̃` (scalar).
    pub sigma_tilde: f64,
    /// `n⁻¹Σε̂ᵢ⁴`.
    pub m4: f64,
    /// `n⁻¹Σξᵢ²ε̂ᵢ⁴`.
    pub a2: f64,
    /// `n⁻¹Σξᵢ⁴ε̂ᵢ⁴`.
    pub a4: f64,
}

/// Collects the moments from a scalar bundle and its fit.
pub fn correction_moments(bundle: &PivotBundle, fit: &Fit) -> Result<CorrectionMoments> {
    if bundle.q() != 1 {
        return invalid(format!("correction term needs q = 1, got q = {}", bundle.q()));
    }
    if fit.n() != bundle.n || bundle.xi.nrows() != bundle.n {
        return Err(Error::Dimension("bundle and fit disagree on n".into()));
    }
    let nf = bundle.n as f64;
    let (mut m4, mut a2, mut a4) = (0.0, 0.0, 0.0);
    for (i, e) in fit.residuals.iter().enumerate() {
        let e4 = e.powi(4);
        let x2 = bundle.xi[(i, 0)].powi(2);
        m4 += e4;
        a2 += x2 * e4;
        a4 += x2 * x2 * e4;
    }
    Ok(CorrectionMoments {
        n: bundle.n,
        sigma_check_sq: bundle.sigma_check_sq,
        sigma_tilde: bundle.sigma_tilde[(0, 0)],
        m4: m4 / nf,
        a2: a2 / nf,
        a4: a4 / nf,
    })
}

fn check_moments(m: &CorrectionMoments) -> Result<()> {
    if !(m.sigma_check_sq > 0.0) || !(m.sigma_tilde > 0.0) {
        return Err(Error::Degenerate(format!(
            "correction needs σ̌² > 0 and Σ̃ > 0 (got {}, {})",
            m.sigma_check_sq, m.sigma_tilde
        )));
    }
    Ok(())
}

/// `(ω₂, ω₄)` for multipliers with fourth-moment ratio `kappa = E(G−μ)⁴/μ⁴`.
pub fn omegas(m: &CorrectionMoments, kappa: f64) -> Result<(f64, f64)> {
    check_moments(m)?;
    let s2 = m.sigma_check_sq;
    let s4 = s2 * s2;
    let st = m.sigma_tilde;
    let w2 = (m.m4 / s4 - m.a2 / (s2 * st)) * (kappa - 2.0);
    let w4 = m.a4 / (st * st) * (kappa - 1.0) + 4.0 * m.a2 / (s2 * st) * (kappa - 2.0)
        - 3.0 * m.m4 / s4 * (kappa - 2.0)
        + 1.0;
    Ok((w2, w4))
}

/// `(ω₂, ω₄)` written out for ratio 3, as for Beta(1/2, 3/2) multipliers.
pub fn omegas_ratio_three(m: &CorrectionMoments) -> Result<(f64, f64)> {
    check_moments(m)?;
    let s2 = m.sigma_check_sq;
    let s4 = s2 * s2;
    let st = m.sigma_tilde;
    let w2 = m.m4 / s4 - m.a2 / (s2 * st);
    let w4 = 2.0 * m.a4 / (st * st) + 4.0 * m.a2 / (s2 * st) - 3.0 * m.m4 / s4 + 1.0;
    Ok((w2, w4))
}

/// `C(x) = −n⁻¹x[ω₂/2 + ω₄(x² − 3)/24]`.
pub fn correction_from_omegas(n: usize, w2: f64, w4: f64, x: f64) -> f64 {
    -(x / n as f64) * (w2 / 2.0 + w4 / 24.0 * (x * x - 3.0))
}

/// `C_n^p(x)` for a scalar bundle and the multiplier law `dist`.
pub fn correction_term(
    bundle: &PivotBundle,
    fit: &Fit,
    dist: &WeightDistribution,
    x: f64,
) -> Result<f64> {
    let m = correction_moments(bundle, fit)?;
    let (w2, w4) = omegas(&m, dist.fourth_ratio())?;
    Ok(correction_from_omegas(m.n, w2, w4, x))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalKind {
    OneSidedLower,
    OneSidedUpper,
    SymmetricResidual,
    SymmetricPerturbCorrected,
    SymmetricPerturbUncorrected,
}

impl IntervalKind {
    fn is_symmetric(self) -> bool {
        matches!(
            self,
            Self::SymmetricResidual | Self::SymmetricPerturbCorrected | Self::SymmetricPerturbUncorrected
        )
    }
}

/// Interval for a scalar `θ = Dβ`. Unbounded ends are infinite (written as
/// `null` in JSON).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub kind: IntervalKind,
    pub pivot: PivotKind,
    pub theta_hat: f64,
    /// Point the interval is built around: `θ̂` shifted by the pivot's bias.
    pub center: f64,
    /// `|H|` quantile (symmetric) or signed quantile (one-sided), before correction.
    pub quantile: f64,
    /// Maps pivot units to `θ` units: `σ̂/√n` or `σ̌Σ̂^{1/2}/√n`.
    pub scale: f64,
    pub correction_applied: Option<f64>,
    pub replicates_used: usize,
    pub replicates_flagged: usize,
}

impl ConfidenceInterval {
    pub fn contains(&self, theta: f64) -> bool {
        self.lower <= theta && theta <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Bootstrap pivots of a run, dropping replicates whose scale is zero.
pub fn run_pivots(
    run: &BootstrapRun,
    fit: &Fit,
    problem: &RegressionProblem,
    d: &ContrastMatrix,
    kind: PivotKind,
    bundle: &PivotBundle,
) -> Result<(Vec<f64>, usize)> {
    let mut out = Vec::with_capacity(run.replicates.len());
    let mut flagged = 0;
    for rep in &run.replicates {
        match bootstrap_pivot(rep, fit, problem, d, kind, bundle) {
            Ok(v) => out.push(v[0]),
            Err(Error::Degenerate(_)) => flagged += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((out, flagged))
}

fn pivot_for(run: &BootstrapRun, bundle: &PivotBundle) -> PivotKind {
    match run.method {
        BootMethod::Residual => PivotKind::residual_for(bundle.class),
        BootMethod::Perturbation { .. } => PivotKind::perturbation_for(bundle.class),
    }
}

fn pivot_scale(bundle: &PivotBundle, kind: PivotKind) -> Result<f64> {
    let rn = (bundle.n as f64).sqrt();
    let s = if kind.is_whitened() {
        (bundle.sigma_check_sq * bundle.sigma_hat[(0, 0)]).sqrt()
    } else {
        bundle.sigma_hat_sq.sqrt()
    };
    if !(s > 0.0) {
        return Err(Error::Degenerate("pivot scale is zero".into()));
    }
    Ok(s / rn)
}

fn pivot_center(bundle: &PivotBundle, kind: PivotKind) -> f64 {
    let rn = (bundle.n as f64).sqrt();
    let b = bundle.bias.as_ref().map_or(0.0, |b| b[0]);
    match kind {
        PivotKind::Rbreve | PivotKind::Rtilde => bundle.theta_hat[0] - b / rn,
        PivotKind::Rdot | PivotKind::Rddot => bundle.theta_hat[0] + b / rn,
        PivotKind::R | PivotKind::Rcheck => bundle.theta_hat[0],
    }
}

/// Bootstrap interval for a scalar contrast.
///
/// The pivot follows the run's method and the bundle's class. Symmetric
/// intervals invert `|H| ≤ h`; the corrected perturbation interval uses
/// `h̃ = ĥ + C_n^p(z_α)`. One-sided intervals invert `H ≤ q_{1−α}` (lower
/// bound) or `H ≥ q_α` (upper bound) on the signed bootstrap law.
#[allow(clippy::too_many_arguments)]
pub fn bootstrap_ci(
    run: &BootstrapRun,
    bundle: &PivotBundle,
    fit: &Fit,
    problem: &RegressionProblem,
    d: &ContrastMatrix,
    level: f64,
    kind: IntervalKind,
) -> Result<ConfidenceInterval> {
    if !(level > 0.0 && level < 1.0) {
        return invalid(format!("level must lie in (0, 1), got {level}"));
    }
    if bundle.q() != 1 || d.q() != 1 {
        return invalid("bootstrap intervals need a single contrast row");
    }
    match (kind, &run.method) {
        (IntervalKind::SymmetricResidual, BootMethod::Residual) => {}
        (IntervalKind::SymmetricPerturbCorrected | IntervalKind::SymmetricPerturbUncorrected, BootMethod::Perturbation { .. }) => {}
        (IntervalKind::OneSidedLower | IntervalKind::OneSidedUpper, _) => {}
        _ => {
            return invalid(format!(
                "{kind:?} interval does not match a {} bootstrap run",
                run.method.name()
            ))
        }
    }
    let pivot = pivot_for(run, bundle);
    let (pivots, flagged) = run_pivots(run, fit, problem, d, pivot, bundle)?;
    if pivots.len() < MIN_REPLICATES {
        return invalid(format!(
            "{} usable replicates, at least {MIN_REPLICATES} needed",
            pivots.len()
        ));
    }
    let alpha = 1.0 - level;
    let scale = pivot_scale(bundle, pivot)?;
    let center = pivot_center(bundle, pivot);
    let theta_hat = bundle.theta_hat[0];
    let mut correction_applied = None;
    let (lower, upper, quantile) = if kind.is_symmetric() {
        let h = boot_quantile_symmetric(&pivots, alpha)?;
        let mut h_used = h;
        if kind == IntervalKind::SymmetricPerturbCorrected {
            let BootMethod::Perturbation { dist } = &run.method else {
                unreachable!("checked above")
            };
            let z = normal_quantile(1.0 - alpha / 2.0)?;
            let c = correction_term(bundle, fit, dist, z)?;
            correction_applied = Some(c);
            h_used = (h + c).max(0.0);
        }
        (center - h_used * scale, center + h_used * scale, h)
    } else if kind == IntervalKind::OneSidedLower {
        let qh = boot_quantile(&pivots, level)?;
        (center - qh * scale, f64::INFINITY, qh)
    } else {
        let ql = boot_quantile(&pivots, alpha)?;
        (f64::NEG_INFINITY, center - ql * scale, ql)
    };
    Ok(ConfidenceInterval {
        lower,
        upper,
        level,
        kind,
        pivot,
        theta_hat,
        center,
        quantile,
        scale,
        correction_applied,
        replicates_used: pivots.len(),
        replicates_flagged: flagged,
    })
}

/// Symmetric bootstrap interval; `kind` must be one of the symmetric kinds.
#[allow(clippy::too_many_arguments)]
pub fn symmetric_ci(
    run: &BootstrapRun,
    bundle: &PivotBundle,
    fit: &Fit,
    problem: &RegressionProblem,
    d: &ContrastMatrix,
    level: f64,
    kind: IntervalKind,
) -> Result<ConfidenceInterval> {
    if !kind.is_symmetric() {
        return invalid(format!("{kind:?} is not a symmetric interval"));
    }
    bootstrap_ci(run, bundle, fit, problem, d, level, kind)
}
