//! Penalty derivatives, penalty values and one-step weights.
//!
//! Objectives are written in `n⁻¹` units throughout:
//! `n⁻¹‖y − Xt‖² + Σⱼ Pⱼ(|tⱼ|)`, so a weighted ℓ1 family contributes `Σ wⱼ|tⱼ|`
//! with `wⱼ = P′ⱼ`.

use crate::error::{invalid, Error, Result};
use crate::model::{OneStepBase, PenaltySpec};

/// `P′(t)` of the SCAD penalty.
pub fn scad_derivative(lambda: f64, a: f64, t: f64) -> f64 {
    if t <= lambda {
        lambda
    } else {
        (a * lambda - t).max(0.0) / (a - 1.0)
    }
}

/// `P′(t)` of the MCP penalty.
pub fn mcp_derivative(lambda: f64, a: f64, t: f64) -> f64 {
    (lambda - t / a).max(0.0)
}

/// SCAD penalty value `P(t)`, `t ≥ 0`.
pub fn scad_value(lambda: f64, a: f64, t: f64) -> f64 {
    if t <= lambda {
        lambda * t
    } else if t <= a * lambda {
        (2.0 * a * lambda * t - t * t - lambda * lambda) / (2.0 * (a - 1.0))
    } else {
        (a + 1.0) * lambda * lambda / 2.0
    }
}

/// MCP penalty value `P(t)`, `t ≥ 0`.
pub fn mcp_value(lambda: f64, a: f64, t: f64) -> f64 {
    if t <= a * lambda {
        lambda * t - t * t / (2.0 * a)
    } else {
        a * lambda * lambda / 2.0
    }
}

fn base_derivative(lambda: f64, base: OneStepBase, theta: f64) -> Result<f64> {
    match base {
        OneStepBase::Scad { a } => Ok(scad_derivative(lambda, a, theta)),
        OneStepBase::Mcp { a } => Ok(mcp_derivative(lambda, a, theta)),
        OneStepBase::Power { q } => {
            if theta <= 0.0 {
                return invalid("power base derivative is infinite at zero");
            }
            Ok(lambda * q * theta.powf(q - 1.0))
        }
        OneStepBase::Log => {
            if theta <= 0.0 {
                return invalid("log base derivative is infinite at zero");
            }
            Ok(lambda / theta)
        }
    }
}

/// Per-coordinate derivative `P′_{λ,j}(t)`.
///
/// For adaptive and one-step penalties `coord_weight` is `|β̃ⱼ|` and `t` is
/// ignored. Post-selection OLS reports its Lasso selector's derivative.
pub fn penalty_derivative(
    spec: &PenaltySpec,
    t: f64,
    coord_weight: Option<f64>,
    n: usize,
) -> Result<f64> {
    if !(t >= 0.0) {
        return invalid(format!("penalty argument must be nonnegative, got {t}"));
    }
    let need = || {
        coord_weight
            .filter(|w| *w >= 0.0 && w.is_finite())
            .ok_or_else(|| Error::InvalidInput("missing |initial coefficient| for this penalty".into()))
    };
    match *spec {
        PenaltySpec::Lasso { lambda } | PenaltySpec::PostSelectionOls { lambda } => {
            Ok(lambda / n as f64)
        }
        PenaltySpec::Scad { lambda, a } => Ok(scad_derivative(lambda, a, t)),
        PenaltySpec::Mcp { lambda, a } => Ok(mcp_derivative(lambda, a, t)),
        PenaltySpec::AdaptiveLasso { lambda, gamma, .. } => {
            let b = need()?;
            if b == 0.0 {
                return invalid("adaptive Lasso weight is infinite at a zero initial coefficient");
            }
            Ok(lambda / b.powf(gamma))
        }
        PenaltySpec::OneStep { lambda, base, .. } => base_derivative(lambda, base, need()?),
    }
}

/// Weights `wⱼ = P′_{λ,j}` turning an adaptive or one-step fit into weighted ℓ1.
///
/// A zero initial coefficient is rejected whenever its weight would be infinite.
pub fn one_step_weights(spec: &PenaltySpec, initial_beta: &[f64], n: usize) -> Result<Vec<f64>> {
    if !matches!(
        spec,
        PenaltySpec::AdaptiveLasso { .. } | PenaltySpec::OneStep { .. }
    ) {
        return invalid(format!("{} is not an adaptive or one-step penalty", spec.name()));
    }
    initial_beta
        .iter()
        .enumerate()
        .map(|(j, b)| {
            penalty_derivative(spec, 0.0, Some(b.abs()), n).map_err(|_| Error::ZeroInitial {
                index: j,
                hint: "screen the initial estimate or use a Lasso initial estimator".into(),
            })
        })
        .collect()
}
