//! `Tₙ`, variance estimators, studentized and bias-corrected pivots.
//!
//! All active-set quantities use `ξ̂ᵢ = D̂⁽¹⁾Ĉ₁₁⁻¹x̂ᵢ⁽¹⁾` with the columns of the
//! fitted active set taken in sorted order.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bootstrap::Replicate;
use crate::error::{invalid, Error, Result};
use crate::linalg::{inv_sqrt_sym, spd_inverse, symmetrize};
use crate::model::{gram_partition, ContrastMatrix, EstimatorClass, Fit, PenaltySpec, RegressionProblem};
use crate::solvers::weights_from_initial;

/// Pivot families. `R`/`Rcheck` carry no bias term, `Rbreve`/`Rtilde`
/// subtract the Lasso bias and `Rdot`/`Rddot` add the class-II bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PivotKind {
    R,
    Rcheck,
    Rbreve,
    Rtilde,
    Rdot,
    Rddot,
}

impl PivotKind {
    /// Whitened by `σ̌Σ̂^{1/2}` (the perturbation family) rather than scaled by `σ̂`.
    pub fn is_whitened(self) -> bool {
        matches!(self, Self::Rcheck | Self::Rtilde | Self::Rddot)
    }

    /// Residual-bootstrap pivot for a class.
    pub fn residual_for(class: EstimatorClass) -> Self {
        match class {
            EstimatorClass::I => Self::R,
            EstimatorClass::II => Self::Rdot,
            EstimatorClass::III => Self::Rbreve,
        }
    }

    /// Perturbation-bootstrap pivot for a class.
    pub fn perturbation_for(class: EstimatorClass) -> Self {
        match class {
            EstimatorClass::I => Self::Rcheck,
            EstimatorClass::II => Self::Rddot,
            EstimatorClass::III => Self::Rtilde,
        }
    }

    fn bias_class(self) -> Option<EstimatorClass> {
        match self {
            Self::R | Self::Rcheck => None,
            Self::Rbreve | Self::Rtilde => Some(EstimatorClass::III),
            Self::Rdot | Self::Rddot => Some(EstimatorClass::II),
        }
    }

    /// Signed bias shift applied to `T`: `−b̂†` or `+b̆`.
    fn shift(self, bias: &[f64]) -> Vec<f64> {
        match self.bias_class() {
            Some(EstimatorClass::III) => bias.iter().map(|b| -b).collect(),
            Some(_) => bias.to_vec(),
            None => vec![0.0; bias.len()],
        }
    }
}

/// Original-sample ingredients of every pivot.
#[derive(Debug, Clone, PartialEq)]
pub struct PivotBundle {
    pub n: usize,
    pub t_n: Vec<f64>,
    /// `n⁻¹Σ(ε̂ᵢ − ε̄)²`.
    pub sigma_hat_sq: f64,
    /// `n⁻¹Σε̂ᵢ²`.
    pub sigma_check_sq: f64,
    /// `Σ̂ₙ = n⁻¹Σ ξ̂ᵢξ̂ᵢᵀ`.
    pub sigma_hat: DMatrix<f64>,
    /// `Σ̃ₙ = n⁻¹Σ ξ̂ᵢξ̂ᵢᵀ ε̂ᵢ²`.
    pub sigma_tilde: DMatrix<f64>,
    /// `b̂†` for class III, `b̆` for class II, absent for class I.
    pub bias: Option<Vec<f64>>,
    pub class: EstimatorClass,
    /// Rows are `ξ̂ᵢᵀ` (n × q).
    pub xi: DMatrix<f64>,
    /// `D·β̂`.
    pub theta_hat: Vec<f64>,
}

impl PivotBundle {
    pub fn q(&self) -> usize {
        self.t_n.len()
    }
}

fn check_dims(fit: &Fit, problem: &RegressionProblem, d: &ContrastMatrix) -> Result<()> {
    if fit.p() != problem.p() || fit.n() != problem.n() || d.p() != problem.p() {
        return Err(Error::Dimension(format!(
            "fit {}×{}, problem {}×{}, contrast has {} columns",
            fit.n(),
            fit.p(),
            problem.n(),
            problem.p(),
            d.p()
        )));
    }
    Ok(())
}

/// `√n·D·(β̂ − β_ref)`.
pub fn t_statistic(fit: &Fit, beta_ref: &[f64], d: &ContrastMatrix) -> Result<Vec<f64>> {
    if beta_ref.len() != fit.p() || d.p() != fit.p() {
        return Err(Error::Dimension(format!(
            "beta_ref has length {}, contrast {} columns, p = {}",
            beta_ref.len(),
            d.p(),
            fit.p()
        )));
    }
    let diff: Vec<f64> = fit.beta.iter().zip(beta_ref).map(|(a, b)| a - b).collect();
    let rn = (fit.n() as f64).sqrt();
    Ok(d.apply(&diff).into_iter().map(|v| rn * v).collect())
}

/// `D⁽¹⁾C₁₁⁻¹` (q × |active|) on the sorted active set.
pub fn active_projector(
    problem: &RegressionProblem,
    d: &ContrastMatrix,
    active: &[usize],
) -> Result<DMatrix<f64>> {
    let blocks = gram_partition(problem, active)?;
    if blocks.active.is_empty() {
        return Ok(DMatrix::zeros(d.q(), 0));
    }
    let c11_inv = spd_inverse(&blocks.c11, "active Gram block C11")?;
    Ok(d.active_columns(&blocks.active) * c11_inv)
}

fn xi_matrix(problem: &RegressionProblem, proj: &DMatrix<f64>, active: &[usize]) -> DMatrix<f64> {
    let mut act = active.to_vec();
    act.sort_unstable();
    act.dedup();
    if act.is_empty() {
        return DMatrix::zeros(problem.n(), proj.nrows());
    }
    problem.design().select_columns(&act) * proj.transpose()
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn sorted_active(active: &[usize]) -> Vec<usize> {
    let mut a = active.to_vec();
    a.sort_unstable();
    a.dedup();
    a
}

fn lasso_bias_on(
    problem: &RegressionProblem,
    d: &ContrastMatrix,
    beta: &[f64],
    active: &[usize],
    lambda: f64,
) -> Result<Vec<f64>> {
    let act = sorted_active(active);
    if act.is_empty() {
        return invalid("Lasso bias needs a nonempty active set");
    }
    let proj = active_projector(problem, d, &act)?;
    let s = DVector::from_iterator(act.len(), act.iter().map(|&j| sign(beta[j])));
    let scale = -lambda / (2.0 * (problem.n() as f64).sqrt());
    Ok((proj * s).iter().map(|v| scale * v).collect())
}

/// `b̂† = −λ/(2√n)·D̂⁽¹⁾Ĉ₁₁⁻¹ŝ†` with `ŝ†ⱼ = sgn(β̂ⱼ)`.
pub fn bias_lasso(
    fit: &Fit,
    problem: &RegressionProblem,
    d: &ContrastMatrix,
    lambda: f64,
) -> Result<Vec<f64>> {
    check_dims(fit, problem, d)?;
    lasso_bias_on(problem, d, &fit.beta, &fit.active_set, lambda)
}

fn class2_bias_on(
    problem: &RegressionProblem,
    d: &ContrastMatrix,
    spec: &PenaltySpec,
    beta: &[f64],
    active: &[usize],
    initial_beta: &[f64],
) -> Result<Vec<f64>> {
    let n = problem.n();
    if initial_beta.len() != problem.p() {
        return Err(Error::Dimension(format!(
            "initial estimate has length {}, p = {}",
            initial_beta.len(),
            problem.p()
        )));
    }
    let act = sorted_active(active);
    if act.is_empty() {
        return Ok(vec![0.0; d.q()]);
    }
    let w = weights_from_initial(spec, initial_beta, n)?;
    let rn = (n as f64).sqrt();
    let mut s = DVector::zeros(act.len());
    for (k, &j) in act.iter().enumerate() {
        if !w[j].is_finite() {
            return Err(Error::ZeroInitial {
                index: j,
                hint: "active coordinate has an infinite weight".into(),
            });
        }
        s[k] = rn * w[j] * sign(beta[j]);
    }
    let proj = active_projector(problem, d, &act)?;
    Ok((proj * s).iter().copied().collect())
}

/// `b̆ = D̂⁽¹⁾Ĉ₁₁⁻¹s̆` with `s̆ⱼ = √n·P′ⱼ(|β̃ⱼ|)·sgn(β̂ⱼ)`.
///
/// `P′ⱼ` is the per-coordinate ℓ1 weight of the fitted objective.
pub fn bias_class2(
    fit: &Fit,
    problem: &RegressionProblem,
    d: &ContrastMatrix,
    spec: &PenaltySpec,
    initial_beta: &[f64],
) -> Result<Vec<f64>> {
    check_dims(fit, problem, d)?;
    if !matches!(spec, PenaltySpec::AdaptiveLasso { .. } | PenaltySpec::OneStep { .. }) {
        return invalid(format!("{} has no class-II bias term", spec.name()));
    }
    class2_bias_on(problem, d, spec, &fit.beta, &fit.active_set, initial_beta)
}

/// Original-sample bundle with `Tₙ = √n·D(β̂ − β_ref)`.
///
/// Pass `β̂` itself as `beta_ref` when the true coefficient is unknown; the
/// interval routines only use the remaining fields.
pub fn pivot_bundle(
    fit: &Fit,
    problem: &RegressionProblem,
    d: &ContrastMatrix,
    class: EstimatorClass,
    beta_ref: &[f64],
) -> Result<PivotBundle> {
    check_dims(fit, problem, d)?;
    let n = problem.n();
    let nf = n as f64;
    let t_n = t_statistic(fit, beta_ref, d)?;
    let mean = fit.residuals.iter().sum::<f64>() / nf;
    let sigma_hat_sq = fit.residuals.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / nf;
    let sigma_check_sq = fit.residuals.iter().map(|e| e * e).sum::<f64>() / nf;
    let proj = active_projector(problem, d, &fit.active_set)?;
    let xi = xi_matrix(problem, &proj, &fit.active_set);
    let sigma_hat = symmetrize(xi.transpose() * &xi / nf);
    let mut weighted = xi.clone();
    for (i, mut row) in weighted.row_iter_mut().enumerate() {
        row *= fit.residuals[i] * fit.residuals[i];
    }
    let sigma_tilde = symmetrize(xi.transpose() * weighted / nf);
    let bias = match class {
        EstimatorClass::I => None,
        EstimatorClass::III => Some(bias_lasso(fit, problem, d, fit.penalty.lambda())?),
        EstimatorClass::II => {
            let init = fit.initial.as_deref().ok_or_else(|| {
                Error::InvalidInput("class-II bias needs the fit's initial estimate".into())
            })?;
            Some(bias_class2(fit, problem, d, &fit.penalty, init)?)
        }
    };
    Ok(PivotBundle {
        n,
        t_n,
        sigma_hat_sq,
        sigma_check_sq,
        sigma_hat,
        sigma_tilde,
        bias,
        class,
        xi,
        theta_hat: d.apply(&fit.beta),
    })
}

fn check_kind(bundle: &PivotBundle, kind: PivotKind) -> Result<Vec<f64>> {
    match kind.bias_class() {
        None => Ok(vec![0.0; bundle.q()]),
        Some(c) => {
            if bundle.class != c {
                return invalid(format!(
                    "pivot {kind:?} needs a class {c:?} bundle, got class {:?}",
                    bundle.class
                ));
            }
            let b = bundle
                .bias
                .as_ref()
                .ok_or_else(|| Error::InvalidInput(format!("pivot {kind:?} needs a bias term")))?;
            Ok(kind.shift(b))
        }
    }
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn whiten(m: &DMatrix<f64>, v: &[f64], scale: f64, context: &str) -> Result<Vec<f64>> {
    let w = inv_sqrt_sym(m, context)?;
    Ok((w * DVector::from_column_slice(v)).iter().map(|x| x * scale).collect())
}

/// Original-sample pivot of the given kind.
pub fn studentize(bundle: &PivotBundle, kind: PivotKind) -> Result<Vec<f64>> {
    let shift = check_kind(bundle, kind)?;
    let centered = add(&bundle.t_n, &shift);
    if kind.is_whitened() {
        let sc = bundle.sigma_check_sq.sqrt();
        if !(sc > 0.0) {
            return Err(Error::Degenerate("σ̌ is zero".into()));
        }
        whiten(&bundle.sigma_hat, &centered, 1.0 / sc, "Σ̂")
    } else {
        let s = bundle.sigma_hat_sq.sqrt();
        if !(s > 0.0) {
            return Err(Error::Degenerate("σ̂ is zero".into()));
        }
        Ok(centered.into_iter().map(|v| v / s).collect())
    }
}

/// Bootstrap version of a pivot for one replicate.
///
/// `Rbreve`/`Rtilde` reuse the original `b̂†`; `Rdot`/`Rddot` recompute `b̆`
/// from the replicate's active set, coefficients and initial estimate.
pub fn bootstrap_pivot(
    replicate: &Replicate,
    fit: &Fit,
    problem: &RegressionProblem,
    d: &ContrastMatrix,
    kind: PivotKind,
    bundle: &PivotBundle,
) -> Result<Vec<f64>> {
    check_dims(fit, problem, d)?;
    if replicate.beta_star.len() != problem.p() {
        return Err(Error::Dimension("replicate coefficient has the wrong length".into()));
    }
    if kind.is_whitened() != replicate.g_star.is_some() {
        return invalid(format!(
            "pivot {kind:?} does not match the replicate's bootstrap method"
        ));
    }
    let scale = replicate.residual_scale;
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Degenerate(format!(
            "replicate {} has bootstrap scale {scale}",
            replicate.index
        )));
    }
    let rn = (problem.n() as f64).sqrt();
    let diff: Vec<f64> = replicate.beta_star.iter().zip(&fit.beta).map(|(a, b)| a - b).collect();
    let t_star: Vec<f64> = d.apply(&diff).into_iter().map(|v| rn * v).collect();
    let shift = match kind.bias_class() {
        Some(EstimatorClass::II) => {
            check_kind(bundle, kind)?;
            let init = replicate.initial_star.as_deref().ok_or_else(|| {
                Error::InvalidInput("class-II bootstrap pivot needs the replicate's initial estimate".into())
            })?;
            class2_bias_on(
                problem,
                d,
                &fit.penalty,
                &replicate.beta_star,
                &replicate.active_star,
                init,
            )?
        }
        _ => check_kind(bundle, kind)?,
    };
    let centered = add(&t_star, &shift);
    if kind.is_whitened() {
        let sc = bundle.sigma_check_sq.sqrt();
        whiten(&bundle.sigma_tilde, &centered, sc / scale, "Σ̃")
    } else {
        Ok(centered.into_iter().map(|v| v / scale).collect())
    }
}

/// Bootstrap pivots of a whole run, in replicate order.
pub fn bootstrap_pivots(
    replicates: &[Replicate],
    fit: &Fit,
    problem: &RegressionProblem,
    d: &ContrastMatrix,
    kind: PivotKind,
    bundle: &PivotBundle,
) -> Result<Vec<Vec<f64>>> {
    replicates
        .iter()
        .map(|r| bootstrap_pivot(r, fit, problem, d, kind, bundle))
        .collect()
}
