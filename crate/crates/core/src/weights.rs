//! Perturbation weight distributions `G*` with `Var G* = μ²` and `E(G* − μ)³ = μ³`.
//!
//! Built-ins carry exact moments computed from cumulants of their components.
//! Samplers draw small-shape Gamma variates in log space so that shapes far
//! below one do not underflow into `0/0`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, StandardUniform};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{invalid, Error, Result};
use crate::rng::rng_from_seed;

/// Relative tolerance for the moment identities of the mixture built-ins.
pub const MIXTURE_TOL: f64 = 1e-3;

pub const GB_SHAPE: f64 = 0.036490;
pub const GAMMA_SHAPE: f64 = 0.008652;
pub const GAMMA_SCALE: f64 = 2.0;

/// Signed mean of the exponential component, `(79 − 15√33)/16 ≈ −0.448`.
///
/// The value is negative: the component enters as `−E` with `E` exponential of
/// mean `|m|`, which is what makes both moment identities hold exactly.
pub fn exp_component_mean() -> f64 {
    (79.0 - 15.0 * 33f64.sqrt()) / 16.0
}

/// Shape and scale of the inverse-gamma component, `4 + √(11/3)`.
pub fn invgamma_parameter() -> f64 {
    4.0 + (11.0f64 / 3.0).sqrt()
}

type Sampler = Arc<dyn Fn(&mut ChaCha8Rng) -> f64 + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightKind {
    /// Beta(1/2, 3/2).
    Beta,
    /// Gamma(0.008652, scale 2) + Beta(0.03649, 0.03649).
    GammaBeta,
    /// Exponential + inverse gamma.
    ExpInvGamma,
    GeneralizedGamma { omega: f64, rho: f64, nu: f64 },
    Custom { name: String },
}

/// Distribution of the perturbation multipliers.
#[derive(Clone, Serialize, Deserialize)]
#[serde(try_from = "WeightRepr", into = "WeightRepr")]
pub struct WeightDistribution {
    kind: WeightKind,
    mu: f64,
    variance: f64,
    mu3: f64,
    mu4: f64,
    compliant: bool,
    nonnegative: bool,
    sampler: Option<Sampler>,
}

#[derive(Serialize, Deserialize)]
struct WeightRepr {
    #[serde(flatten)]
    kind: WeightKind,
    mu: f64,
    variance: f64,
    mu3: f64,
    mu4: f64,
    compliant: bool,
    #[serde(default = "yes")]
    nonnegative: bool,
}

fn yes() -> bool {
    true
}

impl From<WeightDistribution> for WeightRepr {
    fn from(d: WeightDistribution) -> Self {
        Self {
            kind: d.kind,
            mu: d.mu,
            variance: d.variance,
            mu3: d.mu3,
            mu4: d.mu4,
            compliant: d.compliant,
            nonnegative: d.nonnegative,
        }
    }
}

impl TryFrom<WeightRepr> for WeightDistribution {
    type Error = Error;

    fn try_from(r: WeightRepr) -> Result<Self> {
        match r.kind {
            WeightKind::Beta => Ok(builtin_beta()),
            WeightKind::GammaBeta => Ok(builtin_gamma_beta()),
            WeightKind::ExpInvGamma => Ok(builtin_exp_invgamma()),
            WeightKind::GeneralizedGamma { omega, rho, nu } => generalized_gamma(omega, rho, nu),
            WeightKind::Custom { .. } => Ok(Self {
                kind: r.kind,
                mu: r.mu,
                variance: r.variance,
                mu3: r.mu3,
                mu4: r.mu4,
                compliant: r.compliant,
                nonnegative: r.nonnegative,
                sampler: None,
            }),
        }
    }
}

impl fmt::Debug for WeightDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WeightDistribution")
            .field("kind", &self.kind)
            .field("mu", &self.mu)
            .field("variance", &self.variance)
            .field("mu3", &self.mu3)
            .field("mu4", &self.mu4)
            .field("compliant", &self.compliant)
            .field("nonnegative", &self.nonnegative)
            .finish()
    }
}

impl PartialEq for WeightDistribution {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.mu == other.mu
            && self.variance == other.variance
            && self.mu3 == other.mu3
            && self.mu4 == other.mu4
    }
}

/// Central moments `(variance, third, fourth)` of a law given by its first four cumulants.
fn central_from_cumulants(k: [f64; 4]) -> (f64, f64, f64) {
    (k[1], k[2], k[3] + 3.0 * k[1] * k[1])
}

fn cumulants_from_raw(m: [f64; 4]) -> [f64; 4] {
    let (var, c3, c4) = central_from_raw(m);
    [m[0], var, c3, c4 - 3.0 * var * var]
}

/// Central moments from raw moments `E X, E X², E X³, E X⁴`.
pub fn central_from_raw(m: [f64; 4]) -> (f64, f64, f64) {
    let [m1, m2, m3, m4] = m;
    let var = m2 - m1 * m1;
    let c3 = m3 - 3.0 * m1 * m2 + 2.0 * m1.powi(3);
    let c4 = m4 - 4.0 * m1 * m3 + 6.0 * m1 * m1 * m2 - 3.0 * m1.powi(4);
    (var, c3, c4)
}

fn beta_raw(a: f64, b: f64) -> [f64; 4] {
    let mut out = [0.0; 4];
    let mut acc = 1.0;
    for (k, slot) in out.iter_mut().enumerate() {
        let i = k as f64;
        acc *= (a + i) / (a + b + i);
        *slot = acc;
    }
    out
}

fn gamma_cumulants(shape: f64, scale: f64) -> [f64; 4] {
    [
        shape * scale,
        shape * scale.powi(2),
        2.0 * shape * scale.powi(3),
        6.0 * shape * scale.powi(4),
    ]
}

fn invgamma_raw(alpha: f64, beta: f64) -> [f64; 4] {
    let mut out = [0.0; 4];
    let mut acc = 1.0;
    for (k, slot) in out.iter_mut().enumerate() {
        acc *= beta / (alpha - (k as f64 + 1.0));
        *slot = acc;
    }
    out
}

/// `ln` of a unit-scale Gamma(shape) draw; exact for any shape > 0.
fn ln_gamma_draw(rng: &mut ChaCha8Rng, shape: f64) -> f64 {
    if shape >= 1.0 {
        let g = Gamma::new(shape, 1.0).expect("positive shape");
        g.sample(rng).ln()
    } else {
        // G(a) = G(a+1)·U^{1/a}
        let g = Gamma::new(shape + 1.0, 1.0).expect("positive shape");
        let u: f64 = rng.sample(StandardUniform);
        g.sample(rng).ln() + u.max(f64::MIN_POSITIVE).ln() / shape
    }
}

fn beta_draw(rng: &mut ChaCha8Rng, a: f64, b: f64) -> f64 {
    let lx = ln_gamma_draw(rng, a);
    let ly = ln_gamma_draw(rng, b);
    1.0 / (1.0 + (ly - lx).exp())
}

fn checked(
    kind: WeightKind,
    mu: f64,
    (variance, mu3, mu4): (f64, f64, f64),
    sampler: Sampler,
    tol: f64,
) -> WeightDistribution {
    let compliant = ((variance - mu * mu) / (mu * mu)).abs() <= tol
        && ((mu3 - mu.powi(3)) / mu.powi(3)).abs() <= tol;
    WeightDistribution {
        kind,
        mu,
        variance,
        mu3,
        mu4,
        compliant,
        nonnegative: true,
        sampler: Some(sampler),
    }
}

/// Beta(1/2, 3/2).
pub fn builtin_beta() -> WeightDistribution {
    let raw = beta_raw(0.5, 1.5);
    checked(
        WeightKind::Beta,
        raw[0],
        central_from_raw(raw),
        Arc::new(|rng| beta_draw(rng, 0.5, 1.5)),
        1e-8,
    )
}

/// Gamma(0.008652, scale 2) plus an independent Beta(0.03649, 0.03649).
pub fn builtin_gamma_beta() -> WeightDistribution {
    let kg = gamma_cumulants(GAMMA_SHAPE, GAMMA_SCALE);
    let kb = cumulants_from_raw(beta_raw(GB_SHAPE, GB_SHAPE));
    let k = [kg[0] + kb[0], kg[1] + kb[1], kg[2] + kb[2], kg[3] + kb[3]];
    checked(
        WeightKind::GammaBeta,
        k[0],
        central_from_cumulants(k),
        Arc::new(|rng| {
            let g = GAMMA_SCALE * ln_gamma_draw(rng, GAMMA_SHAPE).exp();
            g + beta_draw(rng, GB_SHAPE, GB_SHAPE)
        }),
        MIXTURE_TOL,
    )
}

/// Inverse gamma with shape and scale `4 + √(11/3)` plus an independent
/// exponential of signed mean `(79 − 15√33)/16`. Draws can be negative.
pub fn builtin_exp_invgamma() -> WeightDistribution {
    let m = exp_component_mean();
    let a = invgamma_parameter();
    // cumulants m^r (r−1)! hold for a negative scale too
    let ke = gamma_cumulants(1.0, m);
    let ki = cumulants_from_raw(invgamma_raw(a, a));
    let k = [ke[0] + ki[0], ke[1] + ki[1], ke[2] + ki[2], ke[3] + ki[3]];
    let exp = Exp::new(1.0 / m.abs()).expect("positive rate");
    let gam = Gamma::new(a, 1.0).expect("positive shape");
    let mut d = checked(
        WeightKind::ExpInvGamma,
        k[0],
        central_from_cumulants(k),
        Arc::new(move |rng| m.signum() * exp.sample(rng) + a / gam.sample(rng)),
        MIXTURE_TOL,
    );
    d.nonnegative = m >= 0.0;
    d
}

/// Raw moments `E G^k = ω^k Γ((ρ+k)/ν)/Γ(ρ/ν)`, `k = 1..4`.
pub fn generalized_gamma_raw(omega: f64, rho: f64, nu: f64) -> [f64; 4] {
    let base = ln_gamma(rho / nu);
    let mut out = [0.0; 4];
    for (k, slot) in out.iter_mut().enumerate() {
        let kf = k as f64 + 1.0;
        *slot = (kf * omega.ln() + ln_gamma((rho + kf) / nu) - base).exp();
    }
    out
}

/// Generalized Gamma law with density ∝ `y^{ρ−1} exp(−(y/ω)^ν)`.
pub fn generalized_gamma(omega: f64, rho: f64, nu: f64) -> Result<WeightDistribution> {
    for (name, v) in [("omega", omega), ("rho", rho), ("nu", nu)] {
        if !(v > 0.0 && v.is_finite()) {
            return invalid(format!("generalized gamma {name} must be positive, got {v}"));
        }
    }
    let raw = generalized_gamma_raw(omega, rho, nu);
    let shape = rho / nu;
    Ok(checked(
        WeightKind::GeneralizedGamma { omega, rho, nu },
        raw[0],
        central_from_raw(raw),
        Arc::new(move |rng| omega * (ln_gamma_draw(rng, shape) / nu).exp()),
        1e-6,
    ))
}

impl WeightDistribution {
    /// User-supplied law; `compliant` records whether the two identities hold to 1e−3.
    pub fn custom(
        name: impl Into<String>,
        mu: f64,
        variance: f64,
        mu3: f64,
        mu4: f64,
        sampler: impl Fn(&mut ChaCha8Rng) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(mu > 0.0 && variance >= 0.0 && mu4 >= 0.0) || !mu3.is_finite() {
            return invalid("custom weights need mu > 0 and finite nonnegative even moments");
        }
        Ok(checked(
            WeightKind::Custom { name: name.into() },
            mu,
            (variance, mu3, mu4),
            Arc::new(sampler),
            MIXTURE_TOL,
        ))
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "beta" => Ok(builtin_beta()),
            "gammabeta" => Ok(builtin_gamma_beta()),
            "expinvgamma" => Ok(builtin_exp_invgamma()),
            other => invalid(format!(
                "unknown weight distribution '{other}' (expected beta, gammabeta or expinvgamma)"
            )),
        }
    }

    pub fn kind(&self) -> &WeightKind {
        &self.kind
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn third_central(&self) -> f64 {
        self.mu3
    }

    pub fn fourth_central(&self) -> f64 {
        self.mu4
    }

    /// `E(G − μ)⁴ / μ⁴`.
    pub fn fourth_ratio(&self) -> f64 {
        self.mu4 / self.mu.powi(4)
    }

    pub fn compliant(&self) -> bool {
        self.compliant
    }

    /// Whether every draw is `≥ 0`.
    pub fn nonnegative(&self) -> bool {
        self.nonnegative
    }

    /// Relative residuals `(Var/μ² − 1, μ₃/μ³ − 1, μ₄/μ⁴ − 3)`.
    pub fn residuals(&self) -> [f64; 3] {
        [
            self.variance / self.mu.powi(2) - 1.0,
            self.mu3 / self.mu.powi(3) - 1.0,
            self.fourth_ratio() - 3.0,
        ]
    }

    /// One draw.
    pub fn sample_one(&self, rng: &mut ChaCha8Rng) -> Result<f64> {
        let s = self.sampler.as_ref().ok_or_else(|| {
            Error::InvalidInput("this distribution has no sampler (deserialized custom law)".into())
        })?;
        Ok(s(rng))
    }

    /// Fills `out` with i.i.d. draws.
    pub fn sample_into(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) -> Result<()> {
        let s = self.sampler.as_ref().ok_or_else(|| {
            Error::InvalidInput("this distribution has no sampler (deserialized custom law)".into())
        })?;
        for v in out.iter_mut() {
            *v = s(rng);
        }
        Ok(())
    }
}

/// `n` i.i.d. draws from `dist`, deterministic in `seed`.
pub fn sample_weights(dist: &WeightDistribution, n: usize, seed: u64) -> Result<Vec<f64>> {
    if n < 1 {
        return invalid("need at least one draw");
    }
    let mut rng = rng_from_seed(seed);
    let mut out = vec![0.0; n];
    dist.sample_into(&mut rng, &mut out)?;
    Ok(out)
}

/// Log residuals of the two Generalized Gamma equations at `(ρ, ν)`.
pub fn generalized_gamma_residuals(rho: f64, nu: f64) -> [f64; 2] {
    let l0 = ln_gamma(rho / nu);
    let l1 = ln_gamma((rho + 1.0) / nu);
    let l2 = ln_gamma((rho + 2.0) / nu);
    let l3 = ln_gamma((rho + 3.0) / nu);
    [
        l2 + l0 - 2f64.ln() - 2.0 * l1,
        l3 + 2.0 * l0 - 5f64.ln() - 3.0 * l1,
    ]
}

/// Jacobian of the residuals in `(ln ρ, ln ν)`.
fn gg_jacobian(rho: f64, nu: f64) -> [[f64; 2]; 2] {
    // ∂/∂ρ lnΓ((ρ+k)/ν) = ψ/ν, ∂/∂ν = −ψ·(ρ+k)/ν²
    let d = |k: f64| {
        let x = (rho + k) / nu;
        let psi = digamma(x);
        (psi / nu * rho, -psi * x)
    };
    let (r0, v0) = d(0.0);
    let (r1, v1) = d(1.0);
    let (r2, v2) = d(2.0);
    let (r3, v3) = d(3.0);
    [
        [r2 + r0 - 2.0 * r1, v2 + v0 - 2.0 * v1],
        [r3 + 2.0 * r0 - 3.0 * r1, v3 + 2.0 * v0 - 3.0 * v1],
    ]
}

const GG_BOX: (f64, f64) = (1e-3, 50.0);

fn gg_newton(rho0: f64, nu0: f64, tol: f64) -> Option<(f64, f64, f64)> {
    let (lo, hi) = (GG_BOX.0.ln(), GG_BOX.1.ln());
    let (mut u, mut v) = (rho0.ln(), nu0.ln());
    let norm = |r: [f64; 2]| r[0].abs().max(r[1].abs());
    let mut r = generalized_gamma_residuals(u.exp(), v.exp());
    if !norm(r).is_finite() {
        return None;
    }
    for _ in 0..200 {
        if norm(r) <= tol {
            return Some((u.exp(), v.exp(), norm(r)));
        }
        let j = gg_jacobian(u.exp(), v.exp());
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if !det.is_finite() || det.abs() < 1e-300 {
            return None;
        }
        let du = -(j[1][1] * r[0] - j[0][1] * r[1]) / det;
        let dv = -(-j[1][0] * r[0] + j[0][0] * r[1]) / det;
        let mut step = 1.0;
        let current = norm(r);
        loop {
            let (nu_, nv) = (u + step * du, v + step * dv);
            if nu_ > lo && nu_ < hi && nv > lo && nv < hi {
                let nr = generalized_gamma_residuals(nu_.exp(), nv.exp());
                if norm(nr).is_finite() && norm(nr) < current {
                    u = nu_;
                    v = nv;
                    r = nr;
                    break;
                }
            }
            step *= 0.5;
            if step < 1e-12 {
                return None;
            }
        }
    }
    (norm(r) <= tol).then(|| (u.exp(), v.exp(), norm(r)))
}

/// Solves the two Generalized Gamma moment equations for `(ρ, ν)`.
///
/// `ω` is a pure scale and does not enter; it is validated only.
pub fn solve_generalized_gamma(omega: f64, tol: f64) -> Result<(f64, f64)> {
    if !(omega > 0.0 && omega.is_finite()) {
        return invalid(format!("omega must be positive, got {omega}"));
    }
    if !(tol > 0.0) {
        return invalid(format!("tolerance must be positive, got {tol}"));
    }
    let (lo, hi) = (GG_BOX.0.ln(), GG_BOX.1.ln());
    let grid = 8;
    let mut best: Option<(f64, f64, f64)> = None;
    let mut landscape = f64::INFINITY;
    for a in 0..grid {
        for b in 0..grid {
            let rho = (lo + (hi - lo) * (a as f64 + 0.5) / grid as f64).exp();
            let nu = (lo + (hi - lo) * (b as f64 + 0.5) / grid as f64).exp();
            let r = generalized_gamma_residuals(rho, nu);
            let m = r[0].abs().max(r[1].abs());
            if m.is_finite() {
                landscape = landscape.min(m);
            }
            if let Some(sol) = gg_newton(rho, nu, tol) {
                if best.is_none_or(|b| sol.2 < b.2) {
                    best = Some(sol);
                }
            }
        }
    }
    best.map(|(r, n, _)| (r, n)).ok_or_else(|| {
        Error::NoRoot(format!(
            "no generalized gamma root in (1e-3, 50)²; smallest residual on the start grid {landscape:e}"
        ))
    })
}

/// Gauss hypergeometric ₂F₁(a, b; c; z) for `0 ≤ z ≤ 1`.
///
/// Direct series with a term-ratio tail bound; `z = 1` uses Gauss's closed form.
pub fn hyp2f1(a: f64, b: f64, c: f64, z: f64, tol: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&z) {
        return invalid(format!("hypergeometric argument must lie in [0, 1], got {z}"));
    }
    if z == 0.0 {
        return Ok(1.0);
    }
    if z == 1.0 {
        let s = c - a - b;
        if s <= 0.0 {
            return Err(Error::Divergence(format!(
                "2F1 at z = 1 diverges when c − a − b = {s} ≤ 0"
            )));
        }
        let lg = ln_gamma(c) + ln_gamma(s) - ln_gamma(c - a) - ln_gamma(c - b);
        return Ok(lg.exp());
    }
    let mut sum = 1.0;
    let mut term = 1.0;
    for m in 0..1_000_000u32 {
        let mf = m as f64;
        let ratio = (a + mf) * (b + mf) / ((c + mf) * (mf + 1.0)) * z;
        term *= ratio;
        sum += term;
        if ratio.abs() < 1.0 {
            // geometric tail once the ratio has settled toward z
            let r = ratio.abs().max(z);
            let tail = term.abs() * r / (1.0 - r);
            if tail <= tol * sum.abs() {
                return Ok(sum);
            }
        }
        if !sum.is_finite() {
            break;
        }
    }
    Err(Error::Divergence(format!(
        "2F1({a}, {b}; {c}; {z}) did not converge within 10^6 terms"
    )))
}

/// `m_k / g^k` of the Generalized Beta law.
fn gb_moment(f: f64, h: f64, omega: f64, rho: f64, k: f64, tol: f64) -> Result<f64> {
    let kf = k / f;
    let ln_b = |x: f64, y: f64| ln_gamma(x) + ln_gamma(y) - ln_gamma(x + y);
    let ratio = (ln_b(omega + kf, rho) - ln_b(omega, rho)).exp();
    Ok(ratio * hyp2f1(omega + kf, kf, omega + rho + kf, h, tol)?)
}

/// Log residuals of the two Generalized Beta moment equations at `(f, g, h, ω, ρ)`.
pub fn check_generalized_beta(params: (f64, f64, f64, f64, f64), tol: f64) -> Result<(f64, f64)> {
    let (f, g, h, omega, rho) = params;
    for (name, v) in [("f", f), ("g", g), ("omega", omega), ("rho", rho)] {
        if !(v > 0.0 && v.is_finite()) {
            return invalid(format!("generalized beta {name} must be positive, got {v}"));
        }
    }
    if !(0.0..=1.0).contains(&h) {
        return invalid(format!("generalized beta h must lie in [0, 1], got {h}"));
    }
    if !(tol > 0.0) {
        return invalid("tolerance must be positive");
    }
    let series_tol = tol / 10.0;
    let m1 = gb_moment(f, h, omega, rho, 1.0, series_tol)?;
    let m2 = gb_moment(f, h, omega, rho, 2.0, series_tol)?;
    let m3 = gb_moment(f, h, omega, rho, 3.0, series_tol)?;
    Ok((
        m2.ln() - (2f64.ln() + 2.0 * m1.ln()),
        m3.ln() - (5f64.ln() + 3.0 * m1.ln()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_exact_moments() {
        let d = builtin_beta();
        assert!((d.mu() - 0.25).abs() < 1e-15);
        assert!((d.variance() - 1.0 / 16.0).abs() < 1e-15);
        assert!((d.third_central() - 1.0 / 64.0).abs() < 1e-15);
        assert!((d.fourth_ratio() - 3.0).abs() < 1e-12);
        assert!(d.compliant());
    }

    #[test]
    fn beta_kurtosis_formula() {
        // excess kurtosis of Beta(a, b)
        let (a, b): (f64, f64) = (0.5, 1.5);
        let excess = 6.0 * ((a - b).powi(2) * (a + b + 1.0) - a * b * (a + b + 2.0))
            / (a * b * (a + b + 2.0) * (a + b + 3.0));
        assert!(excess.abs() < 1e-15);
    }

    #[test]
    fn gamma_beta_moments() {
        let d = builtin_gamma_beta();
        assert!((d.mu() - 0.517304).abs() < 1e-12);
        // independent central moments: Gamma (k θ², 2kθ³) and symmetric Beta(s, s)
        let (k, t, s) = (GAMMA_SHAPE, GAMMA_SCALE, GB_SHAPE);
        let var = k * t * t + 1.0 / (4.0 * (2.0 * s + 1.0));
        let third = 2.0 * k * t.powi(3);
        assert!((d.variance() - var).abs() < 1e-14);
        assert!((d.third_central() - third).abs() < 1e-14);
        let mu = d.mu();
        assert!(((var - mu * mu) / (mu * mu)).abs() < MIXTURE_TOL);
        assert!(((third - mu.powi(3)) / mu.powi(3)).abs() < MIXTURE_TOL);
        assert!(d.compliant());
    }

    #[test]
    fn exp_invgamma_moments() {
        let m = exp_component_mean();
        assert!((m + 0.448027).abs() < 1e-6);
        let a = invgamma_parameter();
        assert!((a - 5.914854).abs() < 1e-6 && a > 4.0);
        let d = builtin_exp_invgamma();
        // closed-form InvGamma(α, β=α) central moments
        let var_ig = a * a / ((a - 1.0).powi(2) * (a - 2.0));
        let third_ig = 4.0 * a.powi(3) / ((a - 1.0).powi(3) * (a - 2.0) * (a - 3.0));
        assert!((d.mu() - (m + a / (a - 1.0))).abs() < 1e-14);
        assert!((d.variance() - (m * m + var_ig)).abs() < 1e-12);
        assert!((d.third_central() - (2.0 * m.powi(3) + third_ig)).abs() < 1e-12);
        assert!(d.fourth_central().is_finite());
        let [r1, r2, _] = d.residuals();
        assert!(r1.abs() < 1e-12 && r2.abs() < 1e-12);
        assert!(d.compliant());
        assert!(!d.nonnegative());
    }

    #[test]
    fn beta_sample_mean_within_clt_band() {
        let d = builtin_beta();
        let draws = sample_weights(&d, 1_000_000, 2024).unwrap();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 0.25).abs() < 4.0 * (0.25 / 1e3));
        assert!(draws.iter().all(|v| *v >= 0.0 && *v <= 1.0));
    }

    #[test]
    fn beta_sample_third_moment() {
        let d = builtin_beta();
        let n = 1_000_000;
        let draws = sample_weights(&d, n, 99).unwrap();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let m3 = draws.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n as f64;
        // exact central moments up to order six from raw Beta moments
        let raw: Vec<f64> = (1..=6)
            .map(|k| (0..k).map(|i| (0.5 + i as f64) / (2.0 + i as f64)).product())
            .collect();
        let mu = raw[0];
        let central = |k: usize| -> f64 {
            (0..=k)
                .map(|j| {
                    let binom = (0..j).fold(1.0, |acc, i| acc * (k - i) as f64 / (i + 1) as f64);
                    let rj = if j == 0 { 1.0 } else { raw[j - 1] };
                    binom * rj * (-mu).powi((k - j) as i32)
                })
                .sum()
        };
        let (c2, c3, c4, c6) = (central(2), central(3), central(4), central(6));
        let var_m3 = c6 - c3 * c3 - 6.0 * c4 * c2 + 9.0 * c2.powi(3);
        let se = (var_m3 / n as f64).sqrt();
        assert!((m3 - 1.0 / 64.0).abs() < 5.0 * se, "m3 {m3} se {se}");
    }

    #[test]
    fn mixture_samples_centered() {
        for d in [builtin_gamma_beta(), builtin_exp_invgamma()] {
            let n = 400_000;
            let draws = sample_weights(&d, n, 5).unwrap();
            assert!(draws.iter().all(|v| v.is_finite()));
            if d.nonnegative() {
                assert!(draws.iter().all(|v| *v >= 0.0));
            }
            let mean = draws.iter().sum::<f64>() / n as f64;
            let se = (d.variance() / n as f64).sqrt();
            assert!((mean - d.mu()).abs() < 5.0 * se);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let d = builtin_gamma_beta();
        assert_eq!(sample_weights(&d, 100, 3).unwrap(), sample_weights(&d, 100, 3).unwrap());
        assert_ne!(sample_weights(&d, 100, 3).unwrap(), sample_weights(&d, 100, 4).unwrap());
    }

    #[test]
    fn generalized_gamma_solution() {
        let (rho, nu) = solve_generalized_gamma(1.0, 1e-10).unwrap();
        let r = generalized_gamma_residuals(rho, nu);
        assert!(r[0].abs() <= 1e-10 && r[1].abs() <= 1e-10);
        let (rho2, nu2) = solve_generalized_gamma(2.0, 1e-10).unwrap();
        assert!((rho - rho2).abs() < 1e-10 && (nu - nu2).abs() < 1e-10);
        // independent moment evaluation through plain log-gamma
        let m = |k: f64| (ln_gamma((rho + k) / nu) - ln_gamma(rho / nu)).exp();
        let (m1, m2, m3) = (m(1.0), m(2.0), m(3.0));
        let var = m2 - m1 * m1;
        let c3 = m3 - 3.0 * m1 * m2 + 2.0 * m1.powi(3);
        assert!((var / (m1 * m1) - 1.0).abs() < 1e-6);
        assert!((c3 / m1.powi(3) - 1.0).abs() < 1e-6);
        let d = generalized_gamma(3.0, rho, nu).unwrap();
        assert!(d.compliant());
        let draws = sample_weights(&d, 200_000, 1).unwrap();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - d.mu()).abs() < 5.0 * (d.variance() / 200_000.0).sqrt());
    }

    #[test]
    fn generalized_beta_reduces_to_beta() {
        let (r1, r2) = check_generalized_beta((1.0, 1.0, 0.0, 0.5, 1.5), 1e-10).unwrap();
        assert!(r1.abs() <= 1e-10 && r2.abs() <= 1e-10);
        // scale g cancels
        let (s1, s2) = check_generalized_beta((1.0, 7.0, 0.0, 0.5, 1.5), 1e-10).unwrap();
        assert!((s1 - r1).abs() < 1e-14 && (s2 - r2).abs() < 1e-14);
    }

    #[test]
    fn generalized_beta_h_zero_is_plain_beta_arithmetic() {
        let (w, r) = (1.3, 2.2);
        let (r1, r2) = check_generalized_beta((1.0, 1.0, 0.0, w, r), 1e-12).unwrap();
        let raw = beta_raw(w, r);
        assert!((r1 - (raw[1].ln() - 2f64.ln() - 2.0 * raw[0].ln())).abs() < 1e-12);
        assert!((r2 - (raw[2].ln() - 5f64.ln() - 3.0 * raw[0].ln())).abs() < 1e-12);
    }

    #[test]
    fn generalized_beta_generic_point_fails() {
        let (r1, r2) = check_generalized_beta((2.0, 1.0, 0.4, 1.1, 2.5), 1e-8).unwrap();
        assert!(r1.abs() > 1e-8 || r2.abs() > 1e-8);
    }

    #[test]
    fn hypergeometric_checks() {
        // ₂F₁(1, 1; 2; z) = −ln(1−z)/z
        let z: f64 = 0.5;
        let v = hyp2f1(1.0, 1.0, 2.0, z, 1e-14).unwrap();
        assert!((v - (-(1.0 - z).ln() / z)).abs() < 1e-12);
        // Gauss at z = 1 and divergence
        let g = hyp2f1(0.5, 0.5, 2.0, 1.0, 1e-12).unwrap();
        let expect = (ln_gamma(2.0) + ln_gamma(1.0) - 2.0 * ln_gamma(1.5)).exp();
        assert!((g - expect).abs() < 1e-12);
        assert!(matches!(hyp2f1(1.0, 1.0, 1.5, 1.0, 1e-12), Err(Error::Divergence(_))));
        assert!(check_generalized_beta((1.0, 1.0, 1.0, 0.5, 1.5), 1e-8).is_err());
    }

    #[test]
    fn serde_round_trip_rebuilds_builtins() {
        let d = builtin_exp_invgamma();
        let s = serde_json::to_string(&d).unwrap();
        let back: WeightDistribution = serde_json::from_str(&s).unwrap();
        assert_eq!(back, d);
        assert!(back.sample_one(&mut rng_from_seed(1)).is_ok());
    }

    #[test]
    fn custom_law_flags_compliance() {
        let ok = WeightDistribution::custom("c", 1.0, 1.0, 1.0, 9.0, |_| 1.0).unwrap();
        assert!(ok.compliant());
        let bad = WeightDistribution::custom("exp", 1.0, 1.0, 2.0, 9.0, |_| 1.0).unwrap();
        assert!(!bad.compliant());
    }
}
