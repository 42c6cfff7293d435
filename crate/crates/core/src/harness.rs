//! Data-generating processes and Monte Carlo experiments.
//!
//! Seeds: the design comes from `dgp.seed`; repetition `r` of an experiment
//! uses `derive_tagged(master_seed, TAG_REPS, r)`, from which its errors and
//! its bootstrap run are derived. Reports are a pure function of the config.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{ChiSquared, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{run_bootstrap, BootMethod};
use crate::diagnostics::{estimate_delta, DeltaEstimate};
use crate::error::{invalid, Error, Result};
use crate::intervals::{bootstrap_ci, IntervalKind};
use crate::model::{ContrastMatrix, Design, Fit, PenaltySpec, RegressionProblem};
use crate::pivots::pivot_bundle;
use crate::rng::{derive_seed, derive_tagged, rng_from_seed, TAG_BOOTSTRAP, TAG_DESIGN, TAG_ERRORS, TAG_REPS};
use crate::solvers::{check_irrepresentable, fit_ols, fit_penalized, SolverConfig};
use crate::weights::WeightDistribution;

/// Largest tolerated share of failed repetitions.
pub const MAX_REP_FAILURE_RATE: f64 = 0.05;
/// Smallest `B` and `M` accepted for coverage runs.
pub const MIN_COVERAGE_B: usize = 100;
pub const MIN_COVERAGE_M: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DesignKind {
    IidGaussian,
    /// Rows with covariance `ρ^{|j−k|}` (an AR(1) recursion across columns).
    Toeplitz { rho: f64 },
}

/// Mean-zero error laws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum ErrorDist {
    Gaussian { sigma: f64 },
    /// `χ²_df − df`.
    CenteredChiSq { df: f64 },
    /// `Exp(rate) − 1/rate`.
    CenteredExp { rate: f64 },
}

impl ErrorDist {
    pub fn validate(&self) -> Result<()> {
        let (name, v) = match *self {
            Self::Gaussian { sigma } => ("sigma", sigma),
            Self::CenteredChiSq { df } => ("df", df),
            Self::CenteredExp { rate } => ("rate", rate),
        };
        if !(v > 0.0 && v.is_finite()) {
            return invalid(format!("error law needs {name} > 0, got {v}"));
        }
        Ok(())
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Self::Gaussian { sigma } => sigma * sigma,
            Self::CenteredChiSq { df } => 2.0 * df,
            Self::CenteredExp { rate } => 1.0 / (rate * rate),
        }
    }

    /// Fills `out` with i.i.d. draws.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) -> Result<()> {
        match *self {
            Self::Gaussian { sigma } => {
                for e in out.iter_mut() {
                    *e = sigma * rng.sample::<f64, _>(StandardNormal);
                }
            }
            Self::CenteredChiSq { df } => {
                let law = ChiSquared::new(df).map_err(|e| Error::InvalidInput(e.to_string()))?;
                for e in out.iter_mut() {
                    *e = rng.sample(law) - df;
                }
            }
            Self::CenteredExp { rate } => {
                let law = Exp::new(rate).map_err(|e| Error::InvalidInput(e.to_string()))?;
                for e in out.iter_mut() {
                    *e = rng.sample(law) - 1.0 / rate;
                }
            }
        }
        Ok(())
    }
}

/// Linear model `y = Xβ + ε` with the first `p0` coefficients active.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub n: usize,
    pub p: usize,
    pub p0: usize,
    pub beta_active: Vec<f64>,
    pub design: DesignKind,
    /// Center and scale non-constant columns to `n⁻¹Σx² = 1`.
    #[serde(default)]
    pub standardize: bool,
    /// Column 0 is the constant 1 (counted in `p`).
    #[serde(default)]
    pub intercept: bool,
    pub errors: ErrorDist,
    pub seed: u64,
    /// Draw a fresh design for every repetition instead of fixing it.
    #[serde(default)]
    pub redraw_design: bool,
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.p < 1 {
            return invalid(format!("need n ≥ 2 and p ≥ 1, got n = {}, p = {}", self.n, self.p));
        }
        if self.p0 > self.p || self.p > self.n {
            return invalid(format!(
                "need p0 ≤ p ≤ n, got p0 = {}, p = {}, n = {}",
                self.p0, self.p, self.n
            ));
        }
        if self.beta_active.len() != self.p0 {
            return invalid(format!(
                "beta_active has {} entries, p0 = {}",
                self.beta_active.len(),
                self.p0
            ));
        }
        if self.beta_active.iter().any(|b| !b.is_finite()) {
            return invalid("beta_active must be finite");
        }
        if let DesignKind::Toeplitz { rho } = self.design {
            if !(rho > -1.0 && rho < 1.0) {
                return invalid(format!("Toeplitz rho must lie in (-1, 1), got {rho}"));
            }
        }
        self.errors.validate()
    }

    pub fn true_beta(&self) -> Vec<f64> {
        let mut b = vec![0.0; self.p];
        b[..self.p0].copy_from_slice(&self.beta_active);
        b
    }

    /// Indices with nonzero true coefficient.
    pub fn true_active(&self) -> Vec<usize> {
        (0..self.p0).filter(|&j| self.beta_active[j] != 0.0).collect()
    }

    pub fn with_n(&self, n: usize) -> Self {
        Self { n, ..self.clone() }
    }

    fn design_seed(&self) -> u64 {
        derive_tagged(self.seed, TAG_DESIGN, 0)
    }
}

/// Draws an `n × p` design from `dgp` under `seed`.
pub fn draw_design(dgp: &DgpSpec, seed: u64) -> Result<DMatrix<f64>> {
    dgp.validate()?;
    let (n, p) = (dgp.n, dgp.p);
    let mut rng = rng_from_seed(seed);
    let first = usize::from(dgp.intercept);
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let mut prev = 0.0;
        for j in first..p {
            let z: f64 = rng.sample(StandardNormal);
            let v = match dgp.design {
                DesignKind::IidGaussian => z,
                DesignKind::Toeplitz { rho } => {
                    if j == first {
                        z
                    } else {
                        rho * prev + (1.0 - rho * rho).sqrt() * z
                    }
                }
            };
            x[(i, j)] = v;
            prev = v;
        }
    }
    if dgp.intercept {
        x.column_mut(0).fill(1.0);
    }
    if dgp.standardize {
        let nf = n as f64;
        for j in first..p {
            let mut col = x.column_mut(j);
            let mean = col.sum() / nf;
            col.add_scalar_mut(-mean);
            let ss = col.norm_squared() / nf;
            if !(ss > 0.0) {
                return Err(Error::Degenerate(format!("design column {j} is constant")));
            }
            col /= ss.sqrt();
        }
    }
    Ok(x)
}

/// One simulated data set.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub problem: RegressionProblem,
    pub beta: Vec<f64>,
    pub errors: Vec<f64>,
}

/// A DGP with its fixed design.
#[derive(Debug, Clone)]
pub struct Simulator {
    dgp: DgpSpec,
    design: Arc<Design>,
}

impl Simulator {
    pub fn new(dgp: &DgpSpec) -> Result<Self> {
        dgp.validate()?;
        let design = Arc::new(Design::new(draw_design(dgp, dgp.design_seed())?)?);
        Ok(Self {
            dgp: dgp.clone(),
            design,
        })
    }

    pub fn dgp(&self) -> &DgpSpec {
        &self.dgp
    }

    /// The fixed design (shared by all repetitions unless redrawn).
    pub fn design(&self) -> &Arc<Design> {
        &self.design
    }

    /// Data set of the repetition seeded by `rep_seed`.
    pub fn dataset(&self, rep_seed: u64) -> Result<Dataset> {
        let design = if self.dgp.redraw_design {
            Arc::new(Design::new(draw_design(&self.dgp, derive_seed(rep_seed, TAG_DESIGN))?)?)
        } else {
            self.design.clone()
        };
        let beta = self.dgp.true_beta();
        let mut errors = vec![0.0; self.dgp.n];
        self.dgp
            .errors
            .sample_into(&mut rng_from_seed(derive_seed(rep_seed, TAG_ERRORS)), &mut errors)?;
        let mean = design.matrix() * nalgebra::DVector::from_column_slice(&beta);
        let y: Vec<f64> = mean.iter().zip(&errors).map(|(m, e)| m + e).collect();
        Ok(Dataset {
            problem: RegressionProblem::from_shared(design, y)?,
            beta,
            errors,
        })
    }

    /// `max_j |(C₂₁)ⱼ·C₁₁⁻¹sgn(β_A)|` on the fixed design.
    pub fn irrepresentable(&self) -> Result<f64> {
        let active = self.dgp.true_active();
        let signs: Vec<f64> = active.iter().map(|&j| self.dgp.beta_active[j].signum()).collect();
        if active.is_empty() || active.len() == self.dgp.p {
            return Ok(0.0);
        }
        let probe = RegressionProblem::from_shared(self.design.clone(), vec![0.0; self.dgp.n])?;
        check_irrepresentable(&probe, &active, &signs)
    }
}

/// Convenience wrapper: a data set from a fresh simulator.
pub fn generate_dataset(dgp: &DgpSpec, rep_seed: u64) -> Result<Dataset> {
    Simulator::new(dgp)?.dataset(rep_seed)
}

/// Penalty level as a function of `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum LambdaRule {
    Fixed { value: f64 },
    /// `c·n^exponent`.
    Power { c: f64, exponent: f64 },
    /// `c·√(n log n)`.
    SqrtNLogN { c: f64 },
}

impl LambdaRule {
    pub fn resolve(&self, n: usize) -> f64 {
        let nf = n as f64;
        match *self {
            Self::Fixed { value } => value,
            Self::Power { c, exponent } => c * nf.powf(exponent),
            Self::SqrtNLogN { c } => c * (nf * nf.ln()).sqrt(),
        }
    }
}

fn resolve_penalty(penalty: &PenaltySpec, rule: Option<LambdaRule>, n: usize) -> Result<PenaltySpec> {
    match rule {
        Some(r) => penalty.with_lambda(r.resolve(n)),
        None => penalty.validated(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootChoice {
    Residual,
    Perturbation,
}

/// A coverage experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub dgp: DgpSpec,
    pub penalty: PenaltySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_rule: Option<LambdaRule>,
    /// Row vector `D` (length `p`).
    pub contrast: Vec<f64>,
    pub method: BootChoice,
    /// Multiplier law for the perturbation bootstrap: beta, gammabeta or expinvgamma.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dist: Option<String>,
    pub interval: IntervalKind,
    pub b: usize,
    pub m: usize,
    pub level: f64,
    pub master_seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.dgp.validate()?;
        if self.b < MIN_COVERAGE_B || self.m < MIN_COVERAGE_M {
            return invalid(format!(
                "coverage runs need B ≥ {MIN_COVERAGE_B} and M ≥ {MIN_COVERAGE_M}, got B = {}, M = {}",
                self.b, self.m
            ));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return invalid(format!("level must lie in (0, 1), got {}", self.level));
        }
        if self.contrast.len() != self.dgp.p {
            return invalid(format!("contrast has {} entries, p = {}", self.contrast.len(), self.dgp.p));
        }
        self.boot_method()?;
        resolve_penalty(&self.penalty, self.lambda_rule, self.dgp.n)?;
        Ok(())
    }

    pub fn boot_method(&self) -> Result<BootMethod> {
        match self.method {
            BootChoice::Residual => Ok(BootMethod::Residual),
            BootChoice::Perturbation => {
                let name = self.dist.as_deref().unwrap_or("beta");
                Ok(BootMethod::Perturbation {
                    dist: WeightDistribution::by_name(name)?,
                })
            }
        }
    }
}

/// One arm of a Δ̂ study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaArm {
    pub label: String,
    pub penalty: PenaltySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_rule: Option<LambdaRule>,
}

/// Δ̂ over a grid of sample sizes for one or more estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaStudyConfig {
    #[serde(default)]
    pub name: String,
    /// `dgp.n` is replaced by each grid point.
    pub dgp: DgpSpec,
    pub n_grid: Vec<usize>,
    pub arms: Vec<DeltaArm>,
    pub contrast: Vec<f64>,
    pub m: usize,
    pub master_seed: u64,
}

impl DeltaStudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_grid.len() < 2 {
            return invalid("a Δ̂ study needs at least two sample sizes");
        }
        if self.arms.is_empty() {
            return invalid("a Δ̂ study needs at least one arm");
        }
        for &n in &self.n_grid {
            self.dgp.with_n(n).validate()?;
            for arm in &self.arms {
                resolve_penalty(&arm.penalty, arm.lambda_rule, n)?;
            }
        }
        if self.contrast.len() != self.dgp.p {
            return invalid(format!("contrast has {} entries, p = {}", self.contrast.len(), self.dgp.p));
        }
        Ok(())
    }
}

/// Input of the `simulate` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum SimulationConfig {
    Coverage(ExperimentConfig),
    Delta(DeltaStudyConfig),
}

/// A Monte Carlo proportion with its standard error `√(p̂(1−p̂)/M)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub value: f64,
    pub se: f64,
    pub count: usize,
    pub total: usize,
}

impl RateEstimate {
    pub fn from_counts(count: usize, total: usize) -> Self {
        let value = if total == 0 { 0.0 } else { count as f64 / total as f64 };
        let se = if total == 0 {
            0.0
        } else {
            (value * (1.0 - value) / total as f64).sqrt()
        };
        Self {
            value,
            se,
            count,
            total,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaPoint {
    pub arm: String,
    pub n: usize,
    pub lambda: f64,
    #[serde(flatten)]
    pub estimate: DeltaEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSlope {
    pub arm: String,
    /// Least-squares slope of `ln Δ̂` on `ln n`.
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub name: String,
    pub valid: bool,
    pub reps: usize,
    pub failures: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failure_examples: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<RateEstimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection_rate: Option<RateEstimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strong_oracle_rate: Option<RateEstimate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub delta: Vec<DeltaPoint>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub slopes: Vec<ArmSlope>,
    #[serde(default)]
    pub warnings: Vec<String>,
    pub config: SimulationConfig,
}

/// Whether `fit` selected exactly the true support and equals OLS on it.
pub fn oracle_events(fit: &Fit, problem: &RegressionProblem, true_active: &[usize]) -> Result<(bool, bool)> {
    if fit.active_set != true_active {
        return Ok((false, false));
    }
    let ols = fit_ols(problem, Some(true_active))?;
    let scale = 1.0 + ols.beta.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let same = fit
        .beta
        .iter()
        .zip(&ols.beta)
        .all(|(a, b)| (a - b).abs() <= 1e-8 * scale);
    Ok((true, same))
}

fn irrepresentable_warning(sim: &Simulator, penalty: &PenaltySpec) -> Vec<String> {
    let uses_lasso = matches!(
        penalty,
        PenaltySpec::Lasso { .. } | PenaltySpec::PostSelectionOls { .. }
    );
    if !uses_lasso || sim.dgp().redraw_design {
        return vec![];
    }
    match sim.irrepresentable() {
        Ok(v) if v >= 1.0 => vec![format!(
            "irrepresentable quantity {v:.4} ≥ 1 on the fixed design; Lasso selection may be inconsistent"
        )],
        Ok(_) => vec![],
        Err(e) => vec![format!("irrepresentable check failed: {e}")],
    }
}

struct RepOutcome {
    covered: bool,
    width: f64,
    selected: bool,
    strong: bool,
}

fn coverage_rep(
    cfg: &ExperimentConfig,
    sim: &Simulator,
    spec: &PenaltySpec,
    method: &BootMethod,
    d: &ContrastMatrix,
    rep: usize,
    solver: &SolverConfig,
) -> Result<RepOutcome> {
    let rep_seed = derive_tagged(cfg.master_seed, TAG_REPS, rep as u64);
    let data = sim.dataset(rep_seed)?;
    let fit = fit_penalized(&data.problem, spec, solver)?;
    let (selected, strong) = oracle_events(&fit, &data.problem, &sim.dgp().true_active())?;
    let bundle = pivot_bundle(&fit, &data.problem, d, spec.class(), &data.beta)?;
    let run = run_bootstrap(
        &fit,
        &data.problem,
        spec,
        method,
        cfg.b,
        derive_seed(rep_seed, TAG_BOOTSTRAP),
        solver,
    )?;
    let ci = bootstrap_ci(&run, &bundle, &fit, &data.problem, d, cfg.level, cfg.interval)?;
    let theta = d.apply(&data.beta)[0];
    Ok(RepOutcome {
        covered: ci.contains(theta),
        width: ci.width(),
        selected,
        strong,
    })
}

/// Runs `M` repetitions of fit, bootstrap and interval.
pub fn run_coverage(cfg: &ExperimentConfig) -> Result<SummaryReport> {
    cfg.validate()?;
    let sim = Simulator::new(&cfg.dgp)?;
    let spec = resolve_penalty(&cfg.penalty, cfg.lambda_rule, cfg.dgp.n)?;
    let method = cfg.boot_method()?;
    let d = ContrastMatrix::from_row(&cfg.contrast)?;
    let solver = SolverConfig::default();
    let outcomes: Vec<Result<RepOutcome>> = (0..cfg.m)
        .into_par_iter()
        .map(|r| coverage_rep(cfg, &sim, &spec, &method, &d, r, &solver))
        .collect();
    let mut ok = Vec::with_capacity(cfg.m);
    let mut failure_examples = Vec::new();
    for (r, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(v) => ok.push(v),
            Err(e) => {
                if failure_examples.len() < 5 {
                    failure_examples.push(format!("rep {r}: {e}"));
                }
            }
        }
    }
    let failures = cfg.m - ok.len();
    let total = ok.len();
    let count = |f: fn(&RepOutcome) -> bool| ok.iter().filter(|o| f(o)).count();
    let width = if total > 0 {
        Some(ok.iter().map(|o| o.width).sum::<f64>() / total as f64)
    } else {
        None
    };
    Ok(SummaryReport {
        name: cfg.name.clone(),
        valid: (failures as f64) <= MAX_REP_FAILURE_RATE * cfg.m as f64,
        reps: cfg.m,
        failures,
        failure_examples,
        coverage: Some(RateEstimate::from_counts(count(|o| o.covered), total)),
        mean_width: width,
        selection_rate: Some(RateEstimate::from_counts(count(|o| o.selected), total)),
        strong_oracle_rate: Some(RateEstimate::from_counts(count(|o| o.strong), total)),
        delta: vec![],
        slopes: vec![],
        warnings: irrepresentable_warning(&sim, &spec),
        config: SimulationConfig::Coverage(cfg.clone()),
    })
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return invalid("slope needs at least two paired points");
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::Degenerate("log-log slope needs positive values".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("all sample sizes are equal".into()));
    }
    Ok(sxy / sxx)
}

/// Δ̂ for every arm and grid point. All arms share the Monte Carlo errors of
/// a grid point.
pub fn run_delta_study(cfg: &DeltaStudyConfig) -> Result<SummaryReport> {
    cfg.validate()?;
    let d = ContrastMatrix::from_row(&cfg.contrast)?;
    let mut delta = Vec::new();
    let mut warnings = Vec::new();
    let mut valid = true;
    let mut failures = 0;
    let mut failure_examples = Vec::new();
    for arm in &cfg.arms {
        for (k, &n) in cfg.n_grid.iter().enumerate() {
            let dgp = cfg.dgp.with_n(n);
            let spec = resolve_penalty(&arm.penalty, arm.lambda_rule, n)?;
            let seed = derive_seed(cfg.master_seed, k as u64);
            match estimate_delta(&dgp, &spec, &d, cfg.m, seed) {
                Ok(est) => {
                    failures += est.failures;
                    delta.push(DeltaPoint {
                        arm: arm.label.clone(),
                        n,
                        lambda: spec.lambda(),
                        estimate: est,
                    });
                }
                Err(e) => {
                    valid = false;
                    failure_examples.push(format!("{} at n = {n}: {e}", arm.label));
                }
            }
            if k == 0 {
                warnings.extend(irrepresentable_warning(&Simulator::new(&dgp)?, &spec));
            }
        }
    }
    let mut slopes = Vec::new();
    for arm in &cfg.arms {
        let pts: Vec<&DeltaPoint> = delta.iter().filter(|p| p.arm == arm.label).collect();
        let xs: Vec<f64> = pts.iter().map(|p| p.n as f64).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.estimate.delta_hat).collect();
        if let Ok(slope) = log_log_slope(&xs, &ys) {
            slopes.push(ArmSlope {
                arm: arm.label.clone(),
                slope,
            });
        }
    }
    Ok(SummaryReport {
        name: cfg.name.clone(),
        valid,
        reps: cfg.m,
        failures,
        failure_examples,
        coverage: None,
        mean_width: None,
        selection_rate: None,
        strong_oracle_rate: None,
        delta,
        slopes,
        warnings,
        config: SimulationConfig::Delta(cfg.clone()),
    })
}

pub fn run_simulation(cfg: &SimulationConfig) -> Result<SummaryReport> {
    match cfg {
        SimulationConfig::Coverage(c) => run_coverage(c),
        SimulationConfig::Delta(c) => run_delta_study(c),
    }
}

/// Flat CSV rows of a report.
#[derive(Debug, Clone, Serialize)]
pub struct CsvRow {
    pub name: String,
    pub arm: String,
    pub n: usize,
    pub reps: usize,
    pub failures: usize,
    pub coverage: Option<f64>,
    pub coverage_se: Option<f64>,
    pub mean_width: Option<f64>,
    pub selection_rate: Option<f64>,
    pub strong_oracle_rate: Option<f64>,
    pub delta_hat: Option<f64>,
    pub delta_mc_se: Option<f64>,
    pub ks: Option<f64>,
}

pub fn csv_rows(report: &SummaryReport) -> Vec<CsvRow> {
    match &report.config {
        SimulationConfig::Coverage(c) => vec![CsvRow {
            name: report.name.clone(),
            arm: c.penalty.name().to_string(),
            n: c.dgp.n,
            reps: report.reps,
            failures: report.failures,
            coverage: report.coverage.map(|r| r.value),
            coverage_se: report.coverage.map(|r| r.se),
            mean_width: report.mean_width,
            selection_rate: report.selection_rate.map(|r| r.value),
            strong_oracle_rate: report.strong_oracle_rate.map(|r| r.value),
            delta_hat: None,
            delta_mc_se: None,
            ks: None,
        }],
        SimulationConfig::Delta(_) => report
            .delta
            .iter()
            .map(|p| CsvRow {
                name: report.name.clone(),
                arm: p.arm.clone(),
                n: p.n,
                reps: p.estimate.m,
                failures: p.estimate.failures,
                coverage: None,
                coverage_se: None,
                mean_width: None,
                selection_rate: Some(p.estimate.selection_rate),
                strong_oracle_rate: Some(p.estimate.strong_oracle_rate),
                delta_hat: Some(p.estimate.delta_hat),
                delta_mc_se: Some(p.estimate.mc_se),
                ks: Some(p.estimate.ks),
            })
            .collect(),
    }
}

/// Writes `report` as CSV.
pub fn write_report_csv<W: std::io::Write>(report: &SummaryReport, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for row in csv_rows(report) {
        wr.serialize(row).map_err(|e| Error::Csv(e.to_string()))?;
    }
    wr.flush()?;
    Ok(())
}
