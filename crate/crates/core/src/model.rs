//! Regression problems, penalty specifications, fits and contrast matrices.
//!
//! Every estimator in the crate minimizes
//!
//! ```text
//!     Σᵢ (yᵢ − xᵢᵀt)² + n Σⱼ P_{λ,j}(|tⱼ|)
//! ```
//!
//! with per-coordinate derivatives `P′` as documented on [`PenaltySpec`].
//! For the Lasso `P′ = λ/n`, so its effective total penalty is `λ Σ|tⱼ|`.

use std::path::Path;
use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Coefficients with `|βⱼ| > ZERO_TOL` count as active.
pub const ZERO_TOL: f64 = 1e-10;

/// Fixed design matrix together with its cached Gram matrix `Cₙ = n⁻¹XᵀX`.
#[derive(Debug)]
pub struct Design {
    x: DMatrix<f64>,
    gram: OnceLock<DMatrix<f64>>,
}

impl Design {
    pub fn new(x: DMatrix<f64>) -> Result<Self> {
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            let (n, _) = x.shape();
            return Err(Error::NonFinite {
                row: pos % n,
                column: pos / n,
                name: "design".into(),
            });
        }
        Ok(Self {
            x,
            gram: OnceLock::new(),
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        self.gram.get_or_init(|| {
            let n = self.x.nrows() as f64;
            let mut g = self.x.transpose() * &self.x;
            g /= n;
            // exact symmetry
            let p = g.nrows();
            for i in 0..p {
                for j in (i + 1)..p {
                    let v = 0.5 * (g[(i, j)] + g[(j, i)]);
                    g[(i, j)] = v;
                    g[(j, i)] = v;
                }
            }
            g
        })
    }
}

/// A validated linear regression problem `y = Xβ + ε`.
#[derive(Debug, Clone)]
pub struct RegressionProblem {
    design: Arc<Design>,
    response: Vec<f64>,
}

impl RegressionProblem {
    pub fn new(design: DMatrix<f64>, response: Vec<f64>) -> Result<Self> {
        Self::from_shared(Arc::new(Design::new(design)?), response)
    }

    /// Builds a problem on an existing design without copying it.
    pub fn from_shared(design: Arc<Design>, response: Vec<f64>) -> Result<Self> {
        let (n, p) = design.matrix().shape();
        if n < 2 {
            return invalid(format!("need at least 2 observations, got {n}"));
        }
        if p < 1 {
            return invalid("need at least one predictor");
        }
        if response.len() != n {
            return Err(Error::Dimension(format!(
                "design has {n} rows but response has length {}",
                response.len()
            )));
        }
        if let Some(row) = response.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row,
                column: 0,
                name: "response".into(),
            });
        }
        Ok(Self { design, response })
    }

    /// Same design, new response.
    pub fn with_response(&self, response: Vec<f64>) -> Result<Self> {
        Self::from_shared(Arc::clone(&self.design), response)
    }

    pub fn n(&self) -> usize {
        self.design.matrix().nrows()
    }

    pub fn p(&self) -> usize {
        self.design.matrix().ncols()
    }

    pub fn design(&self) -> &DMatrix<f64> {
        self.design.matrix()
    }

    pub fn shared_design(&self) -> &Arc<Design> {
        &self.design
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    /// `Cₙ = n⁻¹ Σ xᵢxᵢᵀ`.
    pub fn gram(&self) -> &DMatrix<f64> {
        self.design.gram()
    }

    /// `n⁻¹ Xᵀv` for an arbitrary length-n vector.
    pub fn scaled_xt(&self, v: &[f64]) -> Vec<f64> {
        let x = self.design();
        let n = self.n() as f64;
        (0..self.p())
            .map(|j| {
                let col = x.column(j);
                col.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / n
            })
            .collect()
    }

    /// `Xβ`.
    pub fn predict(&self, beta: &[f64]) -> Vec<f64> {
        let x = self.design();
        let mut out = vec![0.0; self.n()];
        for (j, &b) in beta.iter().enumerate() {
            if b == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(x.column(j).iter()) {
                *o += v * b;
            }
        }
        out
    }
}

/// Initial estimator feeding adaptive and one-step penalties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialEstimator {
    /// Ordinary least squares; requires `p ≤ n`.
    Ols,
    /// Lasso with its own penalty level λ̃ (total-penalty convention).
    Lasso { lambda_tilde: f64 },
}

/// Base penalty `P̃` of a one-step estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OneStepBase {
    Scad { a: f64 },
    Mcp { a: f64 },
    /// `P̃(θ) = θ^q`, `0 < q < 1`.
    Power { q: f64 },
    /// `P̃(θ) = log θ`.
    Log,
}

/// Penalty family and parameters.
///
/// Per-coordinate derivatives `P′(t)`:
///
/// * Lasso: `λ/n` (total penalty `λΣ|tⱼ|`)
/// * SCAD: `λ·1(t≤λ) + (aλ−t)₊/(a−1)·1(t>λ)`
/// * MCP: `(λ − t/a)₊`
/// * adaptive Lasso: `λ/|β̃ⱼ|^γ`
/// * one-step: `λ·P̃′(|β̃ⱼ|)`
///
/// Post-selection OLS selects with a Lasso at `lambda` and refits OLS on
/// the selected support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PenaltySpec {
    Lasso {
        lambda: f64,
    },
    Scad {
        lambda: f64,
        a: f64,
    },
    Mcp {
        lambda: f64,
        a: f64,
    },
    AdaptiveLasso {
        lambda: f64,
        gamma: f64,
        initial: InitialEstimator,
    },
    OneStep {
        lambda: f64,
        base: OneStepBase,
        initial: InitialEstimator,
    },
    PostSelectionOls {
        lambda: f64,
    },
}

/// Estimator classes by closeness to OLS on the true support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimatorClass {
    /// Strong oracle: SCAD, MCP, post-selection OLS, one-step with SCAD/MCP base.
    I,
    /// Oracle only: adaptive Lasso, one-step with power or log base.
    II,
    /// Selection consistent only: Lasso.
    III,
}

pub const DEFAULT_SCAD_A: f64 = 3.7;
pub const DEFAULT_MCP_A: f64 = 3.0;

impl PenaltySpec {
    pub fn lasso(lambda: f64) -> Result<Self> {
        Self::Lasso { lambda }.validated()
    }

    pub fn scad(lambda: f64, a: f64) -> Result<Self> {
        Self::Scad { lambda, a }.validated()
    }

    pub fn mcp(lambda: f64, a: f64) -> Result<Self> {
        Self::Mcp { lambda, a }.validated()
    }

    pub fn adaptive_lasso(lambda: f64, gamma: f64, initial: InitialEstimator) -> Result<Self> {
        Self::AdaptiveLasso {
            lambda,
            gamma,
            initial,
        }
        .validated()
    }

    pub fn one_step(lambda: f64, base: OneStepBase, initial: InitialEstimator) -> Result<Self> {
        Self::OneStep {
            lambda,
            base,
            initial,
        }
        .validated()
    }

    pub fn post_selection_ols(lambda: f64) -> Result<Self> {
        Self::PostSelectionOls { lambda }.validated()
    }

    /// Checks the parameter bounds; deserialized specs should pass through here.
    pub fn validated(self) -> Result<Self> {
        let lambda = self.lambda();
        if !(lambda.is_finite() && lambda >= 0.0) {
            return invalid(format!("lambda must be finite and nonnegative, got {lambda}"));
        }
        match self {
            Self::Scad { a, .. } if !(a > 2.0 && a.is_finite()) => {
                return invalid(format!("SCAD requires a > 2, got {a}"))
            }
            Self::Mcp { a, .. } if !(a > 1.0 && a.is_finite()) => {
                return invalid(format!("MCP requires a > 1, got {a}"))
            }
            Self::AdaptiveLasso { gamma, initial, .. } => {
                if !(gamma > 0.0 && gamma.is_finite()) {
                    return invalid(format!("adaptive Lasso requires gamma > 0, got {gamma}"));
                }
                validate_initial(initial)?;
            }
            Self::OneStep { base, initial, .. } => {
                match base {
                    OneStepBase::Scad { a } if !(a > 2.0) => {
                        return invalid(format!("SCAD base requires a > 2, got {a}"))
                    }
                    OneStepBase::Mcp { a } if !(a > 1.0) => {
                        return invalid(format!("MCP base requires a > 1, got {a}"))
                    }
                    OneStepBase::Power { q } if !(q > 0.0 && q < 1.0) => {
                        return invalid(format!("power base requires 0 < q < 1, got {q}"))
                    }
                    _ => {}
                }
                validate_initial(initial)?;
            }
            _ => {}
        }
        Ok(self)
    }

    pub fn lambda(&self) -> f64 {
        match *self {
            Self::Lasso { lambda }
            | Self::Scad { lambda, .. }
            | Self::Mcp { lambda, .. }
            | Self::AdaptiveLasso { lambda, .. }
            | Self::OneStep { lambda, .. }
            | Self::PostSelectionOls { lambda } => lambda,
        }
    }

    /// Same family with penalty level `lambda`.
    pub fn with_lambda(self, lambda: f64) -> Result<Self> {
        let out = match self {
            Self::Lasso { .. } => Self::Lasso { lambda },
            Self::Scad { a, .. } => Self::Scad { lambda, a },
            Self::Mcp { a, .. } => Self::Mcp { lambda, a },
            Self::AdaptiveLasso { gamma, initial, .. } => Self::AdaptiveLasso {
                lambda,
                gamma,
                initial,
            },
            Self::OneStep { base, initial, .. } => Self::OneStep {
                lambda,
                base,
                initial,
            },
            Self::PostSelectionOls { .. } => Self::PostSelectionOls { lambda },
        };
        out.validated()
    }

    pub fn class(&self) -> EstimatorClass {
        match self {
            Self::Lasso { .. } => EstimatorClass::III,
            Self::Scad { .. } | Self::Mcp { .. } | Self::PostSelectionOls { .. } => {
                EstimatorClass::I
            }
            Self::AdaptiveLasso { .. } => EstimatorClass::II,
            Self::OneStep { base, .. } => match base {
                OneStepBase::Scad { .. } | OneStepBase::Mcp { .. } => EstimatorClass::I,
                OneStepBase::Power { .. } | OneStepBase::Log => EstimatorClass::II,
            },
        }
    }

    pub fn initial(&self) -> Option<InitialEstimator> {
        match *self {
            Self::AdaptiveLasso { initial, .. } | Self::OneStep { initial, .. } => Some(initial),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Lasso { .. } => "lasso",
            Self::Scad { .. } => "scad",
            Self::Mcp { .. } => "mcp",
            Self::AdaptiveLasso { .. } => "alasso",
            Self::OneStep { .. } => "onestep",
            Self::PostSelectionOls { .. } => "psols",
        }
    }
}

fn validate_initial(initial: InitialEstimator) -> Result<()> {
    if let InitialEstimator::Lasso { lambda_tilde } = initial {
        if !(lambda_tilde.is_finite() && lambda_tilde >= 0.0) {
            return invalid(format!(
                "initial Lasso lambda must be finite and nonnegative, got {lambda_tilde}"
            ));
        }
    }
    Ok(())
}

/// Sorted indices with `|βⱼ| > ZERO_TOL`.
pub fn active_set(beta: &[f64]) -> Vec<usize> {
    beta.iter()
        .enumerate()
        .filter(|(_, b)| b.abs() > ZERO_TOL)
        .map(|(j, _)| j)
        .collect()
}

/// A fitted penalized regression.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Fit {
    pub beta: Vec<f64>,
    pub active_set: Vec<usize>,
    pub residuals: Vec<f64>,
    pub fitted: Vec<f64>,
    pub penalty: PenaltySpec,
    /// Initial estimate β̃ for adaptive and one-step penalties.
    #[serde(default)]
    pub initial: Option<Vec<f64>>,
    /// Per-coordinate ℓ1 weights actually used (`P′ⱼ`, infinite = excluded,
    /// written as `null` in JSON).
    #[serde(default, deserialize_with = "weights_with_infinity")]
    pub weights: Option<Vec<f64>>,
    #[serde(default)]
    pub iterations: usize,
    #[serde(default)]
    pub kkt_residual: f64,
    /// Set when a SCAD/MCP fit was replaced by its one-step surrogate.
    #[serde(default)]
    pub fallback: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objective_history: Vec<f64>,
}

fn weights_with_infinity<'de, D>(de: D) -> std::result::Result<Option<Vec<f64>>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    let raw: Option<Vec<Option<f64>>> = Deserialize::deserialize(de)?;
    Ok(raw.map(|v| v.into_iter().map(|w| w.unwrap_or(f64::INFINITY)).collect()))
}

impl Fit {
    /// Builds a fit around `beta`, computing fitted values, residuals and the active set.
    pub fn from_beta(problem: &RegressionProblem, beta: Vec<f64>, penalty: PenaltySpec) -> Self {
        let fitted = problem.predict(&beta);
        let residuals = problem
            .response()
            .iter()
            .zip(&fitted)
            .map(|(y, f)| y - f)
            .collect();
        Self {
            active_set: active_set(&beta),
            beta,
            residuals,
            fitted,
            penalty,
            initial: None,
            weights: None,
            iterations: 0,
            kkt_residual: 0.0,
            fallback: None,
            objective_history: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.residuals.len()
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }
}

/// Known `q × p` contrast `Dₙ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastMatrix {
    matrix: DMatrix<f64>,
}

impl ContrastMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() < 1 || matrix.ncols() < 1 {
            return invalid("contrast matrix must have at least one row and column");
        }
        let tr: f64 = matrix.iter().map(|v| v * v).sum();
        if !tr.is_finite() {
            return invalid("trace(D Dᵀ) is not finite");
        }
        Ok(Self { matrix })
    }

    /// Row vector selecting coordinate `j` of a length-`p` coefficient.
    pub fn coordinate(p: usize, j: usize) -> Result<Self> {
        if j >= p {
            return invalid(format!("coordinate {j} out of range for p = {p}"));
        }
        let mut m = DMatrix::zeros(1, p);
        m[(0, j)] = 1.0;
        Self::new(m)
    }

    pub fn from_row(row: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_row_slice(1, row.len(), row))
    }

    pub fn q(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn p(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `D⁽¹⁾`: the columns at `active`, in the given (sorted) order.
    pub fn active_columns(&self, active: &[usize]) -> DMatrix<f64> {
        self.matrix.select_columns(active)
    }

    /// `D·v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.q())
            .map(|r| {
                self.matrix
                    .row(r)
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }
}

/// Blocks of `Cₙ` partitioned by an active set.
#[derive(Debug, Clone)]
pub struct GramBlocks {
    pub active: Vec<usize>,
    pub inactive: Vec<usize>,
    pub c11: DMatrix<f64>,
    pub c12: DMatrix<f64>,
    pub c21: DMatrix<f64>,
    pub c22: DMatrix<f64>,
}

/// Partitions `Cₙ` into active/inactive blocks. The active set is sorted;
/// an empty set yields a 0×0 `c11`.
pub fn gram_partition(problem: &RegressionProblem, active: &[usize]) -> Result<GramBlocks> {
    let p = problem.p();
    let mut act: Vec<usize> = active.to_vec();
    act.sort_unstable();
    act.dedup();
    if let Some(&bad) = act.iter().find(|&&j| j >= p) {
        return invalid(format!("active index {bad} out of range for p = {p}"));
    }
    let inactive: Vec<usize> = (0..p).filter(|j| act.binary_search(j).is_err()).collect();
    let c = problem.gram();
    let block = |rows: &[usize], cols: &[usize]| {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| c[(rows[i], cols[j])])
    };
    Ok(GramBlocks {
        c11: block(&act, &act),
        c12: block(&act, &inactive),
        c21: block(&inactive, &act),
        c22: block(&inactive, &inactive),
        active: act,
        inactive,
    })
}

/// Column selection for CSV ingestion.
#[derive(Debug, Clone)]
pub struct CsvOptions {
    /// Name of the response column.
    pub response: String,
    /// Predictor columns in order; `None` means every other column in file order.
    pub predictors: Option<Vec<String>>,
}

impl CsvOptions {
    pub fn new(response: impl Into<String>) -> Self {
        Self {
            response: response.into(),
            predictors: None,
        }
    }
}

/// Reads a header-first CSV of decimal cells into a problem.
pub fn load_problem(path: impl AsRef<Path>, options: &CsvOptions) -> Result<RegressionProblem> {
    load_problem_named(path, options).map(|(p, _)| p)
}

/// Like [`load_problem`], also returning the predictor names in column order.
pub fn load_problem_named(
    path: impl AsRef<Path>,
    options: &CsvOptions,
) -> Result<(RegressionProblem, Vec<String>)> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Csv(format!("column '{name}' not found in header")))
    };
    let response_col = find(&options.response)?;
    let predictor_cols: Vec<usize> = match &options.predictors {
        Some(names) => names.iter().map(|n| find(n)).collect::<Result<_>>()?,
        None => (0..headers.len()).filter(|&c| c != response_col).collect(),
    };
    if predictor_cols.is_empty() {
        return Err(Error::Csv("no predictor columns".into()));
    }

    let mut y = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        // data rows are 1-based, the header is row 0
        let row = r + 1;
        let record = record.map_err(|e| Error::Csv(format!("row {row}: {e}")))?;
        let cell = |c: usize| -> Result<f64> {
            let raw = record.get(c).unwrap_or("");
            let v: f64 = raw.parse().map_err(|_| {
                Error::Csv(format!(
                    "row {row}, column {} ('{}'): cannot parse '{raw}' as a number",
                    c + 1,
                    headers[c]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row,
                    column: c + 1,
                    name: headers[c].clone(),
                });
            }
            Ok(v)
        };
        y.push(cell(response_col)?);
        rows.push(predictor_cols.iter().map(|&c| cell(c)).collect::<Result<_>>()?);
    }
    let n = rows.len();
    let p = predictor_cols.len();
    let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
    let names = predictor_cols.iter().map(|&c| headers[c].clone()).collect();
    Ok((RegressionProblem::new(x, y)?, names))
}

/// Writes `response_name,x1..xp` CSV (predictor names generated when absent).
pub fn write_problem_csv(
    path: impl AsRef<Path>,
    problem: &RegressionProblem,
    response_name: &str,
    predictor_names: Option<&[String]>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref()).map_err(|e| Error::Csv(e.to_string()))?;
    let mut header = vec![response_name.to_string()];
    match predictor_names {
        Some(names) => header.extend(names.iter().cloned()),
        None => header.extend((1..=problem.p()).map(|j| format!("x{j}"))),
    }
    w.write_record(&header).map_err(|e| Error::Csv(e.to_string()))?;
    let x = problem.design();
    for i in 0..problem.n() {
        let mut rec = vec![format!("{:?}", problem.response()[i])];
        rec.extend((0..problem.p()).map(|j| format!("{:?}", x[(i, j)])));
        w.write_record(&rec).map_err(|e| Error::Csv(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
