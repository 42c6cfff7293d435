//! `penboot` command line: fit, bootstrap, intervals, weight checks and simulations.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use penboot::bootstrap::{run_bootstrap, BootMethod, BootstrapRun};
use penboot::harness::{run_simulation, write_report_csv, SimulationConfig};
use penboot::intervals::{bootstrap_ci, ConfidenceInterval, IntervalKind};
use penboot::model::{
    load_problem_named, ContrastMatrix, CsvOptions, Fit, InitialEstimator, OneStepBase,
    PenaltySpec, RegressionProblem, DEFAULT_MCP_A, DEFAULT_SCAD_A,
};
use penboot::pivots::pivot_bundle;
use penboot::solvers::{fit_penalized, SolverConfig};
use penboot::weights::{solve_generalized_gamma, WeightDistribution};
use penboot::{Error, Result};

#[derive(Parser)]
#[command(name = "penboot", version, about = "Penalized regression with bootstrap inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a penalized regression to a CSV file.
    Fit(FitArgs),
    /// Bootstrap a saved fit.
    Boot(BootArgs),
    /// Confidence interval from a saved bootstrap run.
    Ci(CiArgs),
    /// Perturbation weight utilities.
    Weights {
        #[command(subcommand)]
        command: WeightsCommand,
    },
    /// Monte Carlo experiment from a JSON config.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PenaltyName {
    Lasso,
    Scad,
    Mcp,
    Alasso,
    Onestep,
    Psols,
}

#[derive(clap::Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    response: String,
    #[arg(long, value_enum)]
    penalty: PenaltyName,
    #[arg(long)]
    lambda: f64,
    /// Concavity for SCAD/MCP (defaults 3.7 and 3.0).
    #[arg(long)]
    a: Option<f64>,
    /// Adaptive Lasso exponent.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// `ols` or `lasso:<λ̃>`.
    #[arg(long, default_value = "ols")]
    initial: String,
    /// One-step base: `scad`, `mcp`, `power:<q>` or `log`.
    #[arg(long, default_value = "scad")]
    base: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodName {
    Residual,
    Perturb,
}

#[derive(clap::Args)]
struct BootArgs {
    #[arg(long)]
    fit: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    method: MethodName,
    #[arg(long, default_value = "beta")]
    dist: String,
    #[arg(long = "B")]
    b: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindName {
    SymRes,
    SymPerturb,
    SymPerturbRaw,
    Lower,
    Upper,
}

impl KindName {
    fn interval(self) -> IntervalKind {
        match self {
            Self::SymRes => IntervalKind::SymmetricResidual,
            Self::SymPerturb => IntervalKind::SymmetricPerturbCorrected,
            Self::SymPerturbRaw => IntervalKind::SymmetricPerturbUncorrected,
            Self::Lower => IntervalKind::OneSidedLower,
            Self::Upper => IntervalKind::OneSidedUpper,
        }
    }
}

#[derive(clap::Args)]
struct CiArgs {
    #[arg(long)]
    boot: PathBuf,
    #[arg(long, default_value_t = 0.90)]
    level: f64,
    #[arg(long, value_enum)]
    kind: KindName,
    /// Coefficient by 0-based index or predictor name (default: first).
    #[arg(long, conflicts_with = "contrast")]
    coef: Option<String>,
    /// Comma-separated contrast row of length p.
    #[arg(long)]
    contrast: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum WeightsCommand {
    /// Print μ and the moment residuals of a built-in law.
    Verify {
        #[arg(long)]
        dist: String,
    },
    /// Solve for the generalized gamma shape parameters (ρ, ν).
    SolveGg {
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 1.0)]
        omega: f64,
    },
}

#[derive(clap::Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
}

/// Saved fit: the column mapping plus the fit itself.
#[derive(Serialize, Deserialize)]
struct FitFile {
    response: String,
    predictors: Vec<String>,
    #[serde(flatten)]
    fit: Fit,
}

#[derive(Serialize, Deserialize)]
struct DataBlock {
    response: Vec<f64>,
    /// Row-major design.
    design: Vec<Vec<f64>>,
}

impl DataBlock {
    fn from_problem(problem: &RegressionProblem) -> Self {
        let x = problem.design();
        Self {
            response: problem.response().to_vec(),
            design: (0..problem.n())
                .map(|i| (0..problem.p()).map(|j| x[(i, j)]).collect())
                .collect(),
        }
    }

    fn to_problem(&self) -> Result<RegressionProblem> {
        let n = self.design.len();
        let p = self.design.first().map_or(0, Vec::len);
        if self.design.iter().any(|r| r.len() != p) {
            return Err(Error::Dimension("ragged design rows".into()));
        }
        let x = DMatrix::from_fn(n, p, |i, j| self.design[i][j]);
        RegressionProblem::new(x, self.response.clone())
    }
}

/// Saved bootstrap: self-contained input for `ci`.
#[derive(Serialize, Deserialize)]
struct BootFile {
    fit: FitFile,
    data: DataBlock,
    run: BootstrapRun,
}

#[derive(Serialize)]
struct CiFile {
    target: String,
    contrast: Vec<f64>,
    penalty: PenaltySpec,
    #[serde(flatten)]
    interval: ConfidenceInterval,
}

#[derive(Serialize)]
struct VerifyOutput<'a> {
    dist: &'a str,
    mu: f64,
    variance_residual: f64,
    third_residual: f64,
    fourth_residual: f64,
    compliant: bool,
}

#[derive(Serialize)]
struct GgOutput {
    omega: f64,
    rho: f64,
    nu: f64,
}

#[derive(Serialize)]
struct Timing {
    wall_seconds: f64,
    threads: usize,
}

fn parse_initial(s: &str) -> Result<InitialEstimator> {
    match s.split_once(':') {
        None if s == "ols" => Ok(InitialEstimator::Ols),
        Some(("lasso", v)) => {
            let lambda_tilde = v
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad initial lambda '{v}'")))?;
            Ok(InitialEstimator::Lasso { lambda_tilde })
        }
        _ => Err(Error::InvalidInput(format!(
            "initial must be 'ols' or 'lasso:<value>', got '{s}'"
        ))),
    }
}

fn parse_base(s: &str, a: Option<f64>) -> Result<OneStepBase> {
    match s.split_once(':') {
        None if s == "scad" => Ok(OneStepBase::Scad { a: a.unwrap_or(DEFAULT_SCAD_A) }),
        None if s == "mcp" => Ok(OneStepBase::Mcp { a: a.unwrap_or(DEFAULT_MCP_A) }),
        None if s == "log" => Ok(OneStepBase::Log),
        Some(("power", v)) => {
            let q = v
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad power exponent '{v}'")))?;
            Ok(OneStepBase::Power { q })
        }
        _ => Err(Error::InvalidInput(format!(
            "base must be scad, mcp, log or power:<q>, got '{s}'"
        ))),
    }
}

fn penalty_from(args: &FitArgs) -> Result<PenaltySpec> {
    let lambda = args.lambda;
    match args.penalty {
        PenaltyName::Lasso => PenaltySpec::lasso(lambda),
        PenaltyName::Scad => PenaltySpec::scad(lambda, args.a.unwrap_or(DEFAULT_SCAD_A)),
        PenaltyName::Mcp => PenaltySpec::mcp(lambda, args.a.unwrap_or(DEFAULT_MCP_A)),
        PenaltyName::Alasso => {
            PenaltySpec::adaptive_lasso(lambda, args.gamma, parse_initial(&args.initial)?)
        }
        PenaltyName::Onestep => PenaltySpec::one_step(
            lambda,
            parse_base(&args.base, args.a)?,
            parse_initial(&args.initial)?,
        ),
        PenaltyName::Psols => PenaltySpec::post_selection_ols(lambda),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let spec = penalty_from(&args)?;
    let (problem, predictors) = load_problem_named(&args.data, &CsvOptions::new(&args.response))?;
    let fit = fit_penalized(&problem, &spec, &SolverConfig::default())?;
    write_json(
        &args.out,
        &FitFile {
            response: args.response,
            predictors,
            fit,
        },
    )
}

/// Rejects a fit whose residuals do not match `y − Xβ` on the given data.
fn check_fit_matches(fit: &Fit, problem: &RegressionProblem) -> Result<()> {
    if fit.n() != problem.n() || fit.p() != problem.p() {
        return Err(Error::Dimension(format!(
            "fit is {}×{} but data is {}×{}",
            fit.n(),
            fit.p(),
            problem.n(),
            problem.p()
        )));
    }
    let fitted = problem.predict(&fit.beta);
    let scale = 1.0 + problem.response().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let worst = problem
        .response()
        .iter()
        .zip(&fitted)
        .zip(&fit.residuals)
        .fold(0.0_f64, |m, ((y, f), r)| m.max((y - f - r).abs()));
    if worst > 1e-8 * scale {
        return Err(Error::InvalidInput(
            "fit residuals do not match the supplied data".into(),
        ));
    }
    Ok(())
}

fn cmd_boot(args: BootArgs) -> Result<()> {
    let saved: FitFile = read_json(&args.fit)?;
    let options = CsvOptions {
        response: saved.response.clone(),
        predictors: Some(saved.predictors.clone()),
    };
    let (problem, _) = load_problem_named(&args.data, &options)?;
    check_fit_matches(&saved.fit, &problem)?;
    let method = match args.method {
        MethodName::Residual => BootMethod::Residual,
        MethodName::Perturb => BootMethod::Perturbation {
            dist: WeightDistribution::by_name(&args.dist)?,
        },
    };
    let spec = saved.fit.penalty;
    let run = run_bootstrap(
        &saved.fit,
        &problem,
        &spec,
        &method,
        args.b,
        args.seed,
        &SolverConfig::default(),
    )?;
    write_json(
        &args.out,
        &BootFile {
            fit: saved,
            data: DataBlock::from_problem(&problem),
            run,
        },
    )
}

fn contrast_from(args: &CiArgs, predictors: &[String]) -> Result<(String, Vec<f64>)> {
    let p = predictors.len();
    if let Some(text) = &args.contrast {
        let row: Vec<f64> = text
            .split(',')
            .map(|v| {
                v.trim()
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("bad contrast entry '{v}'")))
            })
            .collect::<Result<_>>()?;
        if row.len() != p {
            return Err(Error::Dimension(format!(
                "contrast has {} entries, model has {p} coefficients",
                row.len()
            )));
        }
        return Ok(("contrast".into(), row));
    }
    let j = match &args.coef {
        None => 0,
        Some(c) => match c.parse::<usize>() {
            Ok(j) => j,
            Err(_) => predictors
                .iter()
                .position(|name| name == c)
                .ok_or_else(|| Error::InvalidInput(format!("no predictor named '{c}'")))?,
        },
    };
    if j >= p {
        return Err(Error::InvalidInput(format!(
            "coefficient index {j} out of range for {p} predictors"
        )));
    }
    let mut row = vec![0.0; p];
    row[j] = 1.0;
    Ok((predictors[j].clone(), row))
}

fn cmd_ci(args: CiArgs) -> Result<()> {
    let saved: BootFile = read_json(&args.boot)?;
    let problem = saved.data.to_problem()?;
    let fit = &saved.fit.fit;
    check_fit_matches(fit, &problem)?;
    let (target, row) = contrast_from(&args, &saved.fit.predictors)?;
    let d = ContrastMatrix::from_row(&row)?;
    let bundle = pivot_bundle(fit, &problem, &d, fit.penalty.class(), &fit.beta)?;
    let interval = bootstrap_ci(
        &saved.run,
        &bundle,
        fit,
        &problem,
        &d,
        args.level,
        args.kind.interval(),
    )?;
    write_json(
        &args.out,
        &CiFile {
            target,
            contrast: row,
            penalty: fit.penalty,
            interval,
        },
    )
}

fn cmd_weights(cmd: WeightsCommand) -> Result<()> {
    let text = match cmd {
        WeightsCommand::Verify { dist } => {
            let w = WeightDistribution::by_name(&dist)?;
            let [r2, r3, r4] = w.residuals();
            serde_json::to_string_pretty(&VerifyOutput {
                dist: &dist,
                mu: w.mu(),
                variance_residual: r2,
                third_residual: r3,
                fourth_residual: r4,
                compliant: w.compliant(),
            })?
        }
        WeightsCommand::SolveGg { tol, omega } => {
            let (rho, nu) = solve_generalized_gamma(omega, tol)?;
            serde_json::to_string_pretty(&GgOutput { omega, rho, nu })?
        }
    };
    println!("{text}");
    Ok(())
}

/// Returns whether the report is valid.
fn cmd_simulate(args: SimulateArgs) -> Result<bool> {
    if let Some(t) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    let config: SimulationConfig = read_json(&args.config)?;
    let start = Instant::now();
    let report = run_simulation(&config)?;
    let elapsed = start.elapsed().as_secs_f64();
    fs::create_dir_all(&args.out_dir)?;
    write_json(&args.out_dir.join("report.json"), &report)?;
    write_report_csv(&report, fs::File::create(args.out_dir.join("report.csv"))?)?;
    write_json(
        &args.out_dir.join("timing.json"),
        &Timing {
            wall_seconds: elapsed,
            threads: rayon::current_num_threads(),
        },
    )?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(report.valid)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Fit(a) => cmd_fit(a).map(|_| true),
        Command::Boot(a) => cmd_boot(a).map(|_| true),
        Command::Ci(a) => cmd_ci(a).map(|_| true),
        Command::Weights { command } => cmd_weights(command).map(|_| true),
        Command::Simulate(a) => cmd_simulate(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: report is invalid");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
