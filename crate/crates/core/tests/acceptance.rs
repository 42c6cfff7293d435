//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use penboot::bootstrap::{perturbation_replicate, pseudo_values};
use penboot::harness::{
    generate_dataset, oracle_events, run_coverage, run_delta_study, BootChoice, DeltaArm,
    DeltaStudyConfig, DesignKind, DgpSpec, ErrorDist, ExperimentConfig, LambdaRule, Simulator,
    SummaryReport,
};
use penboot::intervals::{
    correction_from_omegas, correction_moments, correction_term, omegas, omegas_ratio_three,
    IntervalKind,
};
use penboot::model::{
    write_problem_csv, ContrastMatrix, EstimatorClass, PenaltySpec, RegressionProblem,
};
use penboot::pivots::pivot_bundle;
use penboot::rng::derive_seed;
use penboot::solvers::{fit_penalized, soft_threshold, SolverConfig};
use penboot::weights::{
    builtin_beta, generalized_gamma, generalized_gamma_residuals, solve_generalized_gamma,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(
        elapsed.as_secs_f64() < limit_s,
        format!("runtime {:.2} s exceeds {limit_s} s", elapsed.as_secs_f64()),
    )
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Sparse Gaussian instance with a few nonzero coefficients.
fn random_instance(seed: u64, n_range: (usize, usize), p_range: (usize, usize)) -> RegressionProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(n_range.0..=n_range.1);
    let p = rng.random_range(p_range.0..=p_range.1.min(n / 2));
    let x = gaussian_matrix(&mut rng, n, p);
    let beta: Vec<f64> = (0..p)
        .map(|j| if j % 3 == 0 { rng.random_range(-3.0..3.0) } else { 0.0 })
        .collect();
    let y = (0..n)
        .map(|i| (0..p).map(|j| x[(i, j)] * beta[j]).sum::<f64>() + rng.sample::<f64, _>(StandardNormal))
        .collect();
    RegressionProblem::new(x, y).unwrap()
}

/// `Xᵀv` computed entrywise.
fn xt(x: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (0..x.ncols())
        .map(|j| (0..x.nrows()).map(|i| x[(i, j)] * v[i]).sum())
        .collect()
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let beta = builtin_beta();
    let mu = beta.mu();
    ensure((mu - 0.25).abs() <= 1e-12, format!("Beta mean {mu}"))?;
    ensure((beta.variance() - mu * mu).abs() <= 1e-12, "Beta variance differs from μ²")?;
    ensure((beta.third_central() - mu.powi(3)).abs() <= 1e-12, "Beta third moment differs from μ³")?;
    ensure((beta.fourth_ratio() - 3.0).abs() <= 1e-12, format!("Beta fourth ratio {}", beta.fourth_ratio()))?;
    let mut worst_res = 0.0_f64;
    let mut worst_ratio = 0.0_f64;
    for omega in [0.25, 0.5, 1.0, 2.0, 5.0] {
        let (rho, nu) = solve_generalized_gamma(omega, 1e-10).map_err(|e| e.to_string())?;
        for r in generalized_gamma_residuals(rho, nu) {
            worst_res = worst_res.max(r.abs());
        }
        let dist = generalized_gamma(omega, rho, nu).map_err(|e| e.to_string())?;
        let m = dist.mu();
        worst_ratio = worst_ratio
            .max((dist.variance() / (m * m) - 1.0).abs())
            .max((dist.third_central() / m.powi(3) - 1.0).abs());
    }
    ensure(worst_res <= 1e-10, format!("GG residual {worst_res:e}"))?;
    ensure(worst_ratio <= 1e-6, format!("GG moment ratio off by {worst_ratio:e}"))?;
    let elapsed = start.elapsed();
    within(elapsed, 1.0)?;
    Ok(format!(
        "Beta moments exact, GG residual {worst_res:.1e}, ratio error {worst_ratio:.1e}, {:.3} s",
        elapsed.as_secs_f64()
    ))
}

#[allow(clippy::needless_range_loop)]
fn criterion_2() -> Outcome {
    let start = Instant::now();
    let cfg = SolverConfig::default();
    let (mut kkt_max, mut ols_max, mut orth_max) = (0.0_f64, 0.0_f64, 0.0_f64);
    for seed in 0..100u64 {
        let prob = random_instance(1000 + seed, (20, 200), (2, 20));
        let (n, p) = (prob.n(), prob.p());
        let nf = n as f64;
        let x = prob.design().clone();
        let y = prob.response().to_vec();
        let xty = xt(&x, &y);
        let lmax = 2.0 * xty.iter().fold(0.0_f64, |m, v| m.max(v.abs()));

        // KKT at a fraction of the null threshold
        let lambda = lmax * (0.05 + 0.9 * ((seed * 37 % 100) as f64 / 100.0));
        let fit = fit_penalized(&prob, &PenaltySpec::lasso(lambda).unwrap(), &cfg)
            .map_err(|e| format!("seed {seed}: {e}"))?;
        let r: Vec<f64> = (0..n)
            .map(|i| y[i] - (0..p).map(|j| x[(i, j)] * fit.beta[j]).sum::<f64>())
            .collect();
        let grad: Vec<f64> = xt(&x, &r).iter().map(|v| -2.0 * v / nf).collect();
        let w = lambda / nf;
        for j in 0..p {
            let v = if fit.beta[j] != 0.0 {
                (grad[j] + w * fit.beta[j].signum()).abs()
            } else {
                (grad[j].abs() - w).max(0.0)
            };
            kkt_max = kkt_max.max(v);
        }

        // λ = 0 against the normal equations
        let fit0 = fit_penalized(&prob, &PenaltySpec::lasso(0.0).unwrap(), &cfg)
            .map_err(|e| format!("seed {seed}: {e}"))?;
        let xtx = x.transpose() * &x;
        let ols = xtx
            .cholesky()
            .ok_or("singular XᵀX")?
            .solve(&nalgebra::DVector::from_vec(xty.clone()));
        ols_max = ols_max.max(sup_diff(&fit0.beta, ols.as_slice()));

        // null solution at and above 2‖Xᵀy‖∞
        let null = fit_penalized(&prob, &PenaltySpec::lasso(lmax).unwrap(), &cfg)
            .map_err(|e| format!("seed {seed}: {e}"))?;
        ensure(null.beta.iter().all(|b| *b == 0.0), format!("seed {seed}: nonzero fit at λ_max"))?;

        // orthonormal design: XᵀX = nI
        let mut rng = ChaCha8Rng::seed_from_u64(5000 + seed);
        let q = gaussian_matrix(&mut rng, n, p).qr().q() * nf.sqrt();
        let oprob = RegressionProblem::new(q.clone(), y.clone()).unwrap();
        let lam = lmax * 0.3;
        let ofit = fit_penalized(&oprob, &PenaltySpec::lasso(lam).unwrap(), &cfg)
            .map_err(|e| format!("seed {seed}: {e}"))?;
        let closed: Vec<f64> = xt(&q, &y)
            .iter()
            .map(|v| soft_threshold(v / nf, lam / (2.0 * nf)))
            .collect();
        orth_max = orth_max.max(sup_diff(&ofit.beta, &closed));
    }
    ensure(kkt_max <= 1e-8, format!("KKT residual {kkt_max:e}"))?;
    ensure(ols_max <= 1e-8, format!("λ=0 differs from OLS by {ols_max:e}"))?;
    ensure(orth_max <= 1e-8, format!("orthonormal fit differs by {orth_max:e}"))?;
    let elapsed = start.elapsed();
    within(elapsed, 10.0)?;
    Ok(format!(
        "KKT {kkt_max:.1e}, OLS {ols_max:.1e}, orthonormal {orth_max:.1e}, null fits exact, {:.2} s",
        elapsed.as_secs_f64()
    ))
}

/// Cyclic coordinate descent on
/// `Σ(y − Xt)²(G − μ) + Σ(ŷ − Xt)²(2μ − G) + μ n Σ w|t|`.
fn direct_perturbed(prob: &RegressionProblem, yhat: &[f64], g: &[f64], mu: f64, w: f64) -> Vec<f64> {
    let (n, p) = (prob.n(), prob.p());
    let x = prob.design();
    let y = prob.response();
    let mut t = vec![0.0; p];
    let mut fit = vec![0.0; n];
    for _ in 0..200_000 {
        let mut change = 0.0_f64;
        for j in 0..p {
            let (mut a, mut b) = (0.0, 0.0);
            for i in 0..n {
                let partial = fit[i] - x[(i, j)] * t[j];
                let (w1, w2) = (g[i] - mu, 2.0 * mu - g[i]);
                a += x[(i, j)] * x[(i, j)] * (w1 + w2);
                b += x[(i, j)] * (w1 * (y[i] - partial) + w2 * (yhat[i] - partial));
            }
            let new = soft_threshold(b / a, mu * n as f64 * w / (2.0 * a));
            let delta = new - t[j];
            if delta != 0.0 {
                for i in 0..n {
                    fit[i] += x[(i, j)] * delta;
                }
            }
            change = change.max(delta.abs());
            t[j] = new;
        }
        if change < 1e-13 {
            break;
        }
    }
    t
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let cfg = SolverConfig::default();
    let dist = builtin_beta();
    let mut worst = 0.0_f64;
    for seed in 0..50u64 {
        let prob = random_instance(9000 + seed, (20, 120), (2, 10));
        let n = prob.n() as f64;
        let lmax = 2.0 * xt(prob.design(), prob.response()).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let lambda = lmax * (0.05 + 0.5 * ((seed * 13 % 50) as f64 / 50.0));
        let spec = PenaltySpec::lasso(lambda).unwrap();
        let fit = fit_penalized(&prob, &spec, &cfg).map_err(|e| e.to_string())?;
        let rep = perturbation_replicate(&fit, &prob, &spec, &dist, derive_seed(33, seed), &cfg)
            .map_err(|e| e.to_string())?;
        let g = rep.g_star.as_ref().unwrap();
        let direct = direct_perturbed(&prob, &fit.fitted, g, dist.mu(), lambda / n);
        worst = worst.max(sup_diff(&rep.beta_star, &direct));
        let z = pseudo_values(&fit, dist.mu(), g);
        ensure(z.len() == prob.n(), "pseudo-value length")?;
    }
    ensure(worst <= 1e-6, format!("sup-norm gap {worst:e}"))?;
    let elapsed = start.elapsed();
    within(elapsed, 30.0)?;
    Ok(format!("sup-norm gap {worst:.1e} over 50 instances, {:.2} s", elapsed.as_secs_f64()))
}

fn class1_dgp() -> DgpSpec {
    DgpSpec {
        n: 100,
        p: 10,
        p0: 3,
        beta_active: vec![2.0, -1.75, 1.6],
        design: DesignKind::IidGaussian,
        standardize: true,
        intercept: false,
        errors: ErrorDist::Gaussian { sigma: 1.0 },
        seed: 2024,
        redraw_design: false,
    }
}

fn e1(p: usize) -> Vec<f64> {
    let mut v = vec![0.0; p];
    v[0] = 1.0;
    v
}

fn criterion_4() -> Outcome {
    let dgp = class1_dgp();
    let min_signal = dgp.beta_active.iter().fold(f64::INFINITY, |m, b| m.min(b.abs()));
    let floor = 10.0 * 1.0 * ((dgp.p as f64).ln() / dgp.n as f64).sqrt();
    ensure(min_signal >= floor, format!("min signal {min_signal} below {floor}"))?;
    let sim = Simulator::new(&dgp).map_err(|e| e.to_string())?;
    let spec = PenaltySpec::post_selection_ols(80.0).unwrap();
    let d = ContrastMatrix::from_row(&e1(dgp.p)).unwrap();
    let cfg = SolverConfig::default();
    let truth = dgp.true_active();
    let m = 500;
    let (mut strong, mut worst) = (0usize, 0.0_f64);
    for r in 0..m {
        let ds = sim.dataset(derive_seed(404, r)).map_err(|e| e.to_string())?;
        let fit = fit_penalized(&ds.problem, &spec, &cfg).map_err(|e| e.to_string())?;
        let (_, is_strong) = oracle_events(&fit, &ds.problem, &truth).map_err(|e| e.to_string())?;
        if !is_strong {
            continue;
        }
        strong += 1;
        let b = pivot_bundle(&fit, &ds.problem, &d, EstimatorClass::I, &ds.beta)
            .map_err(|e| e.to_string())?;
        let recon: f64 = (0..dgp.n).map(|i| b.xi[(i, 0)] * ds.errors[i]).sum::<f64>()
            / (dgp.n as f64).sqrt();
        worst = worst.max((recon - b.t_n[0]).abs());
    }
    let rate = strong as f64 / m as f64;
    ensure(rate >= 0.98, format!("strong-oracle rate {rate}"))?;
    ensure(worst <= 1e-8, format!("T reconstruction gap {worst:e}"))?;
    Ok(format!("strong-oracle rate {rate:.3}, T identity gap {worst:.1e}"))
}

fn coverage_config(name: &str, penalty: PenaltySpec, rule: Option<LambdaRule>, method: BootChoice,
                   dist: Option<&str>, interval: IntervalKind) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        dgp: class1_dgp(),
        penalty,
        lambda_rule: rule,
        contrast: e1(10),
        method,
        dist: dist.map(str::to_string),
        interval,
        b: 500,
        m: 1000,
        level: 0.9,
        master_seed: 7,
    }
}

fn coverage_of(cfg: &ExperimentConfig) -> Result<(f64, f64), String> {
    let report = run_coverage(cfg).map_err(|e| format!("{}: {e}", cfg.name))?;
    ensure(report.valid, format!("{}: invalid report {:?}", cfg.name, report.warnings))?;
    let c = report.coverage.ok_or("no coverage")?;
    Ok((c.value, c.se))
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let psols = PenaltySpec::post_selection_ols(80.0).unwrap();
    let arms = [
        (
            coverage_config("psols-residual", psols, None, BootChoice::Residual, None,
                            IntervalKind::SymmetricResidual),
            (0.875, 0.925),
        ),
        (
            coverage_config("psols-perturb-beta", psols, None, BootChoice::Perturbation, Some("beta"),
                            IntervalKind::SymmetricPerturbCorrected),
            (0.875, 0.925),
        ),
        (
            coverage_config("lasso-residual", PenaltySpec::lasso(1.0).unwrap(),
                            Some(LambdaRule::Power { c: 1.0, exponent: 0.6 }), BootChoice::Residual,
                            None, IntervalKind::SymmetricResidual),
            (0.86, 0.94),
        ),
    ];
    let mut parts = Vec::new();
    let mut failed = Vec::new();
    for (cfg, (lo, hi)) in &arms {
        let (c, se) = coverage_of(cfg)?;
        parts.push(format!("{} {c:.3} (se {se:.3})", cfg.name));
        if !(*lo <= c && c <= *hi) {
            failed.push(format!("{} coverage {c:.3} outside [{lo}, {hi}]", cfg.name));
        }
    }
    let summary = format!("{}, {:.1} s", parts.join(", "), start.elapsed().as_secs_f64());
    if failed.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{}; {summary}", failed.join("; ")))
    }
}

fn delta_values(report: &SummaryReport, arm: &str) -> Vec<(usize, f64, f64)> {
    report
        .delta
        .iter()
        .filter(|p| p.arm == arm)
        .map(|p| (p.n, p.estimate.delta_hat, p.estimate.mc_se))
        .collect()
}

fn criterion_6() -> Outcome {
    let sigma = 0.5;
    let cfg = DeltaStudyConfig {
        name: "lasso-vs-class1".into(),
        dgp: DgpSpec {
            errors: ErrorDist::Gaussian { sigma },
            ..class1_dgp()
        },
        n_grid: vec![100, 400, 1600],
        arms: vec![
            DeltaArm {
                label: "lasso".into(),
                penalty: PenaltySpec::lasso(1.0).unwrap(),
                lambda_rule: Some(LambdaRule::Power { c: 1.0, exponent: 0.6 }),
            },
            DeltaArm {
                label: "psols".into(),
                penalty: PenaltySpec::post_selection_ols(1.0).unwrap(),
                lambda_rule: Some(LambdaRule::Power { c: 8.0 * sigma, exponent: 0.5 }),
            },
        ],
        contrast: e1(10),
        m: 2000,
        master_seed: 2025,
    };
    let report = run_delta_study(&cfg).map_err(|e| e.to_string())?;
    ensure(report.valid, format!("invalid report {:?}", report.warnings))?;
    let lasso = delta_values(&report, "lasso");
    let class1 = delta_values(&report, "psols");
    ensure(lasso.len() == 3 && class1.len() == 3, "missing grid points")?;
    let fmt = |v: &[(usize, f64, f64)]| {
        v.iter()
            .map(|(n, d, se)| format!("{n}:{d:.3}±{se:.3}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let detail = format!("lasso [{}], class I [{}]", fmt(&lasso), fmt(&class1));
    ensure(
        lasso[0].1 < lasso[1].1 && lasso[1].1 < lasso[2].1,
        format!("lasso Δ̂ not increasing; {detail}"),
    )?;
    let ratio = lasso[2].1 / class1[2].1;
    ensure(ratio >= 3.0, format!("Δ̂(1600) ratio {ratio:.2} < 3; {detail}"))?;
    Ok(format!("{detail}, ratio at 1600 {ratio:.1}"))
}

fn criterion_7() -> Outcome {
    let df = 0.05;
    let cfg = DeltaStudyConfig {
        name: "class1-rate".into(),
        dgp: DgpSpec {
            intercept: true,
            errors: ErrorDist::CenteredChiSq { df },
            ..class1_dgp()
        },
        n_grid: vec![100, 400, 1600],
        arms: vec![DeltaArm {
            label: "psols".into(),
            penalty: PenaltySpec::post_selection_ols(1.0).unwrap(),
            lambda_rule: Some(LambdaRule::Power { c: 8.0 * (2.0 * df).sqrt(), exponent: 0.5 }),
        }],
        contrast: e1(10),
        m: 2000,
        master_seed: 11,
    };
    let report = run_delta_study(&cfg).map_err(|e| e.to_string())?;
    ensure(report.valid, format!("invalid report {:?}", report.warnings))?;
    let slope = report.slopes.first().ok_or("no slope")?.slope;
    let pts = delta_values(&report, "psols")
        .iter()
        .map(|(n, d, _)| format!("{n}:{d:.3}"))
        .collect::<Vec<_>>()
        .join(" ");
    ensure(
        (-0.8..=-0.2).contains(&slope),
        format!("slope {slope:.3} outside [-0.8, -0.2]; Δ̂ {pts}"),
    )?;
    Ok(format!("slope {slope:.3}, Δ̂ {pts}"))
}

fn run_cli(args: &[&str], cwd: &Path) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_penboot"))
        .args(args)
        .current_dir(cwd)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "`penboot {}` failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(out.stdout)
}

/// Runs every command once in `dir`, returning (file name, bytes) pairs.
fn cli_session(dir: &Path, data: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let data = data.to_str().unwrap();
    let mut outputs = Vec::new();
    let fits: [(&str, &[&str]); 5] = [
        ("lasso", &["--penalty", "lasso", "--lambda", "20"]),
        ("scad", &["--penalty", "scad", "--lambda", "0.5"]),
        ("alasso", &["--penalty", "alasso", "--lambda", "0.1", "--initial", "lasso:5"]),
        ("onestep", &["--penalty", "onestep", "--lambda", "0.5", "--base", "mcp"]),
        ("psols", &["--penalty", "psols", "--lambda", "40"]),
    ];
    for (name, extra) in fits {
        let out = format!("fit_{name}.json");
        let mut args = vec!["fit", "--data", data, "--response", "y", "--out", &out];
        args.extend_from_slice(extra);
        run_cli(&args, dir)?;
        for (method, dist) in [("residual", "beta"), ("perturb", "gammabeta")] {
            let boot = format!("boot_{name}_{method}.json");
            run_cli(
                &["boot", "--fit", &out, "--data", data, "--method", method, "--dist", dist,
                  "--B", "100", "--seed", "99", "--out", &boot],
                dir,
            )?;
            let kinds: &[&str] = if method == "residual" {
                &["sym-res", "lower", "upper"]
            } else {
                &["sym-perturb", "sym-perturb-raw"]
            };
            for kind in kinds {
                let ci = format!("ci_{name}_{method}_{kind}.json");
                run_cli(&["ci", "--boot", &boot, "--kind", kind, "--coef", "x1", "--out", &ci], dir)?;
            }
        }
    }
    for dist in ["beta", "gammabeta", "expinvgamma"] {
        outputs.push((format!("verify_{dist}"), run_cli(&["weights", "verify", "--dist", dist], dir)?));
    }
    outputs.push(("solve_gg".into(), run_cli(&["weights", "solve-gg", "--tol", "1e-10"], dir)?));

    let sim = ExperimentConfig {
        b: 100,
        m: 100,
        ..coverage_config("cli", PenaltySpec::post_selection_ols(80.0).unwrap(), None,
                          BootChoice::Perturbation, Some("beta"), IntervalKind::SymmetricPerturbCorrected)
    };
    let text = serde_json::to_string_pretty(&penboot::harness::SimulationConfig::Coverage(sim)).unwrap();
    fs::write(dir.join("sim.json"), text).map_err(|e| e.to_string())?;
    run_cli(&["simulate", "--config", "sim.json", "--out-dir", "sim"], dir)?;

    let mut names: Vec<String> = fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".json"))
        .collect();
    names.sort();
    for n in names {
        outputs.push((n.clone(), fs::read(dir.join(&n)).unwrap()));
    }
    for n in ["report.json", "report.csv"] {
        outputs.push((format!("sim/{n}"), fs::read(dir.join("sim").join(n)).map_err(|e| e.to_string())?));
    }
    Ok(outputs)
}

fn criterion_8() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dgp = DgpSpec {
        n: 80,
        p: 6,
        ..class1_dgp()
    };
    let ds = generate_dataset(&dgp, 17).map_err(|e| e.to_string())?;
    let data = root.path().join("data.csv");
    write_problem_csv(&data, &ds.problem, "y", None).map_err(|e| e.to_string())?;
    let (a, b) = (root.path().join("a"), root.path().join("b"));
    fs::create_dir_all(&a).unwrap();
    fs::create_dir_all(&b).unwrap();
    let first = cli_session(&a, &data)?;
    let second = cli_session(&b, &data)?;
    ensure(first.len() == second.len(), "different output sets")?;
    for ((na, ba), (nb, bb)) in first.iter().zip(&second) {
        ensure(na == nb, format!("output names differ: {na} vs {nb}"))?;
        ensure(ba == bb, format!("{na} differs between runs"))?;
    }
    Ok(format!("{} outputs byte-identical across two runs", first.len()))
}

fn criterion_9() -> Outcome {
    let cfg = SolverConfig::default();
    let beta = builtin_beta();
    let kappa = beta.fourth_ratio();
    let (mut odd, mut ratio_gap) = (0.0_f64, 0.0_f64);
    let mut count = 0;
    let mut seed = 0u64;
    while count < 100 {
        seed += 1;
        let prob = random_instance(70_000 + seed, (30, 150), (3, 10));
        let p = prob.p();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fit = fit_penalized(&prob, &PenaltySpec::post_selection_ols(2.0).unwrap(), &cfg)
            .map_err(|e| e.to_string())?;
        if fit.active_set.is_empty() {
            continue;
        }
        let row: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
        let d = ContrastMatrix::from_row(&row).unwrap();
        let bundle = match pivot_bundle(&fit, &prob, &d, EstimatorClass::I, &fit.beta) {
            Ok(b) => b,
            Err(_) => continue,
        };
        let m = match correction_moments(&bundle, &fit) {
            Ok(m) => m,
            Err(_) => continue,
        };
        count += 1;
        let c0 = correction_term(&bundle, &fit, &beta, 0.0).map_err(|e| e.to_string())?;
        ensure(c0 == 0.0, format!("C(0) = {c0:e}"))?;
        let (g2, g4) = omegas(&m, kappa).map_err(|e| e.to_string())?;
        let (s2, s4) = omegas_ratio_three(&m).map_err(|e| e.to_string())?;
        for _ in 0..5 {
            let x: f64 = rng.random_range(-4.0..4.0);
            let cp = correction_term(&bundle, &fit, &beta, x).map_err(|e| e.to_string())?;
            let cn = correction_term(&bundle, &fit, &beta, -x).map_err(|e| e.to_string())?;
            odd = odd.max((cp + cn).abs());
            let general = correction_from_omegas(m.n, g2, g4, x);
            let simple = correction_from_omegas(m.n, s2, s4, x);
            ratio_gap = ratio_gap.max((general - simple).abs());
        }
    }
    ensure(odd == 0.0, format!("oddness gap {odd:e}"))?;
    ensure(ratio_gap <= 1e-12, format!("ratio-3 gap {ratio_gap:e}"))?;
    Ok(format!("100 bundles: C(0)=0, oddness exact, ratio-3 gap {ratio_gap:.1e}"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("weight moment identities", criterion_1),
        ("solver correctness", criterion_2),
        ("perturbation equivalence", criterion_3),
        ("strong oracle and pivot identity", criterion_4),
        ("bootstrap coverage", criterion_5),
        ("lasso oracle-approximation failure", criterion_6),
        ("class I rate", criterion_7),
        ("CLI determinism", criterion_8),
        ("correction term", criterion_9),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                Err(format!("panicked: {msg}"))
            });
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", i + 1),
            Err(detail) => {
                failures += 1;
                println!("criterion {}: FAIL {name}: {detail}", i + 1);
            }
        }
    }
    if failures > 0 {
        std::process::exit(1);
    }
}
