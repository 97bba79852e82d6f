//! The four subcommands. Each returns a report for programmatic use and
//! writes its CSV to `--out` (or standard output) as a side effect.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use dre_core::adaptivity::{solve_adaptive, solve_fixed, SolveFailure, Trajectory};
use dre_core::io::load_generalized_files;
use dre_core::lyapunov::{phi_lyap, scalar_phi, ClosedLoopOperator, KrylovConfig};
use dre_core::oracle::{
    dense_phi_lyap, dense_solve, steady_state, DenseState, DENSE_CAP, KRON_CAP,
};
use dre_core::problems::{
    advection_diffusion, random_initial_factor, random_test_problem, GridSpec, InitialFactorMode,
};
use dre_core::{DreError, LowRankSym, RiccatiProblem, Scheme, SolverConfig, Truncation};

use crate::settings::{Mode, ProblemSource, RunSpec, Settings, StartMode};
use crate::CliError;

/// Header of the trajectory CSV written by `solve`.
pub const TRAJECTORY_HEADER: &str = "t,h,error_estimate,rank,fro_norm,rejects";

const STEADY_TOL: f64 = 1e-10;
const ORACLE_RTOL: f64 = 1e-12;
const PHI_PASS: f64 = 1e-8;
const SCALAR_PASS: f64 = 1e-12;

fn usage(e: DreError) -> CliError {
    CliError::Usage(e.to_string())
}

fn failure(e: DreError) -> CliError {
    CliError::Failure(e.to_string())
}

/// Builds the problem named by `source`, optionally restarted at its steady state.
pub fn build_problem(source: &ProblemSource, start: StartMode) -> Result<RiccatiProblem, CliError> {
    let problem = match source {
        ProblemSource::AdvectionDiffusion { n0, seed } => {
            advection_diffusion(GridSpec::new(*n0).map_err(usage)?, *seed).map_err(usage)?
        }
        ProblemSource::Files { e_diag, a, b, c } => {
            load_generalized_files(e_diag, a, b, c).map_err(usage)?
        }
    };
    match start {
        StartMode::Given => Ok(problem),
        StartMode::Steady => {
            if problem.dim() > DENSE_CAP {
                return Err(CliError::Usage(format!(
                    "--start steady needs N <= {DENSE_CAP}, got {}",
                    problem.dim()
                )));
            }
            let (x, _) = steady_state(&problem, STEADY_TOL).map_err(failure)?;
            let x0 = LowRankSym::from_dense(&x.x, 1e-14).map_err(failure)?;
            problem.with_initial(x0).map_err(failure)
        }
    }
}

fn oracle_problem(settings: &Settings) -> Result<RiccatiProblem, CliError> {
    let problem = build_problem(&settings.source()?, settings.start()?)?;
    if problem.dim() > DENSE_CAP {
        return Err(CliError::Usage(format!(
            "N = {} exceeds the dense oracle cap of {DENSE_CAP}; use n0 <= 8",
            problem.dim()
        )));
    }
    Ok(problem)
}

fn emit(out: &Option<PathBuf>, csv: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, csv)
            .map_err(|e| CliError::Failure(format!("cannot write {}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(csv.as_bytes())
            .map_err(|e| CliError::Failure(e.to_string())),
    }
}

/// Summary lines go to stdout unless the CSV occupies it.
fn say(out: &Option<PathBuf>, msg: &str) {
    if out.is_some() {
        println!("{msg}");
    } else {
        eprintln!("{msg}");
    }
}

/// Trajectory CSV: one row for `t = 0` (with `h = 0`), then one per accepted step.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut s = String::from(TRAJECTORY_HEADER);
    s.push('\n');
    let _ = writeln!(
        s,
        "0e0,0e0,,{},{:e},0",
        traj.initial_rank, traj.initial_norm
    );
    for r in &traj.records {
        let est = r
            .error_estimate
            .map(|e| format!("{e:e}"))
            .unwrap_or_default();
        let _ = writeln!(
            s,
            "{:e},{:e},{est},{},{:e},{}",
            r.t, r.h, r.rank, r.fro_norm, r.rejects
        );
    }
    s
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub trajectory: Trajectory,
    pub wall: Duration,
}

fn run(
    problem: &RiccatiProblem,
    method: Scheme,
    mode: &Mode,
    t_end: f64,
) -> Result<Trajectory, SolveFailure> {
    let solver = SolverConfig::default();
    match mode {
        Mode::Fixed { n_steps } => solve_fixed(problem, method, *n_steps, &solver, t_end),
        Mode::Adaptive(ctrl) => solve_adaptive(problem, method, ctrl, &solver, t_end),
    }
}

/// Single solve. On failure the partial trajectory is still written.
pub fn cmd_solve(spec: &RunSpec) -> Result<SolveReport, CliError> {
    let problem = build_problem(&spec.source, spec.start)?;
    let start = Instant::now();
    let result = run(&problem, spec.method, &spec.mode, spec.t_end);
    let wall = start.elapsed();
    match result {
        Ok(traj) => {
            emit(&spec.out, &trajectory_csv(&traj))?;
            say(
                &spec.out,
                &format!(
                    "{}: {} steps, {} rejects, final rank {}, final norm {:e}, wall {:.3} s",
                    spec.method,
                    traj.accepted(),
                    traj.total_rejects(),
                    traj.final_state.rank(),
                    traj.final_state.fro_norm(),
                    wall.as_secs_f64()
                ),
            );
            Ok(SolveReport {
                trajectory: traj,
                wall,
            })
        }
        Err(fail) => {
            emit(&spec.out, &trajectory_csv(&fail.partial))?;
            Err(CliError::Failure(format!(
                "{} failed at t = {:e} after {} accepted steps: {}",
                spec.method,
                fail.partial.final_time(),
                fail.partial.accepted(),
                fail.error
            )))
        }
    }
}

/// Least-squares slope of `-log(err)` against `log(n)`.
pub fn fitted_order(ns: &[usize], errs: &[f64]) -> Option<f64> {
    if ns.len() < 2 || ns.len() != errs.len() {
        return None;
    }
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Some(-sxy / sxx)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub method: Scheme,
    /// `(n_steps, relative error)`.
    pub rows: Vec<(usize, f64)>,
    pub order: Option<f64>,
}

/// Fixed-step errors against the dense reference for each step count.
pub fn cmd_convergence(settings: &Settings) -> Result<ConvergenceReport, CliError> {
    let method = settings.method()?;
    let t_end = settings.t_end()?;
    let steps = settings
        .steps
        .clone()
        .unwrap_or_else(|| vec![16, 32, 64, 128]);
    if steps.is_empty() || steps.contains(&0) {
        return Err(CliError::Usage("--steps needs positive step counts".into()));
    }
    let problem = oracle_problem(settings)?;
    let reference = dense_solve(&problem, t_end, ORACLE_RTOL).map_err(failure)?;

    let mut rows = Vec::with_capacity(steps.len());
    for &n in &steps {
        let traj = solve_fixed(&problem, method, n, &SolverConfig::default(), t_end)
            .map_err(|f| failure(f.error))?;
        rows.push((
            n,
            DenseState::from_lowrank(&traj.final_state).rel_err(&reference.x),
        ));
    }
    let (ns, errs): (Vec<usize>, Vec<f64>) = rows.iter().copied().unzip();
    let order = fitted_order(&ns, &errs);

    let mut csv = String::from("n_steps,h,rel_error\n");
    for &(n, e) in &rows {
        let _ = writeln!(csv, "{n},{:e},{e:e}", t_end / n as f64);
    }
    emit(&settings.out, &csv)?;
    match order {
        Some(p) => say(&settings.out, &format!("{method}: fitted order {p:.3}")),
        None => say(
            &settings.out,
            &format!("{method}: single step count, no slope"),
        ),
    }
    Ok(ConvergenceReport {
        method,
        rows,
        order,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TolRow {
    pub tol: f64,
    pub steps: usize,
    pub rejects: usize,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TolStudyReport {
    pub method: Scheme,
    pub rows: Vec<TolRow>,
    /// Errors do not increase as the tolerance decreases.
    pub monotone: bool,
}

/// Adaptive runs over a tolerance list, errors against the dense reference.
pub fn cmd_tolstudy(settings: &Settings) -> Result<TolStudyReport, CliError> {
    let method = settings.method()?;
    if method.embedded_order().is_none() {
        return Err(CliError::Usage(format!(
            "tolstudy needs an embedded method (exprb32 or exprb43), got {method}"
        )));
    }
    let t_end = settings.t_end()?;
    let tols = settings
        .tol
        .clone()
        .unwrap_or_else(|| vec![1e-3, 1e-4, 1e-5]);
    if tols.is_empty() {
        return Err(CliError::Usage("--tol needs at least one value".into()));
    }
    let ctrls = tols
        .iter()
        .map(|&tol| {
            let (atol, rtol) = settings.tolerances(Some(tol))?;
            settings.controller(atol, rtol)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let problem = oracle_problem(settings)?;
    let reference = dense_solve(&problem, t_end, ORACLE_RTOL).map_err(failure)?;

    let mut rows = Vec::with_capacity(tols.len());
    for (&tol, ctrl) in tols.iter().zip(&ctrls) {
        let traj = solve_adaptive(&problem, method, ctrl, &SolverConfig::default(), t_end)
            .map_err(|f| failure(f.error))?;
        rows.push(TolRow {
            tol,
            steps: traj.accepted(),
            rejects: traj.total_rejects(),
            rel_error: DenseState::from_lowrank(&traj.final_state).rel_err(&reference.x),
        });
    }
    let mut by_tol: Vec<&TolRow> = rows.iter().collect();
    by_tol.sort_by(|a, b| a.tol.total_cmp(&b.tol));
    let monotone = by_tol.windows(2).all(|w| w[0].rel_error <= w[1].rel_error);

    let mut csv = String::from("tol,steps,rejects,rel_error\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{:e},{},{},{:e}",
            r.tol, r.steps, r.rejects, r.rel_error
        );
    }
    emit(&settings.out, &csv)?;
    if !monotone {
        eprintln!("warning: errors are not monotone in the tolerance");
    }
    Ok(TolStudyReport {
        method,
        rows,
        monotone,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhiTestReport {
    pub n: usize,
    pub cases: usize,
    pub max_rel_error: f64,
    /// Largest deviation from the scalar φ values, when `N = 1`.
    pub scalar_error: Option<f64>,
    pub passed: bool,
}

/// Random symmetric indefinite right-hand side of rank 3 (or less for tiny N).
fn random_rhs(n: usize, seed: u64) -> Result<LowRankSym, DreError> {
    let r = n.min(3);
    let l = random_initial_factor(n, r, seed, InitialFactorMode::Gaussian);
    let core =
        nalgebra::DMatrix::from_fn(r, r, |i, j| if i == j { [1.0, -0.5, 0.25][i] } else { 0.0 });
    LowRankSym::new(l.basis().clone(), core)
}

/// Factored φ-actions against the Kronecker oracle on random closed-loop operators.
pub fn cmd_phitest(settings: &Settings) -> Result<PhiTestReport, CliError> {
    let n = settings.n.unwrap_or(25);
    let ks = settings.k.clone().unwrap_or_else(|| (0..=4).collect());
    let hs = settings.h.clone().unwrap_or_else(|| vec![0.01, 0.1]);
    let trials = settings.trials.unwrap_or(20);
    let seed = settings.seed.unwrap_or(1);
    if n == 0 || n > KRON_CAP {
        return Err(CliError::Usage(format!(
            "--n must lie in 1..={KRON_CAP}, got {n}"
        )));
    }
    if let Some(k) = ks.iter().find(|&&k| k > dre_core::lyapunov::MAX_PHI_ORDER) {
        return Err(CliError::Usage(format!(
            "phi order {k} unsupported (max {})",
            dre_core::lyapunov::MAX_PHI_ORDER
        )));
    }
    if hs.iter().any(|h| !(*h > 0.0) || !h.is_finite()) || trials == 0 {
        return Err(CliError::Usage(
            "--h must be positive and --trials at least 1".into(),
        ));
    }

    let cfg = KrylovConfig::default();
    let trunc = Truncation::new(1e-14);
    let mut csv = String::from("trial,h,k,rel_error\n");
    let mut max_err: f64 = 0.0;
    let mut scalar_err: Option<f64> = None;
    let mut cases = 0;
    for trial in 0..trials {
        let s = seed.wrapping_add(trial as u64);
        let p = random_test_problem(n, 2, 2, 2, s);
        let op = ClosedLoopOperator::new(&p.a, &p.b, &p.x0).map_err(failure)?;
        let a_n = op.to_dense();
        let m = random_rhs(n, s.wrapping_mul(0x9e37_79b9_7f4a_7c15)).map_err(failure)?;
        let m_dense = m.to_dense();
        for &h in &hs {
            for &k in &ks {
                let got = phi_lyap(&op, h, k, &m, &cfg, &trunc)
                    .map_err(failure)?
                    .to_dense();
                let want = dense_phi_lyap(&a_n, h, k, &m_dense).map_err(failure)?;
                let err = (&got - &want.x).norm() / want.x.norm();
                max_err = max_err.max(err);
                cases += 1;
                let _ = writeln!(csv, "{trial},{h:e},{k},{err:e}");
                if n == 1 {
                    let v = scalar_phi(k, 2.0 * a_n[(0, 0)] * h) * m_dense[(0, 0)];
                    let e = (got[(0, 0)] - v).abs() / v.abs();
                    scalar_err = Some(scalar_err.unwrap_or(0.0).max(e));
                }
            }
        }
    }
    emit(&settings.out, &csv)?;
    let passed = max_err <= PHI_PASS && scalar_err.is_none_or(|e| e <= SCALAR_PASS);
    let mut msg = format!("phitest N = {n}: {cases} cases, max relative error {max_err:e}");
    if let Some(e) = scalar_err {
        let _ = write!(msg, ", scalar deviation {e:e}");
    }
    say(&settings.out, &msg);
    let report = PhiTestReport {
        n,
        cases,
        max_rel_error: max_err,
        scalar_error: scalar_err,
        passed,
    };
    if passed {
        Ok(report)
    } else {
        Err(CliError::Failure(format!(
            "phitest failed: max relative error {max_err:e} (limit {PHI_PASS:e})"
        )))
    }
}
