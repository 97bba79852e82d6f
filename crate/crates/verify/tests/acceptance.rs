//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and fails if any of them fails.

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dre_cli::settings::{Mode, ProblemSource, RunSpec, Settings, StartMode};
use dre_cli::{cmd_convergence, cmd_phitest, cmd_solve, cmd_tolstudy};
use dre_core::adaptivity::{
    initial_step, next_step_accept, retry_step_reject, solve_adaptive, ControllerConfig,
};
use dre_core::integrators::step;
use dre_core::oracle::{dense_rhs, steady_state};
use dre_core::problems::{advection_diffusion, random_test_problem, GridSpec};
use dre_core::rhs::fgf_norm;
use dre_core::{fro_norm, LowRankSym, Scheme, SolverConfig, Truncation};

const SEED: u64 = 1;
const BENCH_SEED: u64 = dre_cli::settings::DEFAULT_SEED;
const T_END: f64 = 0.1;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn benchmark_settings(method: Scheme) -> Settings {
    Settings {
        n0: Some(8),
        seed: Some(BENCH_SEED),
        method: Some(method.name().into()),
        t_end: Some(T_END),
        out: Some(std::env::temp_dir().join(format!(
            "dre-acceptance-{}-{method}.csv",
            std::process::id()
        ))),
        ..Settings::default()
    }
}

fn phi_kernel() -> Outcome {
    let start = Instant::now();
    let settings = Settings {
        n: Some(25),
        k: Some(vec![0, 1, 2, 3, 4]),
        h: Some(vec![0.01, 0.1]),
        trials: Some(20),
        seed: Some(SEED),
        out: Some(
            std::env::temp_dir().join(format!("dre-acceptance-phi-{}.csv", std::process::id())),
        ),
        ..Settings::default()
    };
    let report = cmd_phitest(&settings);
    let elapsed = start.elapsed();
    let max = match &report {
        Ok(r) => r.max_rel_error,
        Err(e) => return Err(e.to_string()),
    };
    check(
        max <= 1e-8 && elapsed <= Duration::from_secs(60),
        format!(
            "200 cases, max rel err {max:.2e} (limit 1e-8), {:.1} s (limit 60 s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn convergence_orders() -> Outcome {
    let start = Instant::now();
    let cases = [
        (Scheme::Exprb2, vec![16, 32, 64, 128], 2.0, 0.3),
        (Scheme::Exprb3, vec![16, 32, 64, 128], 3.0, 0.4),
        (Scheme::Exprb32, vec![16, 32, 64, 128], 3.0, 0.4),
        (Scheme::Exprb43, vec![8, 16, 32, 64], 4.0, 0.5),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (method, steps, want, tol) in cases {
        let settings = Settings {
            steps: Some(steps),
            ..benchmark_settings(method)
        };
        let report = cmd_convergence(&settings).map_err(|e| e.to_string())?;
        let order = report.order.unwrap_or(f64::NAN);
        ok &= (order - want).abs() <= tol;
        parts.push(format!("{method} {order:.2} (want {want} ± {tol})"));
    }
    let elapsed = start.elapsed();
    ok &= elapsed <= Duration::from_secs(300);
    check(
        ok,
        format!(
            "{}; {:.1} s (limit 300 s)",
            parts.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

fn tolerance_tracking() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for method in [Scheme::Exprb32, Scheme::Exprb43] {
        let settings = Settings {
            tol: Some(vec![1e-3, 1e-4, 1e-5]),
            ..benchmark_settings(method)
        };
        let report = cmd_tolstudy(&settings).map_err(|e| e.to_string())?;
        ok &= report.monotone;
        for row in &report.rows {
            let inside = row.rel_error >= 1e-2 * row.tol && row.rel_error <= 50.0 * row.tol;
            ok &= inside;
            parts.push(format!(
                "{method} tol {:.0e}: err {:.2e} = {:.1e}·tol{}",
                row.tol,
                row.rel_error,
                row.rel_error / row.tol,
                if inside { "" } else { " (outside [1e-2, 50])" }
            ));
        }
        if !report.monotone {
            parts.push(format!("{method} not monotone"));
        }
    }
    let elapsed = start.elapsed();
    ok &= elapsed <= Duration::from_secs(300);
    check(
        ok,
        format!("{}; {:.1} s", parts.join("; "), elapsed.as_secs_f64()),
    )
}

fn transient_steps() -> Outcome {
    let problem =
        advection_diffusion(GridSpec::new(8).unwrap(), BENCH_SEED).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut parts = Vec::new();
    for method in [Scheme::Exprb32, Scheme::Exprb43] {
        for tol in [1e-3, 1e-4, 1e-5] {
            let ctrl = ControllerConfig::with_tolerances(tol, tol);
            let traj = solve_adaptive(&problem, method, &ctrl, &SolverConfig::default(), T_END)
                .map_err(|f| f.to_string())?;
            let first = traj.records.iter().filter(|r| r.t <= 0.5 * T_END).count();
            let second = traj.accepted() - first;
            let h_last = traj.records.last().map_or(0.0, |r| r.h);
            let growth = h_last / traj.initial_step;
            ok &= first > second && growth >= 4.0;
            parts.push(format!(
                "{method} tol {tol:.0e}: {first}/{second} steps, h_final/h0 {growth:.1}"
            ));
        }
    }
    check(ok, parts.join("; "))
}

fn equilibrium() -> Outcome {
    let problem =
        advection_diffusion(GridSpec::new(4).unwrap(), BENCH_SEED).map_err(|e| e.to_string())?;
    let (x_star, _) = steady_state(&problem, 1e-8).map_err(|e| e.to_string())?;
    let residual = dense_rhs(&problem, &x_star)
        .map_err(|e| e.to_string())?
        .fro_norm()
        / x_star.fro_norm();
    let x0 = LowRankSym::from_dense(&x_star.x, 1e-14).map_err(|e| e.to_string())?;
    let at_rest = problem
        .with_initial(x0.clone())
        .map_err(|e| e.to_string())?;

    let mut ok = residual <= 1e-8;
    let mut parts = vec![format!("ARE residual {residual:.1e}")];
    let mut worst: f64 = 0.0;
    for method in Scheme::ALL {
        let r = step(&at_rest, method, &x0, 0.01, &SolverConfig::default())
            .map_err(|e| e.to_string())?;
        let drift = (r.x_next.to_dense() - &x_star.x).norm() / x_star.fro_norm();
        worst = worst.max(drift);
    }
    ok &= worst <= 1e-7;
    parts.push(format!("max one-step drift {worst:.1e} (limit 1e-7)"));
    for method in [Scheme::Exprb32, Scheme::Exprb43] {
        let traj = solve_adaptive(
            &at_rest,
            method,
            &ControllerConfig::default(),
            &SolverConfig::default(),
            T_END,
        )
        .map_err(|f| f.to_string())?;
        ok &= traj.accepted() <= 3;
        parts.push(format!("{method} adaptive {} steps", traj.accepted()));
    }
    check(ok, parts.join(", "))
}

fn random_sym(rng: &mut ChaCha8Rng, r: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(r, r, |_, _| rng.random_range(-1.0..1.0));
    (&m + m.transpose()) * 0.5
}

fn norm_trick() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let n = rng.random_range(1..=100usize);
        let r = rng.random_range(1..=n.min(12));
        let mut l = DMatrix::from_fn(n, r, |_, _| rng.random_range(-1.0..1.0));
        let d = random_sym(&mut rng, r);
        // every fourth case uses an orthonormal basis, where ||E|| = ||D||
        let orthonormal = i % 4 == 0;
        if orthonormal {
            l = l.qr().q();
        }
        let x = LowRankSym::new(l, d.clone()).map_err(|e| e.to_string())?;
        let want = if orthonormal {
            d.norm()
        } else {
            x.to_dense().norm()
        };
        let err = (fro_norm(&x) - want).abs() / want;
        worst = worst.max(err);
    }
    check(
        worst <= 1e-10,
        format!("100 matrices, max rel err {worst:.1e} (limit 1e-10)"),
    )
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-14 * b.abs()
}

fn controller() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let c = ControllerConfig::default().resolved(1.0);
    let (mut grow_cap, mut shrink_cap, mut free_acc, mut free_rej, mut bounds) = (0, 0, 0, 0, 0);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let h: f64 = 10f64.powf(rng.random_range(-12.5..0.5));
        let err: f64 = 10f64.powf(rng.random_range(-12.0..2.0));
        let tol: f64 = 10f64.powf(rng.random_range(-10.0..0.0));
        let p = rng.random_range(2..=3usize);
        let e = 1.0 / (p as f64 + 1.0);
        let ratio = (tol / err).powf(e);

        let acc_factor = if 0.9 * ratio >= 1.5 {
            grow_cap += 1;
            1.5
        } else {
            free_acc += 1;
            0.9 * ratio
        };
        let rej_factor = if 0.5 * ratio <= 0.1 {
            shrink_cap += 1;
            0.1
        } else {
            free_rej += 1;
            0.5 * ratio
        };
        let acc_raw = h * acc_factor;
        let rej_raw = h * rej_factor;
        let acc = acc_raw.clamp(1e-12, 1.0);
        let rej = rej_raw.clamp(1e-12, 1.0);
        bounds += usize::from(acc != acc_raw || rej != rej_raw);
        mismatches += usize::from(!close(next_step_accept(h, err, tol, p, &c), acc));
        mismatches += usize::from(!close(retry_step_reject(h, err, tol, p, &c), rej));
    }

    // h0 = theta (Tol / ||F G F||)^{1/(p+1)}, Tol = Atol + ||X0|| Rtol
    let trunc = Truncation::new(1e-14);
    for seed in 0..10 {
        let problem = random_test_problem(15, 2, 2, 2, seed);
        let ctrl = ControllerConfig::with_tolerances(1e-6, 1e-5).resolved(100.0);
        let fgf = fgf_norm(&problem, &problem.x0, &trunc).map_err(|e| e.to_string())?;
        for p in [2usize, 3] {
            let tol = 1e-6 + problem.x0.fro_norm() * 1e-5;
            let want = (0.1 * (tol / fgf).powf(1.0 / (p as f64 + 1.0))).clamp(1e-10, 100.0);
            let got =
                initial_step(&problem, &problem.x0, &ctrl, p, &trunc).map_err(|e| e.to_string())?;
            mismatches += usize::from(!close(got, want));
        }
    }
    let branches = grow_cap > 0 && shrink_cap > 0 && free_acc > 0 && free_rej > 0 && bounds > 0;
    check(
        mismatches == 0 && branches,
        format!(
            "1000 triples + 20 initial steps, {mismatches} mismatches; branches hit: δmax {grow_cap}, δmin {shrink_cap}, \
             σ1 {free_acc}, σ2 {free_rej}, h bounds {bounds}"
        ),
    )
}

fn pair_consistency() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let problem = random_test_problem(20, 2, 2, 2, 100 + seed);
        for method in [Scheme::Exprb32, Scheme::Exprb43] {
            let r = step(
                &problem,
                method,
                &problem.x0,
                0.05,
                &SolverConfig::default(),
            )
            .map_err(|e| e.to_string())?;
            let diff =
                r.x_next.to_dense() - r.x_embedded.as_ref().expect("embedded pair").to_dense();
            let est = r.error_est.as_ref().expect("embedded pair").to_dense();
            worst = worst.max((diff - est).norm() / r.x_next.fro_norm());
        }
    }
    check(
        worst <= 1e-12,
        format!("40 steps, max gap {worst:.1e} relative to ||X_next|| (limit 1e-12)"),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = |name: &str| RunSpec {
        source: ProblemSource::AdvectionDiffusion { n0: 8, seed: 7 },
        start: StartMode::Given,
        method: Scheme::Exprb43,
        mode: Mode::Adaptive(ControllerConfig::with_tolerances(1e-5, 1e-5)),
        t_end: T_END,
        out: Some(dir.path().join(name)),
    };
    let a = spec("a.csv");
    let b = spec("b.csv");
    cmd_solve(&a).map_err(|e| e.to_string())?;
    cmd_solve(&b).map_err(|e| e.to_string())?;
    let (x, y) = (
        fs::read(a.out.unwrap()).unwrap(),
        fs::read(b.out.unwrap()).unwrap(),
    );
    check(
        x == y && !x.is_empty(),
        format!("two runs, {} bytes each, identical: {}", x.len(), x == y),
    )
}

fn main() -> ExitCode {
    // keep panic messages out of the report lines
    panic::set_hook(Box::new(|_| {}));
    let criteria: [Criterion; 9] = [
        ("phi-kernel oracle equivalence", phi_kernel),
        ("convergence orders", convergence_orders),
        ("tolerance tracking", tolerance_tracking),
        ("transient step-size behavior", transient_steps),
        ("equilibrium preservation", equilibrium),
        ("low-rank norm trick", norm_trick),
        ("controller arithmetic", controller),
        ("pair consistency", pair_consistency),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
