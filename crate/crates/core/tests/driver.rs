use approx::assert_relative_eq;
use nalgebra::DMatrix;

use dre_core::adaptivity::{solve_adaptive, solve_fixed, ControllerConfig};
use dre_core::oracle::{dense_solve, steady_state, DenseState};
use dre_core::problems::{advection_diffusion, random_test_problem, GridSpec};
use dre_core::{step, LowRankSym, RiccatiProblem, Scheme, SolverConfig};

fn benchmark(n0: usize) -> RiccatiProblem {
    advection_diffusion(GridSpec::new(n0).unwrap(), 42).unwrap()
}

#[test]
fn benchmark_run_tracks_oracle_and_grows_steps() {
    let problem = benchmark(8);
    let t_end = 0.1;
    let ctrl = ControllerConfig::with_tolerances(1e-5, 1e-5);
    let traj = solve_adaptive(
        &problem,
        Scheme::Exprb32,
        &ctrl,
        &SolverConfig::default(),
        t_end,
    )
    .unwrap();
    let reference = dense_solve(&problem, t_end, 1e-12).unwrap();
    let err = DenseState::from_lowrank(&traj.final_state).rel_err(&reference.x);
    assert!(err <= 50.0 * 1e-5, "{err:e}");

    // controller-chosen steps after the first quarter; the final step is cut
    let records = &traj.records[..traj.records.len() - 1];
    let late: Vec<f64> = records
        .iter()
        .filter(|r| r.t - r.h >= 0.25 * t_end)
        .map(|r| r.h)
        .collect();
    assert!(late.windows(2).all(|w| w[1] >= w[0]), "{late:?}");

    let total: f64 = traj.steps().iter().sum();
    assert_relative_eq!(total, t_end, max_relative = 1e-12);
    assert_eq!(traj.final_time(), t_end);
}

#[test]
fn step_growth_bounded_by_delta_max() {
    let problem = benchmark(6);
    for scheme in [Scheme::Exprb32, Scheme::Exprb43] {
        let ctrl = ControllerConfig::with_tolerances(1e-4, 1e-4);
        let traj = solve_adaptive(&problem, scheme, &ctrl, &SolverConfig::default(), 0.1).unwrap();
        let h = traj.steps();
        for w in h[..h.len() - 1].windows(2) {
            assert!(w[1] <= 1.5 * w[0] * (1.0 + 1e-14), "{} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn linear_problem_steps_at_h_max() {
    let mut problem = random_test_problem(12, 2, 2, 2, 5);
    problem.b = DMatrix::zeros(12, 2);
    let ctrl = ControllerConfig::default();
    let traj = solve_adaptive(
        &problem,
        Scheme::Exprb43,
        &ctrl,
        &SolverConfig::default(),
        1.0,
    )
    .unwrap();
    assert!(traj
        .records
        .iter()
        .all(|r| r.error_estimate.unwrap() <= 1e-12 * r.fro_norm));
    let h = traj.steps();
    // first step is h_max because the Riccati product vanishes
    assert_eq!(h, vec![1.0]);
}

#[test]
fn equilibrium_start_stays_put() {
    let problem = benchmark(4);
    let (x_star, _) = steady_state(&problem, 1e-10).unwrap();
    let x0 = LowRankSym::from_dense(&x_star.x, 1e-14).unwrap();
    let at_rest = problem.with_initial(x0).unwrap();
    for scheme in [Scheme::Exprb32, Scheme::Exprb43] {
        let traj = solve_adaptive(
            &at_rest,
            scheme,
            &ControllerConfig::default(),
            &SolverConfig::default(),
            0.1,
        )
        .unwrap();
        assert!(traj.accepted() <= 3);
        let dev = DenseState::from_lowrank(&traj.final_state).rel_err(&x_star.x);
        assert!(dev <= 1e-8, "{dev:e}");
    }
    for scheme in Scheme::ALL {
        let traj = solve_fixed(&at_rest, scheme, 4, &SolverConfig::default(), 0.1).unwrap();
        let dev = DenseState::from_lowrank(&traj.final_state).rel_err(&x_star.x);
        assert!(dev <= 1e-8, "{scheme}: {dev:e}");
    }
}

#[test]
fn single_fixed_step_equals_step_call() {
    let problem = random_test_problem(10, 2, 1, 2, 3);
    for scheme in Scheme::ALL {
        let cfg = SolverConfig::default();
        let traj = solve_fixed(&problem, scheme, 1, &cfg, 0.05).unwrap();
        let one = step(&problem, scheme, &problem.x0, 0.05, &cfg).unwrap();
        assert_eq!(traj.final_state.to_dense(), one.x_next.to_dense());
    }
}

#[test]
fn fixed_step_error_ratios_match_order() {
    let problem = benchmark(4);
    let t_end = 0.05;
    let reference = dense_solve(&problem, t_end, 1e-12).unwrap();
    for scheme in [Scheme::Exprb2, Scheme::Exprb32] {
        let errs: Vec<f64> = [16, 32]
            .iter()
            .map(|&n| {
                let traj =
                    solve_fixed(&problem, scheme, n, &SolverConfig::default(), t_end).unwrap();
                DenseState::from_lowrank(&traj.final_state).rel_err(&reference.x)
            })
            .collect();
        let observed = (errs[0] / errs[1]).log2();
        let q = scheme.order() as f64;
        assert!(
            (observed - q).abs() <= 0.5,
            "{scheme}: {observed:.2} from {errs:?}"
        );
    }
}

#[test]
fn failure_keeps_partial_trajectory() {
    let problem = benchmark(4);
    let ctrl = ControllerConfig {
        h_min: Some(0.02),
        ..ControllerConfig::with_tolerances(1e-12, 1e-12)
    };
    let failure = solve_adaptive(
        &problem,
        Scheme::Exprb32,
        &ctrl,
        &SolverConfig::default(),
        0.1,
    )
    .unwrap_err();
    assert!(failure.partial.final_time() < 0.1);
    assert_eq!(failure.partial.records.len(), failure.partial.accepted());
}
