//! Step-size control for the embedded pairs and the fixed-step driver.

use thiserror::Error;

use crate::error::{DreError, Result};
use crate::integrators::{step, Scheme, SolverConfig};
use crate::lowrank::{LowRankSym, Truncation};
use crate::rhs::{fgf_norm, RiccatiProblem};

/// Controller constants and tolerances.
///
/// `h_min`/`h_max` default to `1e-12 * t_end` and `t_end` when left `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    pub atol: f64,
    pub rtol: f64,
    /// Safety factor after an accepted step.
    pub sigma1: f64,
    /// Safety factor after a rejection.
    pub sigma2: f64,
    pub delta_max: f64,
    pub delta_min: f64,
    /// Initial step scaling.
    pub theta: f64,
    pub h_min: Option<f64>,
    pub h_max: Option<f64>,
    /// Consecutive rejections tolerated at one time point.
    pub max_rejects: usize,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            atol: 1e-6,
            rtol: 1e-6,
            sigma1: 0.9,
            sigma2: 0.5,
            delta_max: 1.5,
            delta_min: 0.1,
            theta: 0.1,
            h_min: None,
            h_max: None,
            max_rejects: 20,
        }
    }
}

impl ControllerConfig {
    /// Defaults with `Atol = atol`, `Rtol = rtol`.
    pub fn with_tolerances(atol: f64, rtol: f64) -> Self {
        Self {
            atol,
            rtol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(DreError::InvalidConfig(msg));
        if !(self.atol >= 0.0 && self.rtol >= 0.0) || !(self.atol + self.rtol > 0.0) {
            return bad(format!(
                "tolerances must be non-negative and not both zero (atol {}, rtol {})",
                self.atol, self.rtol
            ));
        }
        if !(self.sigma2 > 0.0 && self.sigma2 < self.sigma1 && self.sigma1 < 1.0) {
            return bad(format!(
                "need 0 < sigma2 < sigma1 < 1, got sigma1 {} sigma2 {}",
                self.sigma1, self.sigma2
            ));
        }
        if !(self.delta_min > 0.0
            && self.delta_min < 1.0
            && self.delta_max > 1.0
            && self.delta_max.is_finite())
        {
            return bad(format!(
                "need 0 < delta_min < 1 < delta_max, got {} and {}",
                self.delta_min, self.delta_max
            ));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return bad(format!("theta must lie in (0, 1], got {}", self.theta));
        }
        if let (Some(lo), Some(hi)) = (self.h_min, self.h_max) {
            if !(lo <= hi) {
                return bad(format!("h_min {lo} exceeds h_max {hi}"));
            }
        }
        for h in [self.h_min, self.h_max].into_iter().flatten() {
            if !(h > 0.0) {
                return bad(format!("step bounds must be positive, got {h}"));
            }
        }
        Ok(())
    }

    /// Copy with concrete step bounds for an integration over `[0, t_end]`.
    pub fn resolved(&self, t_end: f64) -> Self {
        Self {
            h_min: Some(self.h_min.unwrap_or(1e-12 * t_end)),
            h_max: Some(self.h_max.unwrap_or(t_end)),
            ..*self
        }
    }

    fn clamp(&self, h: f64) -> f64 {
        h.min(self.h_max.unwrap_or(f64::INFINITY))
            .max(self.h_min.unwrap_or(0.0))
    }

    /// Truncation tolerance used by the adaptive driver, `min(1e-10, Rtol / 100)`.
    pub fn truncation_tol(&self) -> f64 {
        1e-10_f64.min(0.01 * self.rtol)
    }
}

/// `Tol = Atol + max(||X_n||_F, ||X_trial||_F) Rtol`.
pub fn tolerance(x_n: &LowRankSym, x_trial: &LowRankSym, cfg: &ControllerConfig) -> f64 {
    tolerance_from_norms(x_n.fro_norm(), x_trial.fro_norm(), cfg)
}

pub fn tolerance_from_norms(norm_n: f64, norm_trial: f64, cfg: &ControllerConfig) -> f64 {
    cfg.atol + norm_n.max(norm_trial) * cfg.rtol
}

/// Next step after acceptance: `h min(delta_max, sigma1 (Tol/err)^{1/(p+1)})`.
pub fn next_step_accept(h: f64, err: f64, tol: f64, p: usize, cfg: &ControllerConfig) -> f64 {
    let factor = if err > 0.0 {
        cfg.delta_max
            .min(cfg.sigma1 * (tol / err).powf(1.0 / (p as f64 + 1.0)))
    } else {
        cfg.delta_max
    };
    cfg.clamp(h * factor)
}

/// Retry step after rejection: `h max(delta_min, sigma2 (Tol/err)^{1/(p+1)})`.
pub fn retry_step_reject(h: f64, err: f64, tol: f64, p: usize, cfg: &ControllerConfig) -> f64 {
    let factor = cfg
        .delta_min
        .max(cfg.sigma2 * (tol / err).powf(1.0 / (p as f64 + 1.0)));
    cfg.clamp(h * factor)
}

/// `h0 = theta (Tol / ||F(X0) G F(X0)||_F)^{1/(p+1)}` with
/// `Tol = Atol + ||X0||_F Rtol`; `h_max` when the product vanishes.
pub fn initial_step(
    problem: &RiccatiProblem,
    x0: &LowRankSym,
    cfg: &ControllerConfig,
    p: usize,
    trunc: &Truncation,
) -> Result<f64> {
    let tol = cfg.atol + x0.fro_norm() * cfg.rtol;
    let fgf = fgf_norm(problem, x0, trunc)?;
    let h = if fgf > 0.0 {
        cfg.theta * (tol / fgf).powf(1.0 / (p as f64 + 1.0))
    } else {
        cfg.h_max.unwrap_or(f64::INFINITY)
    };
    Ok(cfg.clamp(h))
}

/// One accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// Time reached by the step.
    pub t: f64,
    pub h: f64,
    /// `||E||_F`, when the scheme has an embedding.
    pub error_estimate: Option<f64>,
    pub tolerance: Option<f64>,
    pub rank: usize,
    pub fro_norm: f64,
    /// Rejections before this step was accepted.
    pub rejects: usize,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub scheme: Scheme,
    pub t_end: f64,
    pub initial_rank: usize,
    pub initial_norm: f64,
    /// First trial step; `h` for fixed-step runs.
    pub initial_step: f64,
    pub records: Vec<StepRecord>,
    /// Accepted states including `X0`, when requested.
    pub states: Option<Vec<LowRankSym>>,
    pub final_state: LowRankSym,
}

impl Trajectory {
    fn start(scheme: Scheme, t_end: f64, x0: &LowRankSym, h0: f64, store: bool) -> Self {
        Self {
            scheme,
            t_end,
            initial_rank: x0.rank(),
            initial_norm: x0.fro_norm(),
            initial_step: h0,
            records: Vec::new(),
            states: store.then(|| vec![x0.clone()]),
            final_state: x0.clone(),
        }
    }

    fn push(&mut self, rec: StepRecord, x: LowRankSym) {
        self.records.push(rec);
        if let Some(states) = &mut self.states {
            states.push(x.clone());
        }
        self.final_state = x;
    }

    /// `0` followed by the accepted step times.
    pub fn times(&self) -> Vec<f64> {
        std::iter::once(0.0)
            .chain(self.records.iter().map(|r| r.t))
            .collect()
    }

    pub fn steps(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.h).collect()
    }

    pub fn accepted(&self) -> usize {
        self.records.len()
    }

    pub fn total_rejects(&self) -> usize {
        self.records.iter().map(|r| r.rejects).sum()
    }

    pub fn final_time(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.t)
    }

    pub fn max_rank(&self) -> usize {
        self.records
            .iter()
            .map(|r| r.rank)
            .fold(self.initial_rank, usize::max)
    }
}

/// Failed solve with everything accepted before the failure.
#[derive(Debug, Clone, Error)]
#[error("{error}")]
pub struct SolveFailure {
    pub error: DreError,
    pub partial: Box<Trajectory>,
}

impl SolveFailure {
    fn new(error: DreError, partial: Trajectory) -> Self {
        Self {
            error,
            partial: Box::new(partial),
        }
    }
}

/// Adaptive integration of `problem` over `[0, t_end]` with an embedded pair.
///
/// The truncation tolerance in `solver` is replaced by
/// [`ControllerConfig::truncation_tol`]. The last step is shortened to land on
/// `t_end` exactly and does not update the step size.
pub fn solve_adaptive(
    problem: &RiccatiProblem,
    scheme: Scheme,
    ctrl: &ControllerConfig,
    solver: &SolverConfig,
    t_end: f64,
) -> std::result::Result<Trajectory, SolveFailure> {
    let x0 = &problem.x0;
    let empty = |h0| Trajectory::start(scheme, t_end, x0, h0, solver.store_states);
    let fail = |e: DreError| SolveFailure::new(e, empty(0.0));

    let p = scheme.embedded_order().ok_or_else(|| {
        fail(DreError::InvalidConfig(format!(
            "{scheme} has no embedded solution; adaptive stepping needs exprb32 or exprb43"
        )))
    })?;
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(fail(DreError::InvalidConfig(format!(
            "t_end must be positive and finite, got {t_end}"
        ))));
    }
    ctrl.validate().map_err(fail)?;
    let ctrl = ctrl.resolved(t_end);
    let h_min = ctrl.h_min.unwrap_or_default();
    let solver = SolverConfig {
        trunc: Truncation {
            tol_rel: ctrl.truncation_tol(),
            ..solver.trunc
        },
        ..*solver
    };

    let mut h = initial_step(problem, x0, &ctrl, p, &solver.trunc).map_err(fail)?;
    let mut traj = empty(h);
    let mut x = x0.clone();
    let mut x_norm = traj.initial_norm;
    let mut t = 0.0;

    while t < t_end {
        let remaining = t_end - t;
        let (mut h_try, mut last) = if h >= remaining {
            (remaining, true)
        } else {
            (h, false)
        };
        let mut rejects = 0;
        loop {
            let res = match step(problem, scheme, &x, h_try, &solver) {
                Ok(r) => r,
                Err(e) => return Err(SolveFailure::new(e, traj)),
            };
            let err = res.error_est.as_ref().map_or(0.0, LowRankSym::fro_norm);
            let trial_norm = res.x_next.fro_norm();
            let tol = tolerance_from_norms(x_norm, trial_norm, &ctrl);
            if !err.is_finite() || !trial_norm.is_finite() {
                return Err(SolveFailure::new(
                    DreError::Numerical(format!(
                        "non-finite step result at t = {t:e}, h = {h_try:e}"
                    )),
                    traj,
                ));
            }
            if err <= tol {
                let t_new = if last { t_end } else { t + h_try };
                traj.push(
                    StepRecord {
                        t: t_new,
                        h: h_try,
                        error_estimate: Some(err),
                        tolerance: Some(tol),
                        rank: res.x_next.rank(),
                        fro_norm: trial_norm,
                        rejects,
                    },
                    res.x_next,
                );
                x = traj.final_state.clone();
                x_norm = trial_norm;
                t = t_new;
                if !last {
                    h = next_step_accept(h_try, err, tol, p, &ctrl);
                }
                break;
            }
            rejects += 1;
            if rejects > ctrl.max_rejects {
                return Err(SolveFailure::new(
                    DreError::TooManyRejections { t, rejects },
                    traj,
                ));
            }
            let retry = retry_step_reject(h_try, err, tol, p, &ctrl);
            if retry >= h_try || retry < h_min {
                return Err(SolveFailure::new(
                    DreError::StepSizeUnderflow { t, h: retry, h_min },
                    traj,
                ));
            }
            h_try = retry;
            h = retry;
            last = false;
        }
    }
    Ok(traj)
}

/// `n_steps` equal steps over `[0, t_end]`.
pub fn solve_fixed(
    problem: &RiccatiProblem,
    scheme: Scheme,
    n_steps: usize,
    solver: &SolverConfig,
    t_end: f64,
) -> std::result::Result<Trajectory, SolveFailure> {
    let h = t_end / n_steps as f64;
    let mut traj = Trajectory::start(scheme, t_end, &problem.x0, h, solver.store_states);
    if n_steps == 0 || !(t_end > 0.0) || !t_end.is_finite() {
        return Err(SolveFailure::new(
            DreError::InvalidConfig(format!(
                "need at least one step over a positive interval (steps {n_steps}, t_end {t_end})"
            )),
            traj,
        ));
    }
    let mut x = problem.x0.clone();
    for i in 0..n_steps {
        let res = match step(problem, scheme, &x, h, solver) {
            Ok(r) => r,
            Err(e) => return Err(SolveFailure::new(e, traj)),
        };
        let t = if i + 1 == n_steps {
            t_end
        } else {
            (i + 1) as f64 * h
        };
        let norm = res.x_next.fro_norm();
        if !norm.is_finite() {
            return Err(SolveFailure::new(
                DreError::Numerical(format!("non-finite state at t = {t:e}")),
                traj,
            ));
        }
        traj.push(
            StepRecord {
                t,
                h,
                error_estimate: res.error_est.as_ref().map(LowRankSym::fro_norm),
                tolerance: None,
                rank: res.x_next.rank(),
                fro_norm: norm,
                rejects: 0,
            },
            res.x_next,
        );
        x = traj.final_state.clone();
    }
    Ok(traj)
}
