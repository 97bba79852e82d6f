//! One-step maps of the exponential Rosenbrock schemes.
//!
//! Every scheme starts from `X_n + c h φ1(c h L_n)[F(X_n)]` and corrects it
//! with φ-actions on the stage differences `D_nj = -(X_nj - X_n) G (X_nj - X_n)`.
//! All φ-actions of one step share the closed-loop operator built from `X_n`.

use std::fmt;
use std::str::FromStr;

use crate::error::{DreError, Result};
use crate::lowrank::{assemble, compress, LowRankSym, Truncation};
use crate::lyapunov::{phi_lyap, ClosedLoopOperator, KrylovConfig};
use crate::rhs::{riccati_rhs, stage_difference, RiccatiProblem};

/// Integration scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Exponential Rosenbrock–Euler, order 2.
    Exprb2,
    /// Third-order scheme, no embedded solution.
    Exprb3,
    /// Order 3 with an order-2 embedding.
    Exprb32,
    /// Order 4 with an order-3 embedding.
    Exprb43,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::Exprb2,
        Scheme::Exprb3,
        Scheme::Exprb32,
        Scheme::Exprb43,
    ];

    pub fn order(self) -> usize {
        match self {
            Scheme::Exprb2 => 2,
            Scheme::Exprb3 | Scheme::Exprb32 => 3,
            Scheme::Exprb43 => 4,
        }
    }

    /// Order of the embedded solution, if the scheme has one.
    pub fn embedded_order(self) -> Option<usize> {
        match self {
            Scheme::Exprb32 => Some(2),
            Scheme::Exprb43 => Some(3),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Exprb2 => "exprb2",
            Scheme::Exprb3 => "exprb3",
            Scheme::Exprb32 => "exprb32",
            Scheme::Exprb43 => "exprb43",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = DreError;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                DreError::InvalidConfig(format!(
                    "unknown method '{s}' (expected exprb2, exprb3, exprb32 or exprb43)"
                ))
            })
    }
}

/// Numerical settings shared by every step of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolverConfig {
    pub krylov: KrylovConfig,
    /// Truncation applied to stage values, φ outputs and the new state.
    pub trunc: Truncation,
    /// Keep every accepted state in the trajectory.
    pub store_states: bool,
}

/// Output of one step.
#[derive(Debug, Clone)]
pub struct StepResult {
    /// Higher-order solution `X_{n+1}`.
    pub x_next: LowRankSym,
    /// Embedded solution, for embedded pairs.
    pub x_embedded: Option<LowRankSym>,
    /// `X_{n+1} - X̄_{n+1}` in factored form.
    pub error_est: Option<LowRankSym>,
    pub order_main: usize,
    pub order_embedded: Option<usize>,
}

/// Dispatches to the scheme's step function.
pub fn step(
    problem: &RiccatiProblem,
    scheme: Scheme,
    x_n: &LowRankSym,
    h: f64,
    cfg: &SolverConfig,
) -> Result<StepResult> {
    match scheme {
        Scheme::Exprb2 => step_exprb_euler(problem, x_n, h, cfg),
        Scheme::Exprb3 => step_exprb3(problem, x_n, h, cfg),
        Scheme::Exprb32 => step_exprb32(problem, x_n, h, cfg),
        Scheme::Exprb43 => step_exprb43(problem, x_n, h, cfg),
    }
}

struct Stage<'a> {
    op: ClosedLoopOperator<'a>,
    rhs: LowRankSym,
}

impl<'a> Stage<'a> {
    fn new(
        problem: &'a RiccatiProblem,
        x_n: &LowRankSym,
        h: f64,
        cfg: &SolverConfig,
    ) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(DreError::InvalidConfig(format!(
                "step size must be positive, got {h}"
            )));
        }
        let rhs = riccati_rhs(problem, x_n, &cfg.trunc)?;
        let op = ClosedLoopOperator::new(&problem.a, &problem.b, x_n)?;
        Ok(Self { op, rhs })
    }

    fn phi(&self, h: f64, k: usize, m: &LowRankSym, cfg: &SolverConfig) -> Result<LowRankSym> {
        phi_lyap(&self.op, h, k, m, &cfg.krylov, &cfg.trunc)
    }

    /// `X_n + c h φ1(c h L_n)[F(X_n)]`
    fn euler(&self, x_n: &LowRankSym, ch: f64, cfg: &SolverConfig) -> Result<LowRankSym> {
        let inc = self.phi(ch, 1, &self.rhs, cfg)?;
        combine(&[(1.0, x_n), (ch, &inc)], &cfg.trunc)
    }
}

fn combine(terms: &[(f64, &LowRankSym)], trunc: &Truncation) -> Result<LowRankSym> {
    compress(&assemble(terms)?, trunc)
}

/// `X_{n+1} = X_n + h φ1(h L_n)[F(X_n)]`.
pub fn step_exprb_euler(
    problem: &RiccatiProblem,
    x_n: &LowRankSym,
    h: f64,
    cfg: &SolverConfig,
) -> Result<StepResult> {
    let stage = Stage::new(problem, x_n, h, cfg)?;
    Ok(StepResult {
        x_next: stage.euler(x_n, h, cfg)?,
        x_embedded: None,
        error_est: None,
        order_main: 2,
        order_embedded: None,
    })
}

/// `X_{n+1} - X̄_{n+1}` in factored form. Differs from the raw correction by
/// the truncation applied when forming `X_{n+1}`.
fn realized_difference(x_next: &LowRankSym, x_emb: &LowRankSym) -> Result<LowRankSym> {
    let diff = assemble(&[(1.0, x_next), (-1.0, x_emb)])?;
    compress(&diff, &Truncation::new(f64::EPSILON))
}

/// `X_n2 = X_n + h φ1[F]`, `X_{n+1} = X_n2 + 2h φ3(h L_n)[D_n2]`, `X̄ = X_n2`.
pub fn step_exprb32(
    problem: &RiccatiProblem,
    x_n: &LowRankSym,
    h: f64,
    cfg: &SolverConfig,
) -> Result<StepResult> {
    let stage = Stage::new(problem, x_n, h, cfg)?;
    let x2 = stage.euler(x_n, h, cfg)?;
    let d2 = stage_difference(x_n, &x2, &problem.b, &cfg.trunc)?;
    let err = stage.phi(h, 3, &d2, cfg)?.scaled(2.0 * h);
    let x_next = combine(&[(1.0, &x2), (1.0, &err)], &cfg.trunc)?;
    let err = realized_difference(&x_next, &x2)?;
    Ok(StepResult {
        x_next,
        x_embedded: Some(x2),
        error_est: Some(err),
        order_main: 3,
        order_embedded: Some(2),
    })
}

/// The third-order solution of [`step_exprb32`] alone.
pub fn step_exprb3(
    problem: &RiccatiProblem,
    x_n: &LowRankSym,
    h: f64,
    cfg: &SolverConfig,
) -> Result<StepResult> {
    let full = step_exprb32(problem, x_n, h, cfg)?;
    Ok(StepResult {
        x_next: full.x_next,
        x_embedded: None,
        error_est: None,
        order_main: 3,
        order_embedded: None,
    })
}

/// Stages at `c2 = 1/2` and `c3 = 1`; weights `16φ3 - 48φ4`, `-2φ3 + 12φ4`
/// for the main solution and `16φ3`, `-2φ3` for the embedded one.
///
/// The error estimate `h φ4(h L_n)[-48 D_n2 + 12 D_n3]` uses one φ4 action on
/// the combined difference, and `X_{n+1} = X̄_{n+1} + E_{n+1}`. The reported
/// estimate is the realized difference `X_{n+1} - X̄_{n+1}`.
pub fn step_exprb43(
    problem: &RiccatiProblem,
    x_n: &LowRankSym,
    h: f64,
    cfg: &SolverConfig,
) -> Result<StepResult> {
    let stage = Stage::new(problem, x_n, h, cfg)?;
    let x2 = stage.euler(x_n, 0.5 * h, cfg)?;
    let x3 = stage.euler(x_n, h, cfg)?;
    let d2 = stage_difference(x_n, &x2, &problem.b, &cfg.trunc)?;
    let d3 = stage_difference(x_n, &x3, &problem.b, &cfg.trunc)?;

    let p3_2 = stage.phi(h, 3, &d2, cfg)?;
    let p3_3 = stage.phi(h, 3, &d3, cfg)?;
    let x_emb = combine(
        &[(1.0, &x3), (16.0 * h, &p3_2), (-2.0 * h, &p3_3)],
        &cfg.trunc,
    )?;

    let mix = combine(&[(-48.0, &d2), (12.0, &d3)], &cfg.trunc)?;
    let err = stage.phi(h, 4, &mix, cfg)?.scaled(h);
    let x_next = combine(&[(1.0, &x_emb), (1.0, &err)], &cfg.trunc)?;
    let err = realized_difference(&x_next, &x_emb)?;
    Ok(StepResult {
        x_next,
        x_embedded: Some(x_emb),
        error_est: Some(err),
        order_main: 4,
        order_embedded: Some(3),
    })
}
