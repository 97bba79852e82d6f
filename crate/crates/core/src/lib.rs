//! Low-rank exponential Rosenbrock integrators for the differential Riccati
//! equation
//!
//! ```text
//! X'(t) = A X + X A^T + C^T C - X B B^T X,   X(0) = X0,
//! ```
//!
//! with sparse `A` and solutions kept as `L D L^T` factorizations.
//!
//! The building blocks, bottom up:
//!
//! * [`lowrank`]: the factored type, assembly and compression.
//! * [`lyapunov`]: the closed-loop operator and φ-functions of the Lyapunov
//!   operator via Krylov exponential actions and quadrature.
//! * [`rhs`]: the problem type and factored right-hand sides.
//! * [`integrators`]: one-step maps of the four schemes.
//! * [`adaptivity`]: step-size control and the solve drivers.
//! * [`problems`]: benchmark generators, [`io`] for file input.
//! * [`oracle`]: dense reference solutions for small `N`.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptivity;
pub mod error;
pub mod integrators;
pub mod io;
pub mod linalg;
pub mod lowrank;
pub mod lyapunov;
pub mod oracle;
pub mod problems;
pub mod rhs;

pub use adaptivity::{
    solve_adaptive, solve_fixed, ControllerConfig, SolveFailure, StepRecord, Trajectory,
};
pub use error::{DreError, Result};
pub use integrators::{step, Scheme, SolverConfig, StepResult};
pub use lowrank::{assemble, compress, fro_norm, LowRankSym, Truncation};
pub use lyapunov::{phi_lyap, ClosedLoopOperator, KrylovConfig};
pub use problems::{advection_diffusion, GridSpec, InitialFactorMode};
pub use rhs::{riccati_rhs, RiccatiProblem};
