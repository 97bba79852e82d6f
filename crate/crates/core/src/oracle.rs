//! Dense reference computations for small problems.
//!
//! Nothing here touches the factored arithmetic, the Krylov solver or the
//! quadrature: the solution comes from Dormand–Prince 5(4) on the full matrix,
//! and the Lyapunov φ-functions from the Kronecker-form operator through an
//! augmented-matrix exponential evaluated by Taylor substepping.

use nalgebra::{DMatrix, DVector};

use crate::error::{DreError, Result};
use crate::linalg::csr_to_dense;
use crate::lowrank::LowRankSym;
use crate::rhs::RiccatiProblem;

/// Largest dimension for time integration.
pub const DENSE_CAP: usize = 64;
/// Largest dimension for the Kronecker operator (`N^2 <= 1024`).
pub const KRON_CAP: usize = 32;

const MAX_DP_STEPS: usize = 2_000_000;

/// Full symmetric state.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseState {
    pub x: DMatrix<f64>,
}

impl DenseState {
    pub fn new(x: DMatrix<f64>) -> Self {
        let x = (&x + x.transpose()) * 0.5;
        Self { x }
    }

    pub fn from_lowrank(x: &LowRankSym) -> Self {
        Self::new(x.to_dense())
    }

    pub fn fro_norm(&self) -> f64 {
        self.x.norm()
    }

    /// `||self - other||_F / ||other||_F`.
    pub fn rel_err(&self, other: &DMatrix<f64>) -> f64 {
        (&self.x - other).norm() / other.norm()
    }
}

fn check_cap(n: usize, cap: usize) -> Result<()> {
    if n > cap {
        return Err(DreError::OracleCapExceeded { n, cap });
    }
    Ok(())
}

/// Dense coefficients `A`, `Q = C^T C`, `G = B B^T`.
struct Dense {
    a: DMatrix<f64>,
    q: DMatrix<f64>,
    g: DMatrix<f64>,
}

impl Dense {
    fn new(problem: &RiccatiProblem) -> Result<Self> {
        check_cap(problem.dim(), DENSE_CAP)?;
        Ok(Self {
            a: csr_to_dense(&problem.a),
            q: problem.c.transpose() * &problem.c,
            g: &problem.b * problem.b.transpose(),
        })
    }

    fn rhs(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let ax = &self.a * x;
        let f = &ax + ax.transpose() + &self.q - x * &self.g * x;
        (&f + f.transpose()) * 0.5
    }
}

/// `F(X)` evaluated on the full matrix.
pub fn dense_rhs(problem: &RiccatiProblem, x: &DenseState) -> Result<DenseState> {
    Ok(DenseState {
        x: Dense::new(problem)?.rhs(&x.x),
    })
}

// Dormand–Prince 5(4) tableau; the problem is autonomous so the nodes are unused.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// fifth-order minus fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Dense trajectory from `problem.x0` to `t_end`.
///
/// Componentwise error control with `rtol` and `atol = 1e-6 * rtol * scale`,
/// `scale` being the largest entry of `X0` and `Q`.
pub fn dense_solve(problem: &RiccatiProblem, t_end: f64, rtol: f64) -> Result<DenseState> {
    dense_solve_from(problem, &DenseState::from_lowrank(&problem.x0), t_end, rtol)
}

/// As [`dense_solve`] from an arbitrary dense initial value.
pub fn dense_solve_from(
    problem: &RiccatiProblem,
    x0: &DenseState,
    t_end: f64,
    rtol: f64,
) -> Result<DenseState> {
    let dense = Dense::new(problem)?;
    if x0.x.nrows() != problem.dim() || x0.x.ncols() != problem.dim() {
        return Err(DreError::DimensionMismatch {
            context: "dense initial value",
            expected: problem.dim(),
            found: x0.x.nrows(),
        });
    }
    if !(rtol > 0.0) || !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(DreError::InvalidConfig(format!(
            "dense solve needs rtol > 0 and finite t_end >= 0 (rtol {rtol}, t_end {t_end})"
        )));
    }
    let scale = x0.x.amax().max(dense.q.amax()).max(f64::MIN_POSITIVE);
    let atol = 1e-6 * rtol * scale;

    let mut x = x0.x.clone();
    let mut t = 0.0;
    let mut h = (1e-4 * t_end).max(f64::MIN_POSITIVE);
    let mut k: Vec<DMatrix<f64>> = vec![dense.rhs(&x); 7];
    let mut steps = 0;
    while t < t_end {
        steps += 1;
        if steps > MAX_DP_STEPS {
            return Err(DreError::OracleFailure(format!(
                "step budget exhausted at t = {t:e}"
            )));
        }
        let last = t + h >= t_end;
        let h_try = if last { t_end - t } else { h };
        for s in 1..7 {
            let mut y = x.clone();
            for (j, kj) in k.iter().enumerate().take(s) {
                if A[s][j] != 0.0 {
                    y += kj * (h_try * A[s][j]);
                }
            }
            k[s] = dense.rhs(&y);
        }
        // stage 7 is evaluated at the fifth-order solution
        let mut x_new = x.clone();
        for (j, kj) in k.iter().enumerate().take(6) {
            if A[6][j] != 0.0 {
                x_new += kj * (h_try * A[6][j]);
            }
        }
        let k7 = dense.rhs(&x_new);
        let mut err_sq = 0.0;
        for idx in 0..x.len() {
            let mut e = 0.0;
            for s in 0..6 {
                e += E[s] * k[s][idx];
            }
            e += E[6] * k7[idx];
            let sc = atol + rtol * x[idx].abs().max(x_new[idx].abs());
            err_sq += (h_try * e / sc).powi(2);
        }
        let err = (err_sq / x.len() as f64).sqrt();
        if !err.is_finite() {
            return Err(DreError::OracleFailure(format!(
                "non-finite error at t = {t:e}"
            )));
        }
        if err <= 1.0 {
            t = if last { t_end } else { t + h_try };
            x = x_new;
            k[0] = k7;
        }
        let fac = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        let fac = if err > 1.0 { fac.min(1.0) } else { fac };
        h = h_try * fac;
        if h < 1e-14 * t.max(t_end) {
            return Err(DreError::OracleFailure(format!(
                "step size underflow at t = {t:e}"
            )));
        }
    }
    Ok(DenseState::new(x))
}

/// `exp(M) v` by Taylor series on substeps with `||M dt||_1 <= 1/2`.
fn taylor_expv(m: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
    let norm = m
        .column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let sub = (2.0 * norm).ceil().max(1.0) as usize;
    let dt = 1.0 / sub as f64;
    let mut y = v.clone();
    for _ in 0..sub {
        let mut term = y.clone();
        let mut sum = y.clone();
        for j in 1..60 {
            term = (m * &term) * (dt / j as f64);
            sum += &term;
            if term.norm() <= 1e-18 * sum.norm() {
                break;
            }
        }
        y = sum;
    }
    y
}

/// `phi_k(h L)[M]` with `L = I (x) A_n + A_n (x) I` acting on `vec(M)`.
///
/// Uses `exp([[hL, b e_1^T], [0, J_k]]) e_{N^2+k}`, whose top block is
/// `phi_k(hL) b`, `J_k` being the `k x k` shift.
pub fn dense_phi_lyap(
    a_n: &DMatrix<f64>,
    h: f64,
    k: usize,
    m: &DMatrix<f64>,
) -> Result<DenseState> {
    let n = a_n.nrows();
    check_cap(n, KRON_CAP)?;
    if a_n.ncols() != n || m.nrows() != n || m.ncols() != n {
        return Err(DreError::DimensionMismatch {
            context: "dense_phi_lyap",
            expected: n,
            found: m.nrows(),
        });
    }
    let nn = n * n;
    let id = DMatrix::<f64>::identity(n, n);
    let lyap = id.kronecker(a_n) + a_n.kronecker(&id);
    let b = DVector::from_column_slice(m.as_slice());
    let beta = b.norm();
    if beta == 0.0 {
        return Ok(DenseState::new(DMatrix::zeros(n, n)));
    }

    let dim = nn + k;
    let mut big = DMatrix::zeros(dim, dim);
    big.view_mut((0, 0), (nn, nn)).copy_from(&(lyap * h));
    let mut start = DVector::zeros(dim);
    if k == 0 {
        start.rows_mut(0, nn).copy_from(&(&b / beta));
    } else {
        big.view_mut((0, nn), (nn, 1)).copy_from(&(&b / beta));
        for i in 0..k - 1 {
            big[(nn + i, nn + i + 1)] = 1.0;
        }
        start[dim - 1] = 1.0;
    }
    let y = taylor_expv(&big, &start);
    let out = DMatrix::from_column_slice(n, n, y.rows(0, nn).as_slice()) * beta;
    Ok(DenseState::new(out))
}

/// Long-time limit: integrates over horizons 1, 2, 4, .. until
/// `||F(X)||_F <= tol ||X||_F`. Returns the state and the residual history.
pub fn steady_state(problem: &RiccatiProblem, tol: f64) -> Result<(DenseState, Vec<f64>)> {
    let dense = Dense::new(problem)?;
    let mut x = DenseState::from_lowrank(&problem.x0);
    let mut history = Vec::new();
    let mut horizon = 1.0;
    for _ in 0..16 {
        x = dense_solve_from(problem, &x, horizon, 1e-12)?;
        let res = dense.rhs(&x.x).norm();
        history.push(res);
        if res <= tol * x.fro_norm() {
            return Ok((x, history));
        }
        horizon *= 2.0;
    }
    Err(DreError::OracleFailure(format!(
        "no steady state within horizon {horizon}; last residual {:e}",
        history.last().copied().unwrap_or(f64::NAN)
    )))
}
