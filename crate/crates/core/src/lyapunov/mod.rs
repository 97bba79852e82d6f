//! The closed-loop operator `A_n = A - X_n G`, exponential actions of it on
//! tall blocks, and φ-functions of the Lyapunov operator
//! `L_n[X] = A_n X + X A_n^T` applied to factored right-hand sides.

mod krylov;
mod phi;

pub use krylov::{expm_action, expm_action_times, KrylovConfig};
pub use phi::{phi_lyap, scalar_phi, QuadratureRule, MAX_PHI_ORDER};

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::CsrMatrix;

use crate::error::{DreError, Result};
use crate::linalg::{csr_one_norm, one_norm, spmv};
use crate::lowrank::LowRankSym;

/// Anything that can apply a square matrix to a vector.
pub trait LinearOperator {
    fn dim(&self) -> usize;

    /// `y = Op * x`; both slices have length [`LinearOperator::dim`].
    fn apply(&self, x: &[f64], y: &mut [f64]);

    /// Cheap upper bound on the operator 1-norm, used to size quadrature
    /// panels and Taylor substeps.
    fn norm_bound(&self) -> f64;
}

impl LinearOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let v = self * DVector::from_column_slice(x);
        y.copy_from_slice(v.as_slice());
    }

    fn norm_bound(&self) -> f64 {
        one_norm(self)
    }
}

/// `A_n = A - L_n D_n L_n^T B B^T`, kept as sparse `A` plus a rank-`q` correction.
///
/// `A_n` is never formed; `W = D_n (L_n^T B)` is cached so that a mat-vec costs
/// one sparse product plus `O(N (q + r_n))`.
#[derive(Debug, Clone)]
pub struct ClosedLoopOperator<'a> {
    a: &'a CsrMatrix<f64>,
    b: &'a DMatrix<f64>,
    state_basis: DMatrix<f64>,
    w: DMatrix<f64>,
    norm_bound: f64,
}

impl<'a> ClosedLoopOperator<'a> {
    pub fn new(a: &'a CsrMatrix<f64>, b: &'a DMatrix<f64>, state: &LowRankSym) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(DreError::DimensionMismatch {
                context: "closed-loop operator: A must be square",
                expected: n,
                found: a.ncols(),
            });
        }
        if b.nrows() != n {
            return Err(DreError::DimensionMismatch {
                context: "closed-loop operator: rows of B",
                expected: n,
                found: b.nrows(),
            });
        }
        if state.dim() != n {
            return Err(DreError::DimensionMismatch {
                context: "closed-loop operator: state dimension",
                expected: n,
                found: state.dim(),
            });
        }
        let state_basis = state.basis().clone();
        let w = state.core() * state_basis.tr_mul(b);
        let correction = if state.rank() == 0 {
            0.0
        } else {
            one_norm(&state_basis) * one_norm(&w) * one_norm(&b.transpose())
        };
        Ok(Self {
            a,
            b,
            norm_bound: csr_one_norm(a) + correction,
            state_basis,
            w,
        })
    }

    /// The open-loop operator `A` (empty state).
    pub fn open_loop(a: &'a CsrMatrix<f64>, b: &'a DMatrix<f64>) -> Result<Self> {
        Self::new(a, b, &LowRankSym::zero(a.nrows()))
    }

    pub fn sparse_part(&self) -> &CsrMatrix<f64> {
        self.a
    }

    /// `A_n * V` for a block `V`.
    pub fn matvec(&self, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = self.dim();
        if v.nrows() != n {
            return Err(DreError::DimensionMismatch {
                context: "closed-loop matvec",
                expected: n,
                found: v.nrows(),
            });
        }
        let mut out = DMatrix::zeros(n, v.ncols());
        for (j, col) in v.column_iter().enumerate() {
            let mut y = vec![0.0; n];
            self.apply(col.as_slice(), &mut y);
            out.set_column(j, &DVector::from_vec(y));
        }
        Ok(out)
    }

    /// Dense `A_n`; tests and oracles only.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let a = crate::linalg::csr_to_dense(self.a);
        if self.state_basis.ncols() == 0 {
            return a;
        }
        a - &self.state_basis * &self.w * self.b.transpose()
    }
}

impl LinearOperator for ClosedLoopOperator<'_> {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        spmv(self.a, x, y);
        if self.state_basis.ncols() == 0 {
            return;
        }
        let xv = DVector::from_column_slice(x);
        let btx = self.b.tr_mul(&xv);
        let coeff = &self.w * btx;
        let corr = &self.state_basis * coeff;
        for (yi, ci) in y.iter_mut().zip(corr.iter()) {
            *yi -= ci;
        }
    }

    fn norm_bound(&self) -> f64 {
        self.norm_bound
    }
}
