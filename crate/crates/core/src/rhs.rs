//! Factored evaluation of the Riccati right-hand side and stage differences.

use nalgebra::DMatrix;
use nalgebra_sparse::CsrMatrix;

use crate::error::{DreError, Result};
use crate::linalg::spmm;
use crate::lowrank::{compress, fro_norm, LowRankSym, Truncation};

/// `X' = A X + X A^T + C^T C - X B B^T X`, `X(0) = X0`.
#[derive(Debug, Clone)]
pub struct RiccatiProblem {
    /// Sparse `N x N` system matrix.
    pub a: CsrMatrix<f64>,
    /// `N x q` factor of `G = B B^T`.
    pub b: DMatrix<f64>,
    /// `p x N` factor of `Q = C^T C`.
    pub c: DMatrix<f64>,
    pub x0: LowRankSym,
}

impl RiccatiProblem {
    pub fn new(
        a: CsrMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        x0: LowRankSym,
    ) -> Result<Self> {
        let n = a.nrows();
        let checks = [
            ("A columns", a.ncols()),
            ("B rows", b.nrows()),
            ("C columns", c.ncols()),
            ("X0 dimension", x0.dim()),
        ];
        for (context, found) in checks {
            if found != n {
                return Err(DreError::DimensionMismatch {
                    context,
                    expected: n,
                    found,
                });
            }
        }
        Ok(Self { a, b, c, x0 })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Same coefficients, different initial value.
    pub fn with_initial(&self, x0: LowRankSym) -> Result<Self> {
        Self::new(self.a.clone(), self.b.clone(), self.c.clone(), x0)
    }

    fn check(&self, x: &LowRankSym, context: &'static str) -> Result<()> {
        if x.dim() != self.dim() {
            return Err(DreError::DimensionMismatch {
                context,
                expected: self.dim(),
                found: x.dim(),
            });
        }
        Ok(())
    }
}

/// `F(X)` as `[C^T, A L, L] * D~ * [..]^T` with
///
/// ```text
/// D~ = | I_p  0   0                     |
///      | 0    0   D                     |
///      | 0    D   -(D L^T B)(D L^T B)^T |
/// ```
///
/// compressed with `trunc`.
pub fn riccati_rhs(
    problem: &RiccatiProblem,
    x: &LowRankSym,
    trunc: &Truncation,
) -> Result<LowRankSym> {
    problem.check(x, "riccati_rhs state")?;
    compress(&riccati_rhs_raw(problem, x)?, trunc)
}

/// Uncompressed factorization of `F(X)`.
pub fn riccati_rhs_raw(problem: &RiccatiProblem, x: &LowRankSym) -> Result<LowRankSym> {
    problem.check(x, "riccati_rhs state")?;
    let n = problem.dim();
    let p = problem.c.nrows();
    let r = x.rank();
    let l = x.basis();
    let d = x.core();

    let mut basis = DMatrix::zeros(n, p + 2 * r);
    basis
        .view_mut((0, 0), (n, p))
        .copy_from(&problem.c.transpose());
    let mut core = DMatrix::zeros(p + 2 * r, p + 2 * r);
    core.view_mut((0, 0), (p, p)).fill_with_identity();
    if r > 0 {
        basis
            .view_mut((0, p), (n, r))
            .copy_from(&spmm(&problem.a, l));
        basis.view_mut((0, p + r), (n, r)).copy_from(l);
        let z = d * l.tr_mul(&problem.b);
        core.view_mut((p, p + r), (r, r)).copy_from(d);
        core.view_mut((p + r, p), (r, r)).copy_from(d);
        core.view_mut((p + r, p + r), (r, r))
            .copy_from(&(-(&z * z.transpose())));
    }
    LowRankSym::new(basis, core)
}

/// `D_nj = -(X_nj - X_n) G (X_nj - X_n)` with basis `[L_n, L_nj]` and core
/// `-(T U^T B)(T U^T B)^T`, `T = blkdiag(-D_n, D_nj)`. Negative semidefinite
/// core by construction; compressed with `trunc`.
pub fn stage_difference(
    x_n: &LowRankSym,
    x_nj: &LowRankSym,
    b: &DMatrix<f64>,
    trunc: &Truncation,
) -> Result<LowRankSym> {
    let n = x_n.dim();
    if x_nj.dim() != n || b.nrows() != n {
        return Err(DreError::DimensionMismatch {
            context: "stage_difference",
            expected: n,
            found: if x_nj.dim() != n {
                x_nj.dim()
            } else {
                b.nrows()
            },
        });
    }
    let (r1, r2) = (x_n.rank(), x_nj.rank());
    let mut u = DMatrix::zeros(n, r1 + r2);
    u.view_mut((0, 0), (n, r1)).copy_from(x_n.basis());
    u.view_mut((0, r1), (n, r2)).copy_from(x_nj.basis());
    let mut t = DMatrix::zeros(r1 + r2, r1 + r2);
    t.view_mut((0, 0), (r1, r1)).copy_from(&(-x_n.core()));
    t.view_mut((r1, r1), (r2, r2)).copy_from(x_nj.core());
    let z = t * u.tr_mul(b);
    let gamma = -(&z * z.transpose());
    compress(&LowRankSym::new(u, gamma)?, trunc)
}

/// `||F(X) G F(X)||_F` computed on the factors of `F(X)`.
pub fn fgf_norm(problem: &RiccatiProblem, x: &LowRankSym, trunc: &Truncation) -> Result<f64> {
    let f = riccati_rhs(problem, x, trunc)?;
    if f.rank() == 0 {
        return Ok(0.0);
    }
    let z = f.core() * f.basis().tr_mul(&problem.b);
    let core = &z * z.transpose();
    Ok(fro_norm(&LowRankSym::new(f.basis().clone(), core)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::csr_to_dense;
    use crate::problems::random_test_problem;
    use nalgebra::SymmetricEigen;
    use nalgebra_sparse::CooMatrix;

    fn dense_rhs(p: &RiccatiProblem, x: &DMatrix<f64>) -> DMatrix<f64> {
        let a = csr_to_dense(&p.a);
        let g = &p.b * p.b.transpose();
        &a * x + x * a.transpose() + p.c.transpose() * &p.c - x * g * x
    }

    fn scalar_problem(a: f64, b: f64, c: f64, x: f64) -> RiccatiProblem {
        let mut coo = CooMatrix::new(1, 1);
        coo.push(0, 0, a);
        RiccatiProblem::new(
            CsrMatrix::from(&coo),
            DMatrix::from_element(1, 1, b),
            DMatrix::from_element(1, 1, c),
            LowRankSym::new(
                DMatrix::from_element(1, 1, 1.0),
                DMatrix::from_element(1, 1, x),
            )
            .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn zero_state_gives_q() {
        let p = random_test_problem(12, 2, 1, 2, 1);
        let f = riccati_rhs(&p, &LowRankSym::zero(12), &Truncation::new(1e-14)).unwrap();
        let q = p.c.transpose() * &p.c;
        assert!((f.to_dense() - &q).norm() <= 1e-13 * q.norm());
    }

    #[test]
    fn rhs_matches_dense_formula() {
        let p = random_test_problem(20, 2, 2, 3, 7);
        let f = riccati_rhs(&p, &p.x0, &Truncation::new(1e-14)).unwrap();
        let want = dense_rhs(&p, &p.x0.to_dense());
        assert!((f.to_dense() - &want).norm() <= 1e-12 * want.norm());
    }

    #[test]
    fn scalar_rhs_and_fgf() {
        let (a, b, c, x) = (-1.5, 0.7, 1.2, 0.4);
        let p = scalar_problem(a, b, c, x);
        let fv = 2.0 * a * x + c * c - b * b * x * x;
        let f = riccati_rhs(&p, &p.x0, &Truncation::new(0.0)).unwrap();
        assert!((f.to_dense()[(0, 0)] - fv).abs() < 1e-14);
        let fgf = fgf_norm(&p, &p.x0, &Truncation::new(0.0)).unwrap();
        assert!((fgf - (fv * b * b * fv).abs()).abs() < 1e-14);
    }

    #[test]
    fn stage_difference_vanishes_for_equal_stages() {
        let p = random_test_problem(10, 1, 2, 3, 3);
        let d = stage_difference(&p.x0, &p.x0, &p.b, &Truncation::new(1e-12)).unwrap();
        assert_eq!(d.rank(), 0);
    }

    #[test]
    fn stage_difference_single_term() {
        let n = 4;
        let v = DMatrix::from_column_slice(n, 1, &[1.0, 2.0, -1.0, 0.5]);
        let b = DMatrix::identity(n, n);
        let d = stage_difference(
            &LowRankSym::zero(n),
            &LowRankSym::from_basis(v.clone()),
            &b,
            &Truncation::new(0.0),
        )
        .unwrap();
        let vvt = &v * v.transpose();
        let want = -(&vvt * &vvt);
        assert!((d.to_dense() - &want).norm() <= 1e-13 * want.norm());
    }

    #[test]
    fn stage_difference_matches_dense_and_is_nsd() {
        let p = random_test_problem(20, 1, 2, 3, 11);
        let q = random_test_problem(20, 1, 2, 2, 12);
        let d = stage_difference(&p.x0, &q.x0, &p.b, &Truncation::new(0.0)).unwrap();
        let k = q.x0.to_dense() - p.x0.to_dense();
        let want = -(&k * &p.b * p.b.transpose() * &k);
        assert!((d.to_dense() - &want).norm() <= 1e-12 * want.norm());
        let lam = SymmetricEigen::new(d.core().clone()).eigenvalues;
        let max = lam.max();
        let min = lam.min();
        assert!(max <= 1e-12 * min.abs());
    }

    #[test]
    fn fgf_matches_dense() {
        let p = random_test_problem(20, 2, 2, 2, 21);
        let f = dense_rhs(&p, &p.x0.to_dense());
        let want = (&f * &p.b * p.b.transpose() * &f).norm();
        let got = fgf_norm(&p, &p.x0, &Truncation::new(0.0)).unwrap();
        assert!((got - want).abs() <= 1e-10 * want);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let p = random_test_problem(8, 1, 1, 1, 1);
        assert!(riccati_rhs(&p, &LowRankSym::zero(7), &Truncation::default()).is_err());
        assert!(stage_difference(
            &LowRankSym::zero(8),
            &LowRankSym::zero(7),
            &p.b,
            &Truncation::default()
        )
        .is_err());
        assert!(
            RiccatiProblem::new(p.a.clone(), DMatrix::zeros(7, 1), p.c.clone(), p.x0.clone())
                .is_err()
        );
    }
}
