//! Symmetric matrices stored as `L * D * L^T`.
//!
//! `L` is a tall `N x r` basis and `D` a small symmetric `r x r` core. All
//! arithmetic the integrators need (linear combinations, rank truncation and
//! Frobenius norms) is carried out on the factors; the `N x N` matrix is only
//! ever formed by [`LowRankSym::to_dense`], which exists for tests and oracles.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{DreError, Result};

/// Symmetric matrix in factored form `X = L * D * L^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankSym {
    basis: DMatrix<f64>,
    core: DMatrix<f64>,
}

impl LowRankSym {
    /// Builds a factored matrix, symmetrizing the core as `(D + D^T) / 2`.
    pub fn new(basis: DMatrix<f64>, core: DMatrix<f64>) -> Result<Self> {
        if core.nrows() != core.ncols() {
            return Err(DreError::DimensionMismatch {
                context: "low-rank core (square)",
                expected: core.nrows(),
                found: core.ncols(),
            });
        }
        if basis.ncols() != core.nrows() {
            return Err(DreError::DimensionMismatch {
                context: "low-rank basis columns vs core size",
                expected: core.nrows(),
                found: basis.ncols(),
            });
        }
        let core = symmetrize(core);
        Ok(Self { basis, core })
    }

    /// `L * L^T`, i.e. identity core.
    pub fn from_basis(basis: DMatrix<f64>) -> Self {
        let r = basis.ncols();
        Self {
            basis,
            core: DMatrix::identity(r, r),
        }
    }

    /// The zero matrix of order `n`, represented with rank 0.
    pub fn zero(n: usize) -> Self {
        Self {
            basis: DMatrix::zeros(n, 0),
            core: DMatrix::zeros(0, 0),
        }
    }

    /// Factors a dense symmetric matrix through its eigendecomposition,
    /// discarding eigenvalues below `tol_rel * max|lambda|`.
    pub fn from_dense(x: &DMatrix<f64>, tol_rel: f64) -> Result<Self> {
        if x.nrows() != x.ncols() {
            return Err(DreError::DimensionMismatch {
                context: "dense symmetric input (square)",
                expected: x.nrows(),
                found: x.ncols(),
            });
        }
        let n = x.nrows();
        compress(
            &LowRankSym::new(DMatrix::identity(n, n), x.clone())?,
            &Truncation::new(tol_rel),
        )
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.core.nrows()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn core(&self) -> &DMatrix<f64> {
        &self.core
    }

    pub fn into_parts(self) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.basis, self.core)
    }

    /// `c * X`, scaling only the core.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            basis: self.basis.clone(),
            core: &self.core * c,
        }
    }

    /// Dense `N x N` value. Only meant for small problems.
    pub fn to_dense(&self) -> DMatrix<f64> {
        if self.rank() == 0 {
            return DMatrix::zeros(self.dim(), self.dim());
        }
        let ld = &self.basis * &self.core;
        symmetrize(&ld * self.basis.transpose())
    }

    pub fn fro_norm(&self) -> f64 {
        fro_norm(self)
    }
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// Rank-truncation settings for [`compress`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    /// Relative Frobenius tolerance; `0` keeps every nonzero direction.
    pub tol_rel: f64,
    /// Hard upper bound on the retained rank.
    pub rank_cap: Option<usize>,
}

impl Truncation {
    pub fn new(tol_rel: f64) -> Self {
        Self {
            tol_rel,
            rank_cap: None,
        }
    }

    pub fn with_rank_cap(mut self, cap: usize) -> Self {
        self.rank_cap = Some(cap);
        self
    }
}

impl Default for Truncation {
    fn default() -> Self {
        Self::new(1e-12)
    }
}

/// Concatenates `sum_k g_k L_k D_k L_k^T` into one factorization:
/// `L = [L_1, .., L_m]`, `D = blkdiag(g_1 D_1, .., g_m D_m)`. No compression.
pub fn assemble(terms: &[(f64, &LowRankSym)]) -> Result<LowRankSym> {
    let (_, first) = terms.first().ok_or(DreError::EmptyAssembly)?;
    let n = first.dim();
    for (index, (_, x)) in terms.iter().enumerate() {
        if x.dim() != n {
            return Err(DreError::TermDimension {
                index,
                expected: n,
                found: x.dim(),
            });
        }
    }
    let total: usize = terms.iter().map(|(_, x)| x.rank()).sum();
    let mut basis = DMatrix::zeros(n, total);
    let mut core = DMatrix::zeros(total, total);
    let mut offset = 0;
    for (g, x) in terms {
        let r = x.rank();
        if r == 0 {
            continue;
        }
        basis.view_mut((0, offset), (n, r)).copy_from(&x.basis);
        core.view_mut((offset, offset), (r, r))
            .copy_from(&(&x.core * *g));
        offset += r;
    }
    Ok(LowRankSym { basis, core })
}

/// Rank truncation via thin QR of the basis and an eigendecomposition of the
/// projected core `R D R^T`.
///
/// The result has orthonormal basis columns and a diagonal core holding the
/// retained eigenvalues, sorted by decreasing magnitude. Eigenvalues at the
/// rounding level of the projected core are dropped first; the remaining tail
/// satisfies `||X - X'||_F <= tol_rel * ||X||_F` and the retained rank is the
/// smallest one meeting that bound (or `rank_cap`, whichever is smaller).
pub fn compress(x: &LowRankSym, trunc: &Truncation) -> Result<LowRankSym> {
    let n = x.dim();
    if x.rank() == 0 {
        return Ok(LowRankSym::zero(n));
    }
    if !trunc.tol_rel.is_finite() || trunc.tol_rel < 0.0 {
        return Err(DreError::InvalidConfig(format!(
            "truncation tolerance must be a nonnegative number, got {}",
            trunc.tol_rel
        )));
    }
    let qr = x.basis.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let projected = symmetrize(&r * &x.core * r.transpose());
    if projected.iter().any(|v| !v.is_finite()) {
        return Err(DreError::Numerical(
            "non-finite entries in projected core".into(),
        ));
    }
    let eig = SymmetricEigen::new(projected);

    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .abs()
            .total_cmp(&eig.eigenvalues[i].abs())
    });
    // Eigenvalues at the rounding level of R D R^T are treated as exact zeros,
    // so that cancelling sums compress to rank 0.
    let abs_r = r.abs();
    let bound = &abs_r * x.core.abs() * abs_r.transpose();
    let floor = 2.0 * f64::EPSILON * x.rank() as f64 * bound.norm();
    let squares: Vec<f64> = order
        .iter()
        .map(|&i| eig.eigenvalues[i])
        .take_while(|l| l.abs() > floor)
        .map(|l| l * l)
        .collect();
    let total: f64 = squares.iter().sum();
    if total == 0.0 {
        return Ok(LowRankSym::zero(n));
    }

    // Drop trailing directions while their energy stays under the budget.
    let budget = trunc.tol_rel * trunc.tol_rel * total;
    let mut keep = squares.len();
    let mut tail = 0.0;
    while keep > 0 {
        let next = tail + squares[keep - 1];
        if next > budget {
            break;
        }
        tail = next;
        keep -= 1;
    }
    if let Some(cap) = trunc.rank_cap {
        keep = keep.min(cap);
    }

    let mut basis = DMatrix::zeros(n, keep);
    let mut core = DMatrix::zeros(keep, keep);
    for (col, &i) in order.iter().take(keep).enumerate() {
        basis.set_column(col, &(&q * eig.eigenvectors.column(i)));
        core[(col, col)] = eig.eigenvalues[i];
    }
    Ok(LowRankSym { basis, core })
}

/// Frobenius norm from the `r x r` factors: `sqrt(trace((L^T L D)^2))`.
pub fn fro_norm(x: &LowRankSym) -> f64 {
    if x.rank() == 0 {
        return 0.0;
    }
    let gram = x.basis.tr_mul(&x.basis);
    let m = gram * &x.core;
    // trace(M * M) = sum_ij M_ij M_ji
    let r = m.nrows();
    let mut acc = 0.0;
    for i in 0..r {
        for j in 0..r {
            acc += m[(i, j)] * m[(j, i)];
        }
    }
    acc.max(0.0).sqrt()
}
