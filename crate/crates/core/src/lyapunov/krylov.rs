//! Arnoldi approximation of `exp(t A) v`.
//!
//! One Arnoldi basis serves every requested time: the Krylov space does not
//! depend on `t`, only the small exponential `exp(t H_m) e_1` does. The basis
//! is grown until the a-posteriori term
//! `beta * h_{m+1,m} * t * |e_m^T phi_1(t H_m) e_1|` falls below
//! `action_tol * ||y||` at the largest requested time. If the basis cap is
//! reached first, the time range is covered in substeps by repeatedly halving
//! the step until the estimate passes and restarting from the propagated
//! vector.

use nalgebra::{DMatrix, DVector};

use super::LinearOperator;
use crate::error::{DreError, Result};
use crate::linalg::{expm, one_norm};

/// Krylov and quadrature settings for exponential actions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovConfig {
    /// Maximum Arnoldi dimension before substepping kicks in.
    pub max_basis: usize,
    /// Relative per-column tolerance on the exponential action.
    pub action_tol: f64,
    /// Gauss–Legendre nodes per quadrature panel for φ integrals.
    pub quad_nodes: usize,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        Self {
            max_basis: 60,
            action_tol: 1e-10,
            quad_nodes: 12,
        }
    }
}

impl KrylovConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_basis < 2 {
            return Err(DreError::InvalidConfig(format!(
                "max_basis must be >= 2, got {}",
                self.max_basis
            )));
        }
        if !(self.action_tol > 0.0) {
            return Err(DreError::InvalidConfig(format!(
                "action_tol must be positive, got {}",
                self.action_tol
            )));
        }
        if self.quad_nodes < 2 {
            return Err(DreError::InvalidConfig(format!(
                "quad_nodes must be >= 2, got {}",
                self.quad_nodes
            )));
        }
        Ok(())
    }
}

const MAX_HALVINGS: usize = 60;
const MAX_SUBSTEPS: usize = 100_000;

struct Arnoldi {
    basis: Vec<DVector<f64>>,
    // (m+1) x m upper Hessenberg, grown column by column
    hess: DMatrix<f64>,
    beta: f64,
    breakdown: bool,
}

impl Arnoldi {
    fn start(v: &DVector<f64>, max_basis: usize) -> Self {
        let beta = v.norm();
        Self {
            basis: vec![v / beta],
            hess: DMatrix::zeros(max_basis + 1, max_basis),
            beta,
            breakdown: false,
        }
    }

    fn dim(&self) -> usize {
        self.basis.len() - usize::from(!self.breakdown)
    }

    fn extend<O: LinearOperator + ?Sized>(&mut self, op: &O) {
        let j = self.basis.len() - 1;
        let mut w = vec![0.0; op.dim()];
        op.apply(self.basis[j].as_slice(), &mut w);
        let mut w = DVector::from_vec(w);
        let wnorm0 = w.norm();
        // modified Gram-Schmidt, two passes
        for _ in 0..2 {
            for (i, vi) in self.basis.iter().enumerate() {
                let c = vi.dot(&w);
                self.hess[(i, j)] += c;
                w.axpy(-c, vi, 1.0);
            }
        }
        let hnext = w.norm();
        let scale = wnorm0.max(self.hess.column(j).amax());
        if hnext <= 1e-13 * scale || hnext == 0.0 {
            self.breakdown = true;
            return;
        }
        self.hess[(j + 1, j)] = hnext;
        self.basis.push(w / hnext);
    }

    fn small_h(&self) -> DMatrix<f64> {
        let m = self.dim();
        self.hess.view((0, 0), (m, m)).into_owned()
    }

    /// Coefficients of `exp(dt H) e_1` (unscaled by beta) and the error estimate.
    fn estimate(&self, dt: f64) -> Result<(DVector<f64>, f64)> {
        let m = self.dim();
        let mut aug = DMatrix::zeros(m + 1, m + 1);
        aug.view_mut((0, 0), (m, m))
            .copy_from(&(self.hess.view((0, 0), (m, m)) * dt));
        aug[(0, m)] = 1.0;
        let e = expm(&aug)?;
        let y = e.view((0, 0), (m, 1)).column(0).into_owned();
        let err = if self.breakdown {
            0.0
        } else {
            self.beta * self.hess[(m, m - 1)] * dt * e[(m - 1, m)].abs()
        };
        Ok((y, err))
    }

    fn passes(&self, dt: f64, tol: f64) -> Result<(bool, f64)> {
        let (y, err) = self.estimate(dt)?;
        let ynorm = self.beta * y.norm();
        if !err.is_finite() || !ynorm.is_finite() {
            return Err(DreError::Numerical("non-finite Krylov estimate".into()));
        }
        Ok((err <= tol * ynorm, err))
    }

    fn lift(&self, coeffs: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.basis[0].len());
        for (c, v) in coeffs.iter().zip(&self.basis) {
            out.axpy(*c, v, 1.0);
        }
        out
    }
}

/// Largest step `<= target` the basis can take, growing the basis first.
fn build<O: LinearOperator + ?Sized>(
    op: &O,
    v: &DVector<f64>,
    target: f64,
    cfg: &KrylovConfig,
) -> Result<(Arnoldi, f64)> {
    let mut arn = Arnoldi::start(v, cfg.max_basis);
    let mut next_check = 2usize;
    loop {
        arn.extend(op);
        let m = arn.dim();
        if arn.breakdown {
            return Ok((arn, target));
        }
        if m >= next_check || m >= cfg.max_basis {
            if arn.passes(target, cfg.action_tol)?.0 {
                return Ok((arn, target));
            }
            next_check = m + (m / 4).max(2);
        }
        if m >= cfg.max_basis {
            break;
        }
    }
    let mut dt = target;
    let mut last_err = f64::INFINITY;
    for _ in 0..MAX_HALVINGS {
        dt *= 0.5;
        // per unit step, so substep errors add up to at most action_tol
        let (ok, err) = arn.passes(dt, cfg.action_tol * dt / target)?;
        last_err = err;
        if ok {
            return Ok((arn, dt));
        }
    }
    Err(DreError::KrylovNonConvergence {
        residual: last_err,
        t: dt,
    })
}

/// `exp(tau_i H) e_1` for ascending `tau_i`, by Taylor substeps with
/// `||dt H||_1 <= 2`.
fn march(h: &DMatrix<f64>, taus: &[f64]) -> Vec<DVector<f64>> {
    let m = h.nrows();
    let hnorm = one_norm(h);
    let mut y = DVector::zeros(m);
    y[0] = 1.0;
    let mut t = 0.0;
    let mut out = Vec::with_capacity(taus.len());
    for &tau in taus {
        let span = tau - t;
        if span > 0.0 {
            let nsub = ((span * hnorm / 2.0).ceil() as usize).max(1);
            let dt = span / nsub as f64;
            for _ in 0..nsub {
                let mut term = y.clone();
                let mut small = 0;
                for k in 1..80 {
                    term = (h * &term) * (dt / k as f64);
                    y += &term;
                    if term.amax() <= 1e-17 * y.amax() {
                        small += 1;
                        if small == 2 {
                            break;
                        }
                    } else {
                        small = 0;
                    }
                }
            }
            t = tau;
        }
        out.push(y.clone());
    }
    out
}

/// `exp(t_i A) v` for every `t_i` in `times` (ascending, nonnegative).
pub fn expm_action_times<O: LinearOperator + ?Sized>(
    op: &O,
    v: &DVector<f64>,
    times: &[f64],
    cfg: &KrylovConfig,
) -> Result<Vec<DVector<f64>>> {
    cfg.validate()?;
    if v.len() != op.dim() {
        return Err(DreError::DimensionMismatch {
            context: "exponential action input",
            expected: op.dim(),
            found: v.len(),
        });
    }
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(DreError::InvalidConfig(
            "exponential action times must be finite, nonnegative and ascending".into(),
        ));
    }
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(times.len());
    let mut idx = 0;
    while idx < times.len() && times[idx] == 0.0 {
        out.push(v.clone());
        idx += 1;
    }
    let mut base = 0.0;
    let mut current = v.clone();
    let mut substeps = 0;
    while idx < times.len() {
        if current.norm() == 0.0 {
            out.extend((idx..times.len()).map(|_| DVector::zeros(v.len())));
            break;
        }
        let target = times[times.len() - 1] - base;
        let (arn, reach) = build(op, &current, target, cfg)?;
        let full = reach >= target;
        let mut taus = Vec::new();
        let mut end = idx;
        while end < times.len() && (full || times[end] - base <= reach) {
            taus.push(times[end] - base);
            end += 1;
        }
        if !full {
            taus.push(reach);
        }
        let h = arn.small_h();
        let coeffs = march(&h, &taus);
        for c in coeffs.iter().take(end - idx) {
            out.push(arn.lift(&(c * arn.beta)));
        }
        idx = end;
        if !full {
            current = arn.lift(&(coeffs[coeffs.len() - 1].clone() * arn.beta));
            base += reach;
            substeps += 1;
            if substeps > MAX_SUBSTEPS {
                return Err(DreError::KrylovNonConvergence {
                    residual: f64::NAN,
                    t: base,
                });
            }
        }
    }
    Ok(out)
}

/// `exp(t A) V`, column by column.
pub fn expm_action<O: LinearOperator + ?Sized>(
    op: &O,
    t: f64,
    v: &DMatrix<f64>,
    cfg: &KrylovConfig,
) -> Result<DMatrix<f64>> {
    if v.nrows() != op.dim() {
        return Err(DreError::DimensionMismatch {
            context: "exponential action block",
            expected: op.dim(),
            found: v.nrows(),
        });
    }
    if t == 0.0 {
        return Ok(v.clone());
    }
    let mut out = DMatrix::zeros(v.nrows(), v.ncols());
    for (j, col) in v.column_iter().enumerate() {
        let y = expm_action_times(op, &col.into_owned(), &[t], cfg)?;
        out.set_column(j, &y[0]);
    }
    Ok(out)
}
