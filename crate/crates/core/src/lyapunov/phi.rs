//! φ-functions of the Lyapunov operator on factored right-hand sides.
//!
//! `phi_k(h L)[M] = int_0^1 exp((1-θ) h L)[M] θ^{k-1}/(k-1)! dθ` and
//! `exp(s L)[L_M D_M L_M^T] = (e^{s A} L_M) D_M (e^{s A} L_M)^T`, so each
//! quadrature node costs one exponential action on the thin factor. Nodes are
//! placed in `s = 1 - θ`; for stiff `h A` the panels are graded geometrically
//! toward `s = 0`, where the fast modes live.

use nalgebra::{DMatrix, DVector};

use super::krylov::{expm_action, expm_action_times, KrylovConfig};
use super::ClosedLoopOperator;
use super::LinearOperator;
use crate::error::{DreError, Result};
use crate::linalg::gauss_legendre;
use crate::lowrank::{assemble, compress, LowRankSym, Truncation};

/// Largest φ index the schemes need.
pub const MAX_PHI_ORDER: usize = 4;

// Panel width times the stiffness scale kept at or below this value.
const PANEL_STIFFNESS: f64 = 8.0;

/// Composite Gauss–Legendre rule on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    /// Ascending nodes.
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Node index ranges, one per panel.
    pub panels: Vec<std::ops::Range<usize>>,
}

impl QuadratureRule {
    /// Plain `n`-point Gauss–Legendre rule on `[0, 1]`.
    pub fn single(n: usize) -> Self {
        let (nodes, weights) = gauss_legendre(n);
        Self {
            nodes,
            weights,
            #[allow(clippy::single_range_in_vec_init)]
            panels: vec![0..n],
        }
    }

    /// `n` points per panel, with panels `[0, a], [a, 2a], [2a, 4a], ..`
    /// where `a * stiffness <= 8`. A single panel when `stiffness <= 8`.
    pub fn graded(n: usize, stiffness: f64) -> Self {
        if !(stiffness > PANEL_STIFFNESS) || !stiffness.is_finite() {
            return Self::single(n);
        }
        let mut edges = vec![0.0];
        let mut right = PANEL_STIFFNESS / stiffness;
        while right < 1.0 {
            edges.push(right);
            right *= 2.0;
        }
        edges.push(1.0);
        let (x, w) = gauss_legendre(n);
        let mut rule = Self {
            nodes: Vec::new(),
            weights: Vec::new(),
            panels: Vec::new(),
        };
        for pair in edges.windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            let start = rule.nodes.len();
            for (xi, wi) in x.iter().zip(&w) {
                rule.nodes.push(lo + (hi - lo) * xi);
                rule.weights.push((hi - lo) * wi);
            }
            rule.panels.push(start..rule.nodes.len());
        }
        rule
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Scalar `phi_k(z)`: power series for `|z| <= 1`, otherwise the recurrence
/// `phi_{j+1}(z) = (phi_j(z) - 1/j!) / z` started from `e^z`.
pub fn scalar_phi(k: usize, z: f64) -> f64 {
    if z.abs() <= 1.0 {
        // sum_j z^j / (j + k)!
        let mut term = 1.0 / factorial(k);
        let mut sum = term;
        for j in 1..60 {
            term *= z / (j + k) as f64;
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() {
                break;
            }
        }
        return sum;
    }
    let mut phi = z.exp();
    for j in 0..k {
        phi = (phi - 1.0 / factorial(j)) / z;
    }
    phi
}

/// Low-rank factors of `phi_k(h L_n)[M]`, compressed with `trunc`.
pub fn phi_lyap(
    op: &ClosedLoopOperator<'_>,
    h: f64,
    k: usize,
    m: &LowRankSym,
    cfg: &KrylovConfig,
    trunc: &Truncation,
) -> Result<LowRankSym> {
    cfg.validate()?;
    if k > MAX_PHI_ORDER {
        return Err(DreError::InvalidConfig(format!(
            "phi order {k} unsupported (max {MAX_PHI_ORDER})"
        )));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(DreError::InvalidConfig(format!(
            "phi step must be positive and finite, got {h}"
        )));
    }
    let n = op.dim();
    if m.dim() != n {
        return Err(DreError::DimensionMismatch {
            context: "phi_lyap right-hand side",
            expected: n,
            found: m.dim(),
        });
    }
    if m.rank() == 0 {
        return Ok(LowRankSym::zero(n));
    }

    if k == 0 {
        let y = expm_action(op, h, m.basis(), cfg)?;
        return compress(&LowRankSym::new(y, m.core().clone())?, trunc);
    }

    // The Lyapunov operator's spectrum is bounded by twice that of A_n.
    let rule = QuadratureRule::graded(cfg.quad_nodes, 2.0 * h * op.norm_bound());
    let times: Vec<f64> = rule.nodes.iter().map(|s| s * h).collect();

    // per column, per node
    let columns: Vec<Vec<DVector<f64>>> = m
        .basis()
        .column_iter()
        .map(|c| expm_action_times(op, &c.into_owned(), &times, cfg))
        .collect::<Result<_>>()?;

    let r = m.rank();
    let scale_k = 1.0 / factorial(k - 1);
    let inner = Truncation::new(trunc.tol_rel * 0.1);
    let mut acc = LowRankSym::zero(n);
    for panel in &rule.panels {
        let mut node_terms = Vec::with_capacity(panel.len());
        for i in panel.clone() {
            let mut y = DMatrix::zeros(n, r);
            for (j, col) in columns.iter().enumerate() {
                y.set_column(j, &col[i]);
            }
            let theta = 1.0 - rule.nodes[i];
            let g = rule.weights[i] * theta.powi(k as i32 - 1) * scale_k;
            node_terms.push((g, LowRankSym::new(y, m.core().clone())?));
        }
        let mut refs: Vec<(f64, &LowRankSym)> = vec![(1.0, &acc)];
        refs.extend(node_terms.iter().map(|(g, x)| (*g, x)));
        acc = compress(&assemble(&refs)?, &inner)?;
    }
    compress(&acc, trunc)
}
