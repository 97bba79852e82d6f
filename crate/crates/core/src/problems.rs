//! Benchmark problem construction.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`) seeded with
//! `seed_from_u64`, with normal deviates from `rand_distr::StandardNormal`.
//! Both are portable, so a fixed seed gives bit-identical factors on every
//! platform.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{DreError, Result};
use crate::lowrank::LowRankSym;
use crate::rhs::RiccatiProblem;

/// Uniform grid on the unit square with `n0` interior points per direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    pub n0: usize,
}

impl GridSpec {
    pub fn new(n0: usize) -> Result<Self> {
        if n0 < 2 {
            return Err(DreError::InvalidConfig(format!(
                "grid needs n0 >= 2, got {n0}"
            )));
        }
        Ok(Self { n0 })
    }

    /// Number of unknowns, `n0^2`.
    pub fn size(&self) -> usize {
        self.n0 * self.n0
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.n0 as f64 + 1.0)
    }
}

/// How initial factor entries are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialFactorMode {
    /// Standard normal entries.
    Gaussian,
    /// `sin(z)` with `z` uniform on `[0, 2π]`.
    SinUniform,
}

/// Seeded `L0` with identity core `D0 = I_r`; `r = 0` gives the zero matrix.
pub fn random_initial_factor(n: usize, r: usize, seed: u64, mode: InitialFactorMode) -> LowRankSym {
    if r == 0 {
        return LowRankSym::zero(n);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // column-major fill so that r = 1 is a prefix of r = 2
    let mut data = Vec::with_capacity(n * r);
    for _ in 0..n * r {
        let v = match mode {
            InitialFactorMode::Gaussian => StandardNormal.sample(&mut rng),
            InitialFactorMode::SinUniform => {
                (rng.random::<f64>() * 2.0 * std::f64::consts::PI).sin()
            }
        };
        data.push(v);
    }
    LowRankSym::from_basis(DMatrix::from_vec(n, r, data))
}

/// Finite-difference discretization of `Δu - 10x u_x - 100y u_y` on the unit
/// square with homogeneous Dirichlet data.
///
/// Five-point Laplacian and central differences for the advection terms at
/// `x_i = i Δ`, `y_j = j Δ`, `Δ = 1/(n0+1)`; unknowns are ordered with `x`
/// running fastest. `B` and `C^T` are the all-ones vector scaled to unit
/// norm; `X0 = L0 L0^T` with a single seeded Gaussian column.
pub fn advection_diffusion(spec: GridSpec, seed: u64) -> Result<RiccatiProblem> {
    let a = advection_diffusion_matrix(spec)?;
    let n = spec.size();
    let unit = 1.0 / (n as f64).sqrt();
    let b = DMatrix::from_element(n, 1, unit);
    let c = DMatrix::from_element(1, n, unit);
    let x0 = random_initial_factor(n, 1, seed, InitialFactorMode::Gaussian);
    RiccatiProblem::new(a, b, c, x0)
}

/// The sparse system matrix of [`advection_diffusion`].
pub fn advection_diffusion_matrix(spec: GridSpec) -> Result<CsrMatrix<f64>> {
    let GridSpec { n0 } = GridSpec::new(spec.n0)?;
    let h = spec.spacing();
    let inv_h2 = 1.0 / (h * h);
    let n = n0 * n0;
    let idx = |i: usize, j: usize| (j - 1) * n0 + (i - 1);
    let mut coo = CooMatrix::new(n, n);
    for j in 1..=n0 {
        let y = j as f64 * h;
        for i in 1..=n0 {
            let x = i as f64 * h;
            let k = idx(i, j);
            let ax = 10.0 * x / (2.0 * h);
            let ay = 100.0 * y / (2.0 * h);
            if j > 1 {
                coo.push(k, idx(i, j - 1), inv_h2 + ay);
            }
            if i > 1 {
                coo.push(k, idx(i - 1, j), inv_h2 + ax);
            }
            coo.push(k, k, -4.0 * inv_h2);
            if i < n0 {
                coo.push(k, idx(i + 1, j), inv_h2 - ax);
            }
            if j < n0 {
                coo.push(k, idx(i, j + 1), inv_h2 - ay);
            }
        }
    }
    Ok(CsrMatrix::from(&coo))
}

/// Standard form of `E x' = A x + B u, y = C x` for diagonal positive `E`:
/// `A = E^{-1/2} Â E^{-1/2}`, `B = E^{-1/2} B̂`, `C = Ĉ E^{-1/2}`.
///
/// Scaling is applied entrywise to the stored values of `Â`, so the sparsity
/// pattern is preserved. The returned problem starts from `X0 = 0`; use
/// [`RiccatiProblem::with_initial`] to change it.
pub fn load_generalized(
    e_diag: &DVector<f64>,
    a_hat: &CsrMatrix<f64>,
    b_hat: &DMatrix<f64>,
    c_hat: &DMatrix<f64>,
) -> Result<RiccatiProblem> {
    if let Some((index, &value)) = e_diag
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v > 0.0) || !v.is_finite())
    {
        return Err(DreError::NonPositiveMass { index, value });
    }
    let n = e_diag.len();
    if a_hat.nrows() != n || a_hat.ncols() != n {
        return Err(DreError::DimensionMismatch {
            context: "generalized system: A dimension vs E",
            expected: n,
            found: a_hat.nrows(),
        });
    }
    let s: Vec<f64> = e_diag.iter().map(|e| 1.0 / e.sqrt()).collect();
    let mut a = a_hat.clone();
    {
        let (offsets, cols, vals) = a.csr_data_mut();
        for i in 0..n {
            for k in offsets[i]..offsets[i + 1] {
                vals[k] *= s[i] * s[cols[k]];
            }
        }
    }
    if b_hat.nrows() != n {
        return Err(DreError::DimensionMismatch {
            context: "generalized system: rows of B",
            expected: n,
            found: b_hat.nrows(),
        });
    }
    if c_hat.ncols() != n {
        return Err(DreError::DimensionMismatch {
            context: "generalized system: columns of C",
            expected: n,
            found: c_hat.ncols(),
        });
    }
    let b = DMatrix::from_fn(n, b_hat.ncols(), |i, j| b_hat[(i, j)] * s[i]);
    let c = DMatrix::from_fn(c_hat.nrows(), n, |i, j| c_hat[(i, j)] * s[j]);
    RiccatiProblem::new(a, b, c, LowRankSym::zero(n))
}

/// Small random instance for kernel tests: a sparse, diagonally dominated
/// stable `A` (about four nonzeros per row), Gaussian `B` (`n x q`) and `C`
/// (`p x n`) scaled by `1/sqrt(n)`, and a PSD rank-`r` initial value.
pub fn random_test_problem(n: usize, p: usize, q: usize, r: usize, seed: u64) -> RiccatiProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut coo = CooMatrix::new(n, n);
    for i in 0..n {
        let diag: f64 = -1.0 - rng.random::<f64>();
        coo.push(i, i, diag);
        if n > 1 {
            for _ in 0..3 {
                let j = rng.random_range(0..n);
                if j != i {
                    let v: f64 = StandardNormal.sample(&mut rng);
                    coo.push(i, j, 0.3 * v);
                }
            }
        }
    }
    let a = CsrMatrix::from(&coo);
    let scale = 1.0 / (n as f64).sqrt();
    let b = DMatrix::from_fn(n, q, |_, _| {
        scale * Distribution::<f64>::sample(&StandardNormal, &mut rng)
    });
    let c = DMatrix::from_fn(p, n, |_, _| {
        scale * Distribution::<f64>::sample(&StandardNormal, &mut rng)
    });
    let l0 = DMatrix::from_fn(n, r, |_, _| StandardNormal.sample(&mut rng));
    RiccatiProblem::new(a, b, c, LowRankSym::from_basis(l0)).expect("consistent dimensions")
}
