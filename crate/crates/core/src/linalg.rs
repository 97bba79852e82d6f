//! Small dense kernels shared by the Krylov and quadrature code.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::CsrMatrix;

use crate::error::{DreError, Result};

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
// 1-norm thresholds for degrees 3, 5, 7, 9, 13.
#[allow(clippy::excessive_precision)]
const THETA: [f64; 5] = [
    1.495585217958292e-2,
    2.539398330063230e-1,
    9.504178996162932e-1,
    2.097847961257068e0,
    5.371920351148152e0,
];

pub(crate) fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with diagonal Padé approximants.
pub fn expm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(DreError::DimensionMismatch {
            context: "expm (square input)",
            expected: n,
            found: a.ncols(),
        });
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let norm = one_norm(a);
    if !norm.is_finite() {
        return Err(DreError::Numerical("expm of non-finite matrix".into()));
    }
    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;

    let low: [&[f64]; 4] = [&PADE3, &PADE5, &PADE7, &PADE9];
    for (deg, coeffs) in low.iter().enumerate() {
        if norm <= THETA[deg] {
            // Odd/even split: U = A * sum b_{2j+1} A^{2j}, V = sum b_{2j} A^{2j}
            let mut pow = ident.clone();
            let mut u = DMatrix::zeros(n, n);
            let mut v = DMatrix::zeros(n, n);
            for j in 0..coeffs.len() / 2 {
                v += &pow * coeffs[2 * j];
                u += &pow * coeffs[2 * j + 1];
                pow = &pow * &a2;
            }
            let u = a * u;
            return pade_solve(&u, &v);
        }
    }

    let s = ((norm / THETA[4]).log2().ceil()).max(0.0) as i32;
    let scale = 0.5f64.powi(s);
    let a1 = a * scale;
    let a2 = &a2 * (scale * scale);
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &PADE13;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = &a1 * (u_inner + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1]);
    let v_inner = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = v_inner + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];
    let mut r = pade_solve(&u, &v)?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

fn pade_solve(u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = v + u;
    let q = v - u;
    q.lu()
        .solve(&p)
        .ok_or_else(|| DreError::Numerical("singular Pade denominator".into()))
}

/// Gauss–Legendre nodes and weights on `[0, 1]` (Newton iteration on `P_n`).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // map [-1, 1] -> [0, 1]
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// `y = A * x` for a CSR matrix.
pub(crate) fn spmv(a: &CsrMatrix<f64>, x: &[f64], y: &mut [f64]) {
    let (offsets, cols, vals) = (a.row_offsets(), a.col_indices(), a.values());
    for (i, yi) in y.iter_mut().enumerate() {
        let mut acc = 0.0;
        for k in offsets[i]..offsets[i + 1] {
            acc += vals[k] * x[cols[k]];
        }
        *yi = acc;
    }
}

/// `A * X` for a CSR matrix and a dense block.
pub fn spmm(a: &CsrMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), x.ncols());
    for j in 0..x.ncols() {
        let col: Vec<f64> = x.column(j).iter().copied().collect();
        let mut y = vec![0.0; a.nrows()];
        spmv(a, &col, &mut y);
        out.set_column(j, &DVector::from_vec(y));
    }
    out
}

pub(crate) fn csr_one_norm(a: &CsrMatrix<f64>) -> f64 {
    let mut colsum = vec![0.0; a.ncols()];
    for (&j, &v) in a.col_indices().iter().zip(a.values()) {
        colsum[j] += v.abs();
    }
    colsum.into_iter().fold(0.0, f64::max)
}

pub fn csr_to_dense(a: &CsrMatrix<f64>) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(a.nrows(), a.ncols());
    for (i, j, v) in a.triplet_iter() {
        d[(i, j)] += *v;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    // Plain Taylor series with scaling and squaring; slow but independent.
    fn expm_taylor(a: &DMatrix<f64>) -> DMatrix<f64> {
        let n = a.nrows();
        let s = (one_norm(a).log2().ceil().max(0.0) as i32) + 2;
        let b = a * 0.5f64.powi(s);
        let mut term = DMatrix::<f64>::identity(n, n);
        let mut sum = term.clone();
        for k in 1..40 {
            term = &term * &b / k as f64;
            sum += &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn expm_scalar_and_diagonal() {
        let a = DMatrix::from_element(1, 1, -1.0);
        assert_relative_eq!(
            expm(&a).unwrap()[(0, 0)],
            (-1f64).exp(),
            max_relative = 1e-15
        );
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.001, -2.0, 30.0]));
        let e = expm(&d).unwrap();
        assert_relative_eq!(e[(0, 0)], 0.001f64.exp(), max_relative = 1e-14);
        assert_relative_eq!(e[(1, 1)], (-2f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(e[(2, 2)], 30f64.exp(), max_relative = 1e-13);
    }

    #[test]
    fn expm_matches_taylor_across_norm_ranges() {
        for (seed, scale) in [
            (1u64, 1e-3),
            (2, 0.1),
            (3, 0.8),
            (4, 1.9),
            (5, 4.0),
            (6, 25.0),
        ] {
            let mut state = seed;
            let a = DMatrix::from_fn(7, 7, |_, _| {
                state = state
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * scale
            });
            let e1 = expm(&a).unwrap();
            let e2 = expm_taylor(&a);
            let err = (&e1 - &e2).norm() / e2.norm();
            assert!(err < 1e-12, "scale {scale}: {err}");
        }
    }

    #[test]
    fn expm_nilpotent() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 3.0, 0.0, 0.0]);
        let e = expm(&a).unwrap();
        assert_relative_eq!(
            e,
            DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 0.0, 1.0]),
            epsilon = 1e-14
        );
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in [2, 5, 12, 24] {
            let (x, w) = gauss_legendre(n);
            assert_relative_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
            for deg in 0..(2 * n) {
                let q: f64 = x
                    .iter()
                    .zip(&w)
                    .map(|(xi, wi)| wi * xi.powi(deg as i32))
                    .sum();
                assert_relative_eq!(q, 1.0 / (deg as f64 + 1.0), max_relative = 1e-13);
            }
            assert!(x.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn spmm_matches_dense() {
        let coo = nalgebra_sparse::CooMatrix::try_from_triplets(
            3,
            3,
            vec![0, 1, 2, 0],
            vec![0, 1, 2, 2],
            vec![1.0, -2.0, 3.0, 4.0],
        )
        .unwrap();
        let a = CsrMatrix::from(&coo);
        let x = DMatrix::from_fn(3, 2, |i, j| (i + 2 * j) as f64);
        assert_eq!(spmm(&a, &x), csr_to_dense(&a) * &x);
        assert_eq!(csr_one_norm(&a), 7.0);
    }
}
