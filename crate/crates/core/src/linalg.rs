//! Dense complex linear algebra used throughout the crate.
//!
//! Matrices are `ndarray` arrays (fast complex GEMM). Eigen, SVD and LU
//! factorizations are delegated to `nalgebra` through the conversion helpers
//! at the bottom of this module.

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = Array2<C64>;
pub type RMatrix = Array2<f64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

pub fn identity(n: usize) -> CMatrix {
    Array2::from_diag_elem(n, ONE)
}

pub fn dagger(m: &CMatrix) -> CMatrix {
    m.t().mapv(|z| z.conj())
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    ndarray::linalg::kron(a, b)
}

pub fn to_complex(m: &RMatrix) -> CMatrix {
    m.mapv(|x| C64::new(x, 0.0))
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diag().iter().sum()
}

/// Largest absolute column sum.
pub fn one_norm(m: &CMatrix) -> f64 {
    m.columns()
        .into_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `max |m - m^dagger|`, elementwise.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[[i, j]] - m[[j, i]].conj()).norm());
        }
    }
    worst
}

/// `max |u^dagger u - 1|`, elementwise.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let mut g = dagger(u).dot(u);
    for i in 0..g.nrows() {
        g[[i, i]] -= ONE;
    }
    max_abs(&g)
}

fn check_square(m: &CMatrix, what: &str) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidDimension(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.nrows())
}

// Padé coefficients for the [m/m] approximants of exp, m = 3, 5, 7, 9, 13.
const PADE_3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE_5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE_7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE_9: [f64; 10] = [
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
const PADE_13: [f64; 14] = [
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
// 1-norm bounds below which the degree-m approximant is accurate to unit roundoff.
const THETA_3: f64 = 1.495585217958292e-2;
const THETA_5: f64 = 2.539398330063230e-1;
const THETA_7: f64 = 9.504178996162932e-1;
const THETA_9: f64 = 2.097847961257068e0;
const THETA_13: f64 = 5.371920351148152e0;

fn scaled_identity(n: usize, s: f64) -> CMatrix {
    Array2::from_diag_elem(n, C64::new(s, 0.0))
}

/// Odd/even parts `(U, V)` of a low-degree Padé approximant built from even powers.
fn pade_low(a: &CMatrix, coeffs: &[f64]) -> (CMatrix, CMatrix) {
    let n = a.nrows();
    let a2 = a.dot(a);
    let mut powers = vec![identity(n), a2.clone()];
    while powers.len() * 2 < coeffs.len() {
        let next = powers.last().unwrap().dot(&a2);
        powers.push(next);
    }
    let mut odd = CMatrix::zeros((n, n));
    let mut even = CMatrix::zeros((n, n));
    for (k, p) in powers.iter().enumerate() {
        even.scaled_add(C64::new(coeffs[2 * k], 0.0), p);
        if 2 * k + 1 < coeffs.len() {
            odd.scaled_add(C64::new(coeffs[2 * k + 1], 0.0), p);
        }
    }
    (a.dot(&odd), even)
}

fn pade_13(a: &CMatrix) -> (CMatrix, CMatrix) {
    let n = a.nrows();
    let b = |k: usize| C64::new(PADE_13[k], 0.0);
    let a2 = a.dot(a);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);

    let mut inner_u = &a6 * b(13) + &a4 * b(11) + &a2 * b(9);
    inner_u = a6.dot(&inner_u) + &a6 * b(7) + &a4 * b(5) + &a2 * b(3) + scaled_identity(n, PADE_13[1]);
    let u = a.dot(&inner_u);

    let inner_v = &a6 * b(12) + &a4 * b(10) + &a2 * b(8);
    let v = a6.dot(&inner_v) + &a6 * b(6) + &a4 * b(4) + &a2 * b(2) + scaled_identity(n, PADE_13[0]);
    (u, v)
}

/// Matrix exponential `exp(a)` by scaling and squaring with a Padé approximant.
pub fn expm(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    if n == 0 {
        return a.clone();
    }
    let norm = one_norm(a);
    let (u, v, squarings) = if norm <= THETA_3 {
        let (u, v) = pade_low(a, &PADE_3);
        (u, v, 0)
    } else if norm <= THETA_5 {
        let (u, v) = pade_low(a, &PADE_5);
        (u, v, 0)
    } else if norm <= THETA_7 {
        let (u, v) = pade_low(a, &PADE_7);
        (u, v, 0)
    } else if norm <= THETA_9 {
        let (u, v) = pade_low(a, &PADE_9);
        (u, v, 0)
    } else {
        let s = (norm / THETA_13).log2().ceil().max(0.0) as i32;
        let scaled = a * C64::new(0.5f64.powi(s), 0.0);
        let (u, v) = pade_13(&scaled);
        (u, v, s)
    };
    let p = &v + &u;
    let q = &v - &u;
    let mut r = solve(&q, &p);
    for _ in 0..squarings {
        r = r.dot(&r);
    }
    r
}

/// Propagator `exp(-i h t)` for a Hermitian generator `h`.
///
/// Fails when `h` deviates from Hermiticity by more than `1e-10` relative to
/// its largest entry.
pub fn matrix_exp(h: &CMatrix, t: f64) -> Result<CMatrix> {
    check_square(h, "generator")?;
    let scale = max_abs(h).max(1.0);
    let deviation = hermiticity_defect(h);
    if deviation > 1e-10 * scale {
        return Err(Error::NotHermitian { deviation });
    }
    Ok(expm(&(h * C64::new(0.0, -t))))
}

/// Solve `a x = b` by LU with partial pivoting.
pub fn solve(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let lu = to_na(a).lu();
    let x = lu
        .solve(&to_na(b))
        .expect("singular matrix in Padé denominator");
    from_na(&x)
}

/// Eigenvalues (ascending) and eigenvectors (columns) of a Hermitian matrix.
pub fn hermitian_eigen(h: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = nalgebra::SymmetricEigen::new(to_na(h));
    let n = h.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_shape_fn((n, n), |(r, c)| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// `exp(-i h t)` through the eigendecomposition of `h`; independent of [`expm`].
pub fn exp_hermitian_eigen(h: &CMatrix, t: f64) -> CMatrix {
    let (values, vectors) = hermitian_eigen(h);
    let phases = Array1::from_iter(values.iter().map(|&e| C64::from_polar(1.0, -e * t)));
    let scaled = &vectors * &phases.broadcast((h.nrows(), h.nrows())).unwrap();
    scaled.dot(&dagger(&vectors))
}

/// Eigenvalues (ascending) and orthonormal eigenvectors of a real symmetric matrix.
pub fn symmetric_eigen(m: &RMatrix) -> (Vec<f64>, RMatrix) {
    let n = m.nrows();
    let na = nalgebra::DMatrix::from_fn(n, n, |i, j| m[[i, j]]);
    let eig = nalgebra::SymmetricEigen::new(na);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = RMatrix::from_shape_fn((n, n), |(r, c)| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

pub fn min_eigenvalue(h: &CMatrix) -> f64 {
    let eig = nalgebra::SymmetricEigen::new(to_na(h));
    eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Phase `phi` maximizing `|Tr(u^dagger v)|`, i.e. `e^{i phi} u` is the best
/// global-phase match to `v`.
pub fn alignment_phase(u: &CMatrix, v: &CMatrix) -> f64 {
    let overlap: C64 = u.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
    overlap.arg()
}

/// Elementwise max distance between `u` and `v` after global-phase alignment.
pub fn phase_aligned_distance(u: &CMatrix, v: &CMatrix) -> f64 {
    let phase = C64::from_polar(1.0, alignment_phase(u, v));
    u.iter()
        .zip(v.iter())
        .fold(0.0_f64, |acc, (a, b)| acc.max((a * phase - b).norm()))
}

/// Largest singular value.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    let gram = dagger(m).dot(m);
    let (values, _) = hermitian_eigen(&gram);
    values.last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// Unitary factor of the polar decomposition `b = W P`.
///
/// Uses the Newton–Schulz iteration, which only needs matrix products and
/// converges for inputs with singular values in `(0, sqrt(3))`; compressions
/// of unitaries always qualify. Falls back to an SVD if it stalls.
pub fn polar_unitary(b: &CMatrix) -> CMatrix {
    let n = b.ncols();
    let mut x = b.clone();
    for _ in 0..100 {
        let mut gram = dagger(&x).dot(&x);
        for i in 0..n {
            gram[[i, i]] -= ONE;
        }
        let defect = max_abs(&gram);
        if !defect.is_finite() || defect > 2.0 {
            break;
        }
        if defect < 1e-15 {
            return x;
        }
        // x <- x (3 - x^dagger x) / 2 = x (1 - gram / 2)
        gram.mapv_inplace(|z| z * -0.5);
        for i in 0..n {
            gram[[i, i]] += ONE;
        }
        x = x.dot(&gram);
        if defect < 1e-9 {
            // One more quadratic step lands well below 1e-15.
            let mut g = dagger(&x).dot(&x);
            for i in 0..n {
                g[[i, i]] -= ONE;
            }
            if max_abs(&g) < 1e-14 {
                return x;
            }
        }
    }
    let svd = to_na(b).svd(true, true);
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    from_na(&(u * v_t))
}

pub(crate) fn to_na(m: &CMatrix) -> nalgebra::DMatrix<C64> {
    nalgebra::DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

pub(crate) fn from_na(m: &nalgebra::DMatrix<C64>) -> CMatrix {
    CMatrix::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}
