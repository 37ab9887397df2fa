//! Small dense kernels: Hermitian eigendecomposition (cyclic Jacobi), PSD
//! square roots and a real 3x3 SVD (one-sided Jacobi).
//!
//! Everything here is sized for 2x2 to 4x4 problems. Storage and products
//! come from `nalgebra`; the decompositions are written out so that their
//! residuals can be bounded directly.

use nalgebra::{DMatrix, Matrix3, Vector3};
use num_complex::Complex64;
use thiserror::Error;

/// Dense complex matrix (row/column sizes 2 to 4 in practice).
pub type CMatrix = DMatrix<Complex64>;

/// Real 3x3 matrix used for Bloch-space maps.
pub type RealMatrix3 = Matrix3<f64>;

/// Default tolerance for Hermiticity and positivity checks.
pub const DEFAULT_TOL: f64 = 1e-9;

const MAX_SWEEPS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("matrix is not Hermitian (max |H - H^†| = {0:.3e})")]
    NotHermitian(f64),
    #[error("matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPsd(f64),
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
    #[error("matrix has non-finite entries")]
    NonFinite,
}

/// Eigendecomposition of a Hermitian matrix.
///
/// `values` are sorted in descending order and column `k` of `vectors` is
/// the eigenvector for `values[k]`.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl HermitianEigen {
    /// Rebuilds `V f(Λ) V^†` for a scalar function of the eigenvalues.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let n = self.values.len();
        let mut out = CMatrix::zeros(n, n);
        for (k, &lam) in self.values.iter().enumerate() {
            let w = f(lam);
            if w == 0.0 {
                continue;
            }
            let v = self.vectors.column(k);
            out += (v * v.adjoint()) * Complex64::new(w, 0.0);
        }
        out
    }
}

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Builds a matrix from row-major complex entries.
pub fn cmatrix(rows: usize, cols: usize, entries: &[Complex64]) -> CMatrix {
    CMatrix::from_row_slice(rows, cols, entries)
}

/// Builds a matrix from row-major real entries.
pub fn rmatrix(rows: usize, cols: usize, entries: &[f64]) -> CMatrix {
    CMatrix::from_iterator(
        rows,
        cols,
        // from_iterator is column-major; transpose the row-major input
        (0..cols).flat_map(|j| (0..rows).map(move |i| (i, j))).map(|(i, j)| c(entries[i * cols + j], 0.0)),
    )
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Largest absolute entry of `a - b`.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape(), "shape mismatch");
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

pub fn is_finite(a: &CMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn trace(a: &CMatrix) -> Complex64 {
    a.diagonal().iter().sum()
}

/// Hermitian part `(A + A^†)/2`.
pub fn hermitize(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()) * c(0.5, 0.0)
}

/// Eigendecomposition of a Hermitian matrix by cyclic complex Jacobi rotations.
pub fn hermitian_eig(h: &CMatrix, tol: f64) -> Result<HermitianEigen, NumError> {
    let (rows, cols) = h.shape();
    if rows != cols {
        return Err(NumError::NotSquare(rows, cols));
    }
    if !is_finite(h) {
        return Err(NumError::NonFinite);
    }
    let defect = max_abs_diff(h, &h.adjoint());
    if defect > tol {
        return Err(NumError::NotHermitian(defect));
    }
    let n = rows;
    let mut a = hermitize(h);
    let mut v = identity(n);
    let scale = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= 1e-16 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].re.total_cmp(&a[(i, i)].re));
    let values = order.iter().map(|&k| a[(k, k)].re).collect();
    let vectors = CMatrix::from_columns(&order.iter().map(|&k| v.column(k).into_owned()).collect::<Vec<_>>());
    Ok(HermitianEigen { values, vectors })
}

// One Jacobi step zeroing a[(p, q)]: a phase rotation makes the pivot real,
// then a real Givens rotation annihilates it.
fn rotate(a: &mut CMatrix, v: &mut CMatrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    let mag = apq.norm();
    if mag == 0.0 {
        return;
    }
    let phase = apq / mag;
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    let theta = (aqq - app) / (2.0 * mag);
    let t = if theta.is_finite() {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    } else {
        0.0
    };
    let cs = 1.0 / (t * t + 1.0).sqrt();
    let sn = t * cs;

    // G = diag-phase * Givens, acting on the (p, q) plane only
    let n = a.nrows();
    let mut g = identity(n);
    let conj_phase = phase.conj();
    g[(p, p)] = c(cs, 0.0);
    g[(p, q)] = c(sn, 0.0);
    g[(q, p)] = conj_phase * (-sn);
    g[(q, q)] = conj_phase * cs;

    *a = g.adjoint() * &*a * &g;
    a[(p, q)] = c(0.0, 0.0);
    a[(q, p)] = c(0.0, 0.0);
    *v = &*v * g;
}

/// Relative size below which an eigenvalue is treated as rounding noise
/// before taking square roots.
pub const SPECTRAL_FLOOR: f64 = 1e-14;

/// `sqrt(x)` with eigenvalues under `SPECTRAL_FLOOR * largest` mapped to 0.
pub fn floored_sqrt(x: f64, largest: f64) -> f64 {
    if x <= SPECTRAL_FLOOR * largest.abs().max(f64::MIN_POSITIVE) {
        0.0
    } else {
        x.sqrt()
    }
}

/// Principal square root of a positive semidefinite Hermitian matrix.
///
/// Eigenvalues in `[-tol, 0)` are clipped to zero, as are positive ones at
/// rounding level.
pub fn psd_sqrt(m: &CMatrix, tol: f64) -> Result<CMatrix, NumError> {
    let eig = hermitian_eig(m, tol)?;
    let min = eig.values.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -tol {
        return Err(NumError::NotPsd(min));
    }
    let top = eig.values[0];
    Ok(eig.reconstruct_with(|x| floored_sqrt(x, top)))
}

/// Singular value decomposition `T = O1 diag(s) O2^t` of a real 3x3 matrix.
#[derive(Debug, Clone, Copy)]
pub struct Svd3 {
    pub o1: RealMatrix3,
    pub s: Vector3<f64>,
    pub o2: RealMatrix3,
}

/// One-sided Jacobi SVD. Singular values are nonnegative and descending;
/// `o1` and `o2` are orthogonal but may have determinant -1.
pub fn svd3(t: &RealMatrix3) -> Svd3 {
    let mut u = *t;
    let mut v = RealMatrix3::identity();
    let scale = t.norm();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..3 {
            for q in (p + 1)..3 {
                let alpha = u.column(p).norm_squared();
                let beta = u.column(q).norm_squared();
                let gamma = u.column(p).dot(&u.column(q));
                if gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let tn = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + tn * tn).sqrt();
                let sn = cs * tn;
                for k in 0..3 {
                    let up = u[(k, p)];
                    let uq = u[(k, q)];
                    u[(k, p)] = cs * up - sn * uq;
                    u[(k, q)] = sn * up + cs * uq;
                    let vp = v[(k, p)];
                    let vq = v[(k, q)];
                    v[(k, p)] = cs * vp - sn * vq;
                    v[(k, q)] = sn * vp + cs * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order = [0usize, 1, 2];
    let norms = [u.column(0).norm(), u.column(1).norm(), u.column(2).norm()];
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let mut o1 = RealMatrix3::zeros();
    let mut o2 = RealMatrix3::zeros();
    let mut s = Vector3::zeros();
    let cutoff = 1e-14 * scale.max(f64::MIN_POSITIVE);
    let mut filled = [false; 3];
    for (dst, &src) in order.iter().enumerate() {
        s[dst] = norms[src];
        o2.set_column(dst, &v.column(src));
        if norms[src] > cutoff {
            o1.set_column(dst, &(u.column(src) / norms[src]));
            filled[dst] = true;
        }
    }
    complete_basis(&mut o1, &filled);
    Svd3 { o1, s, o2 }
}

// Gram-Schmidt completion of the columns not marked as filled.
fn complete_basis(m: &mut RealMatrix3, filled: &[bool; 3]) {
    for k in 0..3 {
        if filled[k] {
            continue;
        }
        let mut best: Option<Vector3<f64>> = None;
        for e in 0..3 {
            let mut cand = Vector3::zeros();
            cand[e] = 1.0;
            for j in 0..3 {
                if j != k {
                    let col = m.column(j).into_owned();
                    cand -= col * col.dot(&cand);
                }
            }
            if best.is_none_or(|b| cand.norm() > b.norm()) {
                best = Some(cand);
            }
        }
        let b = best.expect("three candidates");
        m.set_column(k, &(b / b.norm()));
    }
}
