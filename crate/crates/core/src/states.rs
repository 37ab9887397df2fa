//! One- and two-qubit density matrices and the figures of merit used to
//! compare them: fidelity, purity and concurrence.
//!
//! Basis convention: `|0⟩ ≡ |H⟩`, `|1⟩ ≡ |V⟩`, and two-qubit states are
//! ordered `mode 1 ⊗ mode 2`.

use crate::numkernel::{self, c, hermitian_eig, hermitize, identity, kron, max_abs_diff, floored_sqrt, psd_sqrt, trace, CMatrix, NumError};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Validity tolerance for Hermiticity, trace and positivity.
pub const STATE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("density matrix must be 2x2 or 4x4, got {0}x{1}")]
    BadShape(usize, usize),
    #[error("expected a {expected}-dimensional state, got dimension {actual}")]
    WrongDim { expected: usize, actual: usize },
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("matrix is not Hermitian (defect {0:.3e})")]
    NotHermitian(f64),
    #[error("trace is {0} instead of 1")]
    BadTrace(f64),
    #[error("matrix has a negative eigenvalue {0:.3e}")]
    NotPositive(f64),
    #[error("Bloch vector lies outside the unit ball (|r| = {0})")]
    OutsideBall(f64),
    #[error("parameter {name} = {value} is outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error(transparent)]
    Numeric(#[from] NumError),
}

/// A validated density matrix of one qubit (2x2) or two qubits (4x4).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    /// Validates and wraps `m`. Tiny anti-Hermitian noise is symmetrized away.
    pub fn new(m: CMatrix) -> Result<Self, StateError> {
        let (r, cl) = m.shape();
        if r != cl || !(r == 2 || r == 4) {
            return Err(StateError::BadShape(r, cl));
        }
        if !numkernel::is_finite(&m) {
            return Err(NumError::NonFinite.into());
        }
        let defect = max_abs_diff(&m, &m.adjoint());
        if defect > STATE_TOL {
            return Err(StateError::NotHermitian(defect));
        }
        let m = hermitize(&m);
        let tr = trace(&m).re;
        if (tr - 1.0).abs() > STATE_TOL {
            return Err(StateError::BadTrace(tr));
        }
        let eig = hermitian_eig(&m, STATE_TOL)?;
        let min = *eig.values.last().expect("nonempty spectrum");
        if min < -STATE_TOL {
            return Err(StateError::NotPositive(min));
        }
        Ok(DensityMatrix(m))
    }

    /// Normalizes a nonzero PSD matrix to unit trace and validates it.
    pub fn from_unnormalized(m: CMatrix) -> Result<Self, StateError> {
        let tr = trace(&m).re;
        if !(tr > 0.0) {
            return Err(StateError::BadTrace(tr));
        }
        Self::new(m / c(tr, 0.0))
    }

    /// Projector onto a normalized ket (column vector of length 2 or 4).
    pub fn from_ket(ket: &CMatrix) -> Result<Self, StateError> {
        Self::from_unnormalized(ket * ket.adjoint())
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        DensityMatrix(identity(dim) / c(dim as f64, 0.0))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eig(&self.0, STATE_TOL).map(|e| e.values).unwrap_or_default()
    }

    /// Conjugation `U ρ U^†` by a unitary of matching dimension.
    pub fn conjugated(&self, u: &CMatrix) -> Self {
        DensityMatrix(hermitize(&(u * &self.0 * u.adjoint())))
    }
}

impl fmt::Display for DensityMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.dim() {
            let row: Vec<String> = (0..self.dim())
                .map(|j| {
                    let z = self.0[(i, j)];
                    format!("{:+.4}{:+.4}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "[{}]", row.join(", "))?;
        }
        Ok(())
    }
}

/// JSON form of a complex matrix: a list of rows of `[re, im]` pairs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(transparent)]
pub struct MatrixRepr(pub Vec<Vec<[f64; 2]>>);

impl From<&CMatrix> for MatrixRepr {
    fn from(m: &CMatrix) -> Self {
        MatrixRepr(
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
                .collect(),
        )
    }
}

impl MatrixRepr {
    pub fn to_matrix(&self) -> Result<CMatrix, String> {
        let rows = self.0.len();
        let cols = self.0.first().map_or(0, Vec::len);
        if rows == 0 || cols == 0 || self.0.iter().any(|r| r.len() != cols) {
            return Err("matrix rows must be nonempty and of equal length".into());
        }
        Ok(CMatrix::from_fn(rows, cols, |i, j| c(self.0[i][j][0], self.0[i][j][1])))
    }
}

impl From<DensityMatrix> for MatrixRepr {
    fn from(d: DensityMatrix) -> Self {
        MatrixRepr::from(&d.0)
    }
}

impl TryFrom<MatrixRepr> for DensityMatrix {
    type Error = String;
    fn try_from(r: MatrixRepr) -> Result<Self, String> {
        DensityMatrix::new(r.to_matrix()?).map_err(|e| e.to_string())
    }
}

/// Serde adapter for a bare [`CMatrix`] field.
pub mod matrix_serde {
    use super::{CMatrix, MatrixRepr};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &CMatrix, s: S) -> Result<S::Ok, S::Error> {
        MatrixRepr::from(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMatrix, D::Error> {
        MatrixRepr::deserialize(d)?.to_matrix().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        BlochVector { x, y, z }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    X,
    Y,
    Z,
}

pub fn sigma_x() -> CMatrix {
    numkernel::rmatrix(2, 2, &[0.0, 1.0, 1.0, 0.0])
}

pub fn sigma_y() -> CMatrix {
    numkernel::cmatrix(2, 2, &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)])
}

pub fn sigma_z() -> CMatrix {
    numkernel::rmatrix(2, 2, &[1.0, 0.0, 0.0, -1.0])
}

pub fn pauli(p: Pauli) -> CMatrix {
    match p {
        Pauli::X => sigma_x(),
        Pauli::Y => sigma_y(),
        Pauli::Z => sigma_z(),
    }
}

/// `[I, σx, σy, σz]`.
pub fn pauli_basis() -> [CMatrix; 4] {
    [identity(2), sigma_x(), sigma_y(), sigma_z()]
}

/// `ρ = ½(I + r·σ)`.
pub fn bloch_to_density(r: BlochVector) -> Result<DensityMatrix, StateError> {
    let n = r.norm();
    if !n.is_finite() || n > 1.0 + STATE_TOL {
        return Err(StateError::OutsideBall(n));
    }
    let m = (identity(2) + sigma_x() * c(r.x, 0.0) + sigma_y() * c(r.y, 0.0) + sigma_z() * c(r.z, 0.0)) * c(0.5, 0.0);
    Ok(DensityMatrix(m))
}

/// `r_k = tr(ρ σ_k)`.
pub fn density_to_bloch(rho: &DensityMatrix) -> Result<BlochVector, StateError> {
    if rho.dim() != 2 {
        return Err(StateError::WrongDim { expected: 2, actual: rho.dim() });
    }
    Ok(bloch_of(rho.matrix()))
}

/// Bloch components of any 2x2 matrix (no validation).
pub(crate) fn bloch_of(m: &CMatrix) -> BlochVector {
    let comp = |s: CMatrix| trace(&(m * s)).re;
    BlochVector::new(comp(sigma_x()), comp(sigma_y()), comp(sigma_z()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BellKind {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl BellKind {
    pub const ALL: [BellKind; 4] = [BellKind::PhiPlus, BellKind::PhiMinus, BellKind::PsiPlus, BellKind::PsiMinus];
}

/// Bell ket as a 4x1 column in the `|HH⟩, |HV⟩, |VH⟩, |VV⟩` ordering.
pub fn bell_ket(kind: BellKind) -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let v = match kind {
        BellKind::PhiPlus => [s, 0.0, 0.0, s],
        BellKind::PhiMinus => [s, 0.0, 0.0, -s],
        BellKind::PsiPlus => [0.0, s, s, 0.0],
        BellKind::PsiMinus => [0.0, s, -s, 0.0],
    };
    numkernel::rmatrix(4, 1, &v)
}

pub fn bell_state(kind: BellKind) -> DensityMatrix {
    let k = bell_ket(kind);
    DensityMatrix(&k * k.adjoint())
}

/// Product basis ket `|a⟩₁|b⟩₂` with `false ≡ H` and `true ≡ V`.
pub fn product_ket(mode1_v: bool, mode2_v: bool) -> CMatrix {
    let mut v = CMatrix::zeros(4, 1);
    v[(2 * usize::from(mode1_v) + usize::from(mode2_v), 0)] = c(1.0, 0.0);
    v
}

/// `v·|Bell⟩⟨Bell| + (1 − v)·I/4`.
pub fn werner_state(v: f64, kind: BellKind) -> Result<DensityMatrix, StateError> {
    if !(0.0..=1.0).contains(&v) {
        return Err(StateError::OutOfRange { name: "v", value: v });
    }
    let m = bell_state(kind).0 * c(v, 0.0) + identity(4) * c((1.0 - v) / 4.0, 0.0);
    Ok(DensityMatrix(m))
}

/// `tr ρ²`.
pub fn purity(rho: &DensityMatrix) -> f64 {
    let m = rho.matrix();
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// Root (Uhlmann) fidelity `tr √(√ρ₁ ρ₂ √ρ₁)`; equals 1 exactly when the
/// states coincide. The squared convention is this value squared.
pub fn fidelity(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<f64, StateError> {
    if rho1.dim() != rho2.dim() {
        return Err(StateError::DimMismatch(rho1.dim(), rho2.dim()));
    }
    let s = psd_sqrt(rho1.matrix(), STATE_TOL)?;
    let inner = hermitize(&(&s * rho2.matrix() * &s));
    let eig = hermitian_eig(&inner, STATE_TOL)?;
    let top = eig.values[0];
    let f: f64 = eig.values.iter().map(|&l| floored_sqrt(l, top)).sum();
    Ok(f.clamp(0.0, 1.0))
}

/// Wootters concurrence of a two-qubit state.
///
/// The spin-flip spectrum is taken from the Hermitian `√ρ ρ̃ √ρ`, which shares
/// its eigenvalues with `ρ ρ̃`.
pub fn concurrence(rho: &DensityMatrix) -> Result<f64, StateError> {
    if rho.dim() != 4 {
        return Err(StateError::WrongDim { expected: 4, actual: rho.dim() });
    }
    let yy = kron(&sigma_y(), &sigma_y());
    let flipped = &yy * rho.matrix().map(|z| z.conj()) * &yy;
    let s = psd_sqrt(rho.matrix(), STATE_TOL)?;
    let r = hermitize(&(&s * flipped * &s));
    let eig = hermitian_eig(&r, STATE_TOL)?;
    let top = eig.values[0];
    let mu: Vec<f64> = eig.values.iter().map(|&l| floored_sqrt(l, top)).collect();
    Ok((mu[0] - mu[1] - mu[2] - mu[3]).max(0.0))
}

/// Which photon is kept by [`partial_trace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    One,
    Two,
}

pub fn partial_trace(rho: &DensityMatrix, keep: Mode) -> Result<DensityMatrix, StateError> {
    if rho.dim() != 4 {
        return Err(StateError::WrongDim { expected: 4, actual: rho.dim() });
    }
    let m = rho.matrix();
    let out = CMatrix::from_fn(2, 2, |i, j| match keep {
        Mode::One => (0..2).map(|k| m[(2 * i + k, 2 * j + k)]).sum(),
        Mode::Two => (0..2).map(|k| m[(2 * k + i, 2 * k + j)]).sum(),
    });
    Ok(DensityMatrix(out))
}

/// Random state `A A† / tr(A A†)` with a complex Ginibre `A` of the given
/// rank; rank 1 gives Haar-random pure states.
pub fn random_state<R: Rng + ?Sized>(dim: usize, rank: usize, rng: &mut R) -> DensityMatrix {
    let a = CMatrix::from_fn(dim, rank.max(1), |_, _| c(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let m = &a * a.adjoint();
    let tr = trace(&m).re;
    DensityMatrix(hermitize(&(m / c(tr, 0.0))))
}
