//! Kraus-map algebra for single-qubit channels.
//!
//! A channel acts as `ρ ↦ Σ K_i ρ K_i†`. Its action on Bloch vectors is the
//! affine map `r ↦ T r + τ`, which [`canonical_form`] diagonalizes with two
//! proper rotations, `T = O1 diag(η) O2ᵗ`. Complete positivity of the
//! canonical map is screened by [`fujiwara_algoet_check`].

use crate::numkernel::{self, c, hermitian_eig, hermitize, identity, kron, max_abs, svd3, CMatrix, RealMatrix3};
use crate::states::{self, bloch_of, matrix_serde, pauli_basis, BlochVector, DensityMatrix, StateError};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Tolerance on `Σ K†K − I` accepted by [`KrausChannel::apply`].
pub const COMPLETENESS_TOL: f64 = 1e-9;

/// Slack tolerance for the Fujiwara–Algoet inequalities. Extremal channels
/// (the trigonometric family) sit exactly on the boundary.
pub const FA_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("Kraus operators are incomplete (max |Σ K†K − I| = {0:.3e})")]
    IncompleteKraus(f64),
    #[error("parameter {name} = {value} is out of range {range}")]
    OutOfRange { name: &'static str, value: f64, range: &'static str },
    #[error("invalid Kraus operator: {0}")]
    BadOperator(String),
    #[error(transparent)]
    State(#[from] StateError),
}

fn check_range(name: &'static str, value: f64, lo: f64, hi: f64, hi_open: bool, range: &'static str) -> Result<(), ChannelError> {
    let ok = value.is_finite() && value >= lo && if hi_open { value < hi } else { value <= hi };
    if ok {
        Ok(())
    } else {
        Err(ChannelError::OutOfRange { name, value, range })
    }
}

pub(crate) fn check_unit(name: &'static str, value: f64) -> Result<(), ChannelError> {
    check_range(name, value, 0.0, 1.0, false, "[0, 1]")
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrausChannel {
    operators: Vec<CMatrix>,
}

impl KrausChannel {
    /// Wraps a nonempty list of finite 2x2 operators. Completeness is not
    /// enforced here; see [`KrausChannel::completeness_defect`].
    pub fn new(operators: Vec<CMatrix>) -> Result<Self, ChannelError> {
        if operators.is_empty() {
            return Err(ChannelError::BadOperator("empty operator list".into()));
        }
        for op in &operators {
            if op.shape() != (2, 2) {
                return Err(ChannelError::BadOperator(format!("expected 2x2, got {}x{}", op.nrows(), op.ncols())));
            }
            if !numkernel::is_finite(op) {
                return Err(ChannelError::BadOperator("non-finite entry".into()));
            }
        }
        Ok(KrausChannel { operators })
    }

    pub fn identity() -> Self {
        KrausChannel { operators: vec![identity(2)] }
    }

    pub fn operators(&self) -> &[CMatrix] {
        &self.operators
    }

    /// A qubit channel never needs more than four Kraus operators.
    pub fn is_minimal_size(&self) -> bool {
        self.operators.len() <= 4
    }

    /// Max-abs entry of `Σ K†K − I`.
    pub fn completeness_defect(&self) -> f64 {
        let sum = self.operators.iter().fold(CMatrix::zeros(2, 2), |acc, k| acc + k.adjoint() * k);
        max_abs(&(sum - identity(2)))
    }

    fn ensure_complete(&self) -> Result<(), ChannelError> {
        let d = self.completeness_defect();
        if d > COMPLETENESS_TOL {
            Err(ChannelError::IncompleteKraus(d))
        } else {
            Ok(())
        }
    }

    /// Linear action on an arbitrary 2x2 matrix.
    pub fn apply_matrix(&self, m: &CMatrix) -> CMatrix {
        self.operators.iter().fold(CMatrix::zeros(2, 2), |acc, k| acc + k * m * k.adjoint())
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix, ChannelError> {
        self.ensure_complete()?;
        if rho.dim() != 2 {
            return Err(StateError::WrongDim { expected: 2, actual: rho.dim() }.into());
        }
        Ok(DensityMatrix::new(hermitize(&self.apply_matrix(rho.matrix())))?)
    }

    /// Affine Bloch representation, obtained by pushing the Pauli basis
    /// through the channel.
    pub fn to_affine(&self) -> Result<AffineRepresentation, ChannelError> {
        self.ensure_complete()?;
        Ok(affine_of(|m| self.apply_matrix(m)))
    }
}

/// Affine form of any linear map on 2x2 matrices: `T_jk = ½ tr(σ_j ε(σ_k))`,
/// `τ_j = ½ tr(σ_j ε(I))`.
pub(crate) fn affine_of(map: impl Fn(&CMatrix) -> CMatrix) -> AffineRepresentation {
    let basis = pauli_basis();
    let shift = bloch_of(&map(&basis[0]));
    let mut t = RealMatrix3::zeros();
    for k in 0..3 {
        let col = bloch_of(&map(&basis[k + 1]));
        t.set_column(k, &Vector3::new(col.x / 2.0, col.y / 2.0, col.z / 2.0));
    }
    AffineRepresentation { t, tau: Vector3::new(shift.x / 2.0, shift.y / 2.0, shift.z / 2.0) }
}

/// Smallest eigenvalue of the Choi matrix `Σ |i⟩⟨j| ⊗ ε(|i⟩⟨j|)` of a
/// linear map on 2x2 matrices; nonnegative iff the map is completely positive.
pub(crate) fn choi_min_eigenvalue(map: impl Fn(&CMatrix) -> CMatrix) -> f64 {
    let mut choi = CMatrix::zeros(4, 4);
    for i in 0..2 {
        for j in 0..2 {
            let mut e = CMatrix::zeros(2, 2);
            e[(i, j)] = c(1.0, 0.0);
            choi += kron(&e, &map(&e));
        }
    }
    let eig = hermitian_eig(&hermitize(&choi), f64::INFINITY).expect("finite Choi matrix");
    *eig.values.last().expect("nonempty")
}

/// Bloch-space action `r ↦ T r + τ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "AffineRepr", into = "AffineRepr")]
pub struct AffineRepresentation {
    pub t: RealMatrix3,
    pub tau: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
struct AffineRepr {
    t: [[f64; 3]; 3],
    tau: [f64; 3],
}

impl From<AffineRepresentation> for AffineRepr {
    fn from(a: AffineRepresentation) -> Self {
        AffineRepr { t: rows3(&a.t), tau: [a.tau[0], a.tau[1], a.tau[2]] }
    }
}

impl From<AffineRepr> for AffineRepresentation {
    fn from(a: AffineRepr) -> Self {
        AffineRepresentation { t: RealMatrix3::from_fn(|i, j| a.t[i][j]), tau: Vector3::from(a.tau) }
    }
}

pub(crate) fn rows3(m: &RealMatrix3) -> [[f64; 3]; 3] {
    [0, 1, 2].map(|i| [m[(i, 0)], m[(i, 1)], m[(i, 2)]])
}

impl AffineRepresentation {
    pub fn apply(&self, r: BlochVector) -> BlochVector {
        let out = self.t * Vector3::new(r.x, r.y, r.z) + self.tau;
        BlochVector::new(out[0], out[1], out[2])
    }

    pub fn is_unital(&self, tol: f64) -> bool {
        self.tau.amax() <= tol
    }
}

/// `T = O1 diag(η) O2ᵗ` with `O1, O2 ∈ SO(3)`; `tau` is the shift in the
/// rotated frame, `O1ᵗ τ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "CanonicalRepr", into = "CanonicalRepr")]
pub struct CanonicalForm {
    pub eta: Vector3<f64>,
    pub tau: Vector3<f64>,
    pub o1: RealMatrix3,
    pub o2: RealMatrix3,
}

#[derive(Serialize, Deserialize)]
struct CanonicalRepr {
    eta: [f64; 3],
    tau: [f64; 3],
    o1: [[f64; 3]; 3],
    o2: [[f64; 3]; 3],
}

impl From<CanonicalForm> for CanonicalRepr {
    fn from(f: CanonicalForm) -> Self {
        CanonicalRepr { eta: f.eta.into(), tau: f.tau.into(), o1: rows3(&f.o1), o2: rows3(&f.o2) }
    }
}

impl From<CanonicalRepr> for CanonicalForm {
    fn from(f: CanonicalRepr) -> Self {
        CanonicalForm {
            eta: Vector3::from(f.eta),
            tau: Vector3::from(f.tau),
            o1: RealMatrix3::from_fn(|i, j| f.o1[i][j]),
            o2: RealMatrix3::from_fn(|i, j| f.o2[i][j]),
        }
    }
}

impl CanonicalForm {
    pub fn distortion(&self) -> RealMatrix3 {
        self.o1 * RealMatrix3::from_diagonal(&self.eta) * self.o2.transpose()
    }

    /// Fujiwara–Algoet screen using the z-component of the rotated shift.
    pub fn fa_check(&self) -> FaVerdict {
        fujiwara_algoet_check(self.eta.into(), self.tau[2])
    }
}

/// Canonical form via SVD. Column signs are fixed so that the largest
/// component of each `O2` column is positive; any reflection left in `O1`
/// or `O2` is moved into the sign of the smallest `η`.
pub fn canonical_form(a: &AffineRepresentation) -> CanonicalForm {
    let d = svd3(&a.t);
    let (mut o1, mut o2, mut eta) = (d.o1, d.o2, d.s);
    for k in 0..3 {
        let col = o2.column(k);
        let lead = (0..3).max_by(|&i, &j| col[i].abs().total_cmp(&col[j].abs())).expect("3 entries");
        if col[lead] < 0.0 {
            o1.set_column(k, &(-o1.column(k)));
            o2.set_column(k, &(-o2.column(k)));
        }
    }
    if o2.determinant() < 0.0 {
        o2.set_column(2, &(-o2.column(2)));
        eta[2] = -eta[2];
    }
    if o1.determinant() < 0.0 {
        o1.set_column(2, &(-o1.column(2)));
        eta[2] = -eta[2];
    }
    CanonicalForm { eta, tau: o1.transpose() * a.tau, o1, o2 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum FaVerdict {
    Satisfied { margin: f64 },
    Violated { margin: f64 },
}

impl FaVerdict {
    pub fn is_satisfied(&self) -> bool {
        matches!(self, FaVerdict::Satisfied { .. })
    }

    pub fn margin(&self) -> f64 {
        match *self {
            FaVerdict::Satisfied { margin } | FaVerdict::Violated { margin } => margin,
        }
    }
}

/// Checks `(η_x ± η_y)² ≤ (1 ± η_z)² − τ_z²` for a canonical map whose
/// shift has been rotated onto the z-axis. With `τ_z = 0` this is the unital
/// condition `(1 ± η_z)² ≥ (η_x ± η_y)²`. The margin is the smaller slack.
pub fn fujiwara_algoet_check(eta: [f64; 3], tau_z: f64) -> FaVerdict {
    let [ex, ey, ez] = eta;
    let t2 = tau_z * tau_z;
    let plus = (1.0 + ez).powi(2) - t2 - (ex + ey).powi(2);
    let minus = (1.0 - ez).powi(2) - t2 - (ex - ey).powi(2);
    let margin = plus.min(minus);
    if margin >= -FA_TOL {
        FaVerdict::Satisfied { margin }
    } else {
        FaVerdict::Violated { margin }
    }
}

/// Membership in the two-Kraus trigonometric sub-family:
/// `η_z = η_x η_y` and `τ_z² = (1 − η_x²)(1 − η_y²)`.
pub fn is_trig_subfamily(eta: [f64; 3], tau_z: f64, tol: f64) -> bool {
    let [ex, ey, ez] = eta;
    (ez - ex * ey).abs() <= tol && (tau_z * tau_z - (1.0 - ex * ex) * (1.0 - ey * ey)).abs() <= tol
}

/// Two-operator channel with `η = (cos θ, cos φ, cos θ cos φ)` and
/// `τ = (0, 0, sin θ sin φ)`.
///
/// With `Θ = (θ+φ)/2` and `Φ = (θ−φ)/2` the operators are
/// `K1 = diag(cos Φ, cos Θ)` and `K2 = [[0, sin Θ], [−sin Φ, 0]]`.
pub fn trig_channel(theta: f64, phi: f64) -> Result<KrausChannel, ChannelError> {
    check_range("theta", theta, 0.0, 2.0 * PI, true, "[0, 2π)")?;
    check_range("phi", phi, 0.0, PI, true, "[0, π)")?;
    let big_theta = (theta + phi) / 2.0;
    let big_phi = (theta - phi) / 2.0;
    let k1 = numkernel::rmatrix(2, 2, &[big_phi.cos(), 0.0, 0.0, big_theta.cos()]);
    let k2 = numkernel::rmatrix(2, 2, &[0.0, big_theta.sin(), -big_phi.sin(), 0.0]);
    KrausChannel::new(vec![k1, k2])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BuiltinChannel {
    Depolarizing { lambda: f64 },
    /// Generalized amplitude damping; `gamma` is the stationary population of `|0⟩`.
    Gad { lambda: f64, gamma: f64 },
    /// Zero-temperature damping towards `|0⟩` (GAD with `gamma = 1`).
    AmplitudeDamping { lambda: f64 },
    /// Phase damping: coherences scale by `√(1−λ)`, populations untouched.
    Dephasing { lambda: f64 },
}

pub fn builtin_channel(kind: BuiltinChannel) -> Result<KrausChannel, ChannelError> {
    let ops = match kind {
        BuiltinChannel::Depolarizing { lambda } => {
            check_unit("lambda", lambda)?;
            let w = c((lambda / 3.0).sqrt(), 0.0);
            vec![identity(2) * c((1.0 - lambda).sqrt(), 0.0), states::sigma_x() * w, states::sigma_y() * w, states::sigma_z() * w]
        }
        BuiltinChannel::Gad { lambda, gamma } => {
            check_unit("lambda", lambda)?;
            check_unit("gamma", gamma)?;
            gad_operators(lambda, gamma)
        }
        BuiltinChannel::AmplitudeDamping { lambda } => {
            check_unit("lambda", lambda)?;
            gad_operators(lambda, 1.0)
        }
        BuiltinChannel::Dephasing { lambda } => {
            check_unit("lambda", lambda)?;
            vec![
                numkernel::rmatrix(2, 2, &[1.0, 0.0, 0.0, (1.0 - lambda).sqrt()]),
                numkernel::rmatrix(2, 2, &[0.0, 0.0, 0.0, lambda.sqrt()]),
            ]
        }
    };
    KrausChannel::new(ops)
}

fn gad_operators(lambda: f64, gamma: f64) -> Vec<CMatrix> {
    let g = gamma.sqrt();
    let h = (1.0 - gamma).sqrt();
    let d = (1.0 - lambda).sqrt();
    let l = lambda.sqrt();
    vec![
        numkernel::rmatrix(2, 2, &[g, 0.0, 0.0, g * d]),
        numkernel::rmatrix(2, 2, &[0.0, g * l, 0.0, 0.0]),
        numkernel::rmatrix(2, 2, &[h * d, 0.0, 0.0, h]),
        numkernel::rmatrix(2, 2, &[0.0, 0.0, h * l, 0.0]),
    ]
}

/// Haar-random unitary by Gram–Schmidt on a complex Ginibre matrix.
pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let mut z = CMatrix::from_fn(n, n, |_, _| c(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    for j in 0..n {
        for k in 0..j {
            let proj = z.column(k).dotc(&z.column(j));
            let ck = z.column(k).into_owned();
            let mut cj = z.column_mut(j);
            cj -= ck * proj;
        }
        let norm = z.column(j).norm();
        let mut cj = z.column_mut(j);
        cj /= c(norm, 0.0);
    }
    z
}

/// Random CPTP channel from a Haar unitary on system ⊗ environment:
/// `K_μ = ⟨μ|U|e₀⟩`.
pub fn random_cptp_channel(num_kraus: usize, seed: u64) -> Result<KrausChannel, ChannelError> {
    if !(1..=4).contains(&num_kraus) {
        return Err(ChannelError::OutOfRange { name: "num_kraus", value: num_kraus as f64, range: "1..=4" });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = haar_unitary(2 * num_kraus, &mut rng);
    let ops = (0..num_kraus)
        .map(|mu| CMatrix::from_fn(2, 2, |s, s2| u[(s * num_kraus + mu, s2 * num_kraus)]))
        .collect();
    KrausChannel::new(ops)
}

/// `M ⊗ I`: an operator acting on the mode-1 photon only.
pub fn lift_to_mode1(m: &CMatrix) -> CMatrix {
    kron(m, &identity(2))
}

/// JSON description of a channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelSpec {
    Dp { lambda: f64 },
    Gad { lambda: f64, gamma: f64 },
    Ad { lambda: f64 },
    Dephasing { lambda: f64 },
    /// Angles in radians.
    Trig { theta: f64, phi: f64 },
    Kraus { operators: Vec<KrausOperatorRepr> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KrausOperatorRepr(#[serde(with = "matrix_serde")] pub CMatrix);

impl ChannelSpec {
    pub fn build(&self) -> Result<KrausChannel, ChannelError> {
        match self {
            ChannelSpec::Dp { lambda } => builtin_channel(BuiltinChannel::Depolarizing { lambda: *lambda }),
            ChannelSpec::Gad { lambda, gamma } => builtin_channel(BuiltinChannel::Gad { lambda: *lambda, gamma: *gamma }),
            ChannelSpec::Ad { lambda } => builtin_channel(BuiltinChannel::AmplitudeDamping { lambda: *lambda }),
            ChannelSpec::Dephasing { lambda } => builtin_channel(BuiltinChannel::Dephasing { lambda: *lambda }),
            ChannelSpec::Trig { theta, phi } => trig_channel(*theta, *phi),
            ChannelSpec::Kraus { operators } => KrausChannel::new(operators.iter().map(|o| o.0.clone()).collect()),
        }
    }

    pub fn from_channel(ch: &KrausChannel) -> Self {
        ChannelSpec::Kraus { operators: ch.operators().iter().cloned().map(KrausOperatorRepr).collect() }
    }
}
