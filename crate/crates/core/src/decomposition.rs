//! Signed-weight Kraus decompositions.
//!
//! A target channel is written as `ε(ρ) = Σ p_i M_i ρ M_i†` where each `M_i`
//! is realizable on its own and the weights may be negative. Each term is
//! acquired for `|p_i|·ΔT` seconds and negative terms are subtracted.

use crate::channels::{check_unit, choi_min_eigenvalue, ChannelError, KrausChannel};
use crate::numkernel::{self, c, hermitize, identity, max_abs, CMatrix};
use crate::states::{self, matrix_serde, random_state, DensityMatrix, StateError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on `Σ p M†M − I`.
pub const TRACE_TOL: f64 = 1e-9;

/// Above this depolarizing parameter the Bloch sphere is inverted.
pub const DP_FULL_MIX: f64 = 0.75;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecompError {
    #[error("signed sum is not trace preserving (max |Σ p M†M − I| = {0:.3e})")]
    NotTracePreserving(f64),
    #[error("cannot re-fit after dropping a term: {0}")]
    Unsatisfiable(String),
    #[error("term index {index} out of range for {len} terms")]
    NoSuchTerm { index: usize, len: usize },
    #[error("decomposition needs at least one positive weight")]
    NoPositiveWeight,
    #[error("invalid term: {0}")]
    BadTerm(String),
    #[error("parameter {name} = {value} is out of range")]
    OutOfRange { name: &'static str, value: f64 },
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    State(#[from] StateError),
}

/// Named operators plus an escape hatch for arbitrary matrices.
#[derive(Debug, Clone, PartialEq)]
pub enum KrausOp {
    Identity,
    SigmaX,
    SigmaY,
    SigmaZ,
    /// `|0⟩⟨0|`
    Proj00,
    /// `|1⟩⟨1|`
    Proj11,
    /// `|0⟩⟨1|`
    Proj01,
    /// `|1⟩⟨0|`
    Proj10,
    Custom(CMatrix),
}

impl KrausOp {
    pub fn matrix(&self) -> CMatrix {
        let unit = |i: usize, j: usize| {
            let mut m = CMatrix::zeros(2, 2);
            m[(i, j)] = c(1.0, 0.0);
            m
        };
        match self {
            KrausOp::Identity => identity(2),
            KrausOp::SigmaX => states::sigma_x(),
            KrausOp::SigmaY => states::sigma_y(),
            KrausOp::SigmaZ => states::sigma_z(),
            KrausOp::Proj00 => unit(0, 0),
            KrausOp::Proj11 => unit(1, 1),
            KrausOp::Proj01 => unit(0, 1),
            KrausOp::Proj10 => unit(1, 0),
            KrausOp::Custom(m) => m.clone(),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            KrausOp::Identity => "identity",
            KrausOp::SigmaX => "sigma_x",
            KrausOp::SigmaY => "sigma_y",
            KrausOp::SigmaZ => "sigma_z",
            KrausOp::Proj00 => "proj_00",
            KrausOp::Proj11 => "proj_11",
            KrausOp::Proj01 => "proj_01",
            KrausOp::Proj10 => "proj_10",
            KrausOp::Custom(_) => "matrix",
        }
    }

    fn from_label(s: &str) -> Option<Self> {
        Some(match s {
            "identity" => KrausOp::Identity,
            "sigma_x" => KrausOp::SigmaX,
            "sigma_y" => KrausOp::SigmaY,
            "sigma_z" => KrausOp::SigmaZ,
            "proj_00" => KrausOp::Proj00,
            "proj_11" => KrausOp::Proj11,
            "proj_01" => KrausOp::Proj01,
            "proj_10" => KrausOp::Proj10,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TermRepr", into = "TermRepr")]
pub struct Term {
    pub op: KrausOp,
    pub weight: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TermRepr {
    Named {
        op: String,
        weight: f64,
    },
    Matrix {
        #[serde(with = "matrix_serde")]
        matrix: CMatrix,
        weight: f64,
    },
}

impl From<Term> for TermRepr {
    fn from(t: Term) -> Self {
        match t.op {
            KrausOp::Custom(matrix) => TermRepr::Matrix { matrix, weight: t.weight },
            op => TermRepr::Named { op: op.label().to_string(), weight: t.weight },
        }
    }
}

impl TryFrom<TermRepr> for Term {
    type Error = String;

    fn try_from(r: TermRepr) -> Result<Self, String> {
        match r {
            TermRepr::Named { op, weight } => {
                let op = KrausOp::from_label(&op).ok_or_else(|| format!("unknown operator {op:?}"))?;
                Ok(Term { op, weight })
            }
            TermRepr::Matrix { matrix, weight } => Ok(Term { op: KrausOp::Custom(matrix), weight }),
        }
    }
}

impl Term {
    pub fn new(op: KrausOp, weight: f64) -> Self {
        Term { op, weight }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Term>", into = "Vec<Term>")]
pub struct SignedDecomposition {
    terms: Vec<Term>,
}

impl TryFrom<Vec<Term>> for SignedDecomposition {
    type Error = DecompError;

    fn try_from(terms: Vec<Term>) -> Result<Self, DecompError> {
        SignedDecomposition::new(terms)
    }
}

impl From<SignedDecomposition> for Vec<Term> {
    fn from(d: SignedDecomposition) -> Self {
        d.terms
    }
}

impl SignedDecomposition {
    /// Validates shapes and weights; trace preservation is checked on use.
    pub fn new(terms: Vec<Term>) -> Result<Self, DecompError> {
        for t in &terms {
            if !t.weight.is_finite() {
                return Err(DecompError::BadTerm("non-finite weight".into()));
            }
            if let KrausOp::Custom(m) = &t.op {
                if m.shape() != (2, 2) || !numkernel::is_finite(m) {
                    return Err(DecompError::BadTerm("custom operator must be a finite 2x2 matrix".into()));
                }
            }
        }
        if !terms.iter().any(|t| t.weight > 0.0) {
            return Err(DecompError::NoPositiveWeight);
        }
        Ok(SignedDecomposition { terms })
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn weights(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.weight).collect()
    }

    /// `Σ|p_i|`: total bench time in units of ΔT.
    pub fn overhead(&self) -> f64 {
        self.terms.iter().map(|t| t.weight.abs()).sum()
    }

    fn defect_matrix(&self) -> CMatrix {
        let sum = self.terms.iter().fold(CMatrix::zeros(2, 2), |acc, t| {
            let m = t.op.matrix();
            acc + m.adjoint() * m * c(t.weight, 0.0)
        });
        identity(2) - sum
    }

    /// Max-abs entry of `Σ p M†M − I`.
    pub fn trace_defect(&self) -> f64 {
        max_abs(&self.defect_matrix())
    }

    fn ensure_trace_preserving(&self) -> Result<(), DecompError> {
        let d = self.trace_defect();
        if d > TRACE_TOL {
            Err(DecompError::NotTracePreserving(d))
        } else {
            Ok(())
        }
    }

    fn apply_matrix(&self, m: &CMatrix) -> CMatrix {
        self.terms.iter().fold(CMatrix::zeros(2, 2), |acc, t| {
            let k = t.op.matrix();
            acc + &k * m * k.adjoint() * c(t.weight, 0.0)
        })
    }

    /// Same map acting on mode 1 of a two-photon state.
    pub fn apply_mode1(&self, rho: &DensityMatrix) -> Result<DensityMatrix, DecompError> {
        self.ensure_trace_preserving()?;
        if rho.dim() != 4 {
            return Err(StateError::WrongDim { expected: 4, actual: rho.dim() }.into());
        }
        let out = self.terms.iter().fold(CMatrix::zeros(4, 4), |acc, t| {
            let k = crate::channels::lift_to_mode1(&t.op.matrix());
            acc + &k * rho.matrix() * k.adjoint() * c(t.weight, 0.0)
        });
        Ok(DensityMatrix::new(hermitize(&out))?)
    }
}

/// `(1−λ)ρ + λ/3 Σ σρσ` as four nonnegative terms.
pub fn dp_decomposition(lambda: f64) -> Result<SignedDecomposition, DecompError> {
    check_unit("lambda", lambda)?;
    if lambda > DP_FULL_MIX {
        log::warn!("depolarizing lambda = {lambda} exceeds 3/4 (over-depolarized)");
    }
    let w = lambda / 3.0;
    SignedDecomposition::new(vec![
        Term::new(KrausOp::Identity, 1.0 - lambda),
        Term::new(KrausOp::SigmaX, w),
        Term::new(KrausOp::SigmaY, w),
        Term::new(KrausOp::SigmaZ, w),
    ])
}

pub fn is_over_depolarized(lambda: f64) -> bool {
    lambda > DP_FULL_MIX
}

/// Five-term GAD decomposition over `{I, |0⟩⟨0|, |1⟩⟨1|, |0⟩⟨1|, |1⟩⟨0|}`.
/// The `|0⟩⟨0|` weight `1 − λ + λγ − √(1−λ)` is negative whenever
/// `√(1−λ) > 1 − λ + λγ`.
pub fn gad_decomposition(lambda: f64, gamma: f64) -> Result<SignedDecomposition, DecompError> {
    check_unit("lambda", lambda)?;
    check_unit("gamma", gamma)?;
    let s = (1.0 - lambda).sqrt();
    let lg = lambda * gamma;
    SignedDecomposition::new(vec![
        Term::new(KrausOp::Identity, s),
        Term::new(KrausOp::Proj00, 1.0 - lambda + lg - s),
        Term::new(KrausOp::Proj11, 1.0 - lg - s),
        Term::new(KrausOp::Proj01, lg),
        Term::new(KrausOp::Proj10, lambda - lg),
    ])
}

pub fn apply_signed(d: &SignedDecomposition, rho: &DensityMatrix) -> Result<DensityMatrix, DecompError> {
    d.ensure_trace_preserving()?;
    if rho.dim() != 2 {
        return Err(StateError::WrongDim { expected: 2, actual: rho.dim() }.into());
    }
    Ok(DensityMatrix::new(hermitize(&d.apply_matrix(rho.matrix())))?)
}

const REFIT_TOL: f64 = 1e-12;

/// Drops a term and restores trace preservation.
///
/// The lost weight `D = I − Σ p M†M` is pushed back into existing terms: an
/// identity term absorbs `D ∝ I`; otherwise the projector `|k⟩⟨k|` absorbs
/// `D_kk`. The re-fit fails if `D` has coherences, if the needed term is
/// missing, or if the result is not completely positive.
pub fn reduce(d: &SignedDecomposition, drop: usize) -> Result<SignedDecomposition, DecompError> {
    if drop >= d.terms.len() {
        return Err(DecompError::NoSuchTerm { index: drop, len: d.terms.len() });
    }
    let mut terms = d.terms.clone();
    terms.remove(drop);
    let mut out = SignedDecomposition { terms };
    let defect = out.defect_matrix();
    if defect[(0, 1)].norm() > REFIT_TOL || defect[(1, 0)].norm() > REFIT_TOL {
        return Err(DecompError::Unsatisfiable("defect has off-diagonal entries".into()));
    }
    let (d0, d1) = (defect[(0, 0)].re, defect[(1, 1)].re);
    let find = |op: &KrausOp, terms: &[Term]| terms.iter().position(|t| &t.op == op);
    if (d0 - d1).abs() <= REFIT_TOL && (d0.abs() > REFIT_TOL) && find(&KrausOp::Identity, &out.terms).is_some() {
        let i = find(&KrausOp::Identity, &out.terms).expect("checked");
        out.terms[i].weight += d0;
    } else {
        for (dk, op) in [(d0, KrausOp::Proj00), (d1, KrausOp::Proj11)] {
            if dk.abs() <= REFIT_TOL {
                continue;
            }
            let i = find(&op, &out.terms)
                .ok_or_else(|| DecompError::Unsatisfiable(format!("no {} term to absorb the defect", op.label())))?;
            out.terms[i].weight += dk;
        }
    }
    if !out.terms.iter().any(|t| t.weight > 0.0) {
        return Err(DecompError::NoPositiveWeight);
    }
    if choi_min_eigenvalue(|m| out.apply_matrix(m)) < -TRACE_TOL {
        return Err(DecompError::Unsatisfiable("re-fitted map is not completely positive".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub duration: f64,
    pub sign: i8,
}

/// Acquisition schedule: slot `i` runs for `|p_i|·ΔT` seconds and its
/// counts are added (`sign = +1`) or subtracted (`sign = −1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimePartition {
    pub total: f64,
    pub slots: Vec<Slot>,
}

impl TimePartition {
    /// `sign·Δt_i/ΔT` for each slot.
    pub fn weights(&self) -> Vec<f64> {
        self.slots.iter().map(|s| f64::from(s.sign) * s.duration / self.total).collect()
    }

    /// Total time on the bench, `Σ Δt_i`.
    pub fn bench_time(&self) -> f64 {
        self.slots.iter().map(|s| s.duration).sum()
    }

    pub fn active_slots(&self) -> impl Iterator<Item = (usize, &Slot)> {
        self.slots.iter().enumerate().filter(|(_, s)| s.duration > 0.0)
    }
}

pub fn to_partition(d: &SignedDecomposition, total: f64) -> Result<TimePartition, DecompError> {
    if !(total.is_finite() && total > 0.0) {
        return Err(DecompError::OutOfRange { name: "dt", value: total });
    }
    let slots = d
        .terms
        .iter()
        .map(|t| Slot { duration: t.weight.abs() * total, sign: if t.weight < 0.0 { -1 } else { 1 } })
        .collect();
    Ok(TimePartition { total, slots })
}

/// Largest entrywise deviation between the signed sum and `ch` over the six
/// axis states and `n_states` seeded random states.
pub fn verify_against(d: &SignedDecomposition, ch: &KrausChannel, n_states: usize, seed: u64) -> Result<f64, DecompError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let axes = [[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, -1.0]];
    let mut inputs: Vec<DensityMatrix> =
        axes.iter().map(|a| states::bloch_to_density(states::BlochVector::new(a[0], a[1], a[2])).expect("unit vector")).collect();
    inputs.extend((0..n_states).map(|_| random_state(2, 2, &mut rng)));
    let mut worst = 0.0f64;
    for rho in &inputs {
        let a = apply_signed(d, rho)?;
        let b = ch.apply(rho)?;
        worst = worst.max(numkernel::max_abs_diff(a.matrix(), b.matrix()));
    }
    Ok(worst)
}
