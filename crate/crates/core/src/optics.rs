//! Jones-calculus wave plates and polarizers, and the compiler from the
//! Kraus operators used by the decompositions to mode-1 element sequences.

use crate::channels::lift_to_mode1;
use crate::numkernel::{self, c, hermitize, identity, CMatrix};
use crate::states::{DensityMatrix, StateError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Below this transmissivity a sequence is treated as opaque.
pub const BLOCK_TOL: f64 = 1e-15;

const MATCH_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpticsError {
    #[error("operator is not in the element table")]
    NotCompilable,
    #[error("sequence blocks the state (transmissivity {0:.3e})")]
    FullyBlocked(f64),
    #[error(transparent)]
    State(#[from] StateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementKind {
    HalfWave,
    QuarterWave,
    Polarizer,
}

/// A single element on mode 1. `angle` is the fast axis (wave plates) or
/// transmission axis (polarizer), in radians from horizontal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "ElementRepr", try_from = "ElementRepr")]
pub struct OpticalElement {
    pub kind: ElementKind,
    pub angle: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ElementRepr {
    Hwp { deg: f64 },
    Qwp { deg: f64 },
    Pol(PolAxis),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PolAxis {
    Named { axis: String },
    Angle { deg: f64 },
}

impl From<OpticalElement> for ElementRepr {
    fn from(e: OpticalElement) -> Self {
        let deg = e.angle.to_degrees();
        match e.kind {
            ElementKind::HalfWave => ElementRepr::Hwp { deg },
            ElementKind::QuarterWave => ElementRepr::Qwp { deg },
            ElementKind::Polarizer => {
                let named = [("H", 0.0), ("V", 90.0), ("D", 45.0), ("A", -45.0)].into_iter().find(|&(_, a)| (deg - a).abs() < 1e-12);
                ElementRepr::Pol(match named {
                    Some((axis, _)) => PolAxis::Named { axis: axis.to_string() },
                    None => PolAxis::Angle { deg },
                })
            }
        }
    }
}

impl TryFrom<ElementRepr> for OpticalElement {
    type Error = String;

    fn try_from(r: ElementRepr) -> Result<Self, String> {
        let (kind, deg) = match r {
            ElementRepr::Hwp { deg } => (ElementKind::HalfWave, deg),
            ElementRepr::Qwp { deg } => (ElementKind::QuarterWave, deg),
            ElementRepr::Pol(PolAxis::Angle { deg }) => (ElementKind::Polarizer, deg),
            ElementRepr::Pol(PolAxis::Named { axis }) => {
                let deg = match axis.as_str() {
                    "H" => 0.0,
                    "V" => 90.0,
                    "D" => 45.0,
                    "A" => -45.0,
                    other => return Err(format!("unknown polarizer axis {other:?}")),
                };
                (ElementKind::Polarizer, deg)
            }
        };
        if !deg.is_finite() {
            return Err("angle must be finite".into());
        }
        Ok(OpticalElement { kind, angle: deg.to_radians() })
    }
}

impl OpticalElement {
    pub fn hwp_deg(deg: f64) -> Self {
        OpticalElement { kind: ElementKind::HalfWave, angle: deg.to_radians() }
    }

    pub fn qwp_deg(deg: f64) -> Self {
        OpticalElement { kind: ElementKind::QuarterWave, angle: deg.to_radians() }
    }

    pub fn polarizer_deg(deg: f64) -> Self {
        OpticalElement { kind: ElementKind::Polarizer, angle: deg.to_radians() }
    }
}

fn rotation(theta: f64) -> CMatrix {
    let (s, co) = theta.sin_cos();
    numkernel::rmatrix(2, 2, &[co, -s, s, co])
}

/// Jones matrix in the `{H, V}` basis.
pub fn element_matrix(e: &OpticalElement) -> CMatrix {
    let t = e.angle;
    match e.kind {
        ElementKind::HalfWave => {
            let (s, co) = (2.0 * t).sin_cos();
            numkernel::rmatrix(2, 2, &[co, s, s, -co])
        }
        ElementKind::QuarterWave => {
            let retarder = numkernel::cmatrix(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 1.0)]);
            rotation(t) * retarder * rotation(-t)
        }
        ElementKind::Polarizer => {
            let (s, co) = t.sin_cos();
            numkernel::rmatrix(2, 2, &[co * co, co * s, co * s, s * s])
        }
    }
}

/// Ordered elements; the first element acts first.
pub type ElementSequence = Vec<OpticalElement>;

/// `E_n ⋯ E_1`.
pub fn compose(seq: &[OpticalElement]) -> CMatrix {
    seq.iter().fold(identity(2), |acc, e| element_matrix(e) * acc)
}

fn table() -> Vec<ElementSequence> {
    let hwp = OpticalElement::hwp_deg;
    let pol = OpticalElement::polarizer_deg;
    vec![
        vec![],
        vec![hwp(45.0)],
        vec![hwp(0.0), hwp(45.0)],
        vec![hwp(0.0)],
        vec![pol(0.0)],
        vec![pol(90.0)],
        vec![hwp(45.0), pol(0.0)],
        vec![hwp(45.0), pol(90.0)],
    ]
}

/// True when `a = s·e^{iφ}·b` for some `s > 0`.
pub fn proportional(a: &CMatrix, b: &CMatrix, tol: f64) -> bool {
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return false;
    }
    let overlap = a.dotc(b).norm() / (na * nb);
    overlap >= 1.0 - tol
}

/// Looks the operator up in the element table, ignoring global phase and
/// positive scale.
pub fn compile_kraus(m: &CMatrix) -> Result<ElementSequence, OpticsError> {
    if m.shape() != (2, 2) {
        return Err(OpticsError::NotCompilable);
    }
    table().into_iter().find(|seq| proportional(&compose(seq), m, MATCH_TOL)).ok_or(OpticsError::NotCompilable)
}

/// Applies `A ⊗ I` and renormalizes. Returns the output state and the
/// fraction of pairs transmitted.
pub fn apply_sequence(seq: &[OpticalElement], rho: &DensityMatrix) -> Result<(DensityMatrix, f64), OpticsError> {
    apply_mode1_operator(&compose(seq), rho)
}

pub(crate) fn apply_mode1_operator(a: &CMatrix, rho: &DensityMatrix) -> Result<(DensityMatrix, f64), OpticsError> {
    if rho.dim() != 4 {
        return Err(StateError::WrongDim { expected: 4, actual: rho.dim() }.into());
    }
    let lifted = lift_to_mode1(a);
    let out = &lifted * rho.matrix() * lifted.adjoint();
    let t = numkernel::trace(&out).re;
    if t < BLOCK_TOL {
        return Err(OpticsError::FullyBlocked(t));
    }
    Ok((DensityMatrix::new(hermitize(&out) / c(t, 0.0))?, t.min(1.0)))
}
