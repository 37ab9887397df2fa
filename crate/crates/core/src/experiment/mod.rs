//! Simulated two-photon experiment: source, polarization analysis,
//! coincidence counting, signed post-processing and state reconstruction.

mod protocol;
mod tomography;

pub use protocol::{
    dynamics_sweep, run_protocol, run_protocol_with, sudden_death, sweep_to_csv, CountMode, Family, ProtocolOptions,
    ProtocolRun, SlotRun, SweepConfig, SweepResult, SweepRow, CSV_HEADER, DEATH_THRESHOLD,
};
pub use tomography::{reconstruct_linear, reconstruct_mle, Method, TomographyResult, MLE_MAX_ITER, MLE_TOL};

use crate::decomposition::DecompError;
use crate::numkernel::{self, c, kron, CMatrix};
use crate::optics::{compose, OpticalElement, OpticsError};
use crate::states::{bell_state, werner_state, BellKind, DensityMatrix, StateError};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Coincidences per second reaching the analyzers with no optics in mode 1.
pub const DEFAULT_PAIR_RATE: f64 = 1e4;

/// Default acquisition window ΔT in seconds.
pub const DEFAULT_TOTAL_TIME: f64 = 10.0;

/// Fidelity of the bench source to |Φ⁻⟩.
pub const SOURCE_FIDELITY: f64 = 0.93;

#[derive(Debug, Error, Clone)]
pub enum ExperimentError {
    #[error("tomography design has rank {0} < 16")]
    DegenerateSystem(usize),
    #[error("maximum likelihood did not converge in {iterations} iterations")]
    NoConvergence { iterations: usize, best: Box<TomographyResult> },
    #[error("unknown measurement setting {0:?}")]
    UnknownSetting(String),
    #[error("invalid data: {0}")]
    BadData(String),
    #[error("parameter {name} = {value} is out of range")]
    OutOfRange { name: &'static str, value: f64 },
    #[error(transparent)]
    Decomposition(#[from] DecompError),
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error(transparent)]
    State(#[from] StateError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceKind {
    Ideal,
    Werner { v: f64 },
    Custom { state: DensityMatrix },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceModel {
    pub kind: SourceKind,
    pub pair_rate: f64,
}

impl SourceModel {
    pub fn new(kind: SourceKind, pair_rate: f64) -> Result<Self, ExperimentError> {
        if !(pair_rate.is_finite() && pair_rate > 0.0) {
            return Err(ExperimentError::OutOfRange { name: "rate", value: pair_rate });
        }
        match &kind {
            SourceKind::Werner { v } if !(0.0..=1.0).contains(v) => {
                return Err(ExperimentError::OutOfRange { name: "v", value: *v });
            }
            SourceKind::Custom { state } if state.dim() != 4 => {
                return Err(StateError::WrongDim { expected: 4, actual: state.dim() }.into());
            }
            _ => {}
        }
        Ok(SourceModel { kind, pair_rate })
    }

    pub fn ideal() -> Self {
        SourceModel { kind: SourceKind::Ideal, pair_rate: DEFAULT_PAIR_RATE }
    }

    /// Werner source whose root fidelity to |Φ⁻⟩ is [`SOURCE_FIDELITY`].
    pub fn calibrated() -> Self {
        SourceModel { kind: SourceKind::Werner { v: werner_visibility_for_fidelity(SOURCE_FIDELITY) }, pair_rate: DEFAULT_PAIR_RATE }
    }
}

/// Inverts `F = √(v + (1−v)/4)`.
pub fn werner_visibility_for_fidelity(f: f64) -> f64 {
    (4.0 * f * f - 1.0) / 3.0
}

pub fn source_state(m: &SourceModel) -> DensityMatrix {
    match &m.kind {
        SourceKind::Ideal => bell_state(BellKind::PhiMinus),
        SourceKind::Werner { v } => werner_state(*v, BellKind::PhiMinus).expect("validated visibility"),
        SourceKind::Custom { state } => state.clone(),
    }
}

/// Single-photon analyzer outcomes. `R = (|H⟩ − i|V⟩)/√2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    H,
    V,
    D,
    A,
    R,
    L,
}

impl Basis {
    pub const ALL: [Basis; 6] = [Basis::H, Basis::V, Basis::D, Basis::A, Basis::R, Basis::L];

    /// (quarter-wave plate, polarizer) angles in degrees.
    pub fn angles_deg(self) -> (f64, f64) {
        match self {
            Basis::H => (0.0, 0.0),
            Basis::V => (0.0, 90.0),
            Basis::D => (45.0, 45.0),
            Basis::A => (45.0, -45.0),
            Basis::R => (0.0, 45.0),
            Basis::L => (0.0, -45.0),
        }
    }

    pub fn letter(self) -> char {
        match self {
            Basis::H => 'H',
            Basis::V => 'V',
            Basis::D => 'D',
            Basis::A => 'A',
            Basis::R => 'R',
            Basis::L => 'L',
        }
    }

    fn from_letter(ch: char) -> Option<Self> {
        Basis::ALL.into_iter().find(|b| b.letter() == ch)
    }

    pub fn elements(self) -> [OpticalElement; 2] {
        let (q, p) = self.angles_deg();
        [OpticalElement::qwp_deg(q), OpticalElement::polarizer_deg(p)]
    }

    /// POVM element `A†A` of the analyzer `A = P·Q`.
    pub fn effect(self) -> CMatrix {
        let a = compose(&self.elements());
        a.adjoint() * a
    }
}

/// One of the 36 two-arm analyzer settings, mode 1 first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MeasurementSetting {
    pub arms: [Basis; 2],
}

impl MeasurementSetting {
    pub fn label(&self) -> String {
        format!("{}{}", self.arms[0].letter(), self.arms[1].letter())
    }

    pub fn parse(label: &str) -> Option<Self> {
        let mut it = label.chars();
        let a = Basis::from_letter(it.next()?)?;
        let b = Basis::from_letter(it.next()?)?;
        it.next().is_none().then_some(MeasurementSetting { arms: [a, b] })
    }

    pub fn projector(&self) -> CMatrix {
        kron(&self.arms[0].effect(), &self.arms[1].effect())
    }

    pub fn probability(&self, rho: &DensityMatrix) -> f64 {
        numkernel::trace(&(self.projector() * rho.matrix())).re.max(0.0)
    }
}

pub fn tomography_settings() -> Vec<MeasurementSetting> {
    Basis::ALL.iter().flat_map(|&a| Basis::ALL.iter().map(move |&b| MeasurementSetting { arms: [a, b] })).collect()
}

/// Raw coincidences for one setting during one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceRecord {
    pub label: String,
    pub duration: f64,
    pub counts: u64,
    /// Poisson mean the counts were drawn from.
    pub expected: f64,
    pub sign: i8,
    pub slot: usize,
}

/// Signed, exposure-normalized estimate of `tr[Π ρ]` for one setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedCount {
    pub label: String,
    pub value: f64,
    pub variance: f64,
}

/// Poisson draw with mean `rate·duration·tr[Πρ]`.
pub fn simulate_counts(
    state: &DensityMatrix,
    setting: &MeasurementSetting,
    rate: f64,
    duration: f64,
    seed: u64,
) -> Result<CoincidenceRecord, ExperimentError> {
    if !(duration.is_finite() && duration >= 0.0) {
        return Err(ExperimentError::OutOfRange { name: "duration", value: duration });
    }
    if !(rate.is_finite() && rate >= 0.0) {
        return Err(ExperimentError::OutOfRange { name: "rate", value: rate });
    }
    let mean = rate * duration * setting.probability(state);
    Ok(CoincidenceRecord { label: setting.label(), duration, counts: poisson(mean, seed), expected: mean, sign: 1, slot: 0 })
}

pub(crate) fn poisson(mean: f64, seed: u64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Poisson::new(mean).expect("positive finite mean").sample(&mut rng) as u64
}

/// Child seed for an independent stream, e.g. one sweep point or one slot.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

/// Measures all 36 settings on one state and normalizes by `rate·duration`.
/// With [`CountMode::Noiseless`] the Poisson means are used directly.
pub fn simulate_tomography(
    state: &DensityMatrix,
    rate: f64,
    duration: f64,
    mode: CountMode,
    seed: u64,
) -> Result<Vec<CombinedCount>, ExperimentError> {
    if !(rate * duration > 0.0) {
        return Err(ExperimentError::OutOfRange { name: "duration", value: duration });
    }
    let exposure = rate * duration;
    tomography_settings()
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let rec = simulate_counts(state, s, rate, duration, derive_seed(seed, k as u64))?;
            let n = match mode {
                CountMode::Poisson => rec.counts as f64,
                CountMode::Noiseless => rec.expected,
            };
            Ok(CombinedCount { label: rec.label, value: n / exposure, variance: n.max(1.0) / (exposure * exposure) })
        })
        .collect()
}

pub(crate) fn scaled(m: &CMatrix, s: f64) -> CMatrix {
    m * c(s, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::{max_abs_diff, rmatrix};
    use crate::states::{fidelity, product_ket};

    fn ket(re: &[f64], im: &[f64]) -> CMatrix {
        CMatrix::from_fn(2, 1, |i, _| c(re[i], im[i]))
    }

    #[test]
    fn source_examples() {
        let ideal = source_state(&SourceModel::ideal());
        assert_eq!(ideal, bell_state(BellKind::PhiMinus));
        let v = werner_visibility_for_fidelity(0.93);
        assert!((v - 0.8198666666666667).abs() < 1e-12);
        let f = fidelity(&source_state(&SourceModel::calibrated()), &ideal).unwrap();
        assert!((f - 0.93).abs() < 1e-12);
        let mixed = source_state(&SourceModel::new(SourceKind::Werner { v: 0.0 }, 1.0).unwrap());
        assert!((fidelity(&mixed, &ideal).unwrap() - 0.5).abs() < 1e-12);
        assert!(SourceModel::new(SourceKind::Werner { v: 1.1 }, 1.0).is_err());
        assert!(SourceModel::new(SourceKind::Ideal, 0.0).is_err());
    }

    #[test]
    fn analyzer_effects() {
        let s = 0.5f64.sqrt();
        let expected = [
            ket(&[1.0, 0.0], &[0.0, 0.0]),
            ket(&[0.0, 1.0], &[0.0, 0.0]),
            ket(&[s, s], &[0.0, 0.0]),
            ket(&[s, -s], &[0.0, 0.0]),
            ket(&[s, 0.0], &[0.0, -s]),
            ket(&[s, 0.0], &[0.0, s]),
        ];
        for (b, k) in Basis::ALL.iter().zip(expected) {
            assert!(max_abs_diff(&b.effect(), &(&k * k.adjoint())) < 1e-12, "{b:?}");
        }
    }

    #[test]
    fn setting_examples() {
        let settings = tomography_settings();
        assert_eq!(settings.len(), 36);
        assert_eq!(settings[0].label(), "HH");
        let hh = MeasurementSetting::parse("HH").unwrap();
        let p = product_ket(false, false);
        assert!(max_abs_diff(&hh.projector(), &(&p * p.adjoint())) < 1e-12);
        let rl = MeasurementSetting::parse("RL").unwrap();
        let s = 0.5f64.sqrt();
        let r = ket(&[s, 0.0], &[0.0, -s]);
        let l = ket(&[s, 0.0], &[0.0, s]);
        let want = kron(&(&r * r.adjoint()), &(&l * l.adjoint()));
        assert!(max_abs_diff(&rl.projector(), &want) < 1e-12);
        assert!(MeasurementSetting::parse("HX").is_none());
        assert!(MeasurementSetting::parse("HHH").is_none());
        // each pair of complete arm bases sums to the identity
        let total = settings.iter().map(|s| s.projector()).fold(CMatrix::zeros(4, 4), |a, b| a + b);
        assert!(max_abs_diff(&total, &scaled(&numkernel::identity(4), 9.0)) < 1e-12);
    }

    #[test]
    fn counts_examples() {
        let hh = DensityMatrix::from_ket(&product_ket(false, false)).unwrap();
        let vv = MeasurementSetting::parse("VV").unwrap();
        let hh_setting = MeasurementSetting::parse("HH").unwrap();
        assert_eq!(simulate_counts(&hh, &hh_setting, 1e4, 0.0, 1).unwrap().counts, 0);
        let r = simulate_counts(&hh, &vv, 1e4, 10.0, 1).unwrap();
        assert_eq!(r.counts, 0);
        assert!(r.expected < 1e-20);

        let phi = bell_state(BellKind::PhiMinus);
        let r = simulate_counts(&phi, &hh_setting, 1e3, 10.0, 7).unwrap();
        assert!((r.expected - 5000.0).abs() < 1e-9);
        assert!((r.counts as f64 - 5000.0).abs() < 5.0 * 5000f64.sqrt());
        assert_eq!(r, simulate_counts(&phi, &hh_setting, 1e3, 10.0, 7).unwrap());
        assert!(simulate_counts(&phi, &hh_setting, 1e3, -1.0, 7).is_err());
    }

    #[test]
    fn poisson_mean_and_variance() {
        let phi = bell_state(BellKind::PhiMinus);
        let hh = MeasurementSetting::parse("HH").unwrap();
        let draws: Vec<f64> = (0..4000).map(|s| simulate_counts(&phi, &hh, 100.0, 1.0, s).unwrap().counts as f64).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
        assert!((mean - 50.0).abs() < 5.0 * (50.0f64 / 4000.0).sqrt());
        assert!((var / 50.0 - 1.0).abs() < 0.15);
    }

    #[test]
    fn derived_seeds_differ() {
        let a: Vec<u64> = (0..100).map(|k| derive_seed(42, k)).collect();
        let mut sorted = a.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), a.len());
        assert_eq!(derive_seed(42, 3), derive_seed(42, 3));
        assert_ne!(derive_seed(42, 3), derive_seed(43, 3));
    }

    #[test]
    fn noiseless_tomography_data_are_probabilities() {
        let rho = DensityMatrix::new(rmatrix(4, 4, &[
            0.4, 0.1, 0.0, 0.05, 0.1, 0.2, 0.0, 0.0, 0.0, 0.0, 0.3, 0.0, 0.05, 0.0, 0.0, 0.1,
        ]))
        .unwrap();
        let data = simulate_tomography(&rho, 10.0, 1.0, CountMode::Noiseless, 0).unwrap();
        for (d, s) in data.iter().zip(tomography_settings()) {
            assert!((d.value - s.probability(&rho)).abs() < 1e-15);
        }
    }
}
