//! Signed-partition protocol and parameter sweeps.

use super::{
    derive_seed, poisson, reconstruct_linear, reconstruct_mle, source_state, tomography_settings, CoincidenceRecord,
    CombinedCount, ExperimentError, Method, SourceModel, TomographyResult, DEFAULT_TOTAL_TIME, MLE_MAX_ITER, MLE_TOL,
};
use crate::decomposition::{dp_decomposition, gad_decomposition, SignedDecomposition};
use crate::optics::{apply_mode1_operator, compile_kraus, compose, ElementSequence, OpticsError};
use crate::states::{bell_state, concurrence, fidelity, purity, BellKind, DensityMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Concurrence below this counts as zero when locating sudden death.
pub const DEATH_THRESHOLD: f64 = 1e-3;

pub const CSV_HEADER: &str = "lambda,gamma,fid_theory,fid_sim,purity_theory,purity_sim,conc_theory,conc_sim,seed";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMode {
    Poisson,
    /// Counts replaced by their expected values.
    Noiseless,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolOptions {
    pub total_time: f64,
    pub mode: CountMode,
    pub method: Method,
    pub seed: u64,
}

impl ProtocolOptions {
    pub fn new(seed: u64) -> Self {
        ProtocolOptions { total_time: DEFAULT_TOTAL_TIME, mode: CountMode::Poisson, method: Method::LinearInversion, seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRun {
    pub slot: usize,
    pub op: String,
    pub weight: f64,
    pub sign: i8,
    pub duration: f64,
    pub transmissivity: f64,
    /// `None` when the operator is not in the element table and is applied
    /// abstractly.
    pub elements: Option<ElementSequence>,
    pub records: Vec<CoincidenceRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolRun {
    pub slots: Vec<SlotRun>,
    pub combined: Vec<CombinedCount>,
    pub tomography: TomographyResult,
    pub theory: DensityMatrix,
}

pub fn run_protocol(d: &SignedDecomposition, source: &SourceModel, total_time: f64, seed: u64) -> Result<ProtocolRun, ExperimentError> {
    run_protocol_with(d, source, &ProtocolOptions { total_time, ..ProtocolOptions::new(seed) })
}

/// Runs every term for `|p_i|·ΔT`, measures all 36 settings and combines
/// them per setting as `Σ sign_i·s_i²·n_i / (rate·ΔT)`, where `s_i` is the
/// scale between the Kraus operator and its optical realization. In the
/// noiseless limit this is `Σ p_i tr[Π (M_i⊗I) ρ (M_i⊗I)†]`.
pub fn run_protocol_with(d: &SignedDecomposition, source: &SourceModel, opts: &ProtocolOptions) -> Result<ProtocolRun, ExperimentError> {
    if !(opts.total_time.is_finite() && opts.total_time > 0.0) {
        return Err(ExperimentError::OutOfRange { name: "dt", value: opts.total_time });
    }
    let rho = source_state(source);
    let theory = d.apply_mode1(&rho)?;
    let settings = tomography_settings();
    let exposure = source.pair_rate * opts.total_time;
    let mut acc = vec![(0.0f64, 0.0f64); settings.len()];
    let mut slots = Vec::with_capacity(d.terms().len());

    for (i, term) in d.terms().iter().enumerate() {
        let m = term.op.matrix();
        let (elements, a) = match compile_kraus(&m) {
            Ok(seq) => {
                let a = compose(&seq);
                (Some(seq), a)
            }
            Err(OpticsError::NotCompilable) => (None, m.clone()),
            Err(e) => return Err(e.into()),
        };
        let scale2 = m.norm_squared() / a.norm_squared();
        let sign: i8 = if term.weight < 0.0 { -1 } else { 1 };
        let duration = term.weight.abs() * opts.total_time;
        let analyzed = match apply_mode1_operator(&a, &rho) {
            Ok(pair) => Some(pair),
            Err(OpticsError::FullyBlocked(_)) => None,
            Err(e) => return Err(e.into()),
        };
        let transmissivity = analyzed.as_ref().map_or(0.0, |p| p.1);
        let mut records = Vec::with_capacity(settings.len());
        for (k, s) in settings.iter().enumerate() {
            let prob = analyzed.as_ref().map_or(0.0, |(state, _)| s.probability(state));
            let expected = source.pair_rate * duration * transmissivity * prob;
            let counts = poisson(expected, derive_seed(opts.seed, (i * settings.len() + k) as u64));
            let n = match opts.mode {
                CountMode::Poisson => counts as f64,
                CountMode::Noiseless => expected,
            };
            if duration > 0.0 {
                let w = scale2 / exposure;
                acc[k].0 += f64::from(sign) * w * n;
                acc[k].1 += w * w * n.max(1.0);
            }
            records.push(CoincidenceRecord { label: s.label(), duration, counts, expected, sign, slot: i });
        }
        slots.push(SlotRun {
            slot: i,
            op: term.op.label().to_string(),
            weight: term.weight,
            sign,
            duration,
            transmissivity,
            elements,
            records,
        });
    }

    let combined: Vec<CombinedCount> = settings
        .iter()
        .zip(&acc)
        .map(|(s, &(value, variance))| CombinedCount { label: s.label(), value, variance: variance.max(f64::MIN_POSITIVE) })
        .collect();
    let tomography = match opts.method {
        Method::LinearInversion => reconstruct_linear(&combined)?,
        Method::Mle => reconstruct_mle(&combined, MLE_MAX_ITER, MLE_TOL)?,
    };
    Ok(ProtocolRun { slots, combined, tomography, theory })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    Dp,
    Gad { gamma: f64 },
}

impl Family {
    pub fn decomposition(&self, lambda: f64) -> Result<SignedDecomposition, ExperimentError> {
        Ok(match *self {
            Family::Dp => dp_decomposition(lambda)?,
            Family::Gad { gamma } => gad_decomposition(lambda, gamma)?,
        })
    }

    /// The same point in the convention where the depolarizing Bloch
    /// contraction is `1 − λ′` (`λ′ = 4λ/3`). GAD has a single convention.
    pub fn alternate_lambda(&self, lambda: f64) -> f64 {
        match self {
            Family::Dp => 4.0 * lambda / 3.0,
            Family::Gad { .. } => lambda,
        }
    }

    fn gamma(&self) -> Option<f64> {
        match *self {
            Family::Dp => None,
            Family::Gad { gamma } => Some(gamma),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub family: Family,
    pub lambdas: Vec<f64>,
    pub source: SourceModel,
    pub total_time: f64,
    pub mode: CountMode,
    pub method: Method,
    pub seed: u64,
}

impl SweepConfig {
    /// `steps` evenly spaced points on `[0, 1]`.
    pub fn grid(steps: usize) -> Vec<f64> {
        match steps {
            0 => Vec::new(),
            1 => vec![0.0],
            n => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub gamma: Option<f64>,
    pub fid_theory: f64,
    pub fid_sim: f64,
    pub purity_theory: f64,
    pub purity_sim: f64,
    pub conc_theory: f64,
    pub conc_sim: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub family: Family,
    pub rows: Vec<SweepRow>,
    pub death_theory: Option<f64>,
    pub death_sim: Option<f64>,
    /// Death points in the `λ′ = 4λ/3` convention (depolarizing only).
    pub death_theory_alt: Option<f64>,
    pub death_sim_alt: Option<f64>,
}

/// First grid point from which concurrence stays below [`DEATH_THRESHOLD`].
pub fn sudden_death(lambdas: &[f64], conc: &[f64]) -> Option<f64> {
    let n = conc.iter().rev().take_while(|&&c| c < DEATH_THRESHOLD).count();
    (n > 0).then(|| lambdas[lambdas.len() - n])
}

/// Fidelities are taken against the channel applied to an ideal |Φ⁻⟩, so a
/// noisy source shows up in both the theory and simulated columns.
pub fn dynamics_sweep(cfg: &SweepConfig) -> Result<SweepResult, ExperimentError> {
    if let Some(&bad) = cfg.lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(ExperimentError::OutOfRange { name: "lambda", value: bad });
    }
    let ideal = bell_state(BellKind::PhiMinus);
    let rows: Vec<SweepRow> = cfg
        .lambdas
        .par_iter()
        .enumerate()
        .map(|(idx, &lambda)| {
            let d = cfg.family.decomposition(lambda)?;
            let seed = derive_seed(cfg.seed, idx as u64);
            let opts = ProtocolOptions { total_time: cfg.total_time, mode: cfg.mode, method: cfg.method, seed };
            let run = match run_protocol_with(&d, &cfg.source, &opts) {
                Err(ExperimentError::NoConvergence { iterations, best }) => {
                    log::warn!("lambda = {lambda}: likelihood fit stopped after {iterations} iterations");
                    let theory = d.apply_mode1(&source_state(&cfg.source))?;
                    ProtocolRun { slots: Vec::new(), combined: Vec::new(), tomography: *best, theory }
                }
                other => other?,
            };
            let target = d.apply_mode1(&ideal)?;
            let sim = &run.tomography.rho;
            Ok(SweepRow {
                lambda,
                gamma: cfg.family.gamma(),
                fid_theory: fidelity(&run.theory, &target)?,
                fid_sim: fidelity(sim, &target)?,
                purity_theory: purity(&run.theory),
                purity_sim: purity(sim),
                conc_theory: concurrence(&run.theory)?,
                conc_sim: concurrence(sim)?,
                seed,
            })
        })
        .collect::<Result<_, ExperimentError>>()?;
    let theory: Vec<f64> = rows.iter().map(|r| r.conc_theory).collect();
    let sim: Vec<f64> = rows.iter().map(|r| r.conc_sim).collect();
    let death_theory = sudden_death(&cfg.lambdas, &theory);
    let death_sim = sudden_death(&cfg.lambdas, &sim);
    let alt = |l: Option<f64>| match cfg.family {
        Family::Dp => l.map(|x| cfg.family.alternate_lambda(x)),
        Family::Gad { .. } => None,
    };
    Ok(SweepResult { family: cfg.family, rows, death_theory, death_sim, death_theory_alt: alt(death_theory), death_sim_alt: alt(death_sim) })
}

/// Ten significant digits, plain notation where reasonable.
fn sig10(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let e = x.abs().log10().floor() as i32;
    if (-5..10).contains(&e) {
        let s = format!("{:.*}", (9 - e).max(0) as usize, x);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.9e}")
    }
}

pub fn sweep_to_csv(result: &SweepResult) -> String {
    let mut out = String::with_capacity(64 * (result.rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &result.rows {
        let gamma = r.gamma.map(sig10).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            sig10(r.lambda),
            gamma,
            sig10(r.fid_theory),
            sig10(r.fid_sim),
            sig10(r.purity_theory),
            sig10(r.purity_sim),
            sig10(r.conc_theory),
            sig10(r.conc_sim),
            r.seed
        );
    }
    out
}
