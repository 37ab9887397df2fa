//! Two-qubit state reconstruction from the 36 analyzer settings.

use super::{scaled, CombinedCount, ExperimentError, MeasurementSetting};
use crate::numkernel::{c, hermitian_eig, hermitize, identity, kron, CMatrix};
use crate::states::{pauli_basis, DensityMatrix};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub const MLE_MAX_ITER: usize = 2000;
pub const MLE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    LinearInversion,
    Mle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographyResult {
    pub rho: DensityMatrix,
    pub method: Method,
    /// Smallest eigenvalue before projection onto the state space.
    pub min_eigenvalue: f64,
    pub iterations: usize,
    /// Log-likelihood after each accepted step (MLE only).
    pub log_likelihood: Vec<f64>,
}

fn pauli_products() -> Vec<CMatrix> {
    let p = pauli_basis();
    let mut out = Vec::with_capacity(16);
    for a in &p {
        for b in &p {
            out.push(kron(a, b));
        }
    }
    out
}

fn parse_settings(data: &[CombinedCount]) -> Result<Vec<MeasurementSetting>, ExperimentError> {
    let mut seen = std::collections::HashSet::new();
    data.iter()
        .map(|d| {
            if !(d.value.is_finite() && d.variance.is_finite()) {
                return Err(ExperimentError::BadData(format!("non-finite value for {}", d.label)));
            }
            let s = MeasurementSetting::parse(&d.label).ok_or_else(|| ExperimentError::UnknownSetting(d.label.clone()))?;
            if !seen.insert(s) {
                return Err(ExperimentError::BadData(format!("duplicate setting {}", d.label)));
            }
            Ok(s)
        })
        .collect()
}

/// Least-squares inversion onto `σ_i ⊗ σ_j`, then projection onto the state
/// space by clipping negative eigenvalues.
pub fn reconstruct_linear(data: &[CombinedCount]) -> Result<TomographyResult, ExperimentError> {
    let settings = parse_settings(data)?;
    let basis = pauli_products();
    let projectors: Vec<CMatrix> = settings.iter().map(|s| s.projector()).collect();
    let design = DMatrix::from_fn(data.len(), 16, |s, k| crate::numkernel::trace(&(&projectors[s] * &basis[k])).re / 4.0);
    let rhs = DVector::from_iterator(data.len(), data.iter().map(|d| d.value));
    let svd = design.svd(true, true);
    let cutoff = 1e-10 * svd.singular_values.max();
    let rank = svd.rank(cutoff);
    if rank < 16 {
        return Err(ExperimentError::DegenerateSystem(rank));
    }
    let coef = svd.solve(&rhs, cutoff).map_err(|e| ExperimentError::BadData(e.to_string()))?;
    let raw = hermitize(&basis.iter().zip(coef.iter()).fold(CMatrix::zeros(4, 4), |acc, (b, &r)| acc + scaled(b, r / 4.0)));
    let tr = coef[0];
    if !(tr > 0.0) {
        return Err(ExperimentError::BadData(format!("reconstructed trace {tr:.3e} is not positive")));
    }
    let eig = hermitian_eig(&(raw / c(tr, 0.0)), f64::INFINITY).map_err(crate::states::StateError::from)?;
    let min_eigenvalue = *eig.values.last().expect("4 eigenvalues");
    let clipped = eig.reconstruct_with(|l| l.max(0.0));
    let rho = DensityMatrix::from_unnormalized(hermitize(&clipped))?;
    Ok(TomographyResult { rho, method: Method::LinearInversion, min_eigenvalue, iterations: 0, log_likelihood: Vec::new() })
}

/// Lower-triangular `T` with real diagonal: 4 + 2·6 = 16 real parameters.
const TRIANGLE: [(usize, usize); 6] = [(1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2)];

fn unpack(x: &DVector<f64>) -> CMatrix {
    let mut t = CMatrix::zeros(4, 4);
    for i in 0..4 {
        t[(i, i)] = c(x[i], 0.0);
    }
    for (k, &(a, b)) in TRIANGLE.iter().enumerate() {
        t[(a, b)] = c(x[4 + 2 * k], x[5 + 2 * k]);
    }
    t
}

fn pack(t: &CMatrix) -> DVector<f64> {
    let mut x = DVector::zeros(16);
    for i in 0..4 {
        x[i] = t[(i, i)].re;
    }
    for (k, &(a, b)) in TRIANGLE.iter().enumerate() {
        x[4 + 2 * k] = t[(a, b)].re;
        x[5 + 2 * k] = t[(a, b)].im;
    }
    x
}

struct Model<'a> {
    projectors: Vec<CMatrix>,
    data: &'a [CombinedCount],
}

impl Model<'_> {
    fn residuals(&self, t: &CMatrix) -> DVector<f64> {
        let tt = t * t.adjoint();
        DVector::from_iterator(
            self.data.len(),
            self.projectors.iter().zip(self.data).map(|(p, d)| {
                let pred = crate::numkernel::trace(&(p * &tt)).re;
                (pred - d.value) / d.variance.sqrt()
            }),
        )
    }

    fn jacobian(&self, t: &CMatrix) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.data.len(), 16);
        for (s, (p, d)) in self.projectors.iter().zip(self.data).enumerate() {
            let tp = t.adjoint() * p;
            let w = 2.0 / d.variance.sqrt();
            for i in 0..4 {
                j[(s, i)] = w * tp[(i, i)].re;
            }
            for (k, &(a, b)) in TRIANGLE.iter().enumerate() {
                let z = tp[(b, a)];
                j[(s, 4 + 2 * k)] = w * z.re;
                j[(s, 5 + 2 * k)] = w * (c(0.0, 1.0) * z).re;
            }
        }
        j
    }
}

fn chi2(r: &DVector<f64>) -> f64 {
    r.norm_squared()
}

/// Maximum likelihood under a Gaussian approximation to the count noise,
/// with `ρ = T T† / tr(T T†)`. Levenberg–Marquardt steps are only accepted
/// when they raise the likelihood.
pub fn reconstruct_mle(data: &[CombinedCount], max_iter: usize, tol: f64) -> Result<TomographyResult, ExperimentError> {
    let settings = parse_settings(data)?;
    if let Some(d) = data.iter().find(|d| !(d.variance > 0.0)) {
        return Err(ExperimentError::BadData(format!("variance for {} must be positive", d.label)));
    }
    let linear = reconstruct_linear(data)?;
    let intensity = {
        let total: f64 = data.iter().map(|d| d.value).sum();
        let per_basis = total * 36.0 / (9.0 * data.len() as f64);
        if per_basis > 0.0 { per_basis } else { 1.0 }
    };
    let start = linear.rho.matrix() * c(0.9, 0.0) + identity(4) * c(0.1 / 4.0, 0.0);
    let chol = (hermitize(&start) * c(intensity, 0.0)).cholesky().ok_or_else(|| ExperimentError::BadData("start point not positive".into()))?;
    let model = Model { projectors: settings.iter().map(|s| s.projector()).collect(), data };

    let mut x = pack(&chol.l());
    let mut res = model.residuals(&unpack(&x));
    let mut cost = chi2(&res);
    let mut history = vec![-cost / 2.0];
    let mut mu = 1e-3;
    let finish = |x: &DVector<f64>, iterations: usize, history: Vec<f64>| -> Result<TomographyResult, ExperimentError> {
        let t = unpack(x);
        let rho = DensityMatrix::from_unnormalized(hermitize(&(&t * t.adjoint())))?;
        let min_eigenvalue = *rho.eigenvalues().last().expect("4 eigenvalues");
        Ok(TomographyResult { rho, method: Method::Mle, min_eigenvalue, iterations, log_likelihood: history })
    };

    for iter in 1..=max_iter {
        let t = unpack(&x);
        let jac = model.jacobian(&t);
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &res;
        let mut damped = jtj.clone();
        for i in 0..16 {
            damped[(i, i)] += mu * (jtj[(i, i)] + 1e-12);
        }
        let step = match damped.cholesky() {
            Some(ch) => ch.solve(&(-&grad)),
            None => {
                mu *= 4.0;
                continue;
            }
        };
        let x_new = &x + step;
        let res_new = model.residuals(&unpack(&x_new));
        let cost_new = chi2(&res_new);
        if cost_new < cost {
            let gain = (cost - cost_new) / 2.0;
            x = x_new;
            res = res_new;
            cost = cost_new;
            history.push(-cost / 2.0);
            mu = (mu / 3.0).max(1e-15);
            if gain < tol {
                return finish(&x, iter, history);
            }
        } else {
            mu *= 4.0;
            if mu > 1e16 {
                return finish(&x, iter, history);
            }
        }
    }
    let best = finish(&x, max_iter, history)?;
    Err(ExperimentError::NoConvergence { iterations: max_iter, best: Box::new(best) })
}

#[cfg(test)]
mod tests {
    use super::super::{simulate_tomography, tomography_settings, CountMode};
    use super::*;
    use crate::numkernel::max_abs_diff;
    use crate::states::{bell_state, fidelity, random_state, BellKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn noiseless_linear_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for rank in 1..=4 {
            let rho = random_state(4, rank, &mut rng);
            let data = simulate_tomography(&rho, 1e4, 10.0, CountMode::Noiseless, 0).unwrap();
            let r = reconstruct_linear(&data).unwrap();
            assert!(max_abs_diff(r.rho.matrix(), rho.matrix()) < 1e-10);
        }
    }

    #[test]
    fn degenerate_design() {
        let rho = bell_state(BellKind::PhiMinus);
        let data = simulate_tomography(&rho, 1e4, 10.0, CountMode::Noiseless, 0).unwrap();
        let partial: Vec<_> = data.into_iter().filter(|d| !d.label.contains('R') && !d.label.contains('L')).collect();
        assert!(matches!(reconstruct_linear(&partial), Err(ExperimentError::DegenerateSystem(r)) if r < 16));
    }

    #[test]
    fn bad_labels() {
        let rho = bell_state(BellKind::PhiMinus);
        let mut data = simulate_tomography(&rho, 1e4, 10.0, CountMode::Noiseless, 0).unwrap();
        data[3].label = "QQ".into();
        assert!(matches!(reconstruct_linear(&data), Err(ExperimentError::UnknownSetting(_))));
        data[3].label = "HH".into();
        assert!(matches!(reconstruct_linear(&data), Err(ExperimentError::BadData(_))));
    }

    #[test]
    fn noisy_bell_state_high_fidelity() {
        let rho = bell_state(BellKind::PhiMinus);
        let data = simulate_tomography(&rho, 1e4, 10.0, CountMode::Poisson, 11).unwrap();
        let r = reconstruct_linear(&data).unwrap();
        assert!(fidelity(&r.rho, &rho).unwrap() >= 0.99);
        assert!(r.min_eigenvalue < 0.0);
        assert!(*r.rho.eigenvalues().last().unwrap() >= -1e-12);
    }

    #[test]
    fn mle_matches_linear_without_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for rank in [1, 2, 4] {
            let rho = random_state(4, rank, &mut rng);
            let data = simulate_tomography(&rho, 1e4, 10.0, CountMode::Noiseless, 0).unwrap();
            let lin = reconstruct_linear(&data).unwrap();
            let mle = reconstruct_mle(&data, MLE_MAX_ITER, MLE_TOL).unwrap();
            assert!(max_abs_diff(mle.rho.matrix(), lin.rho.matrix()) < 1e-6, "rank {rank}");
        }
    }

    #[test]
    fn mle_low_counts_psd_and_monotone() {
        let rho = bell_state(BellKind::PhiMinus);
        for seed in 0..10 {
            let data = simulate_tomography(&rho, 100.0, 1.0, CountMode::Poisson, seed).unwrap();
            let r = reconstruct_mle(&data, MLE_MAX_ITER, MLE_TOL).unwrap();
            assert!(*r.rho.eigenvalues().last().unwrap() >= -1e-12);
            assert!(r.log_likelihood.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn mle_reproducible() {
        let rho = bell_state(BellKind::PsiPlus);
        let data = simulate_tomography(&rho, 1e3, 1.0, CountMode::Poisson, 3).unwrap();
        let a = reconstruct_mle(&data, MLE_MAX_ITER, MLE_TOL).unwrap();
        let b = reconstruct_mle(&data, MLE_MAX_ITER, MLE_TOL).unwrap();
        assert_eq!(a, b);
        assert_eq!(tomography_settings().len(), data.len());
    }

    #[test]
    fn mle_iteration_cap() {
        let rho = bell_state(BellKind::PsiPlus);
        let data = simulate_tomography(&rho, 1e3, 1.0, CountMode::Poisson, 3).unwrap();
        match reconstruct_mle(&data, 1, 0.0) {
            Err(ExperimentError::NoConvergence { iterations: 1, best }) => assert_eq!(best.method, Method::Mle),
            other => panic!("{other:?}"),
        }
    }
}
