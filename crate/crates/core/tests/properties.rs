use nalgebra::Vector3;
use proptest::prelude::*;
use qchan_core::channels::{
    builtin_channel, canonical_form, random_cptp_channel, AffineRepresentation, BuiltinChannel, ChannelSpec,
};
use qchan_core::decomposition::{apply_signed, dp_decomposition, gad_decomposition, to_partition, SignedDecomposition};
use qchan_core::numkernel::{c, hermitian_eig, identity, kron, max_abs_diff, CMatrix, RealMatrix3};
use qchan_core::optics::{apply_sequence, compile_kraus, compose, element_matrix, ElementSequence, OpticalElement};
use qchan_core::states::{
    bell_state, bloch_to_density, concurrence, density_to_bloch, fidelity, purity, random_state, sigma_x, sigma_y,
    sigma_z, BellKind, BlochVector, DensityMatrix,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn state(dim: usize, rank: usize, seed: u64) -> DensityMatrix {
    random_state(dim, rank, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn local_unitary(seed: u64) -> CMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = qchan_core::channels::haar_unitary(2, &mut rng);
    let b = qchan_core::channels::haar_unitary(2, &mut rng);
    kron(&a, &b)
}

fn unit() -> impl Strategy<Value = f64> {
    0.0..=1.0f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn eigendecomposition_reconstructs(entries in prop::collection::vec(-1.0..1.0f64, 32), n in 2usize..=4) {
        let a = CMatrix::from_fn(n, n, |i, j| c(entries[i * 4 + j], entries[16 + i * 4 + j]));
        let h = (&a + a.adjoint()) * c(0.5, 0.0);
        let eig = hermitian_eig(&h, 1e-9).unwrap();
        prop_assert!(max_abs_diff(&eig.reconstruct_with(|l| l), &h) < 1e-10);
        prop_assert!(eig.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn bloch_round_trip(x in -1.0..1.0f64, y in -1.0..1.0f64, z in -1.0..1.0f64) {
        let r = BlochVector::new(x, y, z);
        prop_assume!(r.norm() <= 1.0);
        let back = density_to_bloch(&bloch_to_density(r).unwrap()).unwrap();
        prop_assert!((back.x - x).abs() < 1e-12 && (back.y - y).abs() < 1e-12 && (back.z - z).abs() < 1e-12);
    }

    #[test]
    fn fidelity_symmetric_and_bounded(s1 in any::<u64>(), s2 in any::<u64>(), r1 in 1usize..=4, r2 in 1usize..=4) {
        let (a, b) = (state(4, r1, s1), state(4, r2, s2));
        let f = fidelity(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!((f - fidelity(&b, &a).unwrap()).abs() < 1e-8);
        prop_assert!((fidelity(&a, &a).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn entanglement_invariants(seed in any::<u64>(), rank in 1usize..=4, u in any::<u64>()) {
        let rho = state(4, rank, seed);
        let p = purity(&rho);
        prop_assert!((0.25 - 1e-12..=1.0 + 1e-12).contains(&p));
        let cval = concurrence(&rho).unwrap();
        prop_assert!((0.0..=1.0).contains(&cval));
        let moved = rho.conjugated(&local_unitary(u));
        prop_assert!((concurrence(&moved).unwrap() - cval).abs() < 1e-8);
        prop_assert!((purity(&moved) - p).abs() < 1e-12);
    }

    #[test]
    fn random_channels_are_cptp(seed in any::<u64>(), k in 1usize..=4, s in any::<u64>()) {
        let ch = random_cptp_channel(k, seed).unwrap();
        prop_assert!(ch.completeness_defect() < 1e-10);
        let out = ch.apply(&state(2, 2, s)).unwrap();
        prop_assert!((qchan_core::numkernel::trace(out.matrix()).re - 1.0).abs() < 1e-10);
        prop_assert!(*out.eigenvalues().last().unwrap() >= -1e-9);
        prop_assert!(canonical_form(&ch.to_affine().unwrap()).fa_check().is_satisfied());
    }

    #[test]
    fn canonical_form_reconstructs(t in prop::collection::vec(-1.0..1.0f64, 9), tau in prop::collection::vec(-1.0..1.0f64, 3)) {
        let a = AffineRepresentation { t: RealMatrix3::from_row_slice(&t), tau: Vector3::from_column_slice(&tau) };
        let f = canonical_form(&a);
        prop_assert!((f.distortion() - a.t).abs().max() < 1e-9);
        prop_assert!((f.o1.determinant() - 1.0).abs() < 1e-9);
        prop_assert!((f.o2.determinant() - 1.0).abs() < 1e-9);
        prop_assert!((f.o1 * f.tau - a.tau).abs().max() < 1e-9);
    }

    #[test]
    fn gad_signed_sum_stays_physical(lambda in unit(), gamma in unit(), seed in any::<u64>()) {
        let d = gad_decomposition(lambda, gamma).unwrap();
        let p = d.weights();
        prop_assert!((p[0] + p[1] + p[4] - 1.0).abs() < 1e-12);
        prop_assert!((p[0] + p[2] + p[3] - 1.0).abs() < 1e-12);
        let s = (1.0 - lambda).sqrt();
        prop_assert_eq!(p[1] < 0.0, s > 1.0 - lambda + lambda * gamma);
        let rho = state(2, 1, seed);
        let out = apply_signed(&d, &rho).unwrap();
        prop_assert!(*out.eigenvalues().last().unwrap() >= -1e-9);
        let want = builtin_channel(BuiltinChannel::Gad { lambda, gamma }).unwrap().apply(&rho).unwrap();
        prop_assert!(max_abs_diff(out.matrix(), want.matrix()) < 1e-12);
    }

    #[test]
    fn dp_affine_contraction(lambda in unit()) {
        let d = dp_decomposition(lambda).unwrap();
        // affine form of the signed sum via the six axis states
        let mut t = RealMatrix3::zeros();
        for k in 0..3 {
            let mut v = [0.0; 3];
            v[k] = 1.0;
            let plus = density_to_bloch(&apply_signed(&d, &bloch_to_density(BlochVector::new(v[0], v[1], v[2])).unwrap()).unwrap()).unwrap();
            let minus = density_to_bloch(&apply_signed(&d, &bloch_to_density(BlochVector::new(-v[0], -v[1], -v[2])).unwrap()).unwrap()).unwrap();
            t.set_column(k, &Vector3::new((plus.x - minus.x) / 2.0, (plus.y - minus.y) / 2.0, (plus.z - minus.z) / 2.0));
        }
        let cval = 1.0 - 4.0 * lambda / 3.0;
        prop_assert!((t - RealMatrix3::identity() * cval).abs().max() < 1e-12);
    }

    #[test]
    fn partition_round_trip(lambda in unit(), gamma in unit(), total in 0.1..100.0f64) {
        for d in [gad_decomposition(lambda, gamma).unwrap(), dp_decomposition(lambda).unwrap()] {
            let p = to_partition(&d, total).unwrap();
            for (w, back) in d.weights().iter().zip(p.weights()) {
                prop_assert!((w - back).abs() < 1e-12);
            }
            prop_assert!((p.bench_time() - total * d.overhead()).abs() < 1e-9 * total);
        }
    }

    #[test]
    fn wave_plates_unitary_polarizers_idempotent(deg in -360.0..360.0f64) {
        for e in [OpticalElement::hwp_deg(deg), OpticalElement::qwp_deg(deg)] {
            let m = element_matrix(&e);
            prop_assert!(max_abs_diff(&(m.adjoint() * &m), &identity(2)) < 1e-12);
        }
        let p = element_matrix(&OpticalElement::polarizer_deg(deg));
        prop_assert!(max_abs_diff(&(&p * &p), &p) < 1e-12);
    }

    #[test]
    fn transmissivity_bounds(angles in prop::collection::vec(-180.0..180.0f64, 1..4), kinds in prop::collection::vec(0u8..3, 3), seed in any::<u64>()) {
        let seq: ElementSequence = angles.iter().zip(&kinds).map(|(&a, &k)| match k {
            0 => OpticalElement::hwp_deg(a),
            1 => OpticalElement::qwp_deg(a),
            _ => OpticalElement::polarizer_deg(a),
        }).collect();
        let rho = state(4, 2, seed);
        if let Ok((out, t)) = apply_sequence(&seq, &rho) {
            prop_assert!((0.0..=1.0).contains(&t));
            prop_assert!((qchan_core::numkernel::trace(out.matrix()).re - 1.0).abs() < 1e-10);
            if kinds.iter().take(seq.len()).all(|&k| k < 2) {
                prop_assert!((t - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn compiled_sequences_match_up_to_phase(which in 0usize..8, scale in 0.1..5.0f64, phase in 0.0..std::f64::consts::TAU) {
        let unit = |i: usize, j: usize| {
            let mut m = CMatrix::zeros(2, 2);
            m[(i, j)] = c(1.0, 0.0);
            m
        };
        let ops = [identity(2), sigma_x(), sigma_y(), sigma_z(), unit(0, 0), unit(1, 1), unit(0, 1), unit(1, 0)];
        let m = &ops[which] * c(scale * phase.cos(), scale * phase.sin());
        let a = compose(&compile_kraus(&m).unwrap());
        let (pa, pm) = (&a * a.adjoint(), &m * m.adjoint());
        let na = qchan_core::numkernel::trace(&pa).re;
        let nm = qchan_core::numkernel::trace(&pm).re;
        // map-level comparison on the full operator space
        for probe in [identity(2), sigma_x(), sigma_y(), sigma_z()] {
            let lhs = &a * &probe * a.adjoint() / c(na, 0.0);
            let rhs = &m * &probe * m.adjoint() / c(nm, 0.0);
            prop_assert!(max_abs_diff(&lhs, &rhs) < 1e-12);
        }
    }

    #[test]
    fn json_round_trips(lambda in unit(), gamma in unit(), seed in any::<u64>()) {
        let spec = ChannelSpec::Gad { lambda, gamma };
        let back: ChannelSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        prop_assert_eq!(&back, &spec);
        let ch = random_cptp_channel(3, seed).unwrap();
        let kraus = ChannelSpec::from_channel(&ch);
        let back: ChannelSpec = serde_json::from_str(&serde_json::to_string(&kraus).unwrap()).unwrap();
        prop_assert_eq!(back.build().unwrap(), ch);
        let d = gad_decomposition(lambda, gamma).unwrap();
        let back: SignedDecomposition = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        prop_assert_eq!(back, d);
        let rho = state(4, 2, seed);
        let back: DensityMatrix = serde_json::from_str(&serde_json::to_string(&rho).unwrap()).unwrap();
        prop_assert_eq!(back, rho);
    }
}

#[test]
fn werner_concurrence_threshold() {
    for i in 0..=100 {
        let v = i as f64 / 100.0;
        let rho = qchan_core::states::werner_state(v, BellKind::PhiMinus).unwrap();
        let cval = concurrence(&rho).unwrap();
        assert!((cval - ((3.0 * v - 1.0) / 2.0).max(0.0)).abs() < 1e-9);
    }
    assert!((purity(&bell_state(BellKind::PsiPlus)) - 1.0).abs() < 1e-15);
}
