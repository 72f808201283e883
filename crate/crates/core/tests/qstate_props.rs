use std::f64::consts::SQRT_2;

use nalgebra::{Matrix4, Vector3, Vector4};
use num_complex::Complex64;
use proptest::prelude::*;

use timebin::experiments::{config_settings, ConfigurationId};
use timebin::qstate::{
    chsh_value, correlation, correlation_tensor, horodecki_max, joint_probability, local_phase_average,
    optimal_partner_settings, phi_plus, white_noise_mix, BlochSetting, CorrelationTensor, Outcome, TwoQubitState,
    Visibility,
};

fn setting() -> impl Strategy<Value = BlochSetting> {
    (-1.0f64..1.0, 0.0f64..std::f64::consts::TAU).prop_map(|(z, phi)| BlochSetting::from_angles(z.acos(), phi))
}

fn ket() -> impl Strategy<Value = Vector4<Complex64>> {
    prop::array::uniform8(-1.0f64..1.0)
        .prop_filter("nonzero", |a| a.iter().map(|x| x * x).sum::<f64>() > 1e-3)
        .prop_map(|a| Vector4::from_fn(|i, _| Complex64::new(a[2 * i], a[2 * i + 1])))
}

/// Random mixed state `Σ w_k |ψ_k⟩⟨ψ_k|` of three kets.
fn state() -> impl Strategy<Value = TwoQubitState> {
    (prop::collection::vec(ket(), 3), prop::array::uniform3(0.01f64..1.0)).prop_map(|(kets, w)| {
        let total: f64 = w.iter().sum();
        let mut rho = Matrix4::<Complex64>::zeros();
        for (k, wk) in kets.iter().zip(w) {
            let k = k / Complex64::new(k.norm(), 0.0);
            rho += k * k.adjoint() * Complex64::new(wk / total, 0.0);
        }
        TwoQubitState::new(rho).expect("valid mixture")
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn states_have_unit_trace_and_are_positive(rho in state(), v in 0.0f64..=1.0, sigma in 0.0f64..3.0) {
        for s in [rho.clone(), white_noise_mix(&rho, Visibility::new(v).unwrap()), local_phase_average(&rho, sigma)] {
            prop_assert!((s.trace() - Complex64::new(1.0, 0.0)).norm() < 1e-12);
            prop_assert!(s.min_eigenvalue() >= -1e-10);
            let pops = s.populations();
            prop_assert!(pops.iter().all(|&p| p >= -1e-12));
            prop_assert!((pops.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn probabilities_are_normalized(rho in state(), a in setting(), b in setting()) {
        let mut total = 0.0;
        for oa in Outcome::BOTH {
            for ob in Outcome::BOTH {
                let p = joint_probability(&rho, &a, &b, oa, ob).unwrap();
                prop_assert!((0.0..=1.0).contains(&p));
                total += p;
            }
        }
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pauli_expansion_matches_born_rule(rho in state(), a in setting(), b in setting()) {
        let dec = rho.pauli_decomposition();
        for oa in Outcome::BOTH {
            for ob in Outcome::BOTH {
                let born = joint_probability(&rho, &a, &b, oa, ob).unwrap();
                prop_assert!((dec.joint_probability(&a, &b, oa, ob) - born).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn correlation_is_bilinear_in_the_tensor(rho in state(), a in setting(), b in setting()) {
        let t = correlation_tensor(&rho);
        prop_assert!((t.correlation(&a, &b) - correlation(&rho, &a, &b).unwrap()).abs() < 1e-12);
        // flipping one side flips the sign
        prop_assert!((correlation(&rho, &a.flipped(), &b).unwrap() + correlation(&rho, &a, &b).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn chsh_never_exceeds_horodecki(rho in state(), a1 in setting(), a2 in setting(), b1 in setting(), b2 in setting()) {
        let s = chsh_value(&rho, &a1, &a2, &b1, &b2).unwrap();
        prop_assert!(s <= horodecki_max(&correlation_tensor(&rho)) + 1e-9);
        prop_assert!(s <= 2.0 * SQRT_2 + 1e-9);
    }

    #[test]
    fn optimal_partners_reach_the_bound_for_orthogonal_pairs(v in 0.0f64..=1.0, a1 in setting(), t in 0.0f64..std::f64::consts::TAU) {
        // a2 orthogonal to a1, rotated by t around a1
        let helper = if a1.vector().x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let u = a1.vector().cross(&helper).normalize();
        let w = a1.vector().cross(&u);
        let a2 = BlochSetting::normalized(u * t.cos() + w * t.sin()).unwrap();
        let rho = white_noise_mix(&phi_plus(), Visibility::new(v).unwrap());
        let tensor = correlation_tensor(&rho);
        if v > 1e-6 {
            let (b1, b2) = optimal_partner_settings(&tensor, &a1, &a2).unwrap();
            let s = chsh_value(&rho, &a1, &a2, &b1, &b2).unwrap();
            prop_assert!((s - 2.0 * SQRT_2 * v).abs() < 1e-9);
        }
    }

    #[test]
    fn werner_states_scale_every_configuration(v in 0.0f64..=1.0) {
        let rho = white_noise_mix(&phi_plus(), Visibility::new(v).unwrap());
        for id in ConfigurationId::ALL {
            let quad = config_settings(id, &CorrelationTensor::ideal()).unwrap();
            prop_assert!((quad.chsh(&rho).unwrap() - 2.0 * SQRT_2 * v).abs() < 1e-9);
        }
    }

    #[test]
    fn phase_averaging_only_touches_equatorial_correlations(rho in state(), sigma in 0.0f64..2.0) {
        let before = correlation_tensor(&rho);
        let after = correlation_tensor(&local_phase_average(&rho, sigma));
        let damp = (-sigma * sigma / 2.0).exp();
        for j in 0..3 {
            prop_assert!((after.matrix()[(2, j)] - before.matrix()[(2, j)]).abs() < 1e-12);
            for i in 0..2 {
                prop_assert!((after.matrix()[(i, j)] - damp * before.matrix()[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reduced_states_are_valid(rho in state()) {
        for r in [rho.reduced_alice(), rho.reduced_bob()] {
            prop_assert!((r.trace() - Complex64::new(1.0, 0.0)).norm() < 1e-12);
            prop_assert!(r[(0, 0)].re >= -1e-12 && r[(1, 1)].re >= -1e-12);
            prop_assert!(r[(0, 0)].re * r[(1, 1)].re - r[(0, 1)].norm_sqr() >= -1e-12);
        }
    }
}
