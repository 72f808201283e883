use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use timebin::error::Error;
use timebin::experiments::calibration::reference_pair;
use timebin::experiments::chsh::CHSH_CSV_HEADER;
use timebin::experiments::fringe::{uniform_phases, wrap_phase};
use timebin::experiments::{
    calibrate_phase, config_settings, estimate_e, fit_fringe, run_chsh, run_visibility_scan, write_chsh_csv,
    CalibrationOptions, ChshOptions, ConfigurationId, FitWeighting, ScanMode, SimContext,
};
use timebin::montecarlo::config::{I1, I2};
use timebin::montecarlo::{CoincidenceCounts, SimulationSetup, SourceConfig};
use timebin::optics::AnalyzerConfig;
use timebin::qstate::{local_phase_average, phi_plus, white_noise_mix, CorrelationTensor, Visibility};

fn ideal_context(p: f64, seed: u64, alice_phase: f64) -> SimContext {
    let source = SourceConfig {
        pair_prob_per_pulse: p,
        seed,
        ..Default::default()
    };
    let alice = AnalyzerConfig {
        phase: alice_phase,
        ..Default::default()
    };
    SimContext::new(
        SimulationSetup::ideal(source, phi_plus()),
        alice,
        AnalyzerConfig::default(),
        0.6,
    )
    .unwrap()
}

fn no_calibration(duration_s: f64) -> ChshOptions {
    ChshOptions {
        duration_s,
        calibration: None,
        start_bob_phase: 0.0,
    }
}

#[test]
fn ideal_configuration_one_correlations() {
    let ctx = ideal_context(1e-3, 1, 0.4);
    let r = run_chsh(
        &ctx,
        ConfigurationId::new(1).unwrap(),
        &CorrelationTensor::ideal(),
        &no_calibration(4.0),
    )
    .unwrap();
    let signs = [1.0, 1.0, 1.0, -1.0];
    for (e, sign) in r.estimates.iter().zip(signs) {
        assert!(e.counts.total() > 1000);
        assert!(
            (e.e - sign * FRAC_1_SQRT_2).abs() <= 5.0 * e.sigma,
            "E = {} ± {}",
            e.e,
            e.sigma
        );
    }
    assert_eq!(r.bob_phase, -0.4);
}

#[test]
fn monte_carlo_chsh_converges_to_the_analytic_value() {
    let mut setup = SimulationSetup::ideal(
        SourceConfig {
            pair_prob_per_pulse: 1e-3,
            seed: 2,
            ..Default::default()
        },
        white_noise_mix(&phi_plus(), Visibility::new(0.93).unwrap()),
    );
    setup.noise.jitter_rad = 0.3;
    let state = local_phase_average(&setup.state, 0.3);
    let ctx = SimContext::new(setup, AnalyzerConfig::default(), AnalyzerConfig::default(), 0.6).unwrap();
    let tensor = CorrelationTensor::ideal();
    for id in ConfigurationId::ALL {
        // 4 s is 8e7 pulses
        let r = run_chsh(&ctx, id, &tensor, &no_calibration(4.0)).unwrap();
        let analytic = config_settings(id, &tensor).unwrap().chsh(&state).unwrap();
        assert!(
            (r.s.s - analytic).abs() <= 5.0 * r.s.sigma,
            "config {id}: {} ± {} vs {analytic}",
            r.s.s,
            r.s.sigma
        );
    }
}

#[test]
fn fringe_fit_is_unbiased() {
    // The mean over 100 repetitions is compared with the configured value at
    // three standard errors of that mean, so a correct fitter fails with
    // probability below 0.3%.
    let phases = uniform_phases(12);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for &(v, amplitude) in &[(0.91, 400.0), (0.6, 150.0)] {
        let fits: Vec<f64> = (0..100)
            .map(|_| {
                let counts: Vec<f64> = phases
                    .iter()
                    .map(|p| {
                        Poisson::new(amplitude * (1.0 + v * (p + 0.3).cos()))
                            .unwrap()
                            .sample(&mut rng)
                    })
                    .collect();
                fit_fringe(&phases, &counts, FitWeighting::Unweighted)
                    .unwrap()
                    .visibility
            })
            .collect();
        let mean = fits.iter().sum::<f64>() / 100.0;
        let sd = (fits.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / 99.0).sqrt();
        assert!(
            (mean - v).abs() <= 3.0 * sd / 10.0,
            "mean {mean}, sd {sd}, configured {v}"
        );
    }
}

#[test]
fn noiseless_scans_have_unit_visibility() {
    // about 1e6 coincidences per outcome curve
    let ctx = ideal_context(1e-2, 3, 0.0);
    for mode in [ScanMode::BobEquatorial, ScanMode::AliceXz] {
        let scan = run_visibility_scan(&ctx, mode, &uniform_phases(8), 10.0, 0.0, FitWeighting::Unweighted).unwrap();
        assert!((scan.visibility - 1.0).abs() < 1e-3, "{mode:?}: {}", scan.visibility);
    }
}

#[test]
fn scan_rejects_short_phase_lists() {
    let ctx = ideal_context(1e-3, 3, 0.0);
    let err = run_visibility_scan(
        &ctx,
        ScanMode::BobEquatorial,
        &[0.0, 1.0, 2.0],
        0.1,
        0.0,
        FitWeighting::Unweighted,
    );
    assert!(matches!(err, Err(Error::Domain(_))));
}

fn calibration_opts(target: f64) -> CalibrationOptions {
    CalibrationOptions {
        target_visibility: target,
        tolerance: 0.03,
        max_iterations: 5,
        integration_s: 1.0,
    }
}

#[test]
fn calibration_from_the_right_phase_stops_at_once() {
    let alice_phase = 0.9;
    let ctx = ideal_context(1e-3, 4, alice_phase);
    let tensor = CorrelationTensor::ideal();
    let quad = config_settings(ConfigurationId::new(1).unwrap(), &tensor).unwrap();
    assert_eq!(reference_pair(&quad, &tensor), (1, 1));
    let cal = calibrate_phase(&ctx, &quad, &tensor, -alice_phase, &calibration_opts(1.0), 1).unwrap();
    assert_eq!(cal.iterations, 1);
    assert!((cal.bob_phase + alice_phase).abs() < 1e-12);
    assert!((cal.target_e - FRAC_1_SQRT_2).abs() < 1e-12);
}

#[test]
fn calibration_recovers_a_quarter_turn_offset() {
    let tensor = CorrelationTensor::ideal();
    for (id, alice_phase) in [(1, 0.9), (2, -2.0), (3, 0.3), (4, 2.8)] {
        let ctx = ideal_context(1e-3, 5 + id as u64, alice_phase);
        let quad = config_settings(ConfigurationId::new(id).unwrap(), &tensor).unwrap();
        let start = -alice_phase + FRAC_PI_2;
        let cal = calibrate_phase(&ctx, &quad, &tensor, start, &calibration_opts(1.0), id as u64).unwrap();
        let error = wrap_phase(cal.bob_phase + alice_phase);
        assert!(error.abs() < 0.05, "config {id}: phase error {error}");
        assert!(cal.iterations >= 2);
    }
}

#[test]
fn calibration_fails_when_the_target_is_unreachable() {
    let mut ctx = ideal_context(1e-4, 9, 0.5);
    for d in [I1, I2] {
        ctx.setup.detectors[d].dark_prob_per_gate = 0.5;
        ctx.setup.detectors[d].efficiency = 0.05;
    }
    let tensor = CorrelationTensor::ideal();
    let quad = config_settings(ConfigurationId::new(1).unwrap(), &tensor).unwrap();
    let opts = CalibrationOptions {
        max_iterations: 3,
        ..calibration_opts(0.9)
    };
    match calibrate_phase(&ctx, &quad, &tensor, 0.0, &opts, 1) {
        Err(Error::Calibration { iterations, target, .. }) => {
            assert_eq!(iterations, 3);
            assert!((target - 0.9 * FRAC_1_SQRT_2).abs() < 1e-12);
        }
        other => panic!("expected a calibration error, got {other:?}"),
    }
}

#[test]
fn calibrated_chsh_run_is_deterministic() {
    let ctx = ideal_context(5e-4, 10, 1.3);
    let opts = ChshOptions {
        duration_s: 2.0,
        calibration: Some(calibration_opts(1.0)),
        start_bob_phase: 0.0,
    };
    let id = ConfigurationId::new(2).unwrap();
    let a = run_chsh(&ctx, id, &CorrelationTensor::ideal(), &opts).unwrap();
    let b = run_chsh(&ctx, id, &CorrelationTensor::ideal(), &opts).unwrap();
    assert_eq!(a, b);
    assert!(a.calibration.is_some());
    assert!(a.s.s > 2.6);
    let mut csv = Vec::new();
    write_chsh_csv(&mut csv, &[a]).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().next(), Some(CHSH_CSV_HEADER));
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().nth(4).unwrap().starts_with("2,2,2,"));
}

proptest! {
    #[test]
    fn correlation_estimate_is_scale_invariant(
        n in prop::array::uniform4(0u64..500),
        k in 1u64..50,
    ) {
        prop_assume!(n.iter().sum::<u64>() > 0);
        let base = estimate_e(CoincidenceCounts::new(n[0], n[1], n[2], n[3])).unwrap();
        let scaled = estimate_e(CoincidenceCounts::new(k * n[0], k * n[1], k * n[2], k * n[3])).unwrap();
        prop_assert!((base.e - scaled.e).abs() < 1e-12);
        prop_assert!((scaled.sigma - base.sigma / (k as f64).sqrt()).abs() < 1e-12);
        prop_assert!(base.e.abs() <= 1.0 && base.sigma.is_finite());
    }
}
