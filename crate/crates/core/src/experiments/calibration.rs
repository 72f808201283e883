//! Locking Bob's interferometer phase to Alice's.
//!
//! With wave plates set for `a` and `b`, the analyzers measure
//! `Rz(−φ_A)·a` and `Rz(−φ_B)·b`. For a source tensor that commutes with the
//! reflection `y → −y` the correlation depends on the phases only through
//! `δ = φ_A + φ_B`: `E(δ) = aᵀ T Rz(−δ) b = K + R·cos(δ − ψ)`. Alice's
//! phase is unknown, so Bob's phase is scanned in quadrature, the measured
//! sinusoid is compared with the expected one, and `φ_B` is set to bring
//! `δ` to zero.

use std::f64::consts::FRAC_PI_2;

use nalgebra::Vector3;
use serde::Serialize;

use super::context::{positive_duration, step_run, tags, SimContext};
use super::estimate::estimate_e;
use super::fringe::wrap_phase;
use super::settings::SettingsQuad;
use crate::error::{Error, Result};
use crate::qstate::{BlochSetting, CorrelationTensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationOptions {
    /// Visibility the source is expected to show; the target correlation is
    /// this times the ideal one.
    pub target_visibility: f64,
    /// Largest accepted deviation of the measured correlation from its target.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Integration per measurement in the first iteration; doubled after
    /// every failed iteration.
    pub integration_s: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            target_visibility: 1.0,
            tolerance: 0.05,
            max_iterations: 6,
            integration_s: 10.0,
        }
    }
}

impl CalibrationOptions {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.target_visibility) {
            return Err(Error::config("calibration.target_visibility must lie in [0, 1]"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::config("calibration.tolerance must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::config("calibration.max_iterations must be at least 1"));
        }
        positive_duration("calibration.integration_s", self.integration_s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseCalibration {
    pub bob_phase: f64,
    /// Number of verification measurements made, including the accepted one.
    pub iterations: usize,
    /// Setting pair used as the reference.
    pub pair: (usize, usize),
    pub measured_e: f64,
    pub target_e: f64,
}

/// `E(δ) = K + P·cos δ + Q·sin δ` for the ideal correlation of one pair.
fn phase_response(tensor: &CorrelationTensor, a: &BlochSetting, b: &BlochSetting) -> (f64, f64, f64) {
    let t = tensor.matrix();
    let a = a.vector();
    let b = b.vector();
    let k = a.dot(&(t * Vector3::new(0.0, 0.0, b.z)));
    let p = a.dot(&(t * Vector3::new(b.x, b.y, 0.0)));
    let q = a.dot(&(t * Vector3::new(b.y, -b.x, 0.0)));
    (k, p, q)
}

/// The setting pair whose correlation depends most strongly on `δ`; ties go
/// to the earliest pair in CHSH order.
pub fn reference_pair(quad: &SettingsQuad, tensor: &CorrelationTensor) -> (usize, usize) {
    let mut best = (SettingsQuad::INDICES[0], f64::NEG_INFINITY);
    for (i, j) in SettingsQuad::INDICES {
        let (a, b) = quad.pair(i, j);
        let (_, p, q) = phase_response(tensor, &a, &b);
        let amplitude = p.hypot(q);
        if amplitude > best.1 + 1e-12 {
            best = ((i, j), amplitude);
        }
    }
    best.0
}

/// Adjusts Bob's phase, starting from `start_bob_phase`, until the reference
/// correlation is within tolerance of `target_visibility` times its ideal
/// value at `δ = 0`.
pub fn calibrate_phase(
    ctx: &SimContext,
    quad: &SettingsQuad,
    tensor: &CorrelationTensor,
    start_bob_phase: f64,
    opts: &CalibrationOptions,
    run_tag: u64,
) -> Result<PhaseCalibration> {
    opts.validate()?;
    let (i, j) = reference_pair(quad, tensor);
    let (a, b) = quad.pair(i, j);
    let (k0, p, q) = phase_response(tensor, &a, &b);
    let target_e = opts.target_visibility * (k0 + p);
    if p.hypot(q) < 1e-9 {
        return Err(Error::DegenerateSettings(
            "no setting pair of this configuration is sensitive to the interferometer phase".into(),
        ));
    }
    let psi = q.atan2(p);

    let measure = |phase: f64, duration: f64, step: u64| -> Result<f64> {
        let (alice, bob) = ctx.analyzers(&a, &b, phase);
        let counts = ctx.measure(&alice, &bob, duration, step_run(tags::CALIBRATION, &[run_tag, step]))?;
        Ok(estimate_e(counts)?.e)
    };

    let mut phase = wrap_phase(start_bob_phase);
    let mut duration = opts.integration_s;
    let mut last_e = f64::NAN;
    let mut step = 0u64;
    for iteration in 1..=opts.max_iterations {
        last_e = measure(phase, duration, step)?;
        step += 1;
        if (last_e - target_e).abs() <= opts.tolerance {
            return Ok(PhaseCalibration {
                bob_phase: phase,
                iterations: iteration,
                pair: (i, j),
                measured_e: last_e,
                target_e,
            });
        }
        if iteration == opts.max_iterations {
            break;
        }
        // quadrature samples of E(φ_B) around the current phase
        let mut e = [last_e, 0.0, 0.0, 0.0];
        for (k, slot) in e.iter_mut().enumerate().skip(1) {
            *slot = measure(phase + k as f64 * FRAC_PI_2, duration, step)?;
            step += 1;
        }
        let cos_part = (e[0] - e[2]) / 2.0;
        let sin_part = (e[1] - e[3]) / 2.0;
        // E(φ_B) peaks at φ_B = ψ − φ_A; δ = 0 requires φ_B = −φ_A
        let peak = phase + sin_part.atan2(cos_part);
        phase = wrap_phase(peak - psi);
        duration *= 2.0;
    }
    Err(Error::Calibration {
        iterations: opts.max_iterations,
        last_e,
        target: target_e,
    })
}
