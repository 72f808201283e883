//! A complete CHSH measurement for one configuration.

use std::io::{self, Write};

use serde::Serialize;

use super::calibration::{calibrate_phase, CalibrationOptions, PhaseCalibration};
use super::context::{positive_duration, step_run, tags, SimContext};
use super::estimate::{estimate_e, estimate_s, CorrEstimate, SEstimate};
use super::settings::{config_settings, ConfigurationId, SettingsQuad};
use crate::error::Result;
use crate::qstate::CorrelationTensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChshOptions {
    /// Total measurement time, split evenly over the four setting pairs.
    pub duration_s: f64,
    /// `None` sets Bob's phase to exactly `−φ_A`, as if perfectly calibrated.
    pub calibration: Option<CalibrationOptions>,
    /// Bob's phase before calibration.
    pub start_bob_phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChshResult {
    pub config: u8,
    pub bob_phase: f64,
    pub calibration: Option<PhaseCalibration>,
    /// Estimates in the order `(1,1), (1,2), (2,1), (2,2)`.
    pub estimates: [CorrEstimate; 4],
    pub s: SEstimate,
}

/// Run id of the main measurement of pair `(i, j)` in configuration `id`.
pub fn chsh_run(id: ConfigurationId, i: usize, j: usize) -> u64 {
    step_run(tags::CHSH, &[id.get() as u64, i as u64, j as u64])
}

/// Bob's phase for configuration `id`: calibrated when requested, otherwise
/// the exact value `−φ_A`.
pub fn bob_phase_for(
    ctx: &SimContext,
    id: ConfigurationId,
    quad: &SettingsQuad,
    tensor: &CorrelationTensor,
    opts: &ChshOptions,
) -> Result<(f64, Option<PhaseCalibration>)> {
    match &opts.calibration {
        Some(cal) => {
            let result = calibrate_phase(ctx, quad, tensor, opts.start_bob_phase, cal, id.get() as u64)?;
            Ok((result.bob_phase, Some(result)))
        }
        None => Ok((-ctx.alice.phase, None)),
    }
}

/// Calibrates (optionally), then measures the four setting pairs of
/// configuration `id`. Bob's settings are optimal for `tensor`.
pub fn run_chsh(
    ctx: &SimContext,
    id: ConfigurationId,
    tensor: &CorrelationTensor,
    opts: &ChshOptions,
) -> Result<ChshResult> {
    positive_duration("chsh.duration_s", opts.duration_s)?;
    let quad = config_settings(id, tensor)?;
    let (bob_phase, calibration) = bob_phase_for(ctx, id, &quad, tensor, opts)?;
    let per_pair = opts.duration_s / 4.0;
    let mut estimates = Vec::with_capacity(4);
    for (i, j) in SettingsQuad::INDICES {
        let (a, b) = quad.pair(i, j);
        let (alice, bob) = ctx.analyzers(&a, &b, bob_phase);
        let counts = ctx.measure(&alice, &bob, per_pair, chsh_run(id, i, j))?;
        estimates.push(estimate_e(counts)?);
    }
    let estimates: [CorrEstimate; 4] = estimates.try_into().expect("four pairs");
    let mut s = estimate_s(&estimates[0], &estimates[1], &estimates[2], &estimates[3]);
    s.duration_s = Some(per_pair);
    Ok(ChshResult {
        config: id.get(),
        bob_phase,
        calibration,
        estimates,
        s,
    })
}

pub const CHSH_CSV_HEADER: &str = "config,i,j,E,sigma,S,sigma_S,significance";

/// One row per setting pair; the CHSH columns repeat on every row of a configuration.
pub fn write_chsh_csv<W: Write>(mut w: W, results: &[ChshResult]) -> io::Result<()> {
    writeln!(w, "{CHSH_CSV_HEADER}")?;
    for r in results {
        for ((i, j), e) in SettingsQuad::INDICES.iter().zip(&r.estimates) {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.config, i, j, e.e, e.sigma, r.s.s, r.s.sigma, r.s.significance
            )?;
        }
    }
    w.flush()
}
