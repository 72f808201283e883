//! Two-photon interference fringes and their sinusoidal fit.
//!
//! The model `N(φ) = A·(1 + V·cos(φ + φ₀))` is linear in `(a, b, c)` once
//! written as `a + b·cos φ + c·sin φ`, so the fit is an ordinary 3×3 least
//! squares problem with `A = a`, `V = √(b² + c²)/a` and `φ₀ = atan2(−c, b)`.

use std::f64::consts::{PI, TAU};
use std::io::{self, Write};

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

use super::context::{positive_duration, step_run, tags, SimContext};
use crate::error::{Error, Result};
use crate::montecarlo::CoincidenceCounts;
use crate::qstate::{BlochSetting, Outcome};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum FitWeighting {
    #[default]
    Unweighted,
    /// Weights `1/max(N, 1)`, the inverse Poisson variance of each point.
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FringeFit {
    pub amplitude: f64,
    /// Clamped to `[0, 1]`.
    pub visibility: f64,
    pub phase_offset: f64,
    /// Root-mean-square deviation of the data from the fitted curve.
    pub residual: f64,
}

/// Checks that a scan has at least five points covering a full period: the
/// sampled span plus one mean step reaches `2π`.
pub fn check_scan_phases(phases: &[f64]) -> Result<()> {
    if phases.len() < 5 {
        return Err(Error::domain(format!(
            "a fringe scan needs at least 5 points (got {})",
            phases.len()
        )));
    }
    if phases.iter().any(|p| !p.is_finite()) {
        return Err(Error::domain("scan phases must be finite"));
    }
    let lo = phases.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = phases.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n = phases.len() as f64;
    if (hi - lo) * n / (n - 1.0) < TAU - 1e-9 {
        return Err(Error::domain(format!(
            "scan phases must cover a full period (span {:.3} rad over {} points)",
            hi - lo,
            phases.len()
        )));
    }
    Ok(())
}

/// `n` equally spaced phases `2πk/n`.
pub fn uniform_phases(n: usize) -> Vec<f64> {
    (0..n).map(|k| TAU * k as f64 / n as f64).collect()
}

pub fn fit_fringe(phases: &[f64], counts: &[f64], weighting: FitWeighting) -> Result<FringeFit> {
    if phases.len() != counts.len() {
        return Err(Error::domain("phase and count lists differ in length"));
    }
    check_scan_phases(phases)?;
    if counts.iter().any(|c| !c.is_finite() || *c < 0.0) {
        return Err(Error::domain("counts must be finite and non-negative"));
    }

    let mut normal = Matrix3::<f64>::zeros();
    let mut rhs = Vector3::<f64>::zeros();
    for (&phi, &n) in phases.iter().zip(counts) {
        let w = match weighting {
            FitWeighting::Unweighted => 1.0,
            FitWeighting::Poisson => 1.0 / n.max(1.0),
        };
        let basis = Vector3::new(1.0, phi.cos(), phi.sin());
        normal += basis * basis.transpose() * w;
        rhs += basis * (w * n);
    }
    let coef = normal
        .lu()
        .solve(&rhs)
        .filter(|c| c.iter().all(|x| x.is_finite()))
        .ok_or_else(|| {
            Error::Numeric(format!(
                "fringe fit is singular for {} points (normal matrix determinant {:.3e})",
                phases.len(),
                normal.determinant()
            ))
        })?;
    let (a, b, c) = (coef[0], coef[1], coef[2]);
    if !(a > 0.0) {
        return Err(Error::Numeric(format!(
            "fringe fit has non-positive mean level {a:.3e}; total counts {:.0}",
            counts.iter().sum::<f64>()
        )));
    }
    let sq: f64 = phases
        .iter()
        .zip(counts)
        .map(|(&phi, &n)| (n - (a + b * phi.cos() + c * phi.sin())).powi(2))
        .sum();
    Ok(FringeFit {
        amplitude: a,
        visibility: ((b * b + c * c).sqrt() / a).min(1.0),
        phase_offset: (-c).atan2(b),
        residual: (sq / phases.len() as f64).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanMode {
    /// Both projections on the equator, Bob's interferometer phase scanned.
    BobEquatorial,
    /// Bob projects onto `z`; Alice's projection is swept around the x–z circle.
    AliceXz,
}

impl ScanMode {
    pub fn name(self) -> &'static str {
        match self {
            ScanMode::BobEquatorial => "bob_equatorial",
            ScanMode::AliceXz => "alice_xz",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FringePoint {
    pub phase_rad: f64,
    pub counts: CoincidenceCounts,
    pub integration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FringeScan {
    pub mode: ScanMode,
    pub points: Vec<FringePoint>,
    /// One fit per outcome pair, in the order `++, +−, −+, −−`.
    pub fits: [FringeFit; 4],
    /// Mean of the four fitted visibilities.
    pub visibility: f64,
    /// Phase offset of the `++` curve.
    pub phase_offset: f64,
    /// Mean RMS residual of the four fits.
    pub residual: f64,
}

pub const SCAN_CSV_HEADER: &str = "phase_rad,n_pp,n_pm,n_mp,n_mm";

impl FringeScan {
    pub fn from_points(mode: ScanMode, points: Vec<FringePoint>, weighting: FitWeighting) -> Result<Self> {
        let phases: Vec<f64> = points.iter().map(|p| p.phase_rad).collect();
        let mut fits = Vec::with_capacity(4);
        for oa in Outcome::BOTH {
            for ob in Outcome::BOTH {
                let n: Vec<f64> = points.iter().map(|p| p.counts.get(oa, ob) as f64).collect();
                fits.push(fit_fringe(&phases, &n, weighting)?);
            }
        }
        let fits: [FringeFit; 4] = fits.try_into().expect("four outcome pairs");
        Ok(FringeScan {
            mode,
            visibility: fits.iter().map(|f| f.visibility).sum::<f64>() / 4.0,
            phase_offset: fits[0].phase_offset,
            residual: fits.iter().map(|f| f.residual).sum::<f64>() / 4.0,
            points,
            fits,
        })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{SCAN_CSV_HEADER}")?;
        for p in &self.points {
            let c = p.counts;
            writeln!(w, "{},{},{},{},{}", p.phase_rad, c.n_pp, c.n_pm, c.n_mp, c.n_mm)?;
        }
        w.flush()
    }
}

/// Records a fringe by stepping one analyzer through `phases`, integrating
/// `integration_s` at each point.
///
/// In [`ScanMode::BobEquatorial`] the phase is Bob's interferometer phase and
/// both wave-plate projections sit at `x`. In [`ScanMode::AliceXz`] it is the
/// polar angle of Alice's projection on the x–z circle while Bob projects
/// onto `z` with his interferometer at `bob_phase`.
pub fn run_visibility_scan(
    ctx: &SimContext,
    mode: ScanMode,
    phases: &[f64],
    integration_s: f64,
    bob_phase: f64,
    weighting: FitWeighting,
) -> Result<FringeScan> {
    check_scan_phases(phases)?;
    positive_duration("visibility integration time", integration_s)?;
    let mode_tag = match mode {
        ScanMode::BobEquatorial => 0,
        ScanMode::AliceXz => 1,
    };
    let mut points = Vec::with_capacity(phases.len());
    for (k, &phi) in phases.iter().enumerate() {
        let (alice, bob) = match mode {
            ScanMode::BobEquatorial => ctx.analyzers(&BlochSetting::X, &BlochSetting::X, phi),
            ScanMode::AliceXz => ctx.analyzers(&BlochSetting::from_angles(phi, 0.0), &BlochSetting::Z, bob_phase),
        };
        let counts = ctx.measure(&alice, &bob, integration_s, step_run(tags::SCAN, &[mode_tag, k as u64]))?;
        points.push(FringePoint {
            phase_rad: phi,
            counts,
            integration_s,
        });
    }
    FringeScan::from_points(mode, points, weighting)
}

/// Wraps an angle to `(−π, π]`.
pub fn wrap_phase(phi: f64) -> f64 {
    let r = (phi + PI).rem_euclid(TAU) - PI;
    if r <= -PI {
        r + TAU
    } else {
        r
    }
}
