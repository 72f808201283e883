//! Universal time-bin qubit analyzer.
//!
//! An unbalanced interferometer with polarizing beam splitters spreads an
//! incoming time-bin qubit over three output slots separated by `τ`. The
//! early (late) slot carries the `|e⟩` (`|ℓ⟩`) component alone, while in the
//! middle slot the two components overlap with orthogonal polarizations:
//!
//! ```text
//! a|e⟩ + b|ℓ⟩  ->  (a|V⟩ + e^{iφ} b|H⟩)/√2      (middle slot)
//! ```
//!
//! A quarter-wave plate, a half-wave plate and a PBS then project the middle
//! slot onto any polarization basis, which is any time-bin basis.
//!
//! Jones vectors are `[H, V]`. On the polarization Poincaré sphere `|H⟩` is
//! +z, `(|H⟩+|V⟩)/√2` is +x and `(|H⟩+i|V⟩)/√2` is +y.

use nalgebra::{Matrix2, Vector2, Vector3};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::montecarlo::db_to_transmittance;
use crate::qstate::{BlochSetting, ComplexAmp, Outcome, TwoQubitState};

pub type Jones = Vector2<Complex64>;
pub type JonesMatrix = Matrix2<Complex64>;

pub const DEFAULT_TAU_NS: f64 = 1.4;

const NORM_TOL: f64 = 1e-12;
const SOLVER_FIDELITY: f64 = 1.0 - 1e-12;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// A single photon in a superposition of an early and a late time window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeBinQubit {
    amp_e: ComplexAmp,
    amp_l: ComplexAmp,
}

impl TimeBinQubit {
    pub fn new(amp_e: ComplexAmp, amp_l: ComplexAmp) -> Result<Self> {
        let norm = amp_e.norm_sqr() + amp_l.norm_sqr();
        if !norm.is_finite() || (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::domain(format!(
                "time-bin qubit not normalized (|a_e|² + |a_l|² = {norm})"
            )));
        }
        Ok(TimeBinQubit { amp_e, amp_l })
    }

    /// `cos θ |e⟩ + e^{iφ} sin θ |ℓ⟩`
    pub fn from_angles(theta: f64, phi: f64) -> Self {
        TimeBinQubit {
            amp_e: c(theta.cos(), 0.0),
            amp_l: Complex64::from_polar(theta.sin(), phi),
        }
    }

    pub fn early() -> Self {
        Self::from_angles(0.0, 0.0)
    }

    pub fn late() -> Self {
        Self::from_angles(std::f64::consts::FRAC_PI_2, 0.0)
    }

    pub fn amp_e(&self) -> ComplexAmp {
        self.amp_e
    }

    pub fn amp_l(&self) -> ComplexAmp {
        self.amp_l
    }

    pub fn bloch_vector(&self) -> Vector3<f64> {
        let x = self.amp_e.conj() * self.amp_l * 2.0;
        Vector3::new(x.re, x.im, self.amp_e.norm_sqr() - self.amp_l.norm_sqr())
    }
}

/// Polarization amplitudes in each analyzer output slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotAmplitudes {
    pub early: Jones,
    pub middle: Jones,
    pub late: Jones,
    pub tau_ns: f64,
}

impl SlotAmplitudes {
    pub fn total_norm_sqr(&self) -> f64 {
        self.early.norm_squared() + self.middle.norm_squared() + self.late.norm_squared()
    }
}

/// Settings of one analyzer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyzerConfig {
    /// Relative phase accumulated between the two interferometer arms.
    pub phase: f64,
    pub tau_ns: f64,
    pub insertion_loss_db: f64,
    /// Basis selected by the wave plates, expressed in the time-bin frame
    /// before the interferometer phase is applied.
    pub projection: BlochSetting,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        AnalyzerConfig {
            phase: 0.0,
            tau_ns: DEFAULT_TAU_NS,
            insertion_loss_db: 0.0,
            projection: BlochSetting::Z,
        }
    }
}

impl AnalyzerConfig {
    /// Analyzer with interferometer phase `phase` whose wave plates are set so
    /// that the time-bin qubit is measured along `target`.
    pub fn aimed_at(target: &BlochSetting, phase: f64) -> Self {
        AnalyzerConfig {
            phase,
            projection: target.rotated_z(phase),
            ..Default::default()
        }
    }

    pub fn with_projection(mut self, projection: BlochSetting) -> Self {
        self.projection = projection;
        self
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }

    pub fn validate(&self, coincidence_window_ns: f64) -> Result<()> {
        if !self.phase.is_finite() {
            return Err(Error::config("analyzer phase must be finite"));
        }
        if !(self.tau_ns > 0.0) {
            return Err(Error::config(format!("tau_ns must be positive (got {})", self.tau_ns)));
        }
        if self.tau_ns <= coincidence_window_ns {
            return Err(Error::config(format!(
                "tau_ns ({}) must exceed the coincidence window ({coincidence_window_ns} ns)",
                self.tau_ns
            )));
        }
        if !(self.insertion_loss_db >= 0.0) {
            return Err(Error::config(format!(
                "insertion_loss_db must be >= 0 (got {})",
                self.insertion_loss_db
            )));
        }
        Ok(())
    }

    pub fn transmittance(&self) -> f64 {
        db_to_transmittance(self.insertion_loss_db.max(0.0)).unwrap_or(0.0)
    }

    /// The time-bin basis actually measured in the middle slot: the wave-plate
    /// projection rotated about z by `−phase`.
    pub fn effective_setting(&self) -> BlochSetting {
        self.projection.rotated_z(-self.phase)
    }

    /// Poincaré-sphere direction transmitted by the PBS.
    pub fn polarization_target(&self) -> BlochSetting {
        to_polarization_frame(&self.projection)
    }
}

/// Maps a time-bin-frame projection to the polarization sphere
/// (`|e⟩ ↔ |V⟩`, `|ℓ⟩ ↔ |H⟩`): a π rotation about x.
pub fn to_polarization_frame(projection: &BlochSetting) -> BlochSetting {
    let v = projection.vector();
    BlochSetting::normalized(Vector3::new(v.x, -v.y, -v.z)).expect("unit input")
}

/// Jones vector of the polarization state with Poincaré vector `n`.
pub fn polarization_state(n: &BlochSetting) -> Jones {
    let [h, v] = n.ket();
    Jones::new(h, v)
}

/// Spreads a time-bin qubit over the analyzer's three output slots.
pub fn utba_convert(q: &TimeBinQubit, cfg: &AnalyzerConfig) -> Result<SlotAmplitudes> {
    TimeBinQubit::new(q.amp_e, q.amp_l)?;
    if !(cfg.tau_ns > 0.0) {
        return Err(Error::domain("tau_ns must be positive"));
    }
    if !(cfg.insertion_loss_db >= 0.0) {
        return Err(Error::domain("insertion loss must be >= 0"));
    }
    let amp = c((cfg.transmittance() / 2.0).sqrt(), 0.0);
    let zero = c(0.0, 0.0);
    let phase = Complex64::from_polar(1.0, cfg.phase);
    Ok(SlotAmplitudes {
        early: Jones::new(q.amp_e * amp, zero),
        middle: Jones::new(phase * q.amp_l * amp, q.amp_e * amp),
        late: Jones::new(zero, q.amp_l * amp),
        tau_ns: cfg.tau_ns,
    })
}

/// Half-wave plate with its fast axis at `angle_deg` from horizontal.
pub fn jones_hwp(angle_deg: f64) -> JonesMatrix {
    let t = 2.0 * angle_deg.to_radians();
    JonesMatrix::new(c(t.cos(), 0.0), c(t.sin(), 0.0), c(t.sin(), 0.0), c(-t.cos(), 0.0))
}

/// Quarter-wave plate with its fast axis at `angle_deg` from horizontal.
pub fn jones_qwp(angle_deg: f64) -> JonesMatrix {
    let t = angle_deg.to_radians();
    let (s, co) = t.sin_cos();
    let off = c(s * co, -s * co);
    JonesMatrix::new(c(co * co, s * s), off, off, c(s * s, co * co))
}

/// Orientation of the analyzer wave plates, QWP first, then HWP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WavePlatePair {
    pub qwp_deg: f64,
    pub hwp_deg: f64,
}

fn reduce_deg(angle: f64, period: f64) -> f64 {
    let r = angle.rem_euclid(period);
    // snap values that are a rounding error below the period back to zero
    if period - r < 1e-9 {
        0.0
    } else {
        r
    }
}

impl WavePlatePair {
    pub fn new(qwp_deg: f64, hwp_deg: f64) -> Self {
        WavePlatePair {
            qwp_deg: reduce_deg(qwp_deg, 180.0),
            hwp_deg: reduce_deg(hwp_deg, 180.0),
        }
    }

    /// Combined Jones matrix `HWP · QWP`.
    pub fn matrix(&self) -> JonesMatrix {
        jones_hwp(self.hwp_deg) * jones_qwp(self.qwp_deg)
    }

    /// Probability that `state` leaves through the transmitted (`+`) or
    /// reflected (`−`) PBS port.
    pub fn port_probability(&self, state: &Jones, outcome: Outcome) -> f64 {
        let out = self.matrix() * state;
        match outcome {
            Outcome::Plus => out[0].norm_sqr(),
            Outcome::Minus => out[1].norm_sqr(),
        }
    }
}

/// Wave-plate angles whose transmitted PBS port projects onto the
/// polarization state with Poincaré vector `target`.
pub fn waveplate_angles_for(target: &BlochSetting) -> Result<WavePlatePair> {
    let t = polarization_state(target);
    let fidelity = |p: &WavePlatePair| p.port_probability(&t, Outcome::Plus);

    // Closed form: a QWP aligned with either ellipse axis makes the state
    // linear, then the HWP rotates that line onto H.
    let v = target.vector();
    let psi = 0.5 * v.x.atan2(v.z).to_degrees();
    let mut candidates: Vec<WavePlatePair> = Vec::with_capacity(2);
    for qwp in [psi, psi + 90.0] {
        let mut lin = jones_qwp(qwp) * t;
        let k = if lin[0].norm() >= lin[1].norm() { 0 } else { 1 };
        let phase = lin[k].conj() / lin[k].norm();
        lin *= phase;
        let alpha = lin[1].re.atan2(lin[0].re).to_degrees();
        candidates.push(canonical(qwp, alpha / 2.0));
    }

    let mut best: Option<WavePlatePair> = None;
    for cand in candidates {
        let cand = if fidelity(&cand) >= SOLVER_FIDELITY {
            cand
        } else {
            refine(cand, &fidelity)?
        };
        if fidelity(&cand) < SOLVER_FIDELITY {
            continue;
        }
        best = match best {
            Some(b) if (b.qwp_deg, b.hwp_deg) <= (cand.qwp_deg, cand.hwp_deg) => Some(b),
            _ => Some(cand),
        };
    }
    best.ok_or_else(|| {
        Error::Numeric(format!(
            "wave-plate solver did not reach fidelity {SOLVER_FIDELITY} for target {:?}",
            v.as_slice()
        ))
    })
}

/// QWP in `[0, 180)`, HWP in `[0, 90)`: HWP(h + 90°) only adds a global sign.
fn canonical(qwp: f64, hwp: f64) -> WavePlatePair {
    WavePlatePair {
        qwp_deg: reduce_deg(qwp, 180.0),
        hwp_deg: reduce_deg(hwp, 90.0),
    }
}

/// Compass search on the fidelity, bounded to a fixed number of step halvings.
fn refine(start: WavePlatePair, fidelity: &impl Fn(&WavePlatePair) -> f64) -> Result<WavePlatePair> {
    let mut best = start;
    let mut f_best = fidelity(&best);
    let mut step = 2.0;
    let mut evaluations = 0;
    while step > 1e-10 {
        let mut improved = false;
        for (dq, dh) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
            let cand = canonical(best.qwp_deg + dq, best.hwp_deg + dh);
            let f = fidelity(&cand);
            evaluations += 1;
            if f > f_best {
                best = cand;
                f_best = f;
                improved = true;
            }
        }
        if !improved {
            step /= 2.0;
        }
        if evaluations > 20_000 {
            return Err(Error::Numeric(
                "wave-plate refinement exceeded its iteration cap".into(),
            ));
        }
    }
    Ok(best)
}

/// Probability that the qubit exits in the middle slot and is detected with
/// the given analyzer outcome, computed through the full Jones pipeline.
pub fn middle_slot_click_probability(q: &TimeBinQubit, cfg: &AnalyzerConfig, outcome: Outcome) -> Result<f64> {
    let slots = utba_convert(q, cfg)?;
    let plates = waveplate_angles_for(&cfg.polarization_target())?;
    Ok(plates.port_probability(&slots.middle, outcome))
}

/// Fraction of the pulse energy transmitted through the PBS when the paddles
/// leave the polarization at angle `theta` from the transmitted axis.
pub fn paddle_alignment_fraction(theta: f64) -> f64 {
    let c = theta.cos();
    c * c
}

/// Joint middle-slot state `(|VV⟩ + e^{i(φ_A+φ_B)}|HH⟩)/√2` after both
/// analyzers, written in the time-bin labelling (`|V⟩ ↔ |e⟩`, `|H⟩ ↔ |ℓ⟩`).
pub fn joint_middle_state(phase_a: f64, phase_b: f64) -> TwoQubitState {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let zero = c(0.0, 0.0);
    let psi = nalgebra::Vector4::new(c(h, 0.0), zero, zero, Complex64::from_polar(h, phase_a + phase_b));
    TwoQubitState::from_pure(psi).expect("nonzero ket")
}
