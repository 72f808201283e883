use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qstate::TwoQubitState;

pub const DEFAULT_REP_RATE_HZ: f64 = 2.0e7;
pub const DEFAULT_GATE_WIDTH_NS: f64 = 7.0;
pub const DEFAULT_CYCLE_S: f64 = 10.0;

/// Pulsed pair source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub rep_rate_hz: f64,
    /// Probability that a pump pulse creates one photon pair.
    pub pair_prob_per_pulse: f64,
    pub seed: u64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig {
            rep_rate_hz: DEFAULT_REP_RATE_HZ,
            pair_prob_per_pulse: 1e-3,
            seed: 0,
        }
    }
}

impl SourceConfig {
    pub fn period_ns(&self) -> f64 {
        1e9 / self.rep_rate_hz
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rep_rate_hz > 0.0 && self.rep_rate_hz.is_finite()) {
            return Err(Error::config(format!(
                "source.rep_rate_hz must be positive (got {})",
                self.rep_rate_hz
            )));
        }
        if !(0.0..1.0).contains(&self.pair_prob_per_pulse) {
            return Err(Error::config(format!(
                "source.pair_prob_per_pulse must lie in [0, 1) (got {})",
                self.pair_prob_per_pulse
            )));
        }
        Ok(())
    }

    /// Multi-pair emission is not modelled; large pair probabilities are
    /// accepted but flagged.
    pub fn warnings(&self) -> Vec<String> {
        if self.pair_prob_per_pulse > 0.1 {
            vec![format!(
                "pair_prob_per_pulse = {} is in the double-pair regime, which is not modelled",
                self.pair_prob_per_pulse
            )]
        } else {
            Vec::new()
        }
    }
}

/// Transmission link between the source and Bob.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub loss_db: f64,
    /// Fraction of each stabilization cycle during which pairs are sent.
    pub duty_cycle: f64,
    pub misalignment_drift_rad_per_s: f64,
    pub cycle_s: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            loss_db: 0.0,
            duty_cycle: 1.0,
            misalignment_drift_rad_per_s: 0.0,
            cycle_s: DEFAULT_CYCLE_S,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.loss_db >= 0.0 && self.loss_db.is_finite()) {
            return Err(Error::config(format!(
                "channel.loss_db must be >= 0 (got {})",
                self.loss_db
            )));
        }
        if !(0.0..=1.0).contains(&self.duty_cycle) {
            return Err(Error::config(format!(
                "channel.duty_cycle must lie in [0, 1] (got {})",
                self.duty_cycle
            )));
        }
        if !(self.misalignment_drift_rad_per_s >= 0.0 && self.misalignment_drift_rad_per_s.is_finite()) {
            return Err(Error::config("channel.misalignment_drift_rad_per_s must be >= 0"));
        }
        if !(self.cycle_s > 0.0 && self.cycle_s.is_finite()) {
            return Err(Error::config("channel.cycle_s must be positive"));
        }
        Ok(())
    }

    /// True while the link carries single photons rather than the
    /// stabilization reference pulse, which occupies the start of each cycle.
    pub fn is_emitting(&self, t_s: f64) -> bool {
        let in_cycle = t_s.rem_euclid(self.cycle_s);
        in_cycle >= (1.0 - self.duty_cycle) * self.cycle_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    FreeRunning,
    Gated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub kind: DetectorKind,
    pub efficiency: f64,
    /// Used by free-running detectors.
    pub dark_rate_hz: f64,
    /// Used by gated detectors.
    pub dark_prob_per_gate: f64,
    pub dead_time_ns: f64,
    pub gate_width_ns: f64,
}

impl DetectorConfig {
    /// Free-running Si avalanche diode.
    pub fn silicon() -> Self {
        DetectorConfig {
            kind: DetectorKind::FreeRunning,
            efficiency: 0.5,
            dark_rate_hz: 300.0,
            dark_prob_per_gate: 0.0,
            dead_time_ns: 50.0,
            gate_width_ns: 0.0,
        }
    }

    /// Gated InGaAs avalanche diode.
    pub fn ingaas() -> Self {
        DetectorConfig {
            kind: DetectorKind::Gated,
            efficiency: 0.15,
            dark_rate_hz: 0.0,
            dark_prob_per_gate: 1e-4,
            dead_time_ns: 10_000.0,
            gate_width_ns: DEFAULT_GATE_WIDTH_NS,
        }
    }

    pub fn ideal(kind: DetectorKind) -> Self {
        DetectorConfig {
            kind,
            efficiency: 1.0,
            dark_rate_hz: 0.0,
            dark_prob_per_gate: 0.0,
            dead_time_ns: 0.0,
            gate_width_ns: if kind == DetectorKind::Gated {
                DEFAULT_GATE_WIDTH_NS
            } else {
                0.0
            },
        }
    }

    pub fn validate(&self, name: &str, period_ns: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::config(format!(
                "{name}.efficiency must lie in [0, 1] (got {})",
                self.efficiency
            )));
        }
        if !(self.dark_rate_hz >= 0.0 && self.dark_rate_hz.is_finite()) {
            return Err(Error::config(format!("{name}.dark_rate_hz must be >= 0")));
        }
        if !(0.0..=1.0).contains(&self.dark_prob_per_gate) {
            return Err(Error::config(format!("{name}.dark_prob_per_gate must lie in [0, 1]")));
        }
        if !(self.dead_time_ns >= 0.0 && self.dead_time_ns.is_finite()) {
            return Err(Error::config(format!("{name}.dead_time_ns must be >= 0")));
        }
        if self.kind == DetectorKind::Gated {
            if !(self.gate_width_ns > 0.0) {
                return Err(Error::config(format!("{name}.gate_width_ns must be positive")));
            }
            if self.gate_width_ns >= period_ns {
                return Err(Error::config(format!(
                    "{name}.gate_width_ns ({}) must be shorter than the pulse period ({period_ns} ns)",
                    self.gate_width_ns
                )));
            }
        }
        Ok(())
    }
}

/// Fixed delays of the detection electronics, referred to the TDC frame in
/// which the trigger of pulse `k` fires at `k·T + trigger_latency_ns`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingConfig {
    /// Gaussian timing jitter of every photon detection.
    pub jitter_ns: f64,
    pub trigger_latency_ns: f64,
    /// Arrival of Alice's early slot after the pump clock edge.
    pub alice_delay_ns: f64,
    /// Arrival of Bob's early slot after the pump clock edge.
    pub bob_delay_ns: f64,
    /// Gate opening relative to the trigger.
    pub gate_offset_ns: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig {
            jitter_ns: 0.1,
            trigger_latency_ns: 0.0,
            alice_delay_ns: 1.0,
            bob_delay_ns: 1.5,
            gate_offset_ns: 0.0,
        }
    }
}

/// Interferometer phase fluctuations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseNoise {
    /// Standard deviation of a per-pair Gaussian phase error.
    pub jitter_rad: f64,
    /// Largest excursion of the slow drift within one drift window; 0 disables it.
    pub drift_bound_rad: f64,
    pub drift_window_s: f64,
}

impl Default for PhaseNoise {
    fn default() -> Self {
        PhaseNoise {
            jitter_rad: 0.0,
            drift_bound_rad: 0.0,
            drift_window_s: 600.0,
        }
    }
}

impl PhaseNoise {
    pub fn validate(&self) -> Result<()> {
        if !(self.jitter_rad >= 0.0 && self.jitter_rad.is_finite()) {
            return Err(Error::config("noise.jitter_rad must be >= 0"));
        }
        if !(self.drift_bound_rad >= 0.0 && self.drift_bound_rad.is_finite()) {
            return Err(Error::config("noise.drift_bound_rad must be >= 0"));
        }
        if !(self.drift_window_s > 0.0) {
            return Err(Error::config("noise.drift_window_s must be positive"));
        }
        Ok(())
    }
}

/// Index of each detector in [`SimulationSetup::detectors`].
pub const S1: usize = 0;
pub const S2: usize = 1;
pub const I1: usize = 2;
pub const I2: usize = 3;

/// Everything about the apparatus except the analyzer settings.
#[derive(Debug, Clone)]
pub struct SimulationSetup {
    pub source: SourceConfig,
    /// State emitted by the source, before the analyzers.
    pub state: TwoQubitState,
    pub channel: ChannelConfig,
    /// `[S1, S2, I1, I2]`: Alice's free-running pair then Bob's gated pair.
    pub detectors: [DetectorConfig; 4],
    pub timing: TimingConfig,
    pub noise: PhaseNoise,
    /// Worker threads; `None` uses the global pool. Results do not depend on it.
    pub threads: Option<usize>,
}

impl SimulationSetup {
    pub fn new(source: SourceConfig, state: TwoQubitState) -> Self {
        SimulationSetup {
            source,
            state,
            channel: ChannelConfig::default(),
            detectors: [
                DetectorConfig::silicon(),
                DetectorConfig::silicon(),
                DetectorConfig::ingaas(),
                DetectorConfig::ingaas(),
            ],
            timing: TimingConfig::default(),
            noise: PhaseNoise::default(),
            threads: None,
        }
    }

    /// Lossless, noiseless detectors and zero jitter.
    pub fn ideal(source: SourceConfig, state: TwoQubitState) -> Self {
        let mut setup = Self::new(source, state);
        setup.detectors = [
            DetectorConfig::ideal(DetectorKind::FreeRunning),
            DetectorConfig::ideal(DetectorKind::FreeRunning),
            DetectorConfig::ideal(DetectorKind::Gated),
            DetectorConfig::ideal(DetectorKind::Gated),
        ];
        setup.timing.jitter_ns = 0.0;
        setup
    }

    pub fn gate_width_ns(&self) -> f64 {
        self.detectors[I1].gate_width_ns
    }

    /// Checks every precondition of the simulation, given the interferometer
    /// delays `tau_alice_ns` and `tau_bob_ns`.
    pub fn validate(&self, tau_alice_ns: f64, tau_bob_ns: f64) -> Result<()> {
        self.source.validate()?;
        self.channel.validate()?;
        self.noise.validate()?;
        let period = self.source.period_ns();
        let names = ["detectors.s1", "detectors.s2", "detectors.i1", "detectors.i2"];
        for (i, (det, name)) in self.detectors.iter().zip(names).enumerate() {
            det.validate(name, period)?;
            let expected = if i < 2 {
                DetectorKind::FreeRunning
            } else {
                DetectorKind::Gated
            };
            if det.kind != expected {
                return Err(Error::config(format!("{name}.kind must be {expected:?}")));
            }
        }
        if self.detectors[I1].gate_width_ns != self.detectors[I2].gate_width_ns {
            return Err(Error::config(
                "detectors.i1 and detectors.i2 share one gate and need equal gate_width_ns",
            ));
        }
        let t = &self.timing;
        if !(t.jitter_ns >= 0.0 && t.jitter_ns.is_finite()) {
            return Err(Error::config("timing.jitter_ns must be >= 0"));
        }
        if !(t.trigger_latency_ns >= 0.0) {
            return Err(Error::config("timing.trigger_latency_ns must be >= 0"));
        }
        let margin = 5.0 * t.jitter_ns;
        if t.trigger_latency_ns > t.alice_delay_ns - margin {
            return Err(Error::config(
                "timing.trigger_latency_ns must leave Alice's early slot after the TDC start",
            ));
        }
        if t.alice_delay_ns + 2.0 * tau_alice_ns + margin >= period {
            return Err(Error::config("Alice's late slot falls outside the pulse period"));
        }
        let gate_start = t.trigger_latency_ns + t.gate_offset_ns;
        let gate_end = gate_start + self.gate_width_ns();
        if t.bob_delay_ns - margin < gate_start || t.bob_delay_ns + 2.0 * tau_bob_ns + margin > gate_end {
            return Err(Error::config(format!(
                "Bob's three slots [{:.2}, {:.2}] ns must lie inside the gate [{gate_start:.2}, {gate_end:.2}] ns",
                t.bob_delay_ns,
                t.bob_delay_ns + 2.0 * tau_bob_ns
            )));
        }
        Ok(())
    }
}
