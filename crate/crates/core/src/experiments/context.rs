//! The simulated laboratory that experiment procedures act on.

use crate::error::{Error, Result};
use crate::montecarlo::rng::run_id;
use crate::montecarlo::{extract_coincidences, stream_run, CoincidenceCounts, CoincidenceWindow, SimulationSetup};
use crate::optics::AnalyzerConfig;
use crate::qstate::{correlation, local_phase_average, BlochSetting};

/// Tags separating the random streams of different procedures.
pub mod tags {
    pub const CHSH: u64 = 1;
    pub const SCAN: u64 = 2;
    pub const CALIBRATION: u64 = 3;
}

#[derive(Debug, Clone)]
pub struct SimContext {
    pub setup: SimulationSetup,
    /// Alice's analyzer; its phase is fixed and, to the experimenter, unknown.
    pub alice: AnalyzerConfig,
    /// Bob's analyzer; its phase is the one the procedures adjust.
    pub bob: AnalyzerConfig,
    pub window_ns: f64,
    pub ready_gating: bool,
}

impl SimContext {
    pub fn new(setup: SimulationSetup, alice: AnalyzerConfig, bob: AnalyzerConfig, window_ns: f64) -> Result<Self> {
        let ctx = SimContext {
            setup,
            alice,
            bob,
            window_ns,
            ready_gating: true,
        };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn validate(&self) -> Result<()> {
        self.alice.validate(self.window_ns)?;
        self.bob.validate(self.window_ns)?;
        self.setup.validate(self.alice.tau_ns, self.bob.tau_ns)?;
        self.window(&self.alice, &self.bob).validate()
    }

    /// Analyzer pair with wave plates set for `a` and `b` and Bob's
    /// interferometer at `bob_phase`.
    pub fn analyzers(&self, a: &BlochSetting, b: &BlochSetting, bob_phase: f64) -> (AnalyzerConfig, AnalyzerConfig) {
        (
            self.alice.with_projection(*a),
            self.bob.with_projection(*b).with_phase(bob_phase),
        )
    }

    pub fn window(&self, alice: &AnalyzerConfig, bob: &AnalyzerConfig) -> CoincidenceWindow {
        CoincidenceWindow {
            ready_gating: self.ready_gating,
            ..CoincidenceWindow::for_setup(&self.setup, alice, bob, self.window_ns)
        }
    }

    /// Simulates one setting pair and counts its middle-slot coincidences.
    pub fn measure(
        &self,
        alice: &AnalyzerConfig,
        bob: &AnalyzerConfig,
        duration_s: f64,
        run: u64,
    ) -> Result<CoincidenceCounts> {
        let window = self.window(alice, bob);
        let mut counts = CoincidenceCounts::default();
        for chunk in stream_run(&self.setup, alice, bob, duration_s, run)? {
            counts += extract_coincidences(&chunk, &window)?;
        }
        Ok(counts)
    }

    /// Born-rule correlation of the emitted state, averaged over the phase
    /// jitter, at the settings the analyzers actually measure. Ignores dark
    /// counts, slow drift and misalignment.
    pub fn oracle_correlation(&self, alice: &AnalyzerConfig, bob: &AnalyzerConfig) -> Result<f64> {
        let state = local_phase_average(&self.setup.state, self.setup.noise.jitter_rad);
        correlation(&state, &alice.effective_setting(), &bob.effective_setting())
    }
}

/// Run id of a procedure step, built from its tag and indices.
pub fn step_run(tag: u64, indices: &[u64]) -> u64 {
    let mut all = Vec::with_capacity(indices.len() + 1);
    all.push(tag);
    all.extend_from_slice(indices);
    run_id(&all)
}

pub(crate) fn positive_duration(name: &str, duration_s: f64) -> Result<()> {
    if duration_s > 0.0 && duration_s.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("{name} must be positive (got {duration_s} s)")))
    }
}
