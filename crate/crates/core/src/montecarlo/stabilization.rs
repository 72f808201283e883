//! Slow processes of the link and interferometers.
//!
//! The polarization stabilizer realigns the link at the start of every
//! cycle; in between, the residual misalignment performs a random walk whose
//! speed never exceeds the configured drift rate. Bob's transmission is
//! multiplied by `cos²(angle)`.

use rand::Rng;

use super::config::{ChannelConfig, PhaseNoise};
use super::rng::{stream_rng, Subsystem};

/// Time resolution of the misalignment walk.
pub const WALK_STEP_S: f64 = 0.1;
/// Time resolution of the interferometer phase drift.
pub const DRIFT_STEP_S: f64 = 1.0;

fn walk_step<R: Rng + ?Sized>(rate: f64, dt: f64, rng: &mut R) -> f64 {
    rate * dt * rng.random_range(-1.0..=1.0)
}

/// Misalignment angle at `t_s` for one realization of the walk drawn from
/// `rng`, which is consumed from the start of the cycle containing `t_s`.
pub fn stabilization_misalignment<R: Rng + ?Sized>(t_s: f64, chan: &ChannelConfig, rng: &mut R) -> f64 {
    let rate = chan.misalignment_drift_rad_per_s;
    if rate == 0.0 {
        return 0.0;
    }
    let since_reset = t_s.max(0.0).rem_euclid(chan.cycle_s);
    let full_steps = (since_reset / WALK_STEP_S).floor() as usize;
    let mut angle = 0.0;
    for _ in 0..full_steps {
        angle += walk_step(rate, WALK_STEP_S, rng);
    }
    let rest = since_reset - full_steps as f64 * WALK_STEP_S;
    angle + walk_step(rate, rest, rng)
}

/// Precomputed misalignment walk for a whole run, one independent stream per
/// cycle.
#[derive(Debug, Clone)]
pub struct MisalignmentTrack {
    cycle_s: f64,
    steps_per_cycle: usize,
    /// `cycles × (steps_per_cycle + 1)` node values.
    nodes: Vec<f64>,
}

impl MisalignmentTrack {
    pub fn generate(chan: &ChannelConfig, duration_s: f64, seed: u64, run: u64) -> Self {
        let rate = chan.misalignment_drift_rad_per_s;
        if rate == 0.0 {
            return MisalignmentTrack {
                cycle_s: chan.cycle_s,
                steps_per_cycle: 0,
                nodes: Vec::new(),
            };
        }
        let steps_per_cycle = (chan.cycle_s / WALK_STEP_S).ceil() as usize;
        let cycles = (duration_s / chan.cycle_s).ceil().max(1.0) as usize;
        let mut nodes = Vec::with_capacity(cycles * (steps_per_cycle + 1));
        for cycle in 0..cycles {
            let mut rng = stream_rng(seed, run, Subsystem::Misalignment, cycle as u64);
            let mut angle = 0.0;
            nodes.push(angle);
            for _ in 0..steps_per_cycle {
                angle += walk_step(rate, WALK_STEP_S, &mut rng);
                nodes.push(angle);
            }
        }
        MisalignmentTrack {
            cycle_s: chan.cycle_s,
            steps_per_cycle,
            nodes,
        }
    }

    pub fn angle_at(&self, t_s: f64) -> f64 {
        if self.nodes.is_empty() {
            return 0.0;
        }
        let cycle = (t_s / self.cycle_s).floor().max(0.0) as usize;
        let stride = self.steps_per_cycle + 1;
        let cycle = cycle.min(self.nodes.len() / stride - 1);
        let local = (t_s - cycle as f64 * self.cycle_s) / WALK_STEP_S;
        let i = (local.floor().max(0.0) as usize).min(self.steps_per_cycle - 1);
        let frac = (local - i as f64).clamp(0.0, 1.0);
        let base = cycle * stride + i;
        self.nodes[base] * (1.0 - frac) + self.nodes[base + 1] * frac
    }

    pub fn transmission_at(&self, t_s: f64) -> f64 {
        let c = self.angle_at(t_s).cos();
        c * c
    }
}

/// Slow random walk of the combined interferometer phase, reflected at
/// `±drift_bound_rad`. Per step the phase moves by at most
/// `bound · step / drift_window`, so it never wanders by more than the bound
/// within one drift window.
#[derive(Debug, Clone)]
pub struct PhaseDriftTrack {
    nodes: Vec<f64>,
}

impl PhaseDriftTrack {
    pub fn generate(noise: &PhaseNoise, duration_s: f64, seed: u64, run: u64) -> Self {
        let bound = noise.drift_bound_rad;
        if bound == 0.0 {
            return PhaseDriftTrack { nodes: Vec::new() };
        }
        let steps = (duration_s / DRIFT_STEP_S).ceil().max(1.0) as usize;
        let max_step = bound * DRIFT_STEP_S / noise.drift_window_s;
        let mut rng = stream_rng(seed, run, Subsystem::PhaseDrift, 0);
        let mut phase: f64 = 0.0;
        let mut nodes = Vec::with_capacity(steps + 1);
        nodes.push(phase);
        for _ in 0..steps {
            phase += max_step * rng.random_range(-1.0..=1.0);
            if phase > bound {
                phase = 2.0 * bound - phase;
            } else if phase < -bound {
                phase = -2.0 * bound - phase;
            }
            nodes.push(phase);
        }
        PhaseDriftTrack { nodes }
    }

    pub fn phase_at(&self, t_s: f64) -> f64 {
        if self.nodes.is_empty() {
            return 0.0;
        }
        let x = (t_s / DRIFT_STEP_S).max(0.0);
        let i = (x.floor() as usize).min(self.nodes.len() - 2);
        let frac = (x - i as f64).clamp(0.0, 1.0);
        self.nodes[i] * (1.0 - frac) + self.nodes[i + 1] * frac
    }
}
