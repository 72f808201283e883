//! Event-level simulation of the source, link, analyzers and detectors.
//!
//! A run is split into fixed batches of pump pulses. Each batch draws its
//! photon pairs and Alice's dark counts from its own random stream, so the
//! batches can be generated in parallel. A sequential pass then applies
//! Alice's dead time, issues clock-synchronous triggers, opens Bob's gates
//! and applies Bob's dead time. Gate dark counts are drawn from a stream
//! keyed by the pulse index. The record stream is therefore a function of
//! the seed, the run id and the configuration only.

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;

use super::config::{SimulationSetup, I1, S1};
use super::db_to_transmittance;
use super::records::{sort_records, Channel, DetectionRecord};
use super::rng::{stream_rng, Subsystem};
use super::stabilization::{MisalignmentTrack, PhaseDriftTrack};
use crate::error::{Error, Result};
use crate::optics::AnalyzerConfig;
use crate::qstate::{BlochSetting, Outcome, PauliDecomposition};

/// Pulses per batch. Fixed so that batch boundaries never depend on the
/// number of threads.
pub const BATCH_PULSES: u64 = 1 << 22;

const SLOT_EARLY: u8 = 0;
const SLOT_MIDDLE: u8 = 1;

#[derive(Debug, Clone, Copy)]
struct AliceEvent {
    t: f64,
    det: u8,
}

#[derive(Debug, Clone, Copy)]
struct BobArrival {
    pulse: u64,
    t: f64,
    det: u8,
}

#[derive(Debug, Default)]
struct BatchOutput {
    alice: Vec<AliceEvent>,
    bob: Vec<BobArrival>,
}

/// Quantities fixed for the whole run.
struct RunModel<'a> {
    setup: &'a SimulationSetup,
    run: u64,
    period_ns: f64,
    n_pulses: u64,
    populations: [f64; 4],
    pauli: PauliDecomposition,
    alice_eff: Vector3<f64>,
    bob_eff: Vector3<f64>,
    alice_proj_z: f64,
    bob_proj_z: f64,
    tau_a: f64,
    tau_b: f64,
    alice_eta: [f64; 2],
    bob_eta: [f64; 2],
    misalignment: MisalignmentTrack,
    drift: PhaseDriftTrack,
}

/// Dead-time state carried from one chunk of a run to the next.
#[derive(Debug, Clone, Copy)]
struct DetectorState {
    alice_dead_until: [f64; 2],
    bob_dead_until: [f64; 2],
}

impl Default for DetectorState {
    fn default() -> Self {
        DetectorState {
            alice_dead_until: [f64::NEG_INFINITY; 2],
            bob_dead_until: [f64::NEG_INFINITY; 2],
        }
    }
}

/// Batches simulated per chunk of a [`RecordStream`].
pub const CHUNK_BATCHES: u64 = 64;

/// A run delivered as consecutive time-ordered chunks. Every record of a
/// pump pulse lands in the same chunk, so concatenating the chunks gives the
/// stream of [`simulate_run`] and coincidence frames never straddle chunks.
pub struct RecordStream<'a> {
    model: RunModel<'a>,
    pool: Option<rayon::ThreadPool>,
    next_batch: u64,
    n_batches: u64,
    state: DetectorState,
}

/// Simulates `duration_s` seconds of data taking with fixed analyzer
/// settings and returns the time-ordered TDC record stream.
pub fn simulate_run(
    setup: &SimulationSetup,
    alice: &AnalyzerConfig,
    bob: &AnalyzerConfig,
    duration_s: f64,
    run: u64,
) -> Result<Vec<DetectionRecord>> {
    Ok(stream_run(setup, alice, bob, duration_s, run)?.flatten().collect())
}

/// Same run as [`simulate_run`], produced chunk by chunk.
pub fn stream_run<'a>(
    setup: &'a SimulationSetup,
    alice: &AnalyzerConfig,
    bob: &AnalyzerConfig,
    duration_s: f64,
    run: u64,
) -> Result<RecordStream<'a>> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(Error::config(format!(
            "run duration must be positive (got {duration_s} s)"
        )));
    }
    for (name, cfg) in [("alice", alice), ("bob", bob)] {
        if !cfg.phase.is_finite() || !(cfg.tau_ns > 0.0) || !(cfg.insertion_loss_db >= 0.0) {
            return Err(Error::config(format!("invalid {name} analyzer configuration: {cfg:?}")));
        }
    }
    setup.validate(alice.tau_ns, bob.tau_ns)?;

    let period_ns = setup.source.period_ns();
    let n_pulses = (duration_s * setup.source.rep_rate_hz).round() as u64;
    let seed = setup.source.seed;
    let d = &setup.detectors;
    let link = db_to_transmittance(setup.channel.loss_db)?;
    let model = RunModel {
        setup,
        run,
        period_ns,
        n_pulses,
        populations: setup.state.populations(),
        pauli: setup.state.pauli_decomposition(),
        alice_eff: *alice.effective_setting().vector(),
        bob_eff: *bob.effective_setting().vector(),
        alice_proj_z: alice.projection.vector().z,
        bob_proj_z: bob.projection.vector().z,
        tau_a: alice.tau_ns,
        tau_b: bob.tau_ns,
        alice_eta: [0, 1].map(|i| alice.transmittance() * d[S1 + i].efficiency),
        bob_eta: [0, 1].map(|i| link * bob.transmittance() * d[I1 + i].efficiency),
        misalignment: MisalignmentTrack::generate(&setup.channel, duration_s, seed, run),
        drift: PhaseDriftTrack::generate(&setup.noise, duration_s, seed, run),
    };
    let pool = match setup.threads {
        Some(n) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Numeric(format!("cannot start worker pool: {e}")))?,
        ),
        None => None,
    };
    Ok(RecordStream {
        model,
        pool,
        next_batch: 0,
        n_batches: n_pulses.div_ceil(BATCH_PULSES),
        state: DetectorState::default(),
    })
}

impl Iterator for RecordStream<'_> {
    type Item = Vec<DetectionRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next_batch >= self.n_batches {
            return None;
        }
        let first = self.next_batch;
        let end = (first + CHUNK_BATCHES).min(self.n_batches);
        self.next_batch = end;
        let model = &self.model;
        let generate = || -> Vec<BatchOutput> { (first..end).into_par_iter().map(|b| model.batch(b)).collect() };
        let batches = match &self.pool {
            Some(pool) => pool.install(generate),
            None => generate(),
        };
        Some(model.detect(batches, &mut self.state))
    }
}

impl RunModel<'_> {
    fn batch(&self, b: u64) -> BatchOutput {
        let setup = self.setup;
        let seed = setup.source.seed;
        let first = b * BATCH_PULSES;
        let end = ((b + 1) * BATCH_PULSES).min(self.n_pulses);
        let mut out = BatchOutput::default();

        let p = setup.source.pair_prob_per_pulse;
        if p > 0.0 {
            let mut rng = stream_rng(seed, self.run, Subsystem::Pairs, b);
            let log_q = (-p).ln_1p();
            let mut k = first;
            loop {
                let u: f64 = 1.0 - rng.random::<f64>();
                let skip = (u.ln() / log_q).floor();
                if !(skip < (end - k) as f64) {
                    break;
                }
                k += skip as u64;
                self.emit_pair(k, &mut rng, &mut out);
                k += 1;
            }
        }

        let t0 = first as f64 * self.period_ns;
        let t1 = end as f64 * self.period_ns;
        for det in 0..2u8 {
            let rate = setup.detectors[S1 + det as usize].dark_rate_hz;
            if rate <= 0.0 {
                continue;
            }
            let mut rng = stream_rng(seed, self.run, Subsystem::AliceDarks, 2 * b + det as u64);
            let gap = Exp::new(rate * 1e-9).expect("positive rate");
            let mut t = t0;
            loop {
                t += gap.sample(&mut rng);
                if t >= t1 {
                    break;
                }
                out.alice.push(AliceEvent { t, det });
            }
        }
        out.alice.sort_by(|x, y| x.t.total_cmp(&y.t).then(x.det.cmp(&y.det)));
        out
    }

    fn emit_pair(&self, k: u64, rng: &mut ChaCha8Rng, out: &mut BatchOutput) {
        let setup = self.setup;
        let t_pulse = k as f64 * self.period_ns;
        let t_s = t_pulse * 1e-9;
        if !setup.channel.is_emitting(t_s) {
            return;
        }

        // early/late labels of both photons, then the arm each one takes
        let u: f64 = rng.random();
        let mut idx = 3;
        let mut acc = 0.0;
        for (i, p) in self.populations.iter().enumerate() {
            acc += p;
            if u < acc {
                idx = i;
                break;
            }
        }
        let xa = (idx >> 1) as u8;
        let xb = (idx & 1) as u8;
        let slot_a = xa + rng.random::<bool>() as u8;
        let slot_b = xb + rng.random::<bool>() as u8;

        let noise = &setup.noise;
        let mut delta = self.drift.phase_at(t_s);
        if noise.jitter_rad > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            delta += noise.jitter_rad * z;
        }
        let a = rotate_z(&self.alice_eff, -delta);
        let b = &self.bob_eff;

        let (oa, ob) = match (slot_a == SLOT_MIDDLE, slot_b == SLOT_MIDDLE) {
            (true, true) => self.sample_joint(&a, b, rng),
            (true, false) => {
                let s = if xb == 0 { 1.0 } else { -1.0 };
                let dec = &self.pauli;
                let tz = dec.tensor.column(2);
                let weight = |o: f64| 1.0 + o * a.dot(&dec.alice) + s * dec.bob.z + o * s * a.dot(&tz);
                let p_plus = weight(1.0) / (weight(1.0) + weight(-1.0));
                (bernoulli(rng, p_plus), fixed_slot_outcome(slot_b, self.bob_proj_z, rng))
            }
            (false, true) => {
                let s = if xa == 0 { 1.0 } else { -1.0 };
                let dec = &self.pauli;
                let tz = dec.tensor.row(2).transpose();
                let weight = |o: f64| 1.0 + s * dec.alice.z + o * b.dot(&dec.bob) + o * s * b.dot(&tz);
                let p_plus = weight(1.0) / (weight(1.0) + weight(-1.0));
                (
                    fixed_slot_outcome(slot_a, self.alice_proj_z, rng),
                    bernoulli(rng, p_plus),
                )
            }
            (false, false) => (
                fixed_slot_outcome(slot_a, self.alice_proj_z, rng),
                fixed_slot_outcome(slot_b, self.bob_proj_z, rng),
            ),
        };

        let jitter = setup.timing.jitter_ns;
        let det_a = outcome_index(oa);
        if rng.random::<f64>() < self.alice_eta[det_a as usize] {
            let z: f64 = rng.sample(StandardNormal);
            let t = t_pulse + setup.timing.alice_delay_ns + slot_a as f64 * self.tau_a + jitter * z;
            out.alice.push(AliceEvent { t, det: det_a });
        }
        let det_b = outcome_index(ob);
        let eta_b = self.bob_eta[det_b as usize] * self.misalignment.transmission_at(t_s);
        if rng.random::<f64>() < eta_b {
            let z: f64 = rng.sample(StandardNormal);
            let t = t_pulse + setup.timing.bob_delay_ns + slot_b as f64 * self.tau_b + jitter * z;
            out.bob.push(BobArrival {
                pulse: k,
                t,
                det: det_b,
            });
        }
    }

    fn sample_joint(&self, a: &Vector3<f64>, b: &Vector3<f64>, rng: &mut ChaCha8Rng) -> (Outcome, Outcome) {
        let a = BlochSetting::normalized(*a).expect("unit setting");
        let b = BlochSetting::normalized(*b).expect("unit setting");
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for oa in Outcome::BOTH {
            for ob in Outcome::BOTH {
                acc += self.pauli.joint_probability(&a, &b, oa, ob);
                if u < acc {
                    return (oa, ob);
                }
            }
        }
        (Outcome::Minus, Outcome::Minus)
    }

    /// Dead time, triggering, gating and readiness, in time order.
    fn detect(&self, batches: Vec<BatchOutput>, state: &mut DetectorState) -> Vec<DetectionRecord> {
        let setup = self.setup;
        let timing = &setup.timing;
        let d = &setup.detectors;
        let mut records = Vec::new();

        let mut alice: Vec<AliceEvent> = Vec::new();
        let mut bob: Vec<BobArrival> = Vec::new();
        for batch in batches {
            alice.extend(batch.alice);
            bob.extend(batch.bob);
        }
        alice.sort_by(|x, y| x.t.total_cmp(&y.t).then(x.det.cmp(&y.det)));

        let alice_dead_until = &mut state.alice_dead_until;
        let mut triggers: Vec<u64> = Vec::new();
        for ev in &alice {
            let det = ev.det as usize;
            if ev.t < alice_dead_until[det] {
                continue;
            }
            alice_dead_until[det] = ev.t + d[S1 + det].dead_time_ns;
            records.push(DetectionRecord::new(
                if det == 0 { Channel::S1 } else { Channel::S2 },
                ev.t,
            ));
            let k = (ev.t / self.period_ns).floor().max(0.0) as u64;
            if triggers.last() != Some(&k) {
                triggers.push(k);
            }
        }

        let gate_width = setup.gate_width_ns();
        let bob_dead_until = &mut state.bob_dead_until;
        let mut next_arrival = 0usize;
        let mut gate_events: Vec<(f64, usize)> = Vec::with_capacity(3);
        for &k in &triggers {
            let t_trig = k as f64 * self.period_ns + timing.trigger_latency_ns;
            records.push(DetectionRecord::new(Channel::Trigger, t_trig));
            if bob_dead_until.iter().all(|&u| t_trig >= u) {
                records.push(DetectionRecord::new(Channel::Ready, t_trig));
            }

            let gate_start = t_trig + timing.gate_offset_ns;
            let gate_end = gate_start + gate_width;
            gate_events.clear();
            while next_arrival < bob.len() && bob[next_arrival].pulse < k {
                next_arrival += 1;
            }
            if let Some(arr) = bob.get(next_arrival).filter(|a| a.pulse == k) {
                if arr.t >= gate_start && arr.t < gate_end {
                    gate_events.push((arr.t, arr.det as usize));
                }
            }
            let mut rng = stream_rng(setup.source.seed, self.run, Subsystem::BobGate, k);
            for det in 0..2 {
                let dark: f64 = rng.random();
                let when: f64 = rng.random();
                if dark < d[I1 + det].dark_prob_per_gate {
                    gate_events.push((gate_start + gate_width * when, det));
                }
            }
            gate_events.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            for &(t, det) in &gate_events {
                if t < bob_dead_until[det] {
                    continue;
                }
                bob_dead_until[det] = t + d[I1 + det].dead_time_ns;
                records.push(DetectionRecord::new(
                    if det == 0 { Channel::I1 } else { Channel::I2 },
                    t,
                ));
            }
        }

        sort_records(&mut records);
        records
    }
}

fn rotate_z(v: &Vector3<f64>, angle: f64) -> Vector3<f64> {
    let (s, c) = angle.sin_cos();
    Vector3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z)
}

fn bernoulli(rng: &mut ChaCha8Rng, p_plus: f64) -> Outcome {
    if rng.random::<f64>() < p_plus {
        Outcome::Plus
    } else {
        Outcome::Minus
    }
}

/// Early-slot light is horizontal and late-slot light vertical; the wave
/// plates send them to the `+` port with probability `(1 ∓ p_z)/2`.
fn fixed_slot_outcome(slot: u8, projection_z: f64, rng: &mut ChaCha8Rng) -> Outcome {
    let p_plus = if slot == SLOT_EARLY {
        (1.0 - projection_z) / 2.0
    } else {
        (1.0 + projection_z) / 2.0
    };
    bernoulli(rng, p_plus)
}

fn outcome_index(o: Outcome) -> u8 {
    match o {
        Outcome::Plus => 0,
        Outcome::Minus => 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::coincidence::{extract_coincidences, CoincidenceWindow};
    use crate::montecarlo::config::SourceConfig;
    use crate::qstate::phi_plus;

    fn ideal_setup(p: f64, seed: u64) -> SimulationSetup {
        let source = SourceConfig {
            pair_prob_per_pulse: p,
            seed,
            ..Default::default()
        };
        SimulationSetup::ideal(source, phi_plus())
    }

    fn correlation(setup: &SimulationSetup, a: BlochSetting, b: BlochSetting, duration: f64) -> (f64, u64) {
        let alice = AnalyzerConfig::aimed_at(&a, 0.0);
        let bob = AnalyzerConfig::aimed_at(&b, 0.0);
        let records = simulate_run(setup, &alice, &bob, duration, 1).unwrap();
        let w = CoincidenceWindow::for_setup(setup, &alice, &bob, 0.6);
        let c = extract_coincidences(&records, &w).unwrap();
        let n = c.total();
        ((c.n_pp + c.n_mm) as f64 / n as f64 * 2.0 - 1.0, n)
    }

    #[test]
    fn ideal_correlations_are_perfect() {
        let setup = ideal_setup(1e-3, 7);
        let (e, n) = correlation(&setup, BlochSetting::X, BlochSetting::X, 0.5);
        assert!(n > 1000);
        assert_eq!(e, 1.0);
        let (e, _) = correlation(&setup, BlochSetting::Y, BlochSetting::Y, 0.5);
        assert_eq!(e, -1.0);
        let (e, _) = correlation(&setup, BlochSetting::Z, BlochSetting::Z, 0.5);
        assert_eq!(e, 1.0);
    }

    #[test]
    fn middle_slot_fraction_is_a_quarter() {
        // every pair is detected; one in four lands in both middle slots
        let setup = ideal_setup(1e-3, 3);
        let (_, n) = correlation(&setup, BlochSetting::X, BlochSetting::X, 1.0);
        let pairs = 2e7 * 1e-3;
        let expected = pairs / 4.0;
        assert!((n as f64 - expected).abs() < 5.0 * (expected * 0.75).sqrt(), "n = {n}");
    }

    #[test]
    fn output_is_sorted_and_thread_independent() {
        let mut setup = SimulationSetup::new(
            SourceConfig {
                pair_prob_per_pulse: 5e-4,
                seed: 11,
                ..Default::default()
            },
            phi_plus(),
        );
        setup.noise.jitter_rad = 0.3;
        setup.channel.misalignment_drift_rad_per_s = 0.05;
        setup.channel.duty_cycle = 0.9;
        let alice = AnalyzerConfig::aimed_at(&BlochSetting::X, 0.4);
        let bob = AnalyzerConfig::aimed_at(&BlochSetting::X, 0.0);
        setup.threads = Some(1);
        let one = simulate_run(&setup, &alice, &bob, 0.5, 2).unwrap();
        setup.threads = Some(4);
        let four = simulate_run(&setup, &alice, &bob, 0.5, 2).unwrap();
        assert_eq!(one, four);
        assert!(one
            .windows(2)
            .all(|w| (w[0].timestamp_ns, w[0].channel) <= (w[1].timestamp_ns, w[1].channel)));
        let other_run = simulate_run(&setup, &alice, &bob, 0.5, 3).unwrap();
        assert_ne!(one, other_run);
    }

    #[test]
    fn chunks_concatenate_to_a_sorted_stream() {
        let mut setup = SimulationSetup::new(
            SourceConfig {
                pair_prob_per_pulse: 2e-5,
                seed: 4,
                ..Default::default()
            },
            phi_plus(),
        );
        setup.detectors[S1].dark_rate_hz = 1e4;
        let a = AnalyzerConfig::default();
        let duration = 30.0;
        let chunks: Vec<_> = stream_run(&setup, &a, &a, duration, 0).unwrap().collect();
        assert!(chunks.len() >= 2);
        let all: Vec<_> = chunks.concat();
        assert!(all
            .windows(2)
            .all(|w| (w[0].timestamp_ns, w[0].channel) <= (w[1].timestamp_ns, w[1].channel)));
        assert_eq!(all, simulate_run(&setup, &a, &a, duration, 0).unwrap());
    }

    #[test]
    fn ready_follows_every_trigger_without_dead_time() {
        let setup = ideal_setup(1e-3, 5);
        let a = AnalyzerConfig::default();
        let records = simulate_run(&setup, &a, &a, 0.05, 0).unwrap();
        let triggers = records.iter().filter(|r| r.channel == Channel::Trigger).count();
        let ready = records.iter().filter(|r| r.channel == Channel::Ready).count();
        assert!(triggers > 0);
        assert_eq!(triggers, ready);
    }

    #[test]
    fn bob_dead_time_blocks_ready() {
        let mut setup = ideal_setup(1e-2, 5);
        setup.detectors[I1].dead_time_ns = 10_000.0;
        setup.detectors[I1 + 1].dead_time_ns = 10_000.0;
        let a = AnalyzerConfig::default();
        let records = simulate_run(&setup, &a, &a, 0.01, 0).unwrap();
        let triggers = records.iter().filter(|r| r.channel == Channel::Trigger).count();
        let ready = records.iter().filter(|r| r.channel == Channel::Ready).count();
        assert!(ready < triggers);
        let mut last = [f64::NEG_INFINITY; 2];
        for r in &records {
            let i = match r.channel {
                Channel::I1 => 0,
                Channel::I2 => 1,
                _ => continue,
            };
            assert!(r.timestamp_ns - last[i] >= 10_000.0);
            last[i] = r.timestamp_ns;
        }
    }

    #[test]
    fn no_pairs_during_reference_period() {
        let mut setup = ideal_setup(1e-3, 5);
        setup.channel.duty_cycle = 0.5;
        setup.channel.cycle_s = 0.02;
        let a = AnalyzerConfig::default();
        let records = simulate_run(&setup, &a, &a, 0.04, 0).unwrap();
        assert!(!records.is_empty());
        for r in &records {
            let t_s = r.timestamp_ns * 1e-9;
            assert!(t_s.rem_euclid(0.02) >= 0.01 - 1e-9, "record at {t_s} s");
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let setup = ideal_setup(1e-3, 5);
        let a = AnalyzerConfig::default();
        assert!(matches!(simulate_run(&setup, &a, &a, 0.0, 0), Err(Error::Config(_))));
        let wide = AnalyzerConfig { tau_ns: 4.0, ..a };
        assert!(matches!(simulate_run(&setup, &a, &wide, 1.0, 0), Err(Error::Config(_))));
    }
}
