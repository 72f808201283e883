//! Middle-slot coincidence extraction from a TDC record stream.
//!
//! Each trigger opens a frame whose start is the TDC start. Within a frame,
//! the first Alice record and the first Bob record that fall inside the
//! middle-slot window (measured from the frame start) form a coincidence.
//! With ready gating enabled only frames carrying a `ready` record count,
//! so frames in which one of Bob's detectors was dead are discarded whole.

use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use super::config::SimulationSetup;
use super::records::{Channel, DetectionRecord};
use crate::error::{Error, Result};
use crate::optics::AnalyzerConfig;
use crate::qstate::Outcome;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CoincidenceCounts {
    pub n_pp: u64,
    pub n_pm: u64,
    pub n_mp: u64,
    pub n_mm: u64,
}

impl CoincidenceCounts {
    pub fn new(n_pp: u64, n_pm: u64, n_mp: u64, n_mm: u64) -> Self {
        CoincidenceCounts { n_pp, n_pm, n_mp, n_mm }
    }

    pub fn total(&self) -> u64 {
        self.n_pp + self.n_pm + self.n_mp + self.n_mm
    }

    pub fn get(&self, a: Outcome, b: Outcome) -> u64 {
        match (a, b) {
            (Outcome::Plus, Outcome::Plus) => self.n_pp,
            (Outcome::Plus, Outcome::Minus) => self.n_pm,
            (Outcome::Minus, Outcome::Plus) => self.n_mp,
            (Outcome::Minus, Outcome::Minus) => self.n_mm,
        }
    }

    pub fn record(&mut self, a: Outcome, b: Outcome) {
        match (a, b) {
            (Outcome::Plus, Outcome::Plus) => self.n_pp += 1,
            (Outcome::Plus, Outcome::Minus) => self.n_pm += 1,
            (Outcome::Minus, Outcome::Plus) => self.n_mp += 1,
            (Outcome::Minus, Outcome::Minus) => self.n_mm += 1,
        }
    }
}

impl AddAssign for CoincidenceCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.n_pp += rhs.n_pp;
        self.n_pm += rhs.n_pm;
        self.n_mp += rhs.n_mp;
        self.n_mm += rhs.n_mm;
    }
}

/// Which detector on each side reports the `+` outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelMap {
    pub alice_plus: Channel,
    pub bob_plus: Channel,
}

impl Default for ChannelMap {
    fn default() -> Self {
        ChannelMap {
            alice_plus: Channel::S1,
            bob_plus: Channel::I1,
        }
    }
}

impl ChannelMap {
    pub fn outcome(&self, channel: Channel) -> Option<Outcome> {
        let plus = if channel.is_alice() {
            self.alice_plus
        } else if channel.is_bob() {
            self.bob_plus
        } else {
            return None;
        };
        Some(if channel == plus { Outcome::Plus } else { Outcome::Minus })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoincidenceWindow {
    /// Full width of the middle-slot acceptance window.
    pub width_ns: f64,
    /// Slot spacing; the window must be narrower so slots cannot overlap.
    pub tau_ns: f64,
    /// Expected middle-slot delay of Alice's records after the TDC start.
    pub alice_slot_ns: f64,
    /// Expected middle-slot delay of Bob's records after the TDC start.
    pub bob_slot_ns: f64,
    pub ready_gating: bool,
    pub channels: ChannelMap,
}

impl CoincidenceWindow {
    /// Window centred on both middle slots of the simulated apparatus.
    pub fn for_setup(setup: &SimulationSetup, alice: &AnalyzerConfig, bob: &AnalyzerConfig, width_ns: f64) -> Self {
        let t = &setup.timing;
        CoincidenceWindow {
            width_ns,
            tau_ns: alice.tau_ns.min(bob.tau_ns),
            alice_slot_ns: t.alice_delay_ns + alice.tau_ns - t.trigger_latency_ns,
            bob_slot_ns: t.bob_delay_ns + bob.tau_ns - t.trigger_latency_ns,
            ready_gating: true,
            channels: ChannelMap::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width_ns > 0.0) {
            return Err(Error::config(format!(
                "coincidence window must be positive (got {} ns)",
                self.width_ns
            )));
        }
        if self.width_ns >= self.tau_ns {
            return Err(Error::config(format!(
                "coincidence window ({} ns) must be narrower than tau ({} ns) or the slots overlap",
                self.width_ns, self.tau_ns
            )));
        }
        Ok(())
    }

    fn accepts(&self, delay: f64, slot: f64) -> bool {
        (delay - slot).abs() <= self.width_ns / 2.0
    }
}

#[derive(Debug)]
struct Frame {
    start: f64,
    ready: bool,
    alice: Option<Outcome>,
    bob: Option<Outcome>,
}

pub fn extract_coincidences(records: &[DetectionRecord], window: &CoincidenceWindow) -> Result<CoincidenceCounts> {
    window.validate()?;
    let mut counts = CoincidenceCounts::default();
    let mut frame: Option<Frame> = None;

    let close = |frame: Option<Frame>, counts: &mut CoincidenceCounts| {
        if let Some(f) = frame {
            if f.ready || !window.ready_gating {
                if let (Some(a), Some(b)) = (f.alice, f.bob) {
                    counts.record(a, b);
                }
            }
        }
    };

    for r in records {
        match r.channel {
            Channel::Trigger => {
                close(frame.take(), &mut counts);
                frame = Some(Frame {
                    start: r.timestamp_ns,
                    ready: false,
                    alice: None,
                    bob: None,
                });
            }
            Channel::Ready => match frame.as_mut() {
                Some(f) if (r.timestamp_ns - f.start).abs() < 1e-9 => f.ready = true,
                _ => {
                    close(frame.take(), &mut counts);
                    frame = Some(Frame {
                        start: r.timestamp_ns,
                        ready: true,
                        alice: None,
                        bob: None,
                    });
                }
            },
            ch => {
                let Some(f) = frame.as_mut() else { continue };
                let delay = r.timestamp_ns - f.start;
                let outcome = window.channels.outcome(ch);
                if ch.is_alice() && f.alice.is_none() && window.accepts(delay, window.alice_slot_ns) {
                    f.alice = outcome;
                } else if ch.is_bob() && f.bob.is_none() && window.accepts(delay, window.bob_slot_ns) {
                    f.bob = outcome;
                }
            }
        }
    }
    close(frame, &mut counts);
    Ok(counts)
}
