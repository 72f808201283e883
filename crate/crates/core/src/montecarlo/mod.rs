//! Monte Carlo model of the source, the link and the detection chain.

pub mod coincidence;
pub mod config;
pub mod records;
pub mod rng;
pub mod sim;
pub mod stabilization;

pub use coincidence::{extract_coincidences, ChannelMap, CoincidenceCounts, CoincidenceWindow};
pub use config::{
    ChannelConfig, DetectorConfig, DetectorKind, PhaseNoise, SimulationSetup, SourceConfig, TimingConfig,
};
pub use records::{Channel, DetectionRecord};
pub use sim::{simulate_run, stream_run, RecordStream};
pub use stabilization::stabilization_misalignment;

use crate::error::{Error, Result};

/// Power transmittance `10^(−loss/10)` of a loss given in dB.
pub fn db_to_transmittance(loss_db: f64) -> Result<f64> {
    if !(loss_db >= 0.0) || loss_db.is_infinite() {
        return Err(Error::domain(format!(
            "loss must be a finite value >= 0 dB (got {loss_db})"
        )));
    }
    Ok(10f64.powf(-loss_db / 10.0))
}
