//! Experiment procedures and estimators built on the simulator.

pub mod calibration;
pub mod chsh;
pub mod context;
pub mod estimate;
pub mod fringe;
pub mod settings;

pub use calibration::{calibrate_phase, CalibrationOptions, PhaseCalibration};
pub use chsh::{run_chsh, write_chsh_csv, ChshOptions, ChshResult};
pub use context::SimContext;
pub use estimate::{estimate_e, estimate_s, CorrEstimate, SEstimate};
pub use fringe::{fit_fringe, run_visibility_scan, FitWeighting, FringeScan, ScanMode};
pub use settings::{config_settings, predicted_s_range, ConfigurationId, SettingsQuad};
