//! Measurement settings of the four CHSH configurations.
//!
//! Alice's two bases are orthogonal on the Bloch sphere and lie on a great
//! circle; Bob's pair is derived from the correlation tensor so that the
//! CHSH value is maximal for that circle.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, FRAC_PI_8};
use std::fmt;

use nalgebra::{Rotation3, Vector3};

use crate::error::{Error, Result};
use crate::qstate::{chsh_value, optimal_partner_settings, BlochSetting, CorrelationTensor, TwoQubitState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConfigurationId(u8);

impl ConfigurationId {
    pub const ALL: [ConfigurationId; 4] = [
        ConfigurationId(1),
        ConfigurationId(2),
        ConfigurationId(3),
        ConfigurationId(4),
    ];

    pub fn new(id: u8) -> Result<Self> {
        if (1..=4).contains(&id) {
            Ok(ConfigurationId(id))
        } else {
            Err(Error::config(format!(
                "configuration id must be 1, 2, 3 or 4 (got {id})"
            )))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl fmt::Display for ConfigurationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SettingsQuad {
    pub a1: BlochSetting,
    pub a2: BlochSetting,
    pub b1: BlochSetting,
    pub b2: BlochSetting,
}

impl SettingsQuad {
    /// Setting pair `(a_i, b_j)` for `i, j ∈ {1, 2}`.
    pub fn pair(&self, i: usize, j: usize) -> (BlochSetting, BlochSetting) {
        let a = if i == 1 { self.a1 } else { self.a2 };
        let b = if j == 1 { self.b1 } else { self.b2 };
        (a, b)
    }

    /// The four `(i, j)` index pairs in CHSH order; the last enters with a minus sign.
    pub const INDICES: [(usize, usize); 4] = [(1, 1), (1, 2), (2, 1), (2, 2)];

    pub fn chsh(&self, state: &TwoQubitState) -> Result<f64> {
        chsh_value(state, &self.a1, &self.a2, &self.b1, &self.b2)
    }
}

/// Alice's orthogonal pair for a configuration.
pub fn alice_pair(id: ConfigurationId) -> (BlochSetting, BlochSetting) {
    let h = FRAC_1_SQRT_2;
    let unit = |x: f64, y: f64, z: f64| BlochSetting::normalized(Vector3::new(x, y, z)).expect("nonzero");
    match id.0 {
        1 => (BlochSetting::X, BlochSetting::Y),
        2 => (unit(h, 0.0, h), unit(-h, 0.0, h)),
        3 => (unit(0.0, h, h), unit(0.0, -h, h)),
        _ => {
            let (a1, a2) = alice_pair(ConfigurationId(2));
            let rot = Rotation3::from_axis_angle(&Vector3::x_axis(), -FRAC_PI_4)
                * Rotation3::from_axis_angle(&Vector3::y_axis(), -FRAC_PI_8);
            (a1.rotated(&rot), a2.rotated(&rot))
        }
    }
}

pub fn config_settings(id: ConfigurationId, tensor: &CorrelationTensor) -> Result<SettingsQuad> {
    let (a1, a2) = alice_pair(id);
    let (b1, b2) = optimal_partner_settings(tensor, &a1, &a2)?;
    Ok(SettingsQuad { a1, a2, b1, b2 })
}

/// `(2√2·(V−σ), 2√2·(V+σ))` clamped to `[0, 2√2]`.
pub fn predicted_s_range(visibility: f64, sigma_v: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&visibility) {
        return Err(Error::domain(format!(
            "visibility must lie in [0, 1] (got {visibility})"
        )));
    }
    if !(sigma_v >= 0.0 && sigma_v.is_finite()) {
        return Err(Error::domain(format!(
            "visibility uncertainty must be >= 0 (got {sigma_v})"
        )));
    }
    let s_max = 2.0 * std::f64::consts::SQRT_2;
    let clamp = |v: f64| (s_max * v).clamp(0.0, s_max);
    Ok((clamp(visibility - sigma_v), clamp(visibility + sigma_v)))
}
