//! Correlation and CHSH estimators with their statistical uncertainties.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::montecarlo::CoincidenceCounts;

/// How the standard error of a correlation coefficient is propagated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum SigmaModel {
    /// `sqrt((1 − E²)/N)` for `N` coincidences.
    #[default]
    Binomial,
    /// First-order propagation of independent Poisson errors on each of the
    /// four counts. Numerically equal to the binomial form; kept as an
    /// explicit cross-check.
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrEstimate {
    pub e: f64,
    pub sigma: f64,
    pub counts: CoincidenceCounts,
}

pub fn estimate_e(counts: CoincidenceCounts) -> Result<CorrEstimate> {
    estimate_e_with(counts, SigmaModel::Binomial)
}

pub fn estimate_e_with(counts: CoincidenceCounts, model: SigmaModel) -> Result<CorrEstimate> {
    let total = counts.total();
    if total == 0 {
        return Err(Error::InsufficientData(
            "no coincidences recorded for this setting pair".into(),
        ));
    }
    let n = total as f64;
    let same = (counts.n_pp + counts.n_mm) as f64;
    let diff = (counts.n_pm + counts.n_mp) as f64;
    let e = ((same - diff) / n).clamp(-1.0, 1.0);
    let sigma = match model {
        SigmaModel::Binomial => ((1.0 - e * e).max(0.0) / n).sqrt(),
        SigmaModel::Poisson => {
            // dE/dn = ±2·(other class)/N² for counts in the same/different class
            let d_same = 2.0 * diff / (n * n);
            let d_diff = 2.0 * same / (n * n);
            (d_same * d_same * same + d_diff * d_diff * diff).sqrt()
        }
    };
    Ok(CorrEstimate { e, sigma, counts })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SEstimate {
    pub s: f64,
    pub sigma: f64,
    /// Standard deviations by which `s` exceeds the local bound of 2.
    pub significance: f64,
    /// Integration time per setting pair, when known.
    pub duration_s: Option<f64>,
}

pub fn estimate_s(e11: &CorrEstimate, e12: &CorrEstimate, e21: &CorrEstimate, e22: &CorrEstimate) -> SEstimate {
    let s = (e11.e + e12.e + e21.e - e22.e).abs();
    let sigma = [e11, e12, e21, e22]
        .iter()
        .map(|x| x.sigma * x.sigma)
        .sum::<f64>()
        .sqrt();
    SEstimate {
        s,
        sigma,
        significance: significance(s, sigma),
        duration_s: None,
    }
}

/// `(S − 2)/σ`; infinite for an exact violation without uncertainty.
pub fn significance(s: f64, sigma: f64) -> f64 {
    if sigma > 0.0 {
        (s - 2.0) / sigma
    } else if s > 2.0 {
        f64::INFINITY
    } else if s < 2.0 {
        f64::NEG_INFINITY
    } else {
        0.0
    }
}
