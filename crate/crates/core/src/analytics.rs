//! Closed-form Jaynes-Cummings ladder formulas: dressed-state energies, rung
//! splittings, the optimum two-photon pump frequency, the second-rung emission
//! frequencies, and coherent-state photon statistics.
//!
//! All frequencies are offsets from the cavity resonance, in GHz.

use serde::Serialize;

use crate::error::{Error, Result};

/// Dressed doublet of the k-excitation manifold at zero detuning; rung 1 is
/// the vacuum Rabi doublet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RungEnergies {
    pub rung_index: u32,
    /// Lower dressed level, offset from the manifold center (GHz).
    pub lower: f64,
    /// Upper dressed level, offset from the manifold center (GHz).
    pub upper: f64,
}

impl RungEnergies {
    pub fn splitting(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Optimum two-photon pump frequency and the pair of second-rung emission
/// frequencies, all as offsets from the cavity resonance (GHz).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PumpResonance {
    pub optimum_pump: f64,
    pub emission_lower: f64,
    pub emission_upper: f64,
}

/// Dressed energies of rung `k` at zero detuning: offsets -g sqrt(k) and
/// +g sqrt(k) from the manifold center.
pub fn dressed_energies(k: u32, g: f64) -> Result<RungEnergies> {
    if k < 1 {
        return Err(Error::Contract(
            "dressed_energies: rung index must be >= 1".into(),
        ));
    }
    if !(g > 0.0) {
        return Err(Error::Contract(format!(
            "dressed_energies: coupling must be > 0, got {g}"
        )));
    }
    let half = g * (k as f64).sqrt();
    Ok(RungEnergies {
        rung_index: k,
        lower: -half,
        upper: half,
    })
}

/// Optimum pump frequency (delta + sqrt(delta^2 + 8 g^2))/4 and second-rung
/// emission frequencies (sqrt(delta^2 + 8 g^2) -+ sqrt(delta^2 + 4 g^2))/2.
pub fn pump_resonance(g: f64, delta: f64) -> Result<PumpResonance> {
    if !(g > 0.0) {
        return Err(Error::Contract(format!(
            "pump_resonance: coupling must be > 0, got {g}"
        )));
    }
    let r8 = (delta * delta + 8.0 * g * g).sqrt();
    let r4 = (delta * delta + 4.0 * g * g).sqrt();
    Ok(PumpResonance {
        optimum_pump: (delta + r8) / 4.0,
        emission_lower: (r8 - r4) / 2.0,
        emission_upper: (r8 + r4) / 2.0,
    })
}

/// Probability of finding `n` photons in a coherent state of amplitude
/// `alpha`: |alpha|^(2n) exp(-|alpha|^2) / n!.
pub fn poisson_occupation(alpha: f64, n: u32) -> f64 {
    let x = alpha * alpha;
    let mut p = (-x).exp();
    for k in 1..=n {
        p *= x / k as f64;
    }
    p
}

/// The paper-normalized two-photon occupation P2 = |alpha|^4 exp(-|alpha|^2)/2.
pub fn two_photon_occupation(alpha: f64) -> f64 {
    poisson_occupation(alpha, 2)
}
