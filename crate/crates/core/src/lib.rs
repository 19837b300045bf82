//! Simulator for the resonance fluorescence of quantum-dot microcavities.
//!
//! A cluster-expansion correlation model integrates the coupled dynamics of a
//! two-level emitter and a Lorentzian continuum of photon modes under pulsed
//! coherent pumping, producing emission intensity spectra I(w) and spectrally
//! resolved photon statistics g2(w). An exact truncated-Fock-space
//! Jaynes-Cummings solver serves as ground truth for dressed energies,
//! weak-excitation dynamics, and photon-statistics moments.
//!
//! Internal units: hbar = 1, angular frequencies in GHz (rad/ns), times in
//! ns. All spectral quantities are offsets from the cavity resonance.

pub mod analytics;
pub mod cli;
pub mod crosscheck;
pub mod dynamics;
pub mod error;
pub mod modes;
pub mod numerics;
pub mod oracle;
pub mod params;
pub mod spectra;
pub mod sweeps;

pub use error::{Error, Result};
