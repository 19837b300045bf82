//! Physical parameters of a dot-cavity system, the three experimental presets,
//! unit conventions, and derived quantities.
//!
//! Internal unit system: hbar = 1, energies stored as angular frequencies in
//! GHz (rad/ns), times in ns. The nominal cavity photon energy is kept in eV
//! as bookkeeping; all dynamics run in a frame rotating at the cavity
//! frequency, so only offsets from it ever enter the equations of motion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduced Planck constant in eV s.
pub const HBAR_EV_S: f64 = 6.582119569e-16;

/// Convert a photon energy in eV to an angular frequency in GHz (rad/ns).
pub fn ev_to_angular_ghz(energy_ev: f64) -> f64 {
    energy_ev / HBAR_EV_S * 1e-9
}

/// Square micrometers per square centimeter.
const UM2_PER_CM2: f64 = 1e8;

/// Physical configuration of one dot-cavity system.
///
/// `g`, `gamma_cav`, `gamma_p` and `delta` are angular frequencies in GHz;
/// `omega_c_ev` and `dipole_ang_e` are carried for provenance only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Collective light-matter coupling constant (GHz).
    pub g: f64,
    /// Nominal cavity photon energy (eV, bookkeeping only).
    pub omega_c_ev: f64,
    /// Cavity quality factor.
    pub q_factor: f64,
    /// Cavity half width (GHz).
    pub gamma_cav: f64,
    /// Polarization dephasing constant (GHz).
    pub gamma_p: f64,
    /// Cavity-dot detuning, dot transition energy minus cavity energy (GHz).
    pub delta: f64,
    /// Areal dot density (cm^-2).
    pub n_dot_per_cm2: f64,
    /// Effective cavity area (um^2).
    pub cavity_area_um2: f64,
    /// Number of dots inside the cavity.
    pub n_dot: u32,
    /// Dipole moment (Angstrom times elementary charge, bookkeeping only).
    pub dipole_ang_e: f64,
}

/// Quantities derived from [`SystemParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedParams {
    /// Half-Rabi timescale 1/g (ns).
    pub tau_rabi: f64,
    /// Cavity lifetime 1/(2 gamma_cav) (ns).
    pub tau_cav: f64,
    /// Dot transition energy omega_c + delta in the working frame (GHz).
    pub e_eh: f64,
}

/// The three experimental presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Micropillar cavity between DBR mirrors.
    Pillar,
    /// Photonic-crystal cavity.
    Crystal,
    /// Microdisk cavity.
    Disk,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Pillar, Scenario::Crystal, Scenario::Disk];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Pillar => "pillar",
            Scenario::Crystal => "crystal",
            Scenario::Disk => "disk",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pillar" => Ok(Scenario::Pillar),
            "crystal" => Ok(Scenario::Crystal),
            "disk" => Ok(Scenario::Disk),
            other => Err(Error::Config(format!(
                "unknown scenario `{other}`; valid scenarios are pillar, crystal, disk"
            ))),
        }
    }
}

/// Baseline dephasing used by the presets (GHz). The published preset tables
/// fix the cavity and coupling data but not gamma_P; this default matches the
/// photon-statistics protocol and is freely overridable.
pub const DEFAULT_GAMMA_P: f64 = 0.23;

/// Dipole moment shared by all three presets (Angstrom times e).
pub const PRESET_DIPOLE_ANG_E: f64 = 5.3;

/// Return one of the three experimental presets.
pub fn load_scenario(scenario: Scenario) -> SystemParams {
    let (g, omega_c_ev, q_factor, n_dot_per_cm2, cavity_area_um2, n_dot) = match scenario {
        Scenario::Pillar => (20.0, 1.33, 2.4e4, 1.3e9, 3.0, 39),
        Scenario::Crystal => (22.0, 1.0, 2.2e4, 6.0e9, 10.0, 600),
        Scenario::Disk => (11.0, 1.0, 4.0e5, 1.0e10, 2.5, 250),
    };
    let gamma_cav = ev_to_angular_ghz(omega_c_ev) / (2.0 * q_factor);
    SystemParams {
        g,
        omega_c_ev,
        q_factor,
        gamma_cav,
        gamma_p: DEFAULT_GAMMA_P,
        delta: 0.0,
        n_dot_per_cm2,
        cavity_area_um2,
        n_dot,
        dipole_ang_e: PRESET_DIPOLE_ANG_E,
    }
}

/// Compute derived quantities. Pure; validation happens upstream.
pub fn derive(params: &SystemParams) -> DerivedParams {
    DerivedParams {
        tau_rabi: 1.0 / params.g,
        tau_cav: 1.0 / (2.0 * params.gamma_cav),
        e_eh: ev_to_angular_ghz(params.omega_c_ev) + params.delta,
    }
}

/// One invariant violation found by [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

/// Structured validation result; empty means the parameter set is usable.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, field: &'static str, message: String) {
        self.violations.push(Violation { field, message });
    }
}

/// Check every invariant of [`SystemParams`], reporting all violations instead
/// of aborting at the first.
pub fn validate(params: &SystemParams) -> ValidationReport {
    let mut report = ValidationReport::default();
    let positive: [(&'static str, f64); 4] = [
        ("g", params.g),
        ("q_factor", params.q_factor),
        ("gamma_cav", params.gamma_cav),
        ("cavity_area_um2", params.cavity_area_um2),
    ];
    for (field, value) in positive {
        if !(value > 0.0) {
            report.push(field, format!("must be > 0, got {value}"));
        }
    }
    if !(params.gamma_p >= 0.0) {
        report.push("gamma_p", format!("must be >= 0, got {}", params.gamma_p));
    }
    if !(params.n_dot_per_cm2 >= 0.0) {
        report.push(
            "n_dot_per_cm2",
            format!("must be >= 0, got {}", params.n_dot_per_cm2),
        );
    }
    if !(params.omega_c_ev > 0.0) {
        report.push(
            "omega_c_ev",
            format!("must be > 0, got {}", params.omega_c_ev),
        );
    }
    if !params.delta.is_finite() {
        report.push("delta", "must be finite".into());
    }

    if params.n_dot_per_cm2 > 0.0 && params.cavity_area_um2 > 0.0 {
        let expected = expected_dot_count(params.n_dot_per_cm2, params.cavity_area_um2);
        if params.n_dot != expected {
            report.push(
                "n_dot",
                format!(
                    "inconsistent with density and area: expected {expected}, got {}",
                    params.n_dot
                ),
            );
        }
    }

    if params.omega_c_ev > 0.0 && params.q_factor > 0.0 && params.gamma_cav > 0.0 {
        let q_from_width = ev_to_angular_ghz(params.omega_c_ev) / (2.0 * params.gamma_cav);
        let rel = (q_from_width - params.q_factor).abs() / params.q_factor;
        if rel > 0.01 {
            report.push(
                "gamma_cav",
                format!(
                    "inconsistent with Q: omega_c/(2 gamma_cav) = {q_from_width:.4e} \
                     differs from Q = {:.4e} by {:.2}%",
                    params.q_factor,
                    100.0 * rel
                ),
            );
        }
    }
    report
}

/// Dot count implied by density (cm^-2) and effective area (um^2).
pub fn expected_dot_count(n_dot_per_cm2: f64, cavity_area_um2: f64) -> u32 {
    (n_dot_per_cm2 * cavity_area_um2 / UM2_PER_CM2).round() as u32
}

/// Cavity half width (GHz) implied by the quality factor.
pub fn gamma_cav_from_q(omega_c_ev: f64, q_factor: f64) -> f64 {
    ev_to_angular_ghz(omega_c_ev) / (2.0 * q_factor)
}

/// Quality factor implied by the cavity half width (GHz).
pub fn q_from_gamma_cav(omega_c_ev: f64, gamma_cav: f64) -> f64 {
    ev_to_angular_ghz(omega_c_ev) / (2.0 * gamma_cav)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_published_values() {
        let pillar = load_scenario(Scenario::Pillar);
        assert_eq!(pillar.n_dot, 39);
        assert_eq!(pillar.g, 20.0);
        assert_eq!(pillar.omega_c_ev, 1.33);
        assert_eq!(pillar.q_factor, 2.4e4);
        assert_eq!(pillar.cavity_area_um2, 3.0);

        let crystal = load_scenario(Scenario::Crystal);
        assert_eq!(crystal.g, 22.0);
        assert_eq!(crystal.n_dot, 600);
        assert_eq!(crystal.q_factor, 2.2e4);

        let disk = load_scenario(Scenario::Disk);
        assert_eq!(disk.q_factor, 4.0e5);
        assert_eq!(disk.n_dot, 250);
        assert_eq!(disk.g, 11.0);

        for s in Scenario::ALL {
            let p = load_scenario(s);
            assert_eq!(p.dipole_ang_e, 5.3);
            assert!(validate(&p).is_ok(), "{s:?}: {:?}", validate(&p));
        }
    }

    #[test]
    fn dot_count_reproduces_presets_exactly() {
        assert_eq!(expected_dot_count(1.3e9, 3.0), 39);
        assert_eq!(expected_dot_count(6.0e9, 10.0), 600);
        assert_eq!(expected_dot_count(1.0e10, 2.5), 250);
    }

    #[test]
    fn unknown_scenario_is_a_config_error() {
        let err = "pyramid".parse::<Scenario>().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("pillar") && msg.contains("crystal") && msg.contains("disk"));
    }

    #[test]
    fn derive_matches_direct_formulas() {
        let mut p = load_scenario(Scenario::Disk);
        let d = derive(&p);
        assert!((d.tau_rabi - 1.0 / 11.0).abs() < 1e-15);

        p.gamma_cav = 0.5;
        let d = derive(&p);
        assert_eq!(d.tau_cav, 1.0);
    }

    #[test]
    fn gamma_cav_unit_conversion_oracle() {
        // 1.0 eV / (2 * 4e5) = 1.25 ueV; dividing by hbar gives about 1.9 GHz.
        let gamma = gamma_cav_from_q(1.0, 4.0e5);
        let half_width_ev: f64 = 1.0 / (2.0 * 4.0e5);
        assert!((half_width_ev - 1.25e-6).abs() < 1e-12);
        let oracle = half_width_ev / 6.582119569e-16 * 1e-9;
        assert!((gamma - oracle).abs() < 1e-12);
        assert!((gamma - 1.9).abs() < 0.01, "gamma_cav = {gamma}");
    }

    #[test]
    fn derive_is_pure_and_idempotent() {
        let p = load_scenario(Scenario::Crystal);
        let a = derive(&p);
        let b = derive(&p);
        assert_eq!(a.tau_rabi.to_bits(), b.tau_rabi.to_bits());
        assert_eq!(a.tau_cav.to_bits(), b.tau_cav.to_bits());
        assert_eq!(a.e_eh.to_bits(), b.e_eh.to_bits());
    }

    #[test]
    fn validate_flags_inconsistent_dot_count() {
        let mut p = load_scenario(Scenario::Pillar);
        p.n_dot = 40;
        let report = validate(&p);
        assert!(!report.is_ok());
        assert!(report.violations.iter().any(|v| v.field == "n_dot"));
    }

    #[test]
    fn validate_flags_negative_dephasing() {
        let mut p = load_scenario(Scenario::Pillar);
        p.gamma_p = -1.0;
        let report = validate(&p);
        assert!(report.violations.iter().any(|v| v.field == "gamma_p"));
    }

    #[test]
    fn validate_flags_q_width_mismatch() {
        let mut p = load_scenario(Scenario::Disk);
        p.gamma_cav *= 1.05;
        let report = validate(&p);
        assert!(report.violations.iter().any(|v| v.field == "gamma_cav"));
    }
}
