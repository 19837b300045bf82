//! Line-oriented `key = value` configuration with optional bracketed section
//! headers and `#` comments. Unknown keys and sections are errors; silent
//! typos in physics configs produce wrong science.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::{
    expected_dot_count, gamma_cav_from_q, load_scenario, q_from_gamma_cav, validate, Scenario,
    SystemParams, DEFAULT_GAMMA_P, PRESET_DIPOLE_ANG_E,
};
use crate::sweeps::RunSetup;

/// Parsed, unresolved run specification. `None` fields take protocol
/// defaults; the literal value `auto` in a config file maps to `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunSpec {
    pub scenario: Option<String>,
    pub g: Option<f64>,
    pub omega_c_ev: Option<f64>,
    pub q_factor: Option<f64>,
    pub gamma_cav: Option<f64>,
    pub gamma_p: Option<f64>,
    pub delta: Option<f64>,
    pub n_dot_per_cm2: Option<f64>,
    pub cavity_area_um2: Option<f64>,
    pub n_dot: Option<u32>,
    pub dipole: Option<f64>,
    pub mode_count: Option<usize>,
    pub half_width_over_g: Option<f64>,
    pub pump_sigma_over_g: Option<f64>,
    pub pump_carrier_offset: Option<f64>,
    pub alpha: Option<f64>,
    pub pump_t_peak: Option<f64>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub record_every: Option<usize>,
}

const SECTIONS: [&str; 5] = ["run", "system", "grid", "pump", "integrator"];

/// All accepted keys with their canonical section, in render order.
const KEYS: [(&str, &str); 20] = [
    ("scenario", "run"),
    ("g", "system"),
    ("omega_c_eV", "system"),
    ("Q", "system"),
    ("gamma_cav", "system"),
    ("gamma_P", "system"),
    ("delta", "system"),
    ("n_dot", "system"),
    ("S", "system"),
    ("N_dot", "system"),
    ("d", "system"),
    ("mode_count", "grid"),
    ("half_width_over_g", "grid"),
    ("pump_sigma_over_g", "pump"),
    ("pump_carrier_offset", "pump"),
    ("alpha", "pump"),
    ("pump_t_peak", "pump"),
    ("dt", "integrator"),
    ("t_end", "integrator"),
    ("record_every", "integrator"),
];

fn parse_f64(key: &str, value: &str, line: usize) -> Result<Option<f64>> {
    if value == "auto" {
        return Ok(None);
    }
    value.parse::<f64>().map(Some).map_err(|_| {
        Error::Config(format!(
            "line {line}: key `{key}`: cannot parse `{value}` as a number"
        ))
    })
}

fn parse_usize(key: &str, value: &str, line: usize) -> Result<Option<usize>> {
    if value == "auto" {
        return Ok(None);
    }
    value.parse::<usize>().map(Some).map_err(|_| {
        Error::Config(format!(
            "line {line}: key `{key}`: cannot parse `{value}` as a positive integer"
        ))
    })
}

/// Parse a configuration document into a [`RunSpec`].
pub fn parse_config(text: &str) -> Result<RunSpec> {
    let mut spec = RunSpec::default();
    let mut seen: Vec<String> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(section) = line.strip_prefix('[') {
            let section = section.strip_suffix(']').ok_or_else(|| {
                Error::Config(format!("line {line_no}: malformed section header `{raw}`"))
            })?;
            if !SECTIONS.contains(&section.trim()) {
                return Err(Error::Config(format!(
                    "line {line_no}: unknown section `[{section}]`; valid sections: {}",
                    SECTIONS.join(", ")
                )));
            }
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!(
                "line {line_no}: expected `key = value`, got `{raw}`"
            ))
        })?;
        let key = key.trim();
        let value = value.trim();
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(Error::Config(format!(
                "line {line_no}: unknown key `{key}`"
            )));
        }
        if seen.iter().any(|k| k == key) {
            return Err(Error::Config(format!(
                "line {line_no}: duplicate key `{key}`"
            )));
        }
        seen.push(key.to_string());
        match key {
            "scenario" => {
                value.parse::<Scenario>()?;
                spec.scenario = Some(value.to_string());
            }
            "g" => spec.g = parse_f64(key, value, line_no)?,
            "omega_c_eV" => spec.omega_c_ev = parse_f64(key, value, line_no)?,
            "Q" => spec.q_factor = parse_f64(key, value, line_no)?,
            "gamma_cav" => spec.gamma_cav = parse_f64(key, value, line_no)?,
            "gamma_P" => spec.gamma_p = parse_f64(key, value, line_no)?,
            "delta" => spec.delta = parse_f64(key, value, line_no)?,
            "n_dot" => spec.n_dot_per_cm2 = parse_f64(key, value, line_no)?,
            "S" => spec.cavity_area_um2 = parse_f64(key, value, line_no)?,
            "N_dot" => {
                spec.n_dot = match parse_usize(key, value, line_no)? {
                    Some(v) => Some(v as u32),
                    None => None,
                }
            }
            "d" => spec.dipole = parse_f64(key, value, line_no)?,
            "mode_count" => spec.mode_count = parse_usize(key, value, line_no)?,
            "half_width_over_g" => spec.half_width_over_g = parse_f64(key, value, line_no)?,
            "pump_sigma_over_g" => spec.pump_sigma_over_g = parse_f64(key, value, line_no)?,
            "pump_carrier_offset" => {
                spec.pump_carrier_offset = parse_f64(key, value, line_no)?
            }
            "alpha" => spec.alpha = parse_f64(key, value, line_no)?,
            "pump_t_peak" => spec.pump_t_peak = parse_f64(key, value, line_no)?,
            "dt" => spec.dt = parse_f64(key, value, line_no)?,
            "t_end" => spec.t_end = parse_f64(key, value, line_no)?,
            "record_every" => spec.record_every = parse_usize(key, value, line_no)?,
            _ => unreachable!("key table covers all keys"),
        }
    }
    Ok(spec)
}

/// Render a spec back to config text; `parse_config(render(spec))` yields an
/// equal spec.
pub fn render(spec: &RunSpec) -> String {
    let mut out = String::new();
    let fields: Vec<(&str, Option<String>)> = vec![
        ("scenario", spec.scenario.clone()),
        ("g", spec.g.map(|v| v.to_string())),
        ("omega_c_eV", spec.omega_c_ev.map(|v| v.to_string())),
        ("Q", spec.q_factor.map(|v| v.to_string())),
        ("gamma_cav", spec.gamma_cav.map(|v| v.to_string())),
        ("gamma_P", spec.gamma_p.map(|v| v.to_string())),
        ("delta", spec.delta.map(|v| v.to_string())),
        ("n_dot", spec.n_dot_per_cm2.map(|v| v.to_string())),
        ("S", spec.cavity_area_um2.map(|v| v.to_string())),
        ("N_dot", spec.n_dot.map(|v| v.to_string())),
        ("d", spec.dipole.map(|v| v.to_string())),
        ("mode_count", spec.mode_count.map(|v| v.to_string())),
        (
            "half_width_over_g",
            spec.half_width_over_g.map(|v| v.to_string()),
        ),
        (
            "pump_sigma_over_g",
            spec.pump_sigma_over_g.map(|v| v.to_string()),
        ),
        (
            "pump_carrier_offset",
            spec.pump_carrier_offset.map(|v| v.to_string()),
        ),
        ("alpha", spec.alpha.map(|v| v.to_string())),
        ("pump_t_peak", spec.pump_t_peak.map(|v| v.to_string())),
        ("dt", spec.dt.map(|v| v.to_string())),
        ("t_end", spec.t_end.map(|v| v.to_string())),
        ("record_every", spec.record_every.map(|v| v.to_string())),
    ];
    let mut current_section = "";
    for ((key, section), value) in KEYS.iter().zip(fields.iter().map(|(_, v)| v)) {
        if let Some(value) = value {
            if *section != current_section {
                out.push_str(&format!("[{section}]\n"));
                current_section = section;
            }
            out.push_str(&format!("{key} = {value}\n"));
        }
    }
    out
}

/// Merge `other` into `self`, with `other` winning where both are set.
pub fn merge(base: &RunSpec, other: &RunSpec) -> RunSpec {
    macro_rules! pick {
        ($field:ident) => {
            other.$field.clone().or_else(|| base.$field.clone())
        };
    }
    RunSpec {
        scenario: pick!(scenario),
        g: pick!(g),
        omega_c_ev: pick!(omega_c_ev),
        q_factor: pick!(q_factor),
        gamma_cav: pick!(gamma_cav),
        gamma_p: pick!(gamma_p),
        delta: pick!(delta),
        n_dot_per_cm2: pick!(n_dot_per_cm2),
        cavity_area_um2: pick!(cavity_area_um2),
        n_dot: pick!(n_dot),
        dipole: pick!(dipole),
        mode_count: pick!(mode_count),
        half_width_over_g: pick!(half_width_over_g),
        pump_sigma_over_g: pick!(pump_sigma_over_g),
        pump_carrier_offset: pick!(pump_carrier_offset),
        alpha: pick!(alpha),
        pump_t_peak: pick!(pump_t_peak),
        dt: pick!(dt),
        t_end: pick!(t_end),
        record_every: pick!(record_every),
    }
}

impl RunSpec {
    /// Resolve into validated physical parameters plus run settings.
    pub fn resolve(&self) -> Result<RunSetup> {
        let mut params = match &self.scenario {
            Some(name) => load_scenario(name.parse::<Scenario>()?),
            None => {
                let g = self.g.ok_or_else(|| {
                    Error::Config("no scenario given, so `g` is required".into())
                })?;
                let omega_c_ev = self.omega_c_ev.ok_or_else(|| {
                    Error::Config("no scenario given, so `omega_c_eV` is required".into())
                })?;
                if self.q_factor.is_none() && self.gamma_cav.is_none() {
                    return Err(Error::Config(
                        "no scenario given, so `Q` or `gamma_cav` is required".into(),
                    ));
                }
                SystemParams {
                    g,
                    omega_c_ev,
                    q_factor: 0.0,
                    gamma_cav: 0.0,
                    gamma_p: DEFAULT_GAMMA_P,
                    delta: 0.0,
                    n_dot_per_cm2: 0.0,
                    cavity_area_um2: 1.0,
                    n_dot: 0,
                    dipole_ang_e: PRESET_DIPOLE_ANG_E,
                }
            }
        };
        if let Some(g) = self.g {
            params.g = g;
        }
        if let Some(ev) = self.omega_c_ev {
            params.omega_c_ev = ev;
        }
        if let Some(gp) = self.gamma_p {
            params.gamma_p = gp;
        }
        if let Some(delta) = self.delta {
            params.delta = delta;
        }
        if let Some(n) = self.n_dot_per_cm2 {
            params.n_dot_per_cm2 = n;
        }
        if let Some(s) = self.cavity_area_um2 {
            params.cavity_area_um2 = s;
        }
        if let Some(d) = self.dipole {
            params.dipole_ang_e = d;
        }
        // Q and gamma_cav are interchangeable parameterizations: derive the
        // missing one, keep both when both are given (the 1% consistency
        // check below rejects contradictions).
        match (self.q_factor, self.gamma_cav) {
            (Some(q), None) => {
                params.q_factor = q;
                params.gamma_cav = gamma_cav_from_q(params.omega_c_ev, q);
            }
            (None, Some(gc)) => {
                params.gamma_cav = gc;
                params.q_factor = q_from_gamma_cav(params.omega_c_ev, gc);
            }
            (Some(q), Some(gc)) => {
                params.q_factor = q;
                params.gamma_cav = gc;
            }
            (None, None) => {
                params.gamma_cav = gamma_cav_from_q(params.omega_c_ev, params.q_factor);
            }
        }
        params.n_dot = match self.n_dot {
            Some(n) => n,
            None => expected_dot_count(params.n_dot_per_cm2, params.cavity_area_um2),
        };

        let report = validate(&params);
        if !report.is_ok() {
            let mut lines = Vec::new();
            for v in &report.violations {
                lines.push(format!("system.{}: {}", v.field, v.message));
            }
            return Err(Error::Config(format!(
                "invalid parameters:\n  {}",
                lines.join("\n  ")
            )));
        }

        let mut setup = RunSetup::new(params);
        if let Some(n) = self.mode_count {
            setup.mode_count = n;
        }
        setup.half_width_over_g = self.half_width_over_g;
        if let Some(s) = self.pump_sigma_over_g {
            setup.pump_sigma_over_g = s;
        }
        setup.pump_carrier_offset = self.pump_carrier_offset;
        if let Some(a) = self.alpha {
            setup.alpha = a;
        }
        setup.t_peak = self.pump_t_peak;
        setup.dt = self.dt;
        setup.t_end = self.t_end;
        setup.record_every = self.record_every;
        Ok(setup)
    }
}
