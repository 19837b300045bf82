//! Deterministic data emission: fixed-format CSV writers, JSON run manifests
//! with content digests, and an optional minimal SVG line plot.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::spectra::Spectrum;
use crate::sweeps::SweepResult;

/// Fixed 17-significant-digit decimal formatting, byte-stable across runs and
/// platforms.
pub fn format_sig17(x: f64) -> String {
    if x == 0.0 {
        // Covers -0.0 as well.
        "0.0000000000000000".to_string()
    } else {
        format!("{x:.16e}")
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Render a spectrum as CSV: header `omega_offset_GHz,intensity,g2`, one row
/// per mode, masked g2 emitted as an empty field, `\n` newlines.
pub fn spectrum_csv(spec: &Spectrum) -> String {
    let mut out = String::from("omega_offset_GHz,intensity,g2\n");
    for i in 0..spec.len() {
        out.push_str(&format_sig17(spec.omega[i]));
        out.push(',');
        out.push_str(&format_sig17(spec.intensity[i]));
        out.push(',');
        if let Some(g2) = spec.g2[i] {
            out.push_str(&format_sig17(g2));
        }
        out.push('\n');
    }
    out
}

/// Write a spectrum CSV and return the content digest.
pub fn write_spectrum_csv(spec: &Spectrum, path: &Path) -> Result<String> {
    let text = spectrum_csv(spec);
    fs::write(path, &text)?;
    Ok(sha256_hex(text.as_bytes()))
}

/// Render a sweep as CSV: `knob,<col>,...` with empty fields for failed
/// points.
pub fn sweep_csv(result: &SweepResult) -> String {
    let mut out = String::new();
    out.push_str(&result.knob_name);
    for (name, _) in &result.columns {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (i, knob) in result.knob.iter().enumerate() {
        out.push_str(&format_sig17(*knob));
        for (_, values) in &result.columns {
            out.push(',');
            if let Some(v) = values[i] {
                out.push_str(&format_sig17(v));
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_sweep_csv(result: &SweepResult, path: &Path) -> Result<String> {
    let text = sweep_csv(result);
    fs::write(path, &text)?;
    Ok(sha256_hex(text.as_bytes()))
}

/// Generic small table writer for report time series.
pub fn table_csv(header: &[&str], rows: &[Vec<Option<f64>>]) -> String {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let mut first = true;
        for cell in row {
            if !first {
                out.push(',');
            }
            first = false;
            if let Some(v) = cell {
                out.push_str(&format_sig17(*v));
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_table_csv(header: &[&str], rows: &[Vec<Option<f64>>], path: &Path) -> Result<String> {
    let text = table_csv(header, rows);
    fs::write(path, &text)?;
    Ok(sha256_hex(text.as_bytes()))
}

#[derive(Debug, Clone, Serialize)]
pub struct ToolInfo {
    pub name: &'static str,
    pub version: &'static str,
}

impl Default for ToolInfo {
    fn default() -> Self {
        ToolInfo {
            name: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
        }
    }
}

/// Convergence diagnostics echoed into the manifest.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ConvergenceInfo {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub excitation_balance_drift: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub factorization_max_rel_dev: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

/// Run manifest: spec echo, tool version, wall time, convergence diagnostics,
/// and the emitted files with their content digests.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: ToolInfo,
    pub command: String,
    pub spec: serde_json::Value,
    pub wall_time_s: f64,
    pub convergence: ConvergenceInfo,
    pub outputs: Vec<OutputFile>,
}

impl Manifest {
    pub fn new(command: impl Into<String>, spec: serde_json::Value) -> Self {
        Manifest {
            tool: ToolInfo::default(),
            command: command.into(),
            spec,
            wall_time_s: 0.0,
            convergence: ConvergenceInfo::default(),
            outputs: Vec::new(),
        }
    }

    pub fn add_output(&mut self, path: &Path, digest: String) {
        self.outputs.push(OutputFile {
            path: path
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
            sha256: digest,
        });
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }
}

/// Minimal SVG line plot of a spectrum with vertical analytic marker lines.
pub fn spectrum_svg(spec: &Spectrum, markers: &[(f64, &str)], title: &str) -> String {
    let (w, h, pad) = (860.0, 420.0, 50.0);
    let xmin = spec.omega.first().copied().unwrap_or(0.0);
    let xmax = spec.omega.last().copied().unwrap_or(1.0);
    let ymax = spec.intensity.iter().fold(f64::MIN_POSITIVE, |m, v| m.max(*v));
    let x = |v: f64| pad + (v - xmin) / (xmax - xmin) * (w - 2.0 * pad);
    let y = |v: f64| h - pad - (v / ymax).clamp(0.0, 1.0) * (h - 2.0 * pad);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" font-size=\"15\" text-anchor=\"middle\">{title}</text>\n",
        w / 2.0
    );
    for (pos, label) in markers {
        if *pos < xmin || *pos > xmax {
            continue;
        }
        let xp = x(*pos);
        svg.push_str(&format!(
            "<line x1=\"{xp:.2}\" y1=\"{pad}\" x2=\"{xp:.2}\" y2=\"{:.2}\" \
             stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n\
             <text x=\"{xp:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\" \
             fill=\"#555\">{label}</text>\n",
            h - pad,
            pad - 6.0
        ));
    }
    let points: Vec<String> = spec
        .omega
        .iter()
        .zip(spec.intensity.iter())
        .map(|(xx, yy)| format!("{:.2},{:.2}", x(*xx), y(*yy)))
        .collect();
    svg.push_str(&format!(
        "<polyline fill=\"none\" stroke=\"#1f4e9c\" stroke-width=\"1.4\" points=\"{}\"/>\n",
        points.join(" ")
    ));
    svg.push_str(&format!(
        "<line x1=\"{pad}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\"/>\n\
         <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\">mode offset \
         (GHz)</text>\n</svg>\n",
        h - pad,
        w - pad,
        h - pad,
        w / 2.0,
        h - pad + 30.0
    ));
    svg
}

pub fn write_text(path: &Path, text: &str) -> Result<String> {
    fs::write(path, text)?;
    Ok(sha256_hex(text.as_bytes()))
}

/// Resolve and create the output directory.
pub fn prepare_out_dir(dir: &str) -> Result<PathBuf> {
    let path = PathBuf::from(dir);
    fs::create_dir_all(&path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig17_formatting() {
        assert_eq!(format_sig17(0.0), "0.0000000000000000");
        assert_eq!(format_sig17(-0.0), "0.0000000000000000");
        assert_eq!(format_sig17(1.0), "1.0000000000000000e0");
        assert_eq!(format_sig17(-2.5e-13), "-2.5000000000000000e-13");
        // 17 significant digits round-trip f64 exactly.
        let x = 0.1234567890123456789;
        let parsed: f64 = format_sig17(x).parse().unwrap();
        assert_eq!(parsed.to_bits(), x.to_bits());
    }

    #[test]
    fn masked_g2_leaves_trailing_empty_field() {
        let spec = Spectrum {
            omega: vec![-1.0, 0.0],
            intensity: vec![0.0, 0.5],
            g2: vec![None, Some(2.0)],
        };
        let csv = spectrum_csv(&spec);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "omega_offset_GHz,intensity,g2");
        assert!(lines[1].ends_with(",0.0000000000000000,"), "{}", lines[1]);
        assert!(lines[2].ends_with(",2.0000000000000000e0"), "{}", lines[2]);
    }

    #[test]
    fn empty_spectrum_yields_header_only() {
        let spec = Spectrum {
            omega: vec![],
            intensity: vec![],
            g2: vec![],
        };
        assert_eq!(spectrum_csv(&spec), "omega_offset_GHz,intensity,g2\n");
    }

    #[test]
    fn identical_spectra_give_identical_digests() {
        let spec = Spectrum {
            omega: vec![0.0, 1.0],
            intensity: vec![0.25, 0.5],
            g2: vec![Some(2.0), None],
        };
        let dir = tempfile::tempdir().unwrap();
        let d1 = write_spectrum_csv(&spec, &dir.path().join("a.csv")).unwrap();
        let d2 = write_spectrum_csv(&spec, &dir.path().join("b.csv")).unwrap();
        assert_eq!(d1, d2);
        let bytes = fs::read(dir.path().join("a.csv")).unwrap();
        assert_eq!(sha256_hex(&bytes), d1);
    }

    #[test]
    fn sweep_csv_marks_failed_points_with_empty_fields() {
        let result = SweepResult {
            knob_name: "gamma_P_GHz".into(),
            knob: vec![0.1, 0.2],
            columns: vec![("g2_at_2nd".into(), vec![Some(840.0), None])],
        };
        let csv = sweep_csv(&result);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "gamma_P_GHz,g2_at_2nd");
        assert!(lines[2].ends_with(','), "{}", lines[2]);
    }
}
