//! Frequency-resolved intensity and photon-statistics spectra extracted from
//! correlation snapshots, plus peak detection.
//!
//! Detection is off the pump axis: the coherent amplitudes beta_q never reach
//! the detector, so the incoherent intensity is n[q,q] and the two-photon
//! spectrum uses the Gaussian singlet-doublet factorization
//! g2(w_q) = (2 n[q,q]^2 + |s[q,q]|^2) / n[q,q]^2 with numerically empty
//! modes masked instead of divided.

use crate::dynamics::Snapshot;
use crate::error::{Error, Result};
use crate::modes::ModeGrid;

/// Modes with incoherent occupation below this floor get a masked g2.
pub const G2_OCCUPATION_FLOOR: f64 = 1e-12;

/// Which intensity the detector sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntensityMode {
    /// Off-axis detection: correlated occupation n[q,q] only.
    Incoherent,
    /// Total occupation n[q,q] + |beta_q|^2.
    Total,
}

/// Frequency-resolved spectrum congruent with a [`ModeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Mode offsets from the cavity resonance (GHz).
    pub omega: Vec<f64>,
    /// Per-mode intensity (dimensionless occupation).
    pub intensity: Vec<f64>,
    /// Per-mode g2; `None` marks modes with negligible occupation.
    pub g2: Vec<Option<f64>>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    /// Value of g2 at the mode nearest `offset`.
    pub fn g2_at(&self, grid: &ModeGrid, offset: f64) -> Option<f64> {
        self.g2[grid.nearest_index(offset)]
    }

    /// Intensity at the mode nearest `offset`.
    pub fn intensity_at(&self, grid: &ModeGrid, offset: f64) -> f64 {
        self.intensity[grid.nearest_index(offset)]
    }
}

/// Intensity spectrum of one snapshot.
pub fn intensity_spectrum(snap: &Snapshot, grid: &ModeGrid, mode: IntensityMode) -> Result<Spectrum> {
    spectrum_from_snapshot(snap, grid, mode, G2_OCCUPATION_FLOOR)
}

/// Photon-statistics spectrum of one snapshot (incoherent detection).
pub fn g2_spectrum(snap: &Snapshot, grid: &ModeGrid) -> Result<Spectrum> {
    spectrum_from_snapshot(snap, grid, IntensityMode::Incoherent, G2_OCCUPATION_FLOOR)
}

/// Shared extraction with an explicit masking floor.
pub fn spectrum_from_snapshot(
    snap: &Snapshot,
    grid: &ModeGrid,
    mode: IntensityMode,
    floor: f64,
) -> Result<Spectrum> {
    let n_modes = grid.len();
    if snap.n_diag.len() != n_modes || snap.s_diag.len() != n_modes || snap.beta.len() != n_modes {
        return Err(Error::Contract(format!(
            "spectrum: snapshot has {} modes, grid has {n_modes}",
            snap.n_diag.len()
        )));
    }
    let mut intensity = Vec::with_capacity(n_modes);
    let mut g2 = Vec::with_capacity(n_modes);
    for q in 0..n_modes {
        let occ = snap.n_diag[q];
        let value = match mode {
            IntensityMode::Incoherent => occ,
            IntensityMode::Total => occ + snap.beta[q].norm_sqr(),
        };
        intensity.push(value);
        if occ < floor {
            g2.push(None);
        } else {
            let s = snap.s_diag[q].norm_sqr();
            g2.push(Some((2.0 * occ * occ + s) / (occ * occ)));
        }
    }
    Ok(Spectrum {
        omega: grid.omega.to_vec(),
        intensity,
        g2,
    })
}

/// A detected spectral peak with sub-grid refined position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    /// Refined offset of the maximum (GHz).
    pub offset: f64,
    /// Refined height.
    pub height: f64,
    /// Grid index of the discrete maximum.
    pub index: usize,
    /// Topographic prominence at the discrete maximum.
    pub prominence: f64,
}

/// Local maxima with prominence at least `min_prominence * max(values)`,
/// sorted by offset. Peak positions are refined by parabolic interpolation
/// through the three points around each maximum.
pub fn find_peaks(omega: &[f64], values: &[f64], min_prominence: f64) -> Vec<Peak> {
    let n = values.len();
    if n < 3 {
        return Vec::new();
    }
    let global_max = values.iter().fold(f64::MIN, |m, v| m.max(*v));
    if !(global_max > 0.0) {
        return Vec::new();
    }
    let threshold = min_prominence * global_max;
    let mut peaks = Vec::new();
    for i in 1..n - 1 {
        if !(values[i] > values[i - 1] && values[i] >= values[i + 1]) {
            continue;
        }
        let prominence = prominence_at(values, i);
        if prominence < threshold {
            continue;
        }
        let (ym, y0, yp) = (values[i - 1], values[i], values[i + 1]);
        let denom = ym - 2.0 * y0 + yp;
        let (offset, height) = if denom < 0.0 {
            let shift = 0.5 * (ym - yp) / denom;
            let d_omega = omega[i + 1] - omega[i];
            (
                omega[i] + shift * d_omega,
                y0 - 0.25 * (ym - yp) * shift,
            )
        } else {
            (omega[i], y0)
        };
        peaks.push(Peak {
            offset,
            height,
            index: i,
            prominence,
        });
    }
    peaks
}

/// Topographic prominence: height above the higher of the two valley floors
/// separating this peak from higher ground (or the spectrum edge).
fn prominence_at(values: &[f64], i: usize) -> f64 {
    let h = values[i];
    let mut left_min = h;
    let mut j = i;
    while j > 0 {
        j -= 1;
        left_min = left_min.min(values[j]);
        if values[j] > h {
            break;
        }
    }
    let mut right_min = h;
    let mut j = i;
    while j + 1 < values.len() {
        j += 1;
        right_min = right_min.min(values[j]);
        if values[j] > h {
            break;
        }
    }
    h - left_min.max(right_min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64 as C64;

    fn snapshot_with(grid: &ModeGrid, n_diag: Vec<f64>, s_diag: Vec<C64>) -> Snapshot {
        Snapshot {
            t: 0.0,
            step: 0,
            f_e: 0.0,
            f_h: 0.0,
            p: C64::new(0.0, 0.0),
            pump_env: 0.0,
            balance: 0.0,
            beta: vec![C64::new(0.0, 0.0); grid.len()],
            n_diag,
            s_diag,
        }
    }

    fn uniform_grid(n: usize, half_width: f64) -> ModeGrid {
        crate::modes::build_mode_grid(half_width / 15.0, half_width, n).unwrap()
    }

    #[test]
    fn zero_state_gives_zero_masked_spectrum() {
        let grid = uniform_grid(33, 30.0);
        let snap = snapshot_with(
            &grid,
            vec![0.0; grid.len()],
            vec![C64::new(0.0, 0.0); grid.len()],
        );
        let spec = g2_spectrum(&snap, &grid).unwrap();
        assert!(spec.intensity.iter().all(|x| *x == 0.0));
        assert!(spec.g2.iter().all(|x| x.is_none()));
    }

    #[test]
    fn g2_factorization_examples() {
        let grid = uniform_grid(33, 30.0);
        let mut n_diag = vec![0.0; grid.len()];
        let mut s_diag = vec![C64::new(0.0, 0.0); grid.len()];
        n_diag[5] = 0.01;
        s_diag[5] = C64::new(0.1, 0.0);
        n_diag[7] = 0.02;
        let snap = snapshot_with(&grid, n_diag, s_diag);
        let spec = g2_spectrum(&snap, &grid).unwrap();
        // 2 + |s|^2/n^2 = 2 + 0.01/0.0001 = 102.
        assert!((spec.g2[5].unwrap() - 102.0).abs() < 1e-9);
        // s = 0 -> thermal-like value 2.
        assert!((spec.g2[7].unwrap() - 2.0).abs() < 1e-12);
        assert!(spec.g2[9].is_none());
    }

    #[test]
    fn g2_is_at_least_two_wherever_defined() {
        let grid = uniform_grid(65, 30.0);
        let n_diag: Vec<f64> = (0..65).map(|i| 1e-9 * (1.0 + i as f64)).collect();
        let s_diag: Vec<C64> = (0..65)
            .map(|i| C64::new(1e-10 * i as f64, -2e-10 * i as f64))
            .collect();
        let snap = snapshot_with(&grid, n_diag, s_diag);
        let spec = g2_spectrum(&snap, &grid).unwrap();
        for g2 in spec.g2.iter().flatten() {
            assert!(*g2 >= 2.0);
        }
    }

    #[test]
    fn total_mode_adds_coherent_occupation() {
        let grid = uniform_grid(33, 30.0);
        let mut snap = snapshot_with(
            &grid,
            vec![0.5; grid.len()],
            vec![C64::new(0.0, 0.0); grid.len()],
        );
        snap.beta[3] = C64::new(0.0, 2.0);
        let inc = intensity_spectrum(&snap, &grid, IntensityMode::Incoherent).unwrap();
        let tot = intensity_spectrum(&snap, &grid, IntensityMode::Total).unwrap();
        assert_eq!(inc.intensity[3], 0.5);
        assert!((tot.intensity[3] - 4.5).abs() < 1e-12);
    }

    #[test]
    fn single_lorentzian_line_yields_one_peak_at_center() {
        let grid = uniform_grid(201, 30.0);
        let center = 7.4;
        let gamma = 1.2;
        let values: Vec<f64> = grid
            .omega
            .iter()
            .map(|w| gamma * gamma / ((w - center).powi(2) + gamma * gamma))
            .collect();
        let peaks = find_peaks(grid.omega.as_slice().unwrap(), &values, 0.1);
        assert_eq!(peaks.len(), 1);
        assert!(
            (peaks[0].offset - center).abs() < 0.1 * grid.d_omega,
            "peak at {}",
            peaks[0].offset
        );
    }

    #[test]
    fn doublet_yields_two_peaks() {
        let grid = uniform_grid(201, 30.0);
        let g = 11.0;
        let gamma = 1.0;
        let line = |w: f64, c: f64| gamma * gamma / ((w - c).powi(2) + gamma * gamma);
        let values: Vec<f64> = grid
            .omega
            .iter()
            .map(|w| line(*w, -g) + line(*w, g))
            .collect();
        let peaks = find_peaks(grid.omega.as_slice().unwrap(), &values, 0.2);
        assert_eq!(peaks.len(), 2);
        assert!((peaks[0].offset + g).abs() < grid.d_omega);
        assert!((peaks[1].offset - g).abs() < grid.d_omega);
    }

    #[test]
    fn flat_spectrum_has_no_peaks() {
        let grid = uniform_grid(65, 30.0);
        let values = vec![1.0; grid.len()];
        assert!(find_peaks(grid.omega.as_slice().unwrap(), &values, 0.01).is_empty());
    }

    #[test]
    fn prominence_filters_shoulder_features() {
        let grid = uniform_grid(401, 30.0);
        let line = |w: f64, c: f64, gamma: f64| gamma * gamma / ((w - c).powi(2) + gamma * gamma);
        // A strong line and a weak satellite riding on its shoulder.
        let values: Vec<f64> = grid
            .omega
            .iter()
            .map(|w| line(*w, 0.0, 2.0) + 0.02 * line(*w, 6.0, 0.8))
            .collect();
        let strict = find_peaks(grid.omega.as_slice().unwrap(), &values, 0.10);
        assert_eq!(strict.len(), 1);
        let loose = find_peaks(grid.omega.as_slice().unwrap(), &values, 0.001);
        assert_eq!(loose.len(), 2);
    }
}
