//! Discretized photon-mode continuum with Lorentzian cavity weights, per-mode
//! coupling constants, and the initial coherent pump wavepacket.
//!
//! Mode frequencies are offsets from the cavity resonance (GHz). The coupling
//! phase convention is fixed to purely real nonnegative F_q; only the product
//! F_q = g sqrt(w_q) is physical in this model.

use ndarray::Array1;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Uniform, symmetric grid of photon modes with normalized Lorentzian weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeGrid {
    /// Mode frequency offsets from the cavity resonance (GHz), ascending.
    pub omega: Array1<f64>,
    /// Grid spacing (GHz).
    pub d_omega: f64,
    /// Normalized Lorentzian weights, sum = 1.
    pub weights: Array1<f64>,
}

impl ModeGrid {
    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    /// Half width of the grid span (GHz).
    pub fn half_width(&self) -> f64 {
        self.omega.iter().fold(0.0_f64, |m, w| m.max(w.abs()))
    }

    /// Index of the mode closest to `offset`.
    pub fn nearest_index(&self, offset: f64) -> usize {
        let mut best = 0;
        let mut dist = f64::INFINITY;
        for (i, w) in self.omega.iter().enumerate() {
            let d = (w - offset).abs();
            if d < dist {
                dist = d;
                best = i;
            }
        }
        best
    }

    /// Single-mode grid at the given offset, weight 1. Used to compare the
    /// correlation dynamics against the exact single-mode solver.
    pub fn single_mode(offset: f64) -> ModeGrid {
        ModeGrid {
            omega: Array1::from_vec(vec![offset]),
            d_omega: 0.0,
            weights: Array1::from_vec(vec![1.0]),
        }
    }
}

/// Per-mode coupling constants F_q (GHz), real nonnegative, sum of squares
/// equal to g^2.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSet {
    pub f: Array1<f64>,
}

impl CouplingSet {
    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }

    /// Collective coupling sqrt(sum F_q^2).
    pub fn collective_g(&self) -> f64 {
        self.f.iter().map(|f| f * f).sum::<f64>().sqrt()
    }
}

/// Coherent pump pulse specification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpSpec {
    /// Pump center frequency, offset from the cavity resonance (GHz).
    pub carrier: f64,
    /// Spectral standard deviation of the pump intensity profile (GHz).
    pub sigma: f64,
    /// Total coherent amplitude; sum |beta_q(0)|^2 = alpha^2.
    pub alpha: f64,
    /// Pulse arrival time at the dot (ns).
    pub t_peak: f64,
}

/// Fraction of the Lorentzian weight that falls outside [-W, W].
fn lorentzian_tail_fraction(gamma_cav: f64, half_width: f64) -> f64 {
    1.0 - std::f64::consts::FRAC_2_PI * (half_width / gamma_cav).atan()
}

/// Build a symmetric mode grid with normalized Lorentzian weights of half
/// width `gamma_cav`, spanning [-half_width, +half_width] with `n_modes`
/// points.
pub fn build_mode_grid(gamma_cav: f64, half_width: f64, n_modes: usize) -> Result<ModeGrid> {
    if !(gamma_cav > 0.0) {
        return Err(Error::Config(format!(
            "mode grid: gamma_cav must be > 0, got {gamma_cav}"
        )));
    }
    if n_modes < 16 {
        return Err(Error::Config(format!(
            "mode grid: need at least 16 modes, got {n_modes}"
        )));
    }
    if half_width < 10.0 * gamma_cav {
        return Err(Error::Config(format!(
            "mode grid: half width {half_width} GHz is below 10 gamma_cav = {} GHz",
            10.0 * gamma_cav
        )));
    }
    let tail = lorentzian_tail_fraction(gamma_cav, half_width);
    if tail > 0.05 {
        return Err(Error::Config(format!(
            "mode grid: Lorentzian tail truncation {:.2}% exceeds 5% of the norm; \
             increase the half width",
            100.0 * tail
        )));
    }
    let d_omega = 2.0 * half_width / (n_modes - 1) as f64;
    let omega = Array1::from_iter((0..n_modes).map(|i| -half_width + i as f64 * d_omega));
    let mut weights =
        omega.mapv(|w| gamma_cav * gamma_cav / (w * w + gamma_cav * gamma_cav));
    let norm: f64 = weights.iter().sum();
    weights.mapv_inplace(|w| w / norm);
    Ok(ModeGrid {
        omega,
        d_omega,
        weights,
    })
}

/// Per-mode couplings F_q = g sqrt(w_q); the sum of |F_q|^2 equals g^2.
pub fn coupling_constants(grid: &ModeGrid, g: f64) -> CouplingSet {
    CouplingSet {
        f: grid.weights.mapv(|w| g * w.sqrt()),
    }
}

/// Initial coherent amplitudes beta_q(0) = alpha G_q exp(+i omega_q t_peak)
/// with a normalized Gaussian spectral profile G_q centered at the carrier.
///
/// The intensity profile |G_q|^2 is Gaussian with standard deviation
/// `spec.sigma`; under free evolution the reconstructed field envelope at the
/// dot peaks at t = t_peak.
pub fn synth_pump(grid: &ModeGrid, spec: &PumpSpec) -> Result<Array1<C64>> {
    if !(spec.sigma > 0.0) {
        return Err(Error::Config(format!(
            "pump: sigma must be > 0, got {}",
            spec.sigma
        )));
    }
    if spec.t_peak < 0.0 {
        return Err(Error::Config(format!(
            "pump: t_peak must be >= 0, got {}",
            spec.t_peak
        )));
    }
    if grid.len() > 1 {
        let span = grid.half_width();
        if spec.carrier.abs() > span {
            return Err(Error::Config(format!(
                "pump: carrier offset {} GHz lies outside the grid span +-{span} GHz",
                spec.carrier
            )));
        }
        if spec.sigma < 2.0 * grid.d_omega {
            return Err(Error::Config(format!(
                "pump: sigma {} GHz is under-resolved; need at least 2 d_omega = {} GHz",
                spec.sigma,
                2.0 * grid.d_omega
            )));
        }
    }
    // Amplitude profile exp(-x^2 / (4 sigma^2)) so the intensity has std sigma.
    let mut profile = grid
        .omega
        .mapv(|w| (-(w - spec.carrier).powi(2) / (4.0 * spec.sigma * spec.sigma)).exp());
    let norm: f64 = profile.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm > 0.0 {
        profile.mapv_inplace(|a| a / norm);
    }
    Ok(Array1::from_iter(
        grid.omega
            .iter()
            .zip(profile.iter())
            .map(|(w, a)| C64::from_polar(spec.alpha * a, w * spec.t_peak)),
    ))
}

/// Classical Rabi energy Omega = sum_q F_q beta_q (positive-frequency part).
pub fn classical_rabi(couplings: &CouplingSet, beta: &Array1<C64>) -> Result<C64> {
    if couplings.len() != beta.len() {
        return Err(Error::Contract(format!(
            "classical_rabi: {} couplings but {} amplitudes",
            couplings.len(),
            beta.len()
        )));
    }
    Ok(couplings
        .f
        .iter()
        .zip(beta.iter())
        .map(|(f, b)| f * b)
        .sum())
}

/// Field envelope |sum_q F_q beta_q(0) exp(-i omega_q t)| of a freely evolving
/// set of amplitudes, evaluated at time `t`.
pub fn free_field_envelope(
    grid: &ModeGrid,
    couplings: &CouplingSet,
    beta0: &Array1<C64>,
    t: f64,
) -> f64 {
    let mut acc = C64::new(0.0, 0.0);
    for ((w, f), b) in grid.omega.iter().zip(couplings.f.iter()).zip(beta0.iter()) {
        acc += f * b * C64::from_polar(1.0, -w * t);
    }
    acc.norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk_grid() -> ModeGrid {
        build_mode_grid(0.5, 25.0, 501).unwrap()
    }

    #[test]
    fn weights_are_normalized_and_peak_at_center() {
        let grid = disk_grid();
        let sum: f64 = grid.weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        let center = grid.nearest_index(0.0);
        let max_idx = grid
            .weights
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(center, max_idx);
        assert!((grid.omega[center]).abs() < 1e-12);
    }

    #[test]
    fn half_maximum_at_one_gamma() {
        let grid = disk_grid();
        let w0 = grid.weights[grid.nearest_index(0.0)];
        let wg = grid.weights[grid.nearest_index(0.5)];
        assert!((wg / w0 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn weight_fwhm_matches_two_gamma_cav() {
        let grid = build_mode_grid(0.5, 25.0, 501).unwrap();
        let w0 = grid.weights[grid.nearest_index(0.0)];
        let half = 0.5 * w0;
        let above: Vec<f64> = grid
            .omega
            .iter()
            .zip(grid.weights.iter())
            .filter(|(_, w)| **w >= half)
            .map(|(o, _)| *o)
            .collect();
        let fwhm = above.last().unwrap() - above.first().unwrap();
        assert!((fwhm - 1.0).abs() <= grid.d_omega, "fwhm = {fwhm}");
    }

    #[test]
    fn rejects_undersized_grid_or_width() {
        assert!(build_mode_grid(0.5, 25.0, 8).is_err());
        assert!(build_mode_grid(0.5, 3.0, 501).is_err());
        // Tail above 5%: atan(10) gives about 6.3% outside.
        assert!(build_mode_grid(2.0, 20.0, 501).is_err());
        assert!(build_mode_grid(2.0, 26.0, 501).is_ok());
    }

    #[test]
    fn coupling_normalization_holds_for_any_grid() {
        for n in [64, 501, 1002] {
            let grid = build_mode_grid(0.5, 25.0, n).unwrap();
            let c = coupling_constants(&grid, 11.0);
            assert!((c.collective_g() - 11.0).abs() < 1e-10);
        }
    }

    #[test]
    fn coupling_ratio_follows_weights() {
        let grid = disk_grid();
        let c = coupling_constants(&grid, 11.0);
        let center = grid.nearest_index(0.0);
        let ratio = c.f[center] / c.f[0];
        let expected = (grid.weights[center] / grid.weights[0]).sqrt();
        assert!((ratio - expected).abs() < 1e-12);
        assert!(ratio > 1.0);
    }

    #[test]
    fn pump_is_normalized_and_phaseable() {
        let grid = disk_grid();
        let spec = PumpSpec {
            carrier: 7.78,
            sigma: 2.2,
            alpha: 0.3,
            t_peak: 0.45,
        };
        let beta = synth_pump(&grid, &spec).unwrap();
        let total: f64 = beta.iter().map(|b| b.norm_sqr()).sum();
        assert!((total - 0.09).abs() < 1e-12);

        let zero = synth_pump(
            &grid,
            &PumpSpec {
                alpha: 0.0,
                ..spec
            },
        )
        .unwrap();
        assert!(zero.iter().all(|b| b.norm() == 0.0));
    }

    #[test]
    fn pump_envelope_peaks_at_t_peak() {
        let grid = disk_grid();
        let c = coupling_constants(&grid, 11.0);
        let spec = PumpSpec {
            carrier: 7.78,
            sigma: 2.2,
            alpha: 0.3,
            t_peak: 0.5,
        };
        let beta = synth_pump(&grid, &spec).unwrap();
        let mut best = (0.0, -1.0);
        let mut t = 0.0;
        while t <= 1.0 {
            let env = free_field_envelope(&grid, &c, &beta, t);
            if env > best.1 {
                best = (t, env);
            }
            t += 0.002;
        }
        assert!((best.0 - 0.5).abs() < 0.01, "peak at {}", best.0);

        // Conjugated phases reconstruct a pulse peaking at -t_peak.
        let reversed = beta.mapv(|b| b.conj());
        let mut best_rev = (0.0, -1.0);
        let mut t = -1.0;
        while t <= 0.0 {
            let env = free_field_envelope(&grid, &c, &reversed, t);
            if env > best_rev.1 {
                best_rev = (t, env);
            }
            t += 0.002;
        }
        assert!((best_rev.0 + 0.5).abs() < 0.01, "peak at {}", best_rev.0);
    }

    #[test]
    fn pump_rejects_bad_carrier_and_sigma() {
        let grid = disk_grid();
        let base = PumpSpec {
            carrier: 0.0,
            sigma: 2.2,
            alpha: 0.3,
            t_peak: 0.0,
        };
        assert!(synth_pump(
            &grid,
            &PumpSpec {
                carrier: 30.0,
                ..base
            }
        )
        .is_err());
        assert!(synth_pump(
            &grid,
            &PumpSpec {
                sigma: 0.05,
                ..base
            }
        )
        .is_err());
    }

    #[test]
    fn classical_rabi_examples() {
        let grid = disk_grid();
        let c = coupling_constants(&grid, 11.0);
        let zero = Array1::from_elem(grid.len(), C64::new(0.0, 0.0));
        assert_eq!(classical_rabi(&c, &zero).unwrap(), C64::new(0.0, 0.0));

        let mut single = zero.clone();
        single[37] = C64::new(0.2, -0.1);
        let omega = classical_rabi(&c, &single).unwrap();
        assert!((omega - c.f[37] * single[37]).norm() < 1e-15);

        let short = Array1::from_elem(grid.len() - 1, C64::new(0.0, 0.0));
        assert!(classical_rabi(&c, &short).is_err());
    }

    #[test]
    fn concentrated_pump_gives_central_coupling_amplitude() {
        let grid = disk_grid();
        let c = coupling_constants(&grid, 11.0);
        let center = grid.nearest_index(0.0);
        let mut beta = Array1::from_elem(grid.len(), C64::new(0.0, 0.0));
        let alpha = 0.25;
        beta[center] = C64::new(alpha, 0.0);
        let omega = classical_rabi(&c, &beta).unwrap();
        let expected = 11.0 * grid.weights[center].sqrt() * alpha;
        assert!((omega.norm() - expected).abs() < 1e-12);
    }
}
