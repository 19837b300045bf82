//! Run assembly for resonance-fluorescence experiments and the three sweep
//! protocols: pump frequency, pump intensity, and dephasing.
//!
//! A [`RunSetup`] bundles the physical parameters with grid/pump/integrator
//! settings, filling protocol defaults for anything left unset. Sweep points
//! are independent runs; with the `parallel` feature they execute
//! concurrently and are gathered in knob order, so results are deterministic
//! either way.

use crate::analytics::{pump_resonance, two_photon_occupation};
use crate::dynamics::{
    init_state, run, ClusterModel, IntegratorConfig, Trajectory,
};
use crate::error::{Error, Result};
use crate::modes::{build_mode_grid, coupling_constants, CouplingSet, ModeGrid, PumpSpec};
use crate::params::{derive, SystemParams};
use crate::spectra::{intensity_spectrum, spectrum_from_snapshot, IntensityMode, Spectrum};
use crate::spectra::G2_OCCUPATION_FLOOR;

/// Protocol defaults.
pub const DEFAULT_MODE_COUNT: usize = 501;
pub const DEFAULT_HALF_WIDTH_OVER_G: f64 = 25.0;
pub const DEFAULT_PUMP_SIGMA_OVER_G: f64 = 0.2;
pub const DEFAULT_ALPHA: f64 = 0.3;
/// Pulse arrival in units of 1/g.
pub const DEFAULT_T_PEAK_OVER_TAU: f64 = 5.0;
/// Post-pulse margin in cavity lifetimes before the spectrum is read out.
pub const T_END_CAV_LIFETIMES: f64 = 6.0;
/// Keep the Lorentzian tail truncation well under the 5% bound.
pub const MIN_HALF_WIDTH_OVER_GAMMA_CAV: f64 = 13.0;

/// One experiment: parameters plus optional overrides; `None` means the
/// protocol default.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSetup {
    pub params: SystemParams,
    pub mode_count: usize,
    /// Grid half width in units of g; auto-widened to keep the Lorentzian
    /// tail truncation legal.
    pub half_width_over_g: Option<f64>,
    pub pump_sigma_over_g: f64,
    /// Pump carrier offset (GHz); `None` selects the optimum two-photon pump.
    pub pump_carrier_offset: Option<f64>,
    pub alpha: f64,
    /// Pulse arrival time (ns); `None` selects 5/g.
    pub t_peak: Option<f64>,
    /// Integrator step (ns); `None` selects the stability bound.
    pub dt: Option<f64>,
    /// Horizon (ns); `None` selects t_peak + 6 tau_cav.
    pub t_end: Option<f64>,
    pub record_every: Option<usize>,
}

impl RunSetup {
    pub fn new(params: SystemParams) -> Self {
        RunSetup {
            params,
            mode_count: DEFAULT_MODE_COUNT,
            half_width_over_g: None,
            pump_sigma_over_g: DEFAULT_PUMP_SIGMA_OVER_G,
            pump_carrier_offset: None,
            alpha: DEFAULT_ALPHA,
            t_peak: None,
            dt: None,
            t_end: None,
            record_every: None,
        }
    }

    /// Grid half width (GHz) after applying the tail-truncation floor.
    pub fn resolved_half_width(&self) -> f64 {
        let g = self.params.g;
        match self.half_width_over_g {
            Some(x) => x * g,
            None => (DEFAULT_HALF_WIDTH_OVER_G * g)
                .max(MIN_HALF_WIDTH_OVER_GAMMA_CAV * self.params.gamma_cav),
        }
    }

    /// Resolve every default into concrete grid, pump, and integrator
    /// settings.
    pub fn resolve(&self) -> Result<ResolvedRun> {
        let g = self.params.g;
        let half_width = self.resolved_half_width();
        let grid = build_mode_grid(self.params.gamma_cav, half_width, self.mode_count)?;
        let couplings = coupling_constants(&grid, g);
        let resonance = pump_resonance(g, self.params.delta)?;
        let carrier = self
            .pump_carrier_offset
            .unwrap_or(resonance.optimum_pump);
        let t_peak = self.t_peak.unwrap_or(DEFAULT_T_PEAK_OVER_TAU / g);
        let pump = PumpSpec {
            carrier,
            sigma: self.pump_sigma_over_g * g,
            alpha: self.alpha,
            t_peak,
        };
        let derived = derive(&self.params);
        let t_end = self
            .t_end
            .unwrap_or(t_peak + T_END_CAV_LIFETIMES * derived.tau_cav);
        let max_scale = half_width.max(g).max(self.params.gamma_p);
        let dt = self.dt.unwrap_or(0.02 / max_scale);
        let record_every = self.record_every.unwrap_or_else(|| {
            // Resolve the pump envelope: its amplitude width is 1/(sigma
            // sqrt(2)); aim for ~30 snapshots across it.
            let sigma_t = 1.0 / (pump.sigma * 2.0_f64.sqrt());
            ((sigma_t / 30.0 / dt) as usize).max(1)
        });
        let integ = IntegratorConfig {
            dt,
            t_end,
            record_every,
        };
        Ok(ResolvedRun {
            grid,
            couplings,
            pump,
            integ,
            optimum_pump_offset: resonance.optimum_pump,
            second_rung_offset: resonance.emission_lower,
            vacuum_rabi_offset: g,
        })
    }
}

/// Concrete settings produced from a [`RunSetup`].
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub grid: ModeGrid,
    pub couplings: CouplingSet,
    pub pump: PumpSpec,
    pub integ: IntegratorConfig,
    pub optimum_pump_offset: f64,
    /// Lower second-rung emission offset, the sweep observable position.
    pub second_rung_offset: f64,
    pub vacuum_rabi_offset: f64,
}

/// A completed resonance-fluorescence run with its extraction helpers.
#[derive(Debug, Clone)]
pub struct FluorescenceRun {
    pub setup: RunSetup,
    pub grid: ModeGrid,
    pub couplings: CouplingSet,
    pub pump: PumpSpec,
    pub integ: IntegratorConfig,
    pub second_rung_offset: f64,
    pub trajectory: Trajectory,
}

impl FluorescenceRun {
    /// Error out if the trajectory ended in a numerical blowup.
    pub fn ensure_ok(&self) -> Result<&Self> {
        match self.trajectory.failure {
            Some(info) => Err(info.to_error()),
            None => Ok(self),
        }
    }

    /// Late-time emission spectrum (intensity protocol).
    pub fn final_spectrum(&self, mode: IntensityMode) -> Result<Spectrum> {
        intensity_spectrum(self.trajectory.last(), &self.grid, mode)
    }

    /// Spectrum at the snapshot nearest the pump-envelope maximum
    /// (photon-statistics protocol).
    pub fn pump_max_spectrum(&self) -> Result<Spectrum> {
        spectrum_from_snapshot(
            self.trajectory.pump_peak(),
            &self.grid,
            IntensityMode::Incoherent,
            G2_OCCUPATION_FLOOR,
        )
    }

    /// Late-time incoherent intensity at the lower second-rung offset.
    pub fn i_2nd(&self) -> Result<f64> {
        let spec = self.final_spectrum(IntensityMode::Incoherent)?;
        Ok(spec.intensity_at(&self.grid, self.second_rung_offset))
    }

    /// g2 at the lower second-rung offset, evaluated at the pump maximum.
    pub fn g2_at_2nd(&self) -> Result<Option<f64>> {
        let spec = self.pump_max_spectrum()?;
        Ok(spec.g2_at(&self.grid, self.second_rung_offset))
    }

    /// g2 at an arbitrary offset, evaluated at the pump maximum.
    pub fn g2_at(&self, offset: f64) -> Result<Option<f64>> {
        let spec = self.pump_max_spectrum()?;
        Ok(spec.g2_at(&self.grid, offset))
    }

    /// Relative excitation-balance drift along the run.
    pub fn balance_drift(&self) -> f64 {
        self.trajectory.balance_drift()
    }
}

/// Execute one resonance-fluorescence run.
pub fn run_fluorescence(setup: &RunSetup) -> Result<FluorescenceRun> {
    let resolved = setup.resolve()?;
    let state = init_state(&setup.params, &resolved.grid, &resolved.couplings, &resolved.pump)?;
    let model = ClusterModel::new(&setup.params, &resolved.grid, &resolved.couplings)?;
    let trajectory = run(
        &model,
        state,
        &resolved.grid,
        &resolved.couplings,
        &resolved.integ,
    )?;
    Ok(FluorescenceRun {
        setup: setup.clone(),
        grid: resolved.grid,
        couplings: resolved.couplings,
        pump: resolved.pump,
        integ: resolved.integ,
        second_rung_offset: resolved.second_rung_offset,
        trajectory,
    })
}

/// Result of one parameter sweep: a knob and named observable columns of the
/// same length; failed points carry `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub knob_name: String,
    pub knob: Vec<f64>,
    pub columns: Vec<(String, Vec<Option<f64>>)>,
}

impl SweepResult {
    pub fn column(&self, name: &str) -> Option<&[Option<f64>]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    /// Index, knob value, and observable value of the column maximum over the
    /// successful points; `None` if every point failed or the column is
    /// missing.
    pub fn argmax(&self, name: &str) -> Option<(usize, f64, f64)> {
        let col = self.column(name)?;
        let mut best: Option<(usize, f64, f64)> = None;
        for (i, v) in col.iter().enumerate() {
            if let Some(v) = v {
                if best.map(|(_, _, bv)| *v > bv).unwrap_or(true) {
                    best = Some((i, self.knob[i], *v));
                }
            }
        }
        best
    }

    pub fn failed_points(&self) -> usize {
        self.columns
            .first()
            .map(|(_, v)| v.iter().filter(|x| x.is_none()).count())
            .unwrap_or(0)
    }
}

fn check_knob(name: &str, knob: &[f64]) -> Result<()> {
    if knob.is_empty() {
        return Err(Error::Config(format!("sweep {name}: empty knob range")));
    }
    if knob.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config(format!(
            "sweep {name}: knob values must be strictly increasing"
        )));
    }
    Ok(())
}

fn map_points<F>(points: &[f64], f: F) -> Vec<Vec<Option<f64>>>
where
    F: Fn(f64) -> Vec<Option<f64>> + Sync,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        points.par_iter().map(|x| f(*x)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        points.iter().map(|x| f(*x)).collect()
    }
}

/// Second-rung emission intensity as a function of the pump carrier offset.
pub fn sweep_pump_frequency(setup: &RunSetup, carriers: &[f64]) -> Result<SweepResult> {
    check_knob("pump-frequency", carriers)?;
    let rows = map_points(carriers, |carrier| {
        let mut point = setup.clone();
        point.pump_carrier_offset = Some(carrier);
        let value = run_fluorescence(&point)
            .ok()
            .and_then(|r| r.ensure_ok().ok().map(|_| r.i_2nd()))
            .and_then(|v| v.ok());
        vec![value]
    });
    Ok(SweepResult {
        knob_name: "pump_carrier_offset_GHz".into(),
        knob: carriers.to_vec(),
        columns: vec![(
            "I_2nd".into(),
            rows.into_iter().map(|mut r| r.remove(0)).collect(),
        )],
    })
}

/// Second-rung intensity, second-rung g2, and the analytic two-photon pump
/// occupation as functions of the pump amplitude alpha.
pub fn sweep_pump_intensity(setup: &RunSetup, alphas: &[f64]) -> Result<SweepResult> {
    check_knob("pump-intensity", alphas)?;
    let rows = map_points(alphas, |alpha| {
        let mut point = setup.clone();
        point.alpha = alpha;
        match run_fluorescence(&point).ok().and_then(|r| match r.ensure_ok() {
            Ok(_) => Some(r),
            Err(_) => None,
        }) {
            Some(r) => {
                let i2 = r.i_2nd().ok();
                let g2 = r.g2_at_2nd().ok().flatten();
                vec![i2, g2, Some(two_photon_occupation(alpha))]
            }
            None => vec![None, None, Some(two_photon_occupation(alpha))],
        }
    });
    let mut i2 = Vec::with_capacity(alphas.len());
    let mut g2 = Vec::with_capacity(alphas.len());
    let mut p2 = Vec::with_capacity(alphas.len());
    for mut row in rows {
        p2.push(row.pop().unwrap());
        g2.push(row.pop().unwrap());
        i2.push(row.pop().unwrap());
    }
    Ok(SweepResult {
        knob_name: "alpha".into(),
        knob: alphas.to_vec(),
        columns: vec![
            ("I_2nd".into(), i2),
            ("g2_at_2nd".into(), g2),
            ("P2".into(), p2),
        ],
    })
}

/// Second-rung g2 as a function of the dephasing constant, for a fixed
/// low-intensity resonant second-rung pump.
pub fn sweep_dephasing(setup: &RunSetup, gamma_ps: &[f64]) -> Result<SweepResult> {
    check_knob("dephasing", gamma_ps)?;
    let rows = map_points(gamma_ps, |gamma_p| {
        let mut point = setup.clone();
        point.params.gamma_p = gamma_p;
        let value = run_fluorescence(&point)
            .ok()
            .and_then(|r| r.ensure_ok().ok().and_then(|r| r.g2_at_2nd().ok()))
            .flatten();
        vec![value]
    });
    Ok(SweepResult {
        knob_name: "gamma_P_GHz".into(),
        knob: gamma_ps.to_vec(),
        columns: vec![(
            "g2_at_2nd".into(),
            rows.into_iter().map(|mut r| r.remove(0)).collect(),
        )],
    })
}

/// Evenly spaced knob values, inclusive of both ends.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Geometrically spaced knob values, inclusive of both ends.
pub fn geomspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let ratio = (hi / lo).powf(1.0 / (n - 1) as f64);
    (0..n).map(|i| lo * ratio.powi(i as i32)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{load_scenario, Scenario};

    /// Small, fast setup for protocol tests.
    fn small_disk_setup() -> RunSetup {
        let mut params = load_scenario(Scenario::Disk);
        params.gamma_p = 0.23;
        let mut setup = RunSetup::new(params);
        setup.mode_count = 61;
        setup.half_width_over_g = Some(3.0);
        setup.t_end = Some(0.6);
        setup
    }

    #[test]
    fn resolve_fills_protocol_defaults() {
        let setup = RunSetup::new(load_scenario(Scenario::Disk));
        let resolved = setup.resolve().unwrap();
        let g = 11.0;
        assert_eq!(resolved.grid.len(), DEFAULT_MODE_COUNT);
        assert!((resolved.grid.half_width() - 25.0 * g).abs() < 1e-9);
        assert!((resolved.pump.carrier - g / 2.0_f64.sqrt()).abs() < 1e-12);
        assert!((resolved.pump.sigma - 0.2 * g).abs() < 1e-12);
        assert!((resolved.pump.t_peak - 5.0 / g).abs() < 1e-12);
        let tau_cav = 1.0 / (2.0 * load_scenario(Scenario::Disk).gamma_cav);
        assert!((resolved.integ.t_end - (5.0 / g + 6.0 * tau_cav)).abs() < 1e-9);
        assert!((resolved.second_rung_offset - (2.0_f64.sqrt() - 1.0) * g).abs() < 1e-12);
    }

    #[test]
    fn default_half_width_respects_tail_bound_for_broad_cavities() {
        let setup = RunSetup::new(load_scenario(Scenario::Pillar));
        let resolved = setup.resolve().unwrap();
        let gamma_cav = load_scenario(Scenario::Pillar).gamma_cav;
        assert!(resolved.grid.half_width() >= 13.0 * gamma_cav - 1e-9);
    }

    #[test]
    fn single_point_sweep_reports_without_argmax_claims() {
        let setup = small_disk_setup();
        let result = sweep_pump_frequency(&setup, &[7.78]).unwrap();
        assert_eq!(result.knob.len(), 1);
        let am = result.argmax("I_2nd");
        assert!(am.is_some());
        assert_eq!(am.unwrap().0, 0);
    }

    #[test]
    fn sweep_tolerates_per_point_failure() {
        let setup = small_disk_setup();
        // The second carrier lies outside the grid span, so that point fails
        // while the others survive.
        let carriers = vec![5.0, 200.0];
        let err = check_knob("x", &carriers);
        assert!(err.is_ok());
        let result = sweep_pump_frequency(&setup, &carriers).unwrap();
        let col = result.column("I_2nd").unwrap();
        assert!(col[0].is_some());
        assert!(col[1].is_none());
        assert_eq!(result.failed_points(), 1);
    }

    #[test]
    fn sweeps_reject_non_monotone_knobs() {
        let setup = small_disk_setup();
        assert!(sweep_dephasing(&setup, &[0.4, 0.2]).is_err());
        assert!(sweep_pump_intensity(&setup, &[]).is_err());
    }

    #[test]
    fn intensity_sweep_carries_p2_overlay() {
        let setup = small_disk_setup();
        let alphas = [0.1, 0.3];
        let result = sweep_pump_intensity(&setup, &alphas).unwrap();
        let p2 = result.column("P2").unwrap();
        for (a, p) in alphas.iter().zip(p2) {
            assert!((p.unwrap() - two_photon_occupation(*a)).abs() < 1e-15);
        }
        // alpha = 0 is excluded by the monotonicity contract, but tiny alpha
        // gives vanishing I_2nd.
        let weak = sweep_pump_intensity(&setup, &[1e-6, 0.1]).unwrap();
        let i2 = weak.column("I_2nd").unwrap();
        assert!(i2[0].unwrap() < i2[1].unwrap() * 1e-6);
    }

    #[test]
    fn spacing_helpers() {
        let lin = linspace(0.0, 1.0, 5);
        assert_eq!(lin, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let geo = geomspace(0.1, 10.0, 3);
        assert!((geo[1] - 1.0).abs() < 1e-12);
        assert_eq!(geo.len(), 3);
    }
}
