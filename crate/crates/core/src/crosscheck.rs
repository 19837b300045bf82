//! Cross-validation of the correlation dynamics against the exact single-mode
//! solver, plus the ladder and Rabi-frequency oracle checks.

use ndarray::Array1;
use num_complex::Complex64 as C64;

use crate::dynamics::{run, ClusterModel, CorrelationState, IntegratorConfig};
use crate::error::Result;
use crate::modes::{CouplingSet, ModeGrid};
use crate::numerics::dominant_frequency;
use crate::oracle::{
    dressed_spectrum, evolve, manifold_splitting, DotLevel, OracleConfig, OracleState,
};
use crate::params::{load_scenario, Scenario};

/// Ladder check row: measured eigen-splitting of one manifold against the
/// analytic 2 g sqrt(k).
#[derive(Debug, Clone, Copy)]
pub struct SplittingCheck {
    pub k: u32,
    pub measured: f64,
    pub expected: f64,
    pub rel_err: f64,
}

/// Diagonalize the truncated ladder and compare manifold splittings with the
/// closed-form values.
pub fn dressed_splitting_check(g: f64, n_max: usize, k_max: u32) -> Result<Vec<SplittingCheck>> {
    let cfg = OracleConfig {
        n_max,
        g,
        delta: 0.0,
        gamma_p: 0.0,
        gamma_cav: 0.0,
    };
    let evals = dressed_spectrum(&cfg)?;
    Ok((1..=k_max)
        .map(|k| {
            let measured = manifold_splitting(&evals, k, g, 0.0);
            let expected = 2.0 * g * (k as f64).sqrt();
            SplittingCheck {
                k,
                measured,
                expected,
                rel_err: (measured - expected).abs() / expected,
            }
        })
        .collect())
}

/// Measured oscillation frequency of the |2, down> population under closed
/// Jaynes-Cummings evolution, against the analytic 2 sqrt(2) g.
#[derive(Debug, Clone, Copy)]
pub struct RabiCheck {
    pub measured: f64,
    pub expected: f64,
    pub rel_err: f64,
}

pub fn rabi_frequency_check(g: f64, n_max: usize) -> Result<RabiCheck> {
    let cfg = OracleConfig {
        n_max,
        g,
        delta: 0.0,
        gamma_p: 0.0,
        gamma_cav: 0.0,
    };
    let expected = 2.0 * 2.0_f64.sqrt() * g;
    let period = 2.0 * std::f64::consts::PI / expected;
    let t_end = 30.0 * period;
    let dt = (0.02 / g).min(period / 40.0);
    let initial = OracleState::fock(n_max, DotLevel::Down, 2)?;
    let snaps = evolve(&cfg, &initial, t_end, dt, None, 1)?;
    let samples: Vec<f64> = snaps
        .iter()
        .map(|s| s.state.population(DotLevel::Down, 2))
        .collect();
    let sample_dt = snaps[1].t - snaps[0].t;
    let measured = dominant_frequency(&samples, sample_dt, 0.85 * expected, 1.15 * expected)?;
    Ok(RabiCheck {
        measured,
        expected,
        rel_err: (measured - expected).abs() / expected,
    })
}

/// Matched single-mode comparison between the correlation dynamics and the
/// exact solver.
#[derive(Debug, Clone)]
pub struct EquivalenceReport {
    pub times: Vec<f64>,
    /// |beta_cluster - <B>_oracle| per snapshot.
    pub beta_dev: Vec<f64>,
    /// |f_e_cluster - f_up_oracle| per snapshot.
    pub f_dev: Vec<f64>,
    /// |n_cluster - n_corr_oracle| per snapshot.
    pub n_dev: Vec<f64>,
    /// Sup-norm deviations relative to the sup-norm of the oracle signal.
    pub beta_rel: f64,
    pub f_rel: f64,
    pub n_rel: f64,
}

/// Run both models from the same coherent initial condition on a single
/// resonant mode and report sup-norm deviations. `gamma_p` applies to both
/// sides; the mode itself is lossless so the comparison isolates the
/// truncation error of the correlation hierarchy.
pub fn cluster_oracle_equivalence(
    g: f64,
    alpha: f64,
    gamma_p: f64,
    t_end: f64,
    dt: f64,
    record_every: usize,
    n_max: usize,
) -> Result<EquivalenceReport> {
    // Cluster side: one mode at zero offset carrying the full coupling.
    let mut params = load_scenario(Scenario::Disk);
    params.g = g;
    params.gamma_p = gamma_p;
    params.delta = 0.0;
    let grid = ModeGrid::single_mode(0.0);
    let couplings = CouplingSet {
        f: Array1::from_elem(1, g),
    };
    let model = ClusterModel::new(&params, &grid, &couplings)?;
    let mut state = CorrelationState::zeros(1);
    state.beta[0] = C64::new(alpha, 0.0);
    let cfg = IntegratorConfig {
        dt,
        t_end,
        record_every,
    };
    let traj = run(&model, state, &grid, &couplings, &cfg)?;
    if let Some(info) = traj.failure {
        return Err(info.to_error());
    }

    // Oracle side: same coherent state, same cadence.
    let ocfg = OracleConfig {
        n_max,
        g,
        delta: 0.0,
        gamma_p,
        gamma_cav: 0.0,
    };
    let initial = OracleState::coherent(n_max, C64::new(alpha, 0.0));
    let snaps = evolve(&ocfg, &initial, t_end, dt, None, record_every)?;
    let count = traj.snapshots.len().min(snaps.len());

    let mut times = Vec::with_capacity(count);
    let mut beta_dev = Vec::with_capacity(count);
    let mut f_dev = Vec::with_capacity(count);
    let mut n_dev = Vec::with_capacity(count);
    let (mut beta_sup, mut f_sup, mut n_sup) = (0.0_f64, 0.0_f64, 0.0_f64);
    for i in 0..count {
        let c = &traj.snapshots[i];
        let o = &snaps[i];
        times.push(c.t);
        beta_dev.push((c.beta[0] - o.moments.mean_b).norm());
        f_dev.push((c.f_e - o.moments.f_up).abs());
        n_dev.push((c.n_diag[0] - o.moments.n_corr).abs());
        beta_sup = beta_sup.max(o.moments.mean_b.norm());
        f_sup = f_sup.max(o.moments.f_up);
        n_sup = n_sup.max(o.moments.n_corr.abs());
    }
    let rel = |devs: &[f64], sup: f64| {
        devs.iter().fold(0.0_f64, |m, d| m.max(*d)) / sup.max(1e-300)
    };
    Ok(EquivalenceReport {
        beta_rel: rel(&beta_dev, beta_sup),
        f_rel: rel(&f_dev, f_sup),
        n_rel: rel(&n_dev, n_sup),
        times,
        beta_dev,
        f_dev,
        n_dev,
    })
}
