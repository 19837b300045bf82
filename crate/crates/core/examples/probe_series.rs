use ndarray::Array1;
use num_complex::Complex64 as C64;
use rfspec::dynamics::{run, ClusterModel, CorrelationState, IntegratorConfig};
use rfspec::modes::{CouplingSet, ModeGrid};
use rfspec::oracle::{evolve, moments, MomentOps, OracleConfig, OracleState};
use rfspec::params::{load_scenario, Scenario};

fn main() {
    let g = 11.0;
    let alpha = 0.05_f64.sqrt();
    let t_end = 3.0 * std::f64::consts::PI / g;
    let dt = 2e-4;
    let record = 40;

    let mut params = load_scenario(Scenario::Disk);
    params.g = g;
    params.gamma_p = 0.0;
    params.delta = 0.0;
    let grid = ModeGrid::single_mode(0.0);
    let couplings = CouplingSet {
        f: Array1::from_elem(1, g),
    };
    let model = ClusterModel::new(&params, &grid, &couplings).unwrap();
    let mut state = CorrelationState::zeros(1);
    state.beta[0] = C64::new(alpha, 0.0);
    let cfg = IntegratorConfig {
        dt,
        t_end,
        record_every: record,
    };
    let traj = run(&model, state, &grid, &couplings, &cfg).unwrap();

    let n_max = 14;
    let ocfg = OracleConfig {
        n_max,
        g,
        delta: 0.0,
        gamma_p: 0.0,
        gamma_cav: 0.0,
    };
    let initial = OracleState::coherent(n_max, C64::new(alpha, 0.0));
    let snaps = evolve(&ocfg, &initial, t_end, dt, None, record).unwrap();
    let ops = MomentOps::new(n_max);

    println!("# t  n_cluster  n_oracle  f_cluster  f_oracle  s_cl_re  s_or_re  |b_cl|  |b_or|");
    for (c, o) in traj.snapshots.iter().zip(&snaps).step_by(4) {
        let m = moments(&o.state, &ops);
        println!(
            "{:+.4} {:+.5e} {:+.5e} {:+.5e} {:+.5e} {:+.5e} {:+.5e} {:.6} {:.6}",
            c.t,
            c.n_diag[0],
            m.n_corr,
            c.f_e,
            m.f_up,
            c.s_diag[0].re,
            m.s_corr.re,
            c.beta[0].norm(),
            m.mean_b.norm()
        );
    }
}
