//! Benchmarks for the correlation-dynamics hot paths, comparing the
//! sequential inner loops against the rayon-parallel ones.
//!
//! Run with `cargo bench -p rfspec`; build with `--no-default-features` to
//! benchmark the sequential fallback alone.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use rfspec::dynamics::{
    init_state, step_rk4, ClusterModel, CorrelationState, ExecMode, IntegratorConfig, Workspace,
};
use rfspec::modes::{build_mode_grid, coupling_constants, PumpSpec};
use rfspec::params::{load_scenario, Scenario};

fn setup(n_modes: usize) -> (ClusterModel, CorrelationState) {
    let params = load_scenario(Scenario::Disk);
    let grid = build_mode_grid(params.gamma_cav, 10.0 * params.g, n_modes).unwrap();
    let couplings = coupling_constants(&grid, params.g);
    let pump = PumpSpec {
        carrier: params.g / 2.0_f64.sqrt(),
        sigma: 0.2 * params.g,
        alpha: 0.3,
        t_peak: 5.0 / params.g,
    };
    let model = ClusterModel::new(&params, &grid, &couplings).unwrap();
    let mut state = model.prepare_state(init_state(&params, &grid, &couplings, &pump).unwrap());
    // A few steps so every correlation channel is populated.
    let mut ws = Workspace::for_model(&model);
    let cfg = IntegratorConfig {
        dt: 0.02 / (10.0 * params.g),
        t_end: 0.0,
        record_every: 1,
    };
    for _ in 0..32 {
        step_rk4(&model, &mut state, cfg.dt, &mut ws);
    }
    (model, state)
}

fn bench_derivative(c: &mut Criterion) {
    let mut group = c.benchmark_group("derivative");
    for &n_modes in &[101usize, 301] {
        let (model, state) = setup(n_modes);
        let mut out = model.prepare_state(CorrelationState::zeros(n_modes));
        group.bench_with_input(
            BenchmarkId::new("sequential", n_modes),
            &n_modes,
            |b, _| b.iter(|| model.derivative_sequential(&state, &mut out)),
        );
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("parallel", n_modes), &n_modes, |b, _| {
            b.iter(|| model.derivative_parallel(&state, &mut out))
        });
    }
    group.finish();
}

fn bench_rk4_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("rk4_step");
    group.sample_size(20);
    for &n_modes in &[201usize] {
        for (label, exec) in [
            ("sequential", ExecMode::Sequential),
            #[cfg(feature = "parallel")]
            ("parallel", ExecMode::Parallel),
        ] {
            let (model, state) = setup(n_modes);
            let model = model.with_exec(exec);
            let mut ws = Workspace::for_model(&model);
            let dt = 1e-4;
            group.bench_with_input(
                BenchmarkId::new(label, n_modes),
                &n_modes,
                |b, _| {
                    b.iter_batched(
                        || state.clone(),
                        |mut s| step_rk4(&model, &mut s, dt, &mut ws),
                        criterion::BatchSize::LargeInput,
                    )
                },
            );
        }
    }
    group.finish();
}

criterion_group!(benches, bench_derivative, bench_rk4_step);
criterion_main!(benches);
