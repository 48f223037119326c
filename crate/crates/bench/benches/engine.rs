use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qzeno::dm::{evolve_master_detector, evolve_measured_decay_dm, DensityMatrix};
use qzeno::{oracles, presets, run_ensemble, run_trajectory, Integrator, Model, RngStream, RunConfig};

fn load(name: &str) -> RunConfig {
    presets::preset(name).unwrap()
}

fn trajectories(c: &mut Criterion) {
    let mut group = c.benchmark_group("trajectory");
    for name in ["fig2", "fig5", "fig7", "fig10"] {
        let cfg = load(name);
        let model = Model::new(cfg.model_spec().unwrap()).unwrap();
        let sim = cfg.simulation().unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(name), &(model, sim), |b, (m, s)| {
            let mut stream = 0;
            b.iter(|| {
                stream += 1;
                run_trajectory(m, s, RngStream::new(1, stream)).unwrap()
            })
        });
    }
    group.finish();
}

fn integrators(c: &mut Criterion) {
    let cfg = load("fig5");
    let model = Model::new(cfg.model_spec().unwrap()).unwrap();
    let mut group = c.benchmark_group("integrator");
    for integrator in [Integrator::Euler, Integrator::Rk4] {
        let sim = cfg.simulation().unwrap().with_integrator(integrator);
        group.bench_function(format!("{integrator:?}"), |b| {
            b.iter(|| run_trajectory(&model, &sim, RngStream::new(3, 0)).unwrap())
        });
    }
    group.finish();
}

fn ensemble(c: &mut Criterion) {
    let cfg = load("fig3")
        .with_overrides(&[("ensemble.n_trajectories", "64"), ("ensemble.workers", "1")])
        .unwrap();
    let model = Model::new(cfg.model_spec().unwrap()).unwrap();
    let sim = cfg.simulation().unwrap();
    let ens = cfg.ensemble_config();
    c.bench_function("ensemble/fig3/64", |b| b.iter(|| run_ensemble(&model, &sim, &ens).unwrap()));
}

fn references(c: &mut Criterion) {
    let cfg = load("fig2");
    let spec = cfg.model_spec().unwrap();
    let rho0 = DensityMatrix::from_state(&Model::new(spec.clone()).unwrap().initial_state()).unwrap();
    c.bench_function("dm/detector", |b| {
        b.iter(|| evolve_master_detector(&rho0, &spec, 25.0, 0.1).unwrap())
    });

    let res = load("fig10").model_spec().unwrap().reservoir().unwrap().rescaled(101).unwrap();
    c.bench_function("dm/measured-decay/101", |b| {
        b.iter(|| evolve_measured_decay_dm(&res, 5.0, 50.0, 0.5).unwrap())
    });

    let sloped = *load("fig12").model_spec().unwrap().reservoir().unwrap();
    c.bench_function("oracle/laplace", |b| {
        b.iter(|| oracles::laplace_decay_rate(black_box(&sloped), 5.0).unwrap())
    });
    c.bench_function("oracle/resolvent", |b| {
        b.iter(|| oracles::resolvent_decay_rate(black_box(&sloped)).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = trajectories, integrators, ensemble, references
}
criterion_main!(benches);
