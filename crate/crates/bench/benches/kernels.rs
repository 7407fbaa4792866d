use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use stochavg_core::systems::CoupledOscillatorSpec;
use stochavg_core::torus::PoissonOptions;
use stochavg_core::*;

fn poisson(c: &mut Criterion) {
    let grid = TorusGrid::new(2, 64).unwrap();
    let g = TorusFunction::from_fn(grid, |w| {
        (2.0 * std::f64::consts::PI * w[0]).cos() * (1.0 + (4.0 * std::f64::consts::PI * w[1]).sin())
    });
    c.bench_function("poisson 64x64", |b| b.iter(|| solve_poisson(black_box(&g), PoissonOptions::default()).unwrap()));
}

fn coefficients(c: &mut Criterion) {
    let m = coupled_oscillator_model(CoupledOscillatorSpec::doubly_noised()).unwrap();
    let opts = CoefficientOptions { m_w: 32, ..Default::default() };
    c.bench_function("local coefficients m_w=32", |b| {
        b.iter(|| local_coefficients(&m, black_box(&[1.0, 0.7]), &[0.3, 0.1], &opts).unwrap())
    });
}

fn simulation(c: &mut Criterion) {
    let m = coupled_oscillator_model(CoupledOscillatorSpec::doubly_noised()).unwrap();
    let init = InitialState::at(vec![1.0, 1.0]);
    // 1000 micro steps per path
    let mut cfg = SimulationConfig::new(0.1, 1e-4, 0.1, 16, 1);
    cfg.record_dt = Some(0.1);
    c.bench_function("fast-slow 16 paths x 1000 steps", |b| b.iter(|| simulate_fast_slow(&m, &init, &cfg).unwrap()));

    let grid = HGrid::new(vec![-10.0, -10.0], vec![10.0, 10.0], vec![5, 5]).unwrap();
    let gen = GeneratorSpec::new(
        AveragedCoefficients::from_fn(grid, "bench", |h, a, b| {
            a.copy_from_slice(&[1.0, 0.2, 0.2, 0.5]);
            b[0] = -0.1 * h[0];
            b[1] = 0.0;
        })
        .unwrap(),
    );
    let mut cfg = SimulationConfig::new(0.0, 1e-3, 1.0, 16, 1);
    cfg.record_dt = Some(0.1);
    c.bench_function("limit 16 paths x 1000 steps", |b| b.iter(|| simulate_limit_diffusion(&gen, &init, &cfg).unwrap()));
}

fn resonance(c: &mut Criterion) {
    let region = BoxRegion { lo: vec![0.0, 0.0], hi: vec![1.0, 1.0] };
    let omega = |h: &[f64], w: &mut [f64]| {
        w[0] = 1.0 + h[0];
        w[1] = 1.0 + h[1];
    };
    c.bench_function("resonance scan K=10 grid 32", |b| b.iter(|| resonance_scan(&omega, 2, &region, 10, 32).unwrap()));
}

criterion_group!(benches, poisson, coefficients, simulation, resonance);
criterion_main!(benches);
