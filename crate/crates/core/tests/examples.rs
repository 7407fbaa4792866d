//! Worked examples across modules, each checked against an exact value or an
//! independent computation.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use stochavg_core::analysis::{expectation, ks_statistic};
use stochavg_core::averaging::{AveragedCoefficients, HGrid};
use stochavg_core::simulate::{stop_at_box_exit, simulate_openbook, StopReason, TwoWellState};
use stochavg_core::systems::{
    build_openbook, CoupledOscillatorSpec, DoubleWell, FnModel, FrequencyProfile, SeedGrid,
};
use stochavg_core::*;

fn generator(lo: Vec<f64>, hi: Vec<f64>, f: impl Fn(&[f64], &mut [f64], &mut [f64])) -> GeneratorSpec {
    let n = lo.len();
    let grid = HGrid::new(lo, hi, vec![5; n]).unwrap();
    GeneratorSpec::new(AveragedCoefficients::from_fn(grid, "test", f).unwrap())
}

#[test]
fn zero_diffusion_is_deterministic_drift() {
    let gen = generator(vec![-10.0, -10.0], vec![10.0, 10.0], |_, a, b| {
        a.fill(0.0);
        b.copy_from_slice(&[0.3, -0.7]);
    });
    let mut cfg = SimulationConfig::new(0.0, 1e-3, 2.0, 3, 5);
    cfg.record_dt = Some(0.5);
    let e = simulate_limit_diffusion(&gen, &InitialState::at(vec![1.0, 2.0]), &cfg).unwrap();
    let last = e.n_records() - 1;
    for p in 0..3 {
        let h = e.h_at(p, last);
        assert!((h[0] - 1.6).abs() < 1e-12 && (h[1] - 0.6).abs() < 1e-12, "{h:?}");
    }
}

#[test]
fn oscillator_limit_mean_is_affine_in_time() {
    let gen = generator(vec![0.0, 0.0], vec![8.0, 8.0], |h, a, b| {
        a.copy_from_slice(&[h[0] / (PI * PI), 0.0, 0.0, h[1] / (PI * PI)]);
        b.fill(1.0 / (2.0 * PI * PI));
    });
    let mut cfg = SimulationConfig::new(0.0, 1e-2, 1.0, 10_000, 9);
    cfg.record_dt = Some(0.5);
    let e = simulate_limit_diffusion(&gen, &InitialState::at(vec![1.0, 1.0]), &cfg).unwrap();
    for t in [0.5, 1.0] {
        let m = expectation(&e, &TestFunction::Component { i: 0 }, t).unwrap();
        let exact = 1.0 + t / (2.0 * PI * PI);
        assert!((m.mean - exact).abs() <= 3.0 * m.std_err, "t = {t}: {m:?} vs {exact}");
    }
}

#[test]
fn brownian_exit_time_from_interval() {
    let gen = generator(vec![-2.0], vec![2.0], |_, a, b| {
        a[0] = 1.0;
        b[0] = 0.0;
    });
    let mut cfg = SimulationConfig::new(0.0, 1e-5, 6.0, 2000, 17);
    cfg.record_dt = Some(0.5);
    cfg.stop_region = Some(BoxRegion { lo: vec![-1.0], hi: vec![1.0] });
    let e = simulate_limit_diffusion(&gen, &InitialState::at(vec![0.0]), &cfg).unwrap();
    // P(τ > 6) is about 1e-3; such paths contribute T as a lower bound
    let taus: Vec<f64> = e.stops.iter().map(|s| s.map(|s| s.time).unwrap_or(6.0)).collect();
    let m = stats::mean_se(&taus);
    assert!((m.mean - 1.0).abs() <= 3.0 * m.std_err, "{m:?}");
    assert!(e.stops.iter().flatten().all(|s| matches!(s.reason, StopReason::Exit { axis: 0, .. })));
}

#[test]
fn post_hoc_exit_of_a_drifting_path() {
    let gen = generator(vec![-10.0], vec![10.0], |_, a, b| {
        a[0] = 0.0;
        b[0] = 1.0;
    });
    let mut cfg = SimulationConfig::new(0.0, 1e-3, 1.0, 1, 0);
    cfg.record_dt = Some(1e-3);
    let e = simulate_limit_diffusion(&gen, &InitialState::at(vec![0.0]), &cfg).unwrap();
    let (stopped, exits) = stop_at_box_exit(&e, &BoxRegion { lo: vec![-1.0], hi: vec![0.25] });
    assert!((exits[0].time - 0.25).abs() <= 1e-3 + 1e-12, "{:?}", exits[0]);
    assert_eq!(exits[0].face, Some((0, true)));
    assert_eq!(stopped.stops[0].unwrap().reason, StopReason::Exit { axis: 0, upper: true });
    let last = stopped.n_records() - 1;
    assert_eq!(stopped.h_at(0, last), exits[0].h_exit.as_ref().unwrap().as_slice());

    let (same, exits) = stop_at_exit(&e, |_| true);
    assert!(exits.iter().all(|x| x.time == f64::INFINITY));
    assert_eq!(same, e);
}

#[test]
fn unperturbed_angles_advance_at_the_fast_rate() {
    let spec = CoupledOscillatorSpec::unperturbed(
        FrequencyProfile::Constant { value: 1.0 },
        FrequencyProfile::Constant { value: 2.0_f64.sqrt() },
    );
    let m = coupled_oscillator_model(spec).unwrap();
    let eps = 0.1;
    let mut cfg = SimulationConfig::new(eps, 1e-4, 0.1, 1, 1);
    cfg.record_dt = Some(0.05);
    let e = simulate_fast_slow(&m, &InitialState::at(vec![1.0, 1.0]), &cfg).unwrap();
    for (k, &t) in e.times.iter().enumerate() {
        for (i, w) in [1.0, 2.0_f64.sqrt()].iter().enumerate() {
            let exact = (w * t / eps).rem_euclid(1.0);
            let got = e.phi_at(0, k)[i];
            let d = (got - exact).abs();
            assert!(d.min(1.0 - d) < 1e-9, "t = {t}: {got} vs {exact}");
        }
    }
}

fn additive_model() -> FnModel {
    FnModel::new(
        "additive",
        Dims { n: 1, p: 1, m: 1 },
        |_, _, w, out| {
            out[0] = (2.0 * PI * w[0]).cos();
            out[1] = 1.0;
        },
        |_, o| o[0] = 1.0,
    )
}

#[test]
fn step_halving_changes_means_within_noise() {
    let m = additive_model();
    let eps = 0.1;
    let run = |dt: f64, seed: u64| {
        let mut cfg = SimulationConfig::new(eps, dt, 0.5, 4000, seed);
        cfg.record_dt = Some(0.25);
        cfg.record_fast = false;
        simulate_fast_slow(&m, &InitialState::at(vec![0.0]), &cfg).unwrap()
    };
    let coarse = run(1e-3 * eps * eps * 10.0, 1);
    let fine = run(0.5e-3 * eps * eps * 10.0, 2);
    for f in [TestFunction::Component { i: 0 }, TestFunction::Square { i: 0 }] {
        let a = expectation(&coarse, &f, 0.5).unwrap();
        let b = expectation(&fine, &f, 0.5).unwrap();
        let se = (a.std_err.powi(2) + b.std_err.powi(2)).sqrt();
        assert!((a.mean - b.mean).abs() <= 3.0 * se, "{}: {a:?} vs {b:?}", f.label());
    }
    // the additive-noise limit is Brownian motion with variance rate 1/(2π²)
    let v = expectation(&fine, &TestFunction::Square { i: 0 }, 0.5).unwrap();
    let exact = 0.5 / (2.0 * PI * PI);
    assert!((v.mean - exact).abs() <= 3.0 * v.std_err + 0.05 * exact, "{v:?} vs {exact}");
}

#[test]
fn degenerate_comparison_returns_the_initial_value() {
    let spec = CoupledOscillatorSpec::unperturbed(
        FrequencyProfile::Constant { value: 1.0 },
        FrequencyProfile::Constant { value: 2.0 },
    );
    let m = coupled_oscillator_model(spec).unwrap();
    let mut cfg = SimulationConfig::new(0.1, 1e-3, 0.2, 20, 3);
    cfg.record_dt = Some(0.1);
    let init = InitialState::at(vec![0.8, 1.3]);
    let finite = simulate_fast_slow(&m, &init, &cfg).unwrap();
    let gen = generator(vec![0.0, 0.0], vec![4.0, 4.0], |_, a, b| {
        a.fill(0.0);
        b.fill(0.0);
    });
    let limit = simulate_limit_diffusion(&gen, &init, &cfg).unwrap();
    let fs = [TestFunction::Product { i: 0, j: 1 }, TestFunction::Gaussian];
    let rep = moment_compare(&[&finite], &limit, &fs, &[0.2]).unwrap();
    for e in &rep.entries {
        assert_eq!(e.difference, 0.0);
        let exact = fs.iter().find(|f| f.label() == e.function).unwrap().value(&[0.8, 1.3]);
        // a mean of identical values, exact up to summation rounding
        assert!((e.finite.mean - exact).abs() <= 1e-14);
    }
    let self_rep = moment_compare(&[&limit], &limit, &fs, &[0.1, 0.2]).unwrap();
    assert!(self_rep.entries.iter().all(|e| e.difference == 0.0 && e.z == 0.0));
}

#[test]
fn ks_of_independent_normal_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut draw = || -> Vec<f64> { (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect() };
    let (a, b) = (draw(), draw());
    assert!(ks_statistic(&a, &b) < 0.041);
    assert_eq!(ks_statistic(&a, &a), 0.0);
    assert_eq!(ks_statistic(&[0.0], &[1.0]), 1.0);
}

#[test]
fn empty_neighbourhood_has_zero_occupation() {
    let gen = generator(vec![-10.0], vec![10.0], |_, a, b| {
        a[0] = 1.0;
        b[0] = 0.0;
    });
    let mut cfg = SimulationConfig::new(0.0, 1e-2, 5.0, 50, 1);
    cfg.record_dt = Some(0.05);
    let e = simulate_limit_diffusion(&gen, &InitialState::at(vec![0.0]), &cfg).unwrap();
    let est = occupation_time(&e, |_| f64::INFINITY, 0.1, 1.0).unwrap();
    assert_eq!(est.mean, 0.0);
    assert!(matches!(occupation_time(&e, |_| 0.0, 0.1, 0.5), Err(Error::PathsTooShort { .. })));
}

#[test]
fn well_one_path_keeps_its_page_until_the_binding() {
    let book = build_openbook(Arc::new(DoubleWell::default()), &SeedGrid::default()).unwrap();
    let system = OpenBookSystem::new(book, [1.0, 1.0]);
    // (x² − 1)²/4 = 0.2 on the outer side of the right well
    let x = (1.0 + 0.8_f64.sqrt()).sqrt();
    let x0 = TwoWellState { x1: [1.0, 0.0], x2: [x, 0.0], w: [0.0, 0.0] };
    let mut cfg = SimulationConfig::new(0.1, 5e-4, 5.0, 16, 4);
    cfg.record_dt = Some(5e-4);
    let e = simulate_openbook(&system, &x0, &cfg).unwrap();
    let mut crossed = 0;
    for p in &e.paths {
        let until = p.binding_times.first().copied().unwrap_or(f64::INFINITY);
        for (k, &t) in e.times.iter().enumerate() {
            if t < until - 1e-12 {
                assert_eq!(p.page[k], 1, "page changed at t = {t} before the binding at {until}");
            }
        }
        crossed += usize::from(until.is_finite());
    }
    assert!(crossed > 0, "no path reached the binding");
}

#[test]
fn splitting_counts_add_up() {
    let book = build_openbook(Arc::new(DoubleWell::default()), &SeedGrid::default()).unwrap();
    let system = OpenBookSystem::new(book, [1.0, 1.0]);
    let cfg = GluingConfig {
        eps: 0.1,
        dt: None,
        deltas: vec![0.1, 0.05],
        window: 0.2,
        runs_per_condition: 40,
        t_max: 50.0,
        min_hits: 0,
        master_seed: 2,
    };
    let rep = gluing_splitting(&system, &cfg).unwrap();
    for c in &rep.conditions {
        assert_eq!(c.counts.iter().sum::<usize>(), c.hits);
        if c.hits > 0 {
            assert!((c.frequencies.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }
    assert_eq!(rep.pooled_counts.iter().sum::<usize>(), rep.pooled_hits);
    let strict = GluingConfig { min_hits: 41, ..cfg };
    assert!(matches!(gluing_splitting(&system, &strict), Err(Error::InsufficientHits { .. })));
}
