use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{EnsembleKind, InitialState, PathBuffers, PathEnsemble, SimulationConfig, StopReason, StopRecord};
use crate::error::{Error, Result};
use crate::rng::path_rng;
use crate::systems::{wrap01, SlowFastModel};

/// Euler scheme for
/// `dH = ε⁻¹ b_h dt`, `dΦ = ε⁻¹ b_φ dt`, `W` a Brownian motion on `𝕋ᵐ` run
/// at speed `ε⁻²`.
///
/// Requires `dt ≤ c_sub·ε²` so that the noise is resolved. Paths that fall
/// below `h_floor`, leave `stop_region`, or become non-finite are stopped
/// and flagged.
pub fn simulate_fast_slow(
    model: &dyn SlowFastModel,
    init: &InitialState,
    cfg: &SimulationConfig,
) -> Result<PathEnsemble> {
    cfg.validate()?;
    cfg.check_step_rule()?;
    let dims = model.dims();
    let (n, p, m) = (dims.n, dims.p, dims.m);
    if init.h.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: init.h.len() });
    }
    let phi0 = if init.phi.is_empty() { vec![0.0; p] } else { init.phi.clone() };
    let w0 = if init.w.is_empty() { vec![0.0; m] } else { init.w.clone() };
    if phi0.len() != p {
        return Err(Error::DimensionMismatch { expected: p, got: phi0.len() });
    }
    if w0.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: w0.len() });
    }
    if let Some(r) = &cfg.stop_region {
        if r.lo.len() != n || r.hi.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: r.lo.len().min(r.hi.len()) });
        }
    }
    model.check_domain(&init.h)?;

    let times = cfg.record_times();
    let (total, every) = cfg.step_counts();
    let dt = cfg.dt;
    let drift_scale = dt / cfg.eps;
    let noise_scale = dt.sqrt() / cfg.eps;
    let record_fast = cfg.record_fast;
    let n_rec = times.len();

    let paths: Vec<PathBuffers> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = path_rng(cfg.master_seed, path as u64);
            let mut h = init.h.clone();
            let mut phi = phi0.clone();
            let mut w = w0.clone();
            let mut b = vec![0.0; n + p];
            let mut buf = PathBuffers {
                h: Vec::with_capacity(n_rec * n),
                phi: Vec::with_capacity(if record_fast { n_rec * p } else { 0 }),
                w: Vec::with_capacity(if record_fast { n_rec * m } else { 0 }),
                stop: None,
            };
            let push = |buf: &mut PathBuffers, h: &[f64], phi: &[f64], w: &[f64]| {
                buf.h.extend_from_slice(h);
                if record_fast {
                    buf.phi.extend_from_slice(phi);
                    buf.w.extend_from_slice(w);
                }
            };
            push(&mut buf, &h, &phi, &w);
            let mut step = 0usize;
            while step < total {
                step += 1;
                model.field(&h, &phi, &w, &mut b);
                for i in 0..n {
                    h[i] += drift_scale * b[i];
                }
                for k in 0..p {
                    phi[k] = wrap01(phi[k] + drift_scale * b[n + k]);
                }
                for v in w.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *v = wrap01(*v + noise_scale * z);
                }
                let t = step as f64 * dt;
                if let Some(reason) = stop_reason(&h, cfg) {
                    buf.stop = Some(StopRecord { time: t, reason });
                    break;
                }
                if step % every == 0 || step == total {
                    push(&mut buf, &h, &phi, &w);
                }
            }
            // stopped paths hold their final state
            while buf.h.len() < n_rec * n {
                push(&mut buf, &h, &phi, &w);
            }
            buf
        })
        .collect();

    Ok(PathEnsemble::from_paths(
        EnsembleKind::FastSlow,
        times,
        (n, if record_fast { p } else { 0 }, if record_fast { m } else { 0 }),
        paths,
        Some(cfg.eps),
        dt,
        cfg.master_seed,
    ))
}

pub(super) fn stop_reason(h: &[f64], cfg: &SimulationConfig) -> Option<StopReason> {
    if h.iter().any(|v| !v.is_finite()) {
        return Some(StopReason::NonFinite);
    }
    if let Some(floor) = cfg.h_floor {
        if let Some(axis) = h.iter().position(|&v| v < floor) {
            return Some(StopReason::FloorHit { axis });
        }
    }
    if let Some(r) = &cfg.stop_region {
        if let Some((axis, upper)) = r.face(h) {
            return Some(StopReason::Exit { axis, upper });
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{coupled_oscillator_model, CoupledOscillatorSpec, Dims, FnModel, FrequencyProfile};

    #[test]
    fn unperturbed_actions_are_frozen() {
        let spec = CoupledOscillatorSpec::unperturbed(
            FrequencyProfile::Constant { value: 1.0 },
            FrequencyProfile::Constant { value: 2.0 },
        );
        let model = coupled_oscillator_model(spec).unwrap();
        let cfg = SimulationConfig::new(0.1, 1e-3, 0.5, 3, 7);
        let e = simulate_fast_slow(&model, &InitialState::at(vec![1.0, 0.5]), &cfg).unwrap();
        for p in 0..3 {
            for r in 0..e.n_records() {
                assert_eq!(e.h_at(p, r), &[1.0, 0.5]);
            }
        }
        // angles advance at ω/ε
        let last = e.n_records() - 1;
        let expect = wrap01(0.5 / 0.1 * 2.0);
        assert!((e.phi_at(0, last)[1] - expect).abs() < 1e-9);
    }

    #[test]
    fn step_rule_enforced() {
        let model = FnModel::new("z", Dims { n: 1, p: 0, m: 1 }, |_, _, _, o| o[0] = 0.0, |_, _| {});
        let cfg = SimulationConfig::new(0.1, 0.01, 1.0, 1, 0);
        assert!(matches!(
            simulate_fast_slow(&model, &InitialState::at(vec![0.0]), &cfg),
            Err(Error::StepRuleViolation { .. })
        ));
    }

    #[test]
    fn same_seed_same_paths() {
        let model = coupled_oscillator_model(CoupledOscillatorSpec::doubly_noised()).unwrap();
        let mut cfg = SimulationConfig::new(0.2, 0.004, 0.2, 4, 11);
        cfg.record_dt = Some(0.05);
        let a = simulate_fast_slow(&model, &InitialState::at(vec![1.0, 1.0]), &cfg).unwrap();
        let b = simulate_fast_slow(&model, &InitialState::at(vec![1.0, 1.0]), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_records(), 5);
        cfg.master_seed = 12;
        let c = simulate_fast_slow(&model, &InitialState::at(vec![1.0, 1.0]), &cfg).unwrap();
        assert_ne!(a.h, c.h);
    }
}
