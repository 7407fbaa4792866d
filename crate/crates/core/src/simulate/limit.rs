use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::fast_slow::stop_reason;
use super::{EnsembleKind, InitialState, PathBuffers, PathEnsemble, SimulationConfig, StopReason, StopRecord};
use crate::averaging::{GeneratorSpec, MAX_SLOW_DIM};
use crate::error::{Error, Result};
use crate::rng::path_rng;

/// Euler–Maruyama for `dH = B̄(H) dt + Ā(H)^{1/2} dB` with interpolated
/// coefficients.
///
/// A step that would leave the tabulated grid stops the path with
/// [`StopReason::OutOfGrid`]; the path keeps its last in-grid state.
pub fn simulate_limit_diffusion(
    generator: &GeneratorSpec,
    init: &InitialState,
    cfg: &SimulationConfig,
) -> Result<PathEnsemble> {
    cfg.validate()?;
    let n = generator.dim();
    if init.h.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: init.h.len() });
    }
    if !generator.coeffs.grid.contains(&init.h) {
        return Err(Error::DomainError(format!("initial state {:?} outside the tabulated grid", init.h)));
    }
    let times = cfg.record_times();
    let (total, every) = cfg.step_counts();
    let dt = cfg.dt;
    let sdt = dt.sqrt();
    let n_rec = times.len();

    let paths: Vec<PathBuffers> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = path_rng(cfg.master_seed, path as u64);
            let mut h = init.h.clone();
            let mut next = vec![0.0; n];
            let mut sigma = [0.0; MAX_SLOW_DIM * MAX_SLOW_DIM];
            let mut b = [0.0; MAX_SLOW_DIM];
            let mut z = [0.0; MAX_SLOW_DIM];
            let mut buf = PathBuffers { h: Vec::with_capacity(n_rec * n), phi: vec![], w: vec![], stop: None };
            buf.h.extend_from_slice(&h);
            for step in 1..=total {
                let t = step as f64 * dt;
                if generator.sqrt_diffusion(&h, &mut sigma[..n * n], &mut b[..n]).is_none() {
                    buf.stop = Some(StopRecord { time: t - dt, reason: StopReason::OutOfGrid });
                    break;
                }
                for v in z[..n].iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                for i in 0..n {
                    let mut s = 0.0;
                    for j in 0..n {
                        s += sigma[i * n + j] * z[j];
                    }
                    next[i] = h[i] + b[i] * dt + s * sdt;
                }
                if !generator.coeffs.grid.contains(&next) {
                    buf.stop = Some(StopRecord { time: t, reason: StopReason::OutOfGrid });
                    break;
                }
                h.copy_from_slice(&next);
                if let Some(reason) = stop_reason(&h, cfg) {
                    buf.stop = Some(StopRecord { time: t, reason });
                    break;
                }
                if step % every == 0 || step == total {
                    buf.h.extend_from_slice(&h);
                }
            }
            while buf.h.len() < n_rec * n {
                buf.h.extend_from_slice(&h);
            }
            buf
        })
        .collect();

    Ok(PathEnsemble::from_paths(EnsembleKind::Limit, times, (n, 0, 0), paths, None, dt, cfg.master_seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::averaging::{AveragedCoefficients, HGrid};
    use crate::stats::mean_se;

    fn brownian(lo: f64, hi: f64) -> GeneratorSpec {
        let grid = HGrid::new(vec![lo], vec![hi], vec![3]).unwrap();
        GeneratorSpec::new(AveragedCoefficients::from_fn(grid, "brownian", |_h, a, b| {
            a[0] = 1.0;
            b[0] = 0.0;
        })
        .unwrap())
    }

    #[test]
    fn brownian_variance() {
        let g = brownian(-50.0, 50.0);
        let mut cfg = SimulationConfig::new(1.0, 0.01, 1.0, 4000, 3);
        cfg.record_dt = Some(0.5);
        let e = simulate_limit_diffusion(&g, &InitialState::at(vec![0.0]), &cfg).unwrap();
        let last = e.n_records() - 1;
        let sq: Vec<f64> = e.marginal(last, 0).iter().map(|x| x * x).collect();
        let m = mean_se(&sq);
        assert!((m.mean - 1.0).abs() < 4.0 * m.std_err, "{m:?}");
    }

    #[test]
    fn leaving_grid_is_flagged() {
        let g = brownian(-0.1, 0.1);
        let cfg = SimulationConfig::new(1.0, 0.01, 1.0, 20, 3);
        let e = simulate_limit_diffusion(&g, &InitialState::at(vec![0.0]), &cfg).unwrap();
        assert!(e.stops.iter().all(|s| matches!(s, Some(StopRecord { reason: StopReason::OutOfGrid, .. }))));
        assert!(e.h.iter().all(|v| v.abs() <= 0.1));
    }
}
