//! Two planar oscillators driven by fast rotating forcing: a harmonic `H₁`
//! and a double-well `H₂`, each perturbed by
//! `σᵢ·(cos 2πwᵢ·xᵢ₁ + sin 2πwᵢ·xᵢ₂)` with independent torus noises `wᵢ`.
//!
//! The two subsystems are uncoupled, so `x₂` can be run alone for the
//! gluing experiments.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SimulationConfig;
use crate::error::{Error, Result};
use crate::rng::{path_rng, PathRng};
use crate::systems::openbook::skew_gradient;
use crate::systems::{wrap01, Harmonic, OpenBook, PlanarHamiltonian};

#[derive(Clone)]
pub struct OpenBookSystem {
    pub book: OpenBook,
    pub h1: Arc<dyn PlanarHamiltonian>,
    pub sigma: [f64; 2],
}

impl std::fmt::Debug for OpenBookSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OpenBookSystem").field("book", &self.book).field("sigma", &self.sigma).finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoWellState {
    pub x1: [f64; 2],
    pub x2: [f64; 2],
    #[serde(default)]
    pub w: [f64; 2],
}

/// Stopping rule for a single `x₂` run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PageEvent {
    /// First visit to the binding, then the first time `|h₂ − h_c| ≥ delta`.
    AfterBinding { delta: f64 },
    /// First time `|h₂ − h_c| ≥ window`.
    WindowExit { window: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventOutcome {
    pub time: f64,
    pub page: usize,
    pub visited_binding: bool,
}

impl OpenBookSystem {
    pub fn new(book: OpenBook, sigma: [f64; 2]) -> Self {
        Self { book, h1: Arc::new(Harmonic { k: 1.0 }), sigma }
    }

    fn velocity(h: &dyn PlanarHamiltonian, sigma: f64, x: [f64; 2], w: f64) -> [f64; 2] {
        let v = skew_gradient(h, x);
        let (s, c) = (2.0 * PI * w).sin_cos();
        [v[0] + sigma * s, v[1] - sigma * c]
    }

    /// One Heun step of `ẋ = ε⁻¹(∇̄H(x) + σ∇̄𝓗(x, w))` with the noise taken at
    /// both ends of the step.
    fn heun(h: &dyn PlanarHamiltonian, sigma: f64, x: [f64; 2], w0: f64, w1: f64, s: f64) -> [f64; 2] {
        let k1 = Self::velocity(h, sigma, x, w0);
        let y = [x[0] + s * k1[0], x[1] + s * k1[1]];
        let k2 = Self::velocity(h, sigma, y, w1);
        [x[0] + 0.5 * s * (k1[0] + k2[0]), x[1] + 0.5 * s * (k1[1] + k2[1])]
    }

    fn page_code(&self, x2: [f64; 2]) -> (f64, usize) {
        let (h, k) = self.book.page_of(x2);
        if (h - self.book.binding()).abs() < self.book.tol_sep {
            (h, 0)
        } else {
            (h, k)
        }
    }

    /// Runs `x₂` alone until `event` or `t_max`; `None` if the horizon is hit.
    #[allow(clippy::too_many_arguments)]
    pub fn run_until(
        &self,
        mut x: [f64; 2],
        mut w: f64,
        eps: f64,
        dt: f64,
        t_max: f64,
        event: PageEvent,
        rng: &mut PathRng,
    ) -> Option<EventOutcome> {
        let ham = self.book.hamiltonian();
        let hc = self.book.binding();
        let sigma = self.sigma[1];
        let s = dt / eps;
        let sn = dt.sqrt() / eps;
        let steps = (t_max / dt).ceil() as usize;
        let separable = ham.is_separable();
        let (mut h_prev, mut page_prev) = self.book.page_of(x);
        let mut visited = (h_prev - hc).abs() < self.book.tol_sep;
        for step in 1..=steps {
            let z: f64 = rng.sample(StandardNormal);
            let w1 = wrap01(w + sn * z);
            x = Self::heun(ham, sigma, x, w, w1, s);
            w = w1;
            if !(x[0].is_finite() && x[1].is_finite()) {
                return None;
            }
            let h = ham.value(x);
            let gap = h - hc;
            let page = if gap > 0.0 {
                3
            } else if separable || (h_prev - hc) > 0.0 {
                self.book.lobe(x)
            } else {
                page_prev
            };
            if !visited && ((h_prev - hc) * gap <= 0.0 || page != page_prev || gap.abs() < self.book.tol_sep) {
                visited = true;
            }
            let done = match event {
                PageEvent::AfterBinding { delta } => visited && gap.abs() >= delta,
                PageEvent::WindowExit { window } => gap.abs() >= window,
            };
            if done {
                return Some(EventOutcome { time: step as f64 * dt, page, visited_binding: visited });
            }
            h_prev = h;
            page_prev = page;
        }
        None
    }
}

/// A point of page `page` at distance `delta` in `h₂` from the binding: on
/// the segment from the saddle to the well minimum for pages 1 and 2, and
/// along the ascending eigendirection of the saddle Hessian for page 3
/// (`flip` selects the opposite direction there).
pub fn binding_start_point(book: &OpenBook, page: usize, delta: f64, flip: bool) -> Result<[f64; 2]> {
    let ham = book.hamiltonian();
    let hc = book.binding();
    let o = book.saddle.x;
    if !(delta > 0.0) {
        return Err(Error::DomainError(format!("delta must be positive, got {delta}")));
    }
    let (dir, target, t_hi) = match page {
        1 | 2 => {
            let m = book.minima[page - 1];
            if hc - delta <= m.value {
                return Err(Error::DomainError(format!("page {page} does not reach h2 = {}", hc - delta)));
            }
            ([m.x[0] - o[0], m.x[1] - o[1]], hc - delta, 1.0)
        }
        3 => {
            let hs = ham.hessian(o);
            let (a, b, c) = (hs[0][0], hs[0][1], hs[1][1]);
            let lam = 0.5 * (a + c) + (0.25 * (a - c) * (a - c) + b * b).sqrt();
            let v = if b.abs() > 1e-14 { [b, lam - a] } else if a >= c { [1.0, 0.0] } else { [0.0, 1.0] };
            let n = v[0].hypot(v[1]) * if flip { -1.0 } else { 1.0 };
            let dir = [v[0] / n, v[1] / n];
            let mut r = 0.1;
            while ham.value([o[0] + r * dir[0], o[1] + r * dir[1]]) < hc + delta {
                r *= 2.0;
                if r > 1e6 {
                    return Err(Error::DomainError("page 3 level not reached".into()));
                }
            }
            (dir, hc + delta, r)
        }
        _ => return Err(Error::DomainError(format!("no page {page}"))),
    };
    let f = |t: f64| ham.value([o[0] + t * dir[0], o[1] + t * dir[1]]) - target;
    let (mut lo, mut hi) = (0.0, t_hi);
    let s_lo = f(lo).signum();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid).signum() == s_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    Ok([o[0] + t * dir[0], o[1] + t * dir[1]])
}

/// Free-function form of [`OpenBookSystem::run_until`].
#[allow(clippy::too_many_arguments)]
pub fn run_until(
    system: &OpenBookSystem,
    x: [f64; 2],
    w: f64,
    eps: f64,
    dt: f64,
    t_max: f64,
    event: PageEvent,
    rng: &mut PathRng,
) -> Option<EventOutcome> {
    system.run_until(x, w, eps, dt, t_max, event, rng)
}

/// One recorded path; `page` is 0 on the separatrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenBookPath {
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub page: Vec<u8>,
    /// Times of steps on which `h₂ − h_c` changed sign.
    pub binding_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenBookEnsemble {
    pub times: Vec<f64>,
    pub paths: Vec<OpenBookPath>,
    pub eps: f64,
    pub dt: f64,
    pub master_seed: u64,
}

/// Simulates both oscillators and records `(h₁, h₂, page)`.
pub fn simulate_openbook(
    system: &OpenBookSystem,
    x0: &TwoWellState,
    cfg: &SimulationConfig,
) -> Result<OpenBookEnsemble> {
    cfg.validate()?;
    cfg.check_step_rule()?;
    let times = cfg.record_times();
    let (total, every) = cfg.step_counts();
    let s = cfg.dt / cfg.eps;
    let sn = cfg.dt.sqrt() / cfg.eps;
    let h1 = system.h1.as_ref();
    let h2 = system.book.hamiltonian();
    let hc = system.book.binding();
    let paths: Vec<OpenBookPath> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = path_rng(cfg.master_seed, path as u64);
            let mut st = *x0;
            let mut out = OpenBookPath {
                h1: Vec::with_capacity(times.len()),
                h2: Vec::with_capacity(times.len()),
                page: Vec::with_capacity(times.len()),
                binding_times: Vec::new(),
            };
            let record = |out: &mut OpenBookPath, st: &TwoWellState| {
                let (hv, k) = system.page_code(st.x2);
                out.h1.push(h1.value(st.x1));
                out.h2.push(hv);
                out.page.push(k as u8);
            };
            record(&mut out, &st);
            let mut gap_prev = h2.value(st.x2) - hc;
            for step in 1..=total {
                let z1: f64 = rng.sample(StandardNormal);
                let z2: f64 = rng.sample(StandardNormal);
                let w1 = [wrap01(st.w[0] + sn * z1), wrap01(st.w[1] + sn * z2)];
                st.x1 = OpenBookSystem::heun(h1, system.sigma[0], st.x1, st.w[0], w1[0], s);
                st.x2 = OpenBookSystem::heun(h2, system.sigma[1], st.x2, st.w[1], w1[1], s);
                st.w = w1;
                let gap = h2.value(st.x2) - hc;
                if gap * gap_prev <= 0.0 {
                    out.binding_times.push(step as f64 * cfg.dt);
                }
                gap_prev = gap;
                if step % every == 0 || step == total {
                    record(&mut out, &st);
                }
            }
            out
        })
        .collect();
    Ok(OpenBookEnsemble { times, paths, eps: cfg.eps, dt: cfg.dt, master_seed: cfg.master_seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{build_openbook, DoubleWell, SeedGrid};

    fn system(sigma: f64) -> OpenBookSystem {
        let book = build_openbook(Arc::new(DoubleWell::default()), &SeedGrid::default()).unwrap();
        OpenBookSystem::new(book, [sigma, sigma])
    }

    #[test]
    fn start_points_sit_on_requested_levels() {
        let s = system(1.0);
        for (page, sign) in [(1, -1.0), (2, -1.0), (3, 1.0)] {
            for flip in [false, true] {
                let x = binding_start_point(&s.book, page, 0.05, flip).unwrap();
                let (h, k) = s.book.page_of(x);
                assert_eq!(k, page);
                assert!((h - (0.25 + sign * 0.05)).abs() < 1e-12);
            }
        }
        let a = binding_start_point(&s.book, 3, 0.05, false).unwrap();
        let b = binding_start_point(&s.book, 3, 0.05, true).unwrap();
        assert!((a[0] + b[0]).abs() < 1e-12 && (a[1] + b[1]).abs() < 1e-12);
        assert!(binding_start_point(&s.book, 1, 0.3, false).is_err());
    }

    #[test]
    fn unforced_energies_are_conserved() {
        let s = system(0.0);
        let mut cfg = SimulationConfig::new(0.1, 1e-4, 0.2, 2, 1);
        cfg.record_dt = Some(0.1);
        let x0 = TwoWellState { x1: [1.0, 0.0], x2: [1.3, 0.0], w: [0.0, 0.0] };
        let e = simulate_openbook(&s, &x0, &cfg).unwrap();
        let h20 = DoubleWell::default().value([1.3, 0.0]);
        for p in &e.paths {
            for (a, b) in p.h1.iter().zip(&p.h2) {
                assert!((a - 0.5).abs() < 1e-6 && (b - h20).abs() < 1e-6);
            }
            assert!(p.page.iter().all(|&k| k == 1));
        }
    }

    #[test]
    fn window_exit_reports_a_page() {
        let s = system(1.0);
        let x = binding_start_point(&s.book, 3, 0.02, false).unwrap();
        let mut rng = path_rng(5, 0);
        let out = s
            .run_until(x, 0.0, 0.05, 0.1 * 0.05 * 0.05, 50.0, PageEvent::WindowExit { window: 0.1 }, &mut rng)
            .expect("exits the window");
        assert!((1..=3).contains(&out.page));
    }
}
