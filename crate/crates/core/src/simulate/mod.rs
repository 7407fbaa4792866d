//! Path simulation: the fast-slow system, the limit diffusion, stopped
//! processes, and the Cartesian open-book and Landau–Lifshitz systems.
//!
//! Every path draws from its own counter-based stream (see [`crate::rng`]),
//! paths run in parallel, and results are assembled by path index, so an
//! ensemble is a pure function of the model and the configuration.

mod fast_slow;
mod landau;
mod limit;
mod openbook;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::path_seed_label;

pub use fast_slow::simulate_fast_slow;
pub use landau::{simulate_landau_lifshitz, LandauEnsemble};
pub use limit::simulate_limit_diffusion;
pub use openbook::{
    binding_start_point, run_until, simulate_openbook, OpenBookEnsemble, OpenBookPath,
    EventOutcome, OpenBookSystem, PageEvent, TwoWellState,
};

pub const DEFAULT_C_SUB: f64 = 0.1;

/// Axis-aligned box in the slow variables; infinite bounds are allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxRegion {
    pub fn contains(&self, h: &[f64]) -> bool {
        self.face(h).is_none()
    }

    /// First violated face as `(axis, upper)`, or `None` inside.
    pub fn face(&self, h: &[f64]) -> Option<(usize, bool)> {
        for (a, &v) in h.iter().enumerate() {
            if v < self.lo[a] {
                return Some((a, false));
            }
            if v > self.hi[a] {
                return Some((a, true));
            }
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// Perturbation scale; unused by the limit diffusion.
    pub eps: f64,
    /// Integration step (micro step for the fast-slow system).
    pub dt: f64,
    pub t_end: f64,
    pub n_paths: usize,
    pub master_seed: u64,
    #[serde(default = "default_c_sub")]
    pub c_sub: f64,
    /// Paths with some `h_i` below this are stopped with [`StopReason::FloorHit`].
    #[serde(default)]
    pub h_floor: Option<f64>,
    /// Paths leaving this box are stopped with [`StopReason::Exit`].
    #[serde(default)]
    pub stop_region: Option<BoxRegion>,
    /// Spacing of recorded states; defaults to `t_end / 100`.
    #[serde(default)]
    pub record_dt: Option<f64>,
    /// Record angles and noise as well as the slow variables.
    #[serde(default = "default_true")]
    pub record_fast: bool,
}

fn default_c_sub() -> f64 {
    DEFAULT_C_SUB
}

fn default_true() -> bool {
    true
}

impl SimulationConfig {
    pub fn new(eps: f64, dt: f64, t_end: f64, n_paths: usize, master_seed: u64) -> Self {
        Self {
            eps,
            dt,
            t_end,
            n_paths,
            master_seed,
            c_sub: DEFAULT_C_SUB,
            h_floor: None,
            stop_region: None,
            record_dt: None,
            record_fast: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidConfig(format!("T must be positive, got {}", self.t_end)));
        }
        if self.n_paths == 0 {
            return Err(Error::InvalidConfig("n_paths must be at least 1".into()));
        }
        if let Some(r) = self.record_dt {
            if !(r > 0.0) {
                return Err(Error::InvalidConfig("record_dt must be positive".into()));
            }
        }
        Ok(())
    }

    /// Enforces `dt ≤ c_sub·ε²`.
    pub fn check_step_rule(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::InvalidConfig(format!("eps must be positive, got {}", self.eps)));
        }
        let limit = self.c_sub * self.eps * self.eps;
        if self.dt > limit * (1.0 + 1e-12) {
            return Err(Error::StepRuleViolation { dt: self.dt, limit });
        }
        Ok(())
    }

    /// `(total steps, steps between records)`.
    pub fn step_counts(&self) -> (usize, usize) {
        let total = (self.t_end / self.dt).round().max(1.0) as usize;
        let rec = self.record_dt.unwrap_or(self.t_end / 100.0);
        let every = ((rec / self.dt).round() as usize).clamp(1, total);
        (total, every)
    }

    pub fn record_times(&self) -> Vec<f64> {
        let (total, every) = self.step_counts();
        let mut t: Vec<f64> = (0..=total / every).map(|k| (k * every) as f64 * self.dt).collect();
        if total % every != 0 {
            t.push(total as f64 * self.dt);
        }
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum StopReason {
    FloorHit { axis: usize },
    OutOfGrid,
    Exit { axis: usize, upper: bool },
    /// Left a region given as a predicate, detected on the record grid.
    RegionExit,
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRecord {
    pub time: f64,
    pub reason: StopReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    FastSlow,
    Limit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub h: Vec<f64>,
    #[serde(default)]
    pub phi: Vec<f64>,
    #[serde(default)]
    pub w: Vec<f64>,
}

impl InitialState {
    pub fn at(h: Vec<f64>) -> Self {
        Self { h, phi: vec![], w: vec![] }
    }
}

/// Recorded trajectories. Arrays are path-major, then record, then
/// component; stopped paths repeat their stopping state afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub kind: EnsembleKind,
    pub times: Vec<f64>,
    pub n_paths: usize,
    pub n: usize,
    pub p: usize,
    pub m: usize,
    pub h: Vec<f64>,
    pub phi: Vec<f64>,
    pub w: Vec<f64>,
    pub stops: Vec<Option<StopRecord>>,
    /// Per-path seed labels, `master_seed ⊕ path_index`.
    pub seeds: Vec<u64>,
    pub eps: Option<f64>,
    pub dt: f64,
    pub master_seed: u64,
}

impl PathEnsemble {
    pub fn n_records(&self) -> usize {
        self.times.len()
    }

    pub fn h_at(&self, path: usize, rec: usize) -> &[f64] {
        let base = (path * self.times.len() + rec) * self.n;
        &self.h[base..base + self.n]
    }

    pub fn phi_at(&self, path: usize, rec: usize) -> &[f64] {
        let base = (path * self.times.len() + rec) * self.p;
        &self.phi[base..base + self.p]
    }

    pub fn w_at(&self, path: usize, rec: usize) -> &[f64] {
        let base = (path * self.times.len() + rec) * self.m;
        &self.w[base..base + self.m]
    }

    pub fn has_fast(&self) -> bool {
        !self.phi.is_empty() || (self.p == 0 && !self.w.is_empty())
    }

    /// Record index of time `t` (exact match up to `1e-9·dt`).
    pub fn record_index(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * self.dt.max(1e-300) + 1e-12 * t.abs();
        self.times.iter().position(|&s| (s - t).abs() <= tol)
    }

    /// Component `i` of `H` across paths at a record.
    pub fn marginal(&self, rec: usize, i: usize) -> Vec<f64> {
        (0..self.n_paths).map(|p| self.h_at(p, rec)[i]).collect()
    }

    pub fn stopped_count(&self) -> usize {
        self.stops.iter().filter(|s| s.is_some()).count()
    }

    /// Assembles per-path buffers in index order.
    pub(crate) fn from_paths(
        kind: EnsembleKind,
        times: Vec<f64>,
        dims: (usize, usize, usize),
        paths: Vec<PathBuffers>,
        eps: Option<f64>,
        dt: f64,
        master_seed: u64,
    ) -> Self {
        let (n, p, m) = dims;
        let n_paths = paths.len();
        let mut h = Vec::with_capacity(n_paths * times.len() * n);
        let mut phi = Vec::new();
        let mut w = Vec::new();
        let mut stops = Vec::with_capacity(n_paths);
        for b in paths {
            h.extend_from_slice(&b.h);
            phi.extend_from_slice(&b.phi);
            w.extend_from_slice(&b.w);
            stops.push(b.stop);
        }
        let seeds = (0..n_paths as u64).map(|i| path_seed_label(master_seed, i)).collect();
        Self { kind, times, n_paths, n, p, m, h, phi, w, stops, seeds, eps, dt, master_seed }
    }
}

pub(crate) struct PathBuffers {
    pub h: Vec<f64>,
    pub phi: Vec<f64>,
    pub w: Vec<f64>,
    pub stop: Option<StopRecord>,
}

/// Exit information from [`stop_at_exit`]; `time` is `∞` for paths that
/// never leave.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitRecord {
    pub time: f64,
    pub h_exit: Option<Vec<f64>>,
    /// `(axis, upper)` for box regions.
    pub face: Option<(usize, bool)>,
}

/// Freezes each path at its first recorded state outside `inside`.
pub fn stop_at_exit(
    ensemble: &PathEnsemble,
    inside: impl Fn(&[f64]) -> bool,
) -> (PathEnsemble, Vec<ExitRecord>) {
    let mut out = ensemble.clone();
    let r = ensemble.n_records();
    let mut exits = Vec::with_capacity(ensemble.n_paths);
    for path in 0..ensemble.n_paths {
        let hit = (0..r).find(|&k| !inside(ensemble.h_at(path, k)));
        match hit {
            None => exits.push(ExitRecord { time: f64::INFINITY, h_exit: None, face: None }),
            Some(k) => {
                let hk = ensemble.h_at(path, k).to_vec();
                exits.push(ExitRecord { time: ensemble.times[k], h_exit: Some(hk.clone()), face: None });
                let (n, p, m) = (ensemble.n, ensemble.p, ensemble.m);
                for j in k + 1..r {
                    let base = path * r + j;
                    out.h[base * n..(base + 1) * n].copy_from_slice(&hk);
                    if !out.phi.is_empty() {
                        let src = (path * r + k) * p;
                        let v = ensemble.phi[src..src + p].to_vec();
                        out.phi[base * p..(base + 1) * p].copy_from_slice(&v);
                    }
                    if !out.w.is_empty() {
                        let src = (path * r + k) * m;
                        let v = ensemble.w[src..src + m].to_vec();
                        out.w[base * m..(base + 1) * m].copy_from_slice(&v);
                    }
                }
                let earlier = out.stops[path].map(|s| s.time < ensemble.times[k]).unwrap_or(false);
                if !earlier {
                    out.stops[path] =
                        Some(StopRecord { time: ensemble.times[k], reason: StopReason::RegionExit });
                }
            }
        }
    }
    (out, exits)
}

/// [`stop_at_exit`] for a box, with the exit face recorded.
pub fn stop_at_box_exit(ensemble: &PathEnsemble, region: &BoxRegion) -> (PathEnsemble, Vec<ExitRecord>) {
    let (mut out, mut exits) = stop_at_exit(ensemble, |h| region.contains(h));
    for (path, e) in exits.iter_mut().enumerate() {
        if let Some(h) = &e.h_exit {
            e.face = region.face(h);
            if let (Some((axis, upper)), Some(stop)) = (e.face, out.stops[path].as_mut()) {
                if stop.reason == StopReason::RegionExit {
                    stop.reason = StopReason::Exit { axis, upper };
                }
            }
        }
    }
    (out, exits)
}
