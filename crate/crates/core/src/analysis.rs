//! Statistical checks of the averaging limit: moment comparisons along an
//! ε-ladder, martingale residuals, KS distances, and open-book splitting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::averaging::GeneratorSpec;
use crate::error::{Error, Result};
use crate::rng::path_rng;
use crate::simulate::{binding_start_point, OpenBookSystem, PageEvent, PathEnsemble, StopReason};
use crate::stats::{mean_se, MeanEstimate};

/// Smooth test functions of the slow variables with exact derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    Constant { value: f64 },
    /// `h_i`
    Component { i: usize },
    /// `h_i²`
    Square { i: usize },
    /// `h_i·h_j`
    Product { i: usize, j: usize },
    /// `exp(−|h|²)`
    Gaussian,
    /// `ln(−ln h_i)`, defined for `0 < h_i < 1`.
    LogLog { i: usize },
    /// `Σ c·f`
    Combination { terms: Vec<(f64, TestFunction)> },
}

impl TestFunction {
    pub fn label(&self) -> String {
        match self {
            TestFunction::Constant { value } => format!("{value}"),
            TestFunction::Component { i } => format!("h{}", i + 1),
            TestFunction::Square { i } => format!("h{}^2", i + 1),
            TestFunction::Product { i, j } => format!("h{}*h{}", i + 1, j + 1),
            TestFunction::Gaussian => "exp(-|h|^2)".into(),
            TestFunction::LogLog { i } => format!("ln(-ln h{})", i + 1),
            TestFunction::Combination { terms } => terms
                .iter()
                .map(|(c, f)| format!("{c}*{}", f.label()))
                .collect::<Vec<_>>()
                .join(" + "),
        }
    }

    pub fn value(&self, h: &[f64]) -> f64 {
        match self {
            TestFunction::Constant { value } => *value,
            TestFunction::Component { i } => h[*i],
            TestFunction::Square { i } => h[*i] * h[*i],
            TestFunction::Product { i, j } => h[*i] * h[*j],
            TestFunction::Gaussian => (-h.iter().map(|x| x * x).sum::<f64>()).exp(),
            TestFunction::LogLog { i } => (-h[*i].ln()).ln(),
            TestFunction::Combination { terms } => terms.iter().map(|(c, f)| c * f.value(h)).sum(),
        }
    }

    /// Adds `scale·∇f` into `grad` and `scale·∇²f` (row-major) into `hess`.
    pub fn accumulate_derivatives(&self, h: &[f64], scale: f64, grad: &mut [f64], hess: &mut [f64]) {
        let n = h.len();
        match self {
            TestFunction::Constant { .. } => {}
            TestFunction::Component { i } => grad[*i] += scale,
            TestFunction::Square { i } => {
                grad[*i] += scale * 2.0 * h[*i];
                hess[*i * n + *i] += scale * 2.0;
            }
            TestFunction::Product { i, j } => {
                grad[*i] += scale * h[*j];
                grad[*j] += scale * h[*i];
                hess[*i * n + *j] += scale;
                hess[*j * n + *i] += scale;
            }
            TestFunction::Gaussian => {
                let g = (-h.iter().map(|x| x * x).sum::<f64>()).exp();
                for a in 0..n {
                    grad[a] += scale * -2.0 * h[a] * g;
                    for b in 0..n {
                        let d = if a == b { 1.0 } else { 0.0 };
                        hess[a * n + b] += scale * g * (4.0 * h[a] * h[b] - 2.0 * d);
                    }
                }
            }
            TestFunction::LogLog { i } => {
                // f = ln(−ln x): f' = 1/(x ln x), f'' = −(1 + ln x)/(x ln x)²
                let x = h[*i];
                let l = x.ln();
                grad[*i] += scale / (x * l);
                hess[*i * n + *i] += scale * -(1.0 + l) / (x * l * x * l);
            }
            TestFunction::Combination { terms } => {
                for (c, f) in terms {
                    f.accumulate_derivatives(h, scale * c, grad, hess);
                }
            }
        }
    }

    pub fn derivatives(&self, h: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = h.len();
        let mut g = vec![0.0; n];
        let mut hs = vec![0.0; n * n];
        self.accumulate_derivatives(h, 1.0, &mut g, &mut hs);
        (g, hs)
    }

    /// Largest component index used.
    pub fn max_index(&self) -> Option<usize> {
        match self {
            TestFunction::Constant { .. } | TestFunction::Gaussian => None,
            TestFunction::Component { i } | TestFunction::Square { i } | TestFunction::LogLog { i } => Some(*i),
            TestFunction::Product { i, j } => Some(*i.max(j)),
            TestFunction::Combination { terms } => terms.iter().filter_map(|(_, f)| f.max_index()).max(),
        }
    }

    /// `Lf(h)` for a generator; `None` outside its grid.
    pub fn generator_value(&self, generator: &GeneratorSpec, h: &[f64]) -> Option<f64> {
        let (g, hs) = self.derivatives(h);
        generator.apply(h, &g, &hs)
    }
}

fn stopped_before(ens: &PathEnsemble, path: usize, t: f64) -> bool {
    ens.stops[path].is_some_and(|s| s.time <= t)
}

fn checkpoint(ens: &PathEnsemble, t: f64, what: &str) -> Result<usize> {
    ens.record_index(t)
        .ok_or_else(|| Error::CheckpointMismatch(format!("{what} has no record at t = {t}")))
}

/// `E f(H(t))` over paths still running at `t`.
pub fn expectation(ens: &PathEnsemble, f: &TestFunction, t: f64) -> Result<MeanEstimate> {
    let k = checkpoint(ens, t, "ensemble")?;
    let vals: Vec<f64> =
        (0..ens.n_paths).filter(|&p| !stopped_before(ens, p, t)).map(|p| f.value(ens.h_at(p, k))).collect();
    Ok(mean_se(&vals))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonEntry {
    pub function: String,
    pub t: f64,
    pub eps: f64,
    pub finite: MeanEstimate,
    pub limit: MeanEstimate,
    pub difference: f64,
    pub pooled_se: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderTrend {
    pub function: String,
    pub t: f64,
    pub eps: Vec<f64>,
    pub differences: Vec<f64>,
    pub pooled_se: Vec<f64>,
    /// `|d_{k+1}| ≤ |d_k| + se_{k+1}` along the ladder.
    pub non_increasing: bool,
    /// `|d| ≤ 3·se` at the last (smallest) ε.
    pub final_within_3se: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub functions: Vec<String>,
    pub checkpoints: Vec<f64>,
    pub entries: Vec<ComparisonEntry>,
    pub trends: Vec<LadderTrend>,
}

fn z_score(d: f64, se: f64) -> f64 {
    if d == 0.0 {
        0.0
    } else if se > 0.0 {
        d / se
    } else {
        d.signum() * f64::MAX
    }
}

/// Compares `E f(H^ε(t))` with `E f(H(t))` for every ensemble in the ladder
/// (ordered from largest to smallest ε).
pub fn moment_compare(
    eps_ensembles: &[&PathEnsemble],
    limit: &PathEnsemble,
    fs: &[TestFunction],
    t_checkpoints: &[f64],
) -> Result<ComparisonReport> {
    let h0 = limit.h_at(0, 0);
    for (i, e) in eps_ensembles.iter().enumerate() {
        if e.n != limit.n || e.h_at(0, 0) != h0 {
            return Err(Error::CheckpointMismatch(format!("ensemble {i} does not share the initial state")));
        }
    }
    let mut entries = Vec::new();
    let mut trends = Vec::new();
    for f in fs {
        for &t in t_checkpoints {
            let lim = expectation(limit, f, t)?;
            let mut trend = LadderTrend {
                function: f.label(),
                t,
                eps: vec![],
                differences: vec![],
                pooled_se: vec![],
                non_increasing: true,
                final_within_3se: false,
            };
            for (i, e) in eps_ensembles.iter().enumerate() {
                let fin = expectation(e, f, t).map_err(|_| {
                    Error::CheckpointMismatch(format!("ensemble {i} has no record at t = {t}"))
                })?;
                let d = fin.mean - lim.mean;
                let se = (fin.std_err * fin.std_err + lim.std_err * lim.std_err).sqrt();
                let eps = e.eps.unwrap_or(0.0);
                entries.push(ComparisonEntry {
                    function: f.label(),
                    t,
                    eps,
                    finite: fin,
                    limit: lim,
                    difference: d,
                    pooled_se: se,
                    z: z_score(d, se),
                });
                if let Some(&prev) = trend.differences.last() {
                    if d.abs() > f64::abs(prev) + se {
                        trend.non_increasing = false;
                    }
                }
                trend.eps.push(eps);
                trend.differences.push(d);
                trend.pooled_se.push(se);
            }
            if let (Some(d), Some(se)) = (trend.differences.last(), trend.pooled_se.last()) {
                trend.final_within_3se = d.abs() <= 3.0 * se;
            }
            trends.push(trend);
        }
    }
    Ok(ComparisonReport {
        functions: fs.iter().map(|f| f.label()).collect(),
        checkpoints: t_checkpoints.to_vec(),
        entries,
        trends,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleResidual {
    pub estimate: MeanEstimate,
    /// Paths dropped because they left the tabulated grid.
    pub excluded: usize,
}

/// `E[f(H(t)) − f(h₀) − ∫₀ᵗ Lf(H(s)) ds]` with the integral by the
/// trapezoid rule on the record grid.
pub fn martingale_residual(
    ens: &PathEnsemble,
    generator: &GeneratorSpec,
    f: &TestFunction,
    t: f64,
) -> Result<MartingaleResidual> {
    if ens.n != generator.dim() {
        return Err(Error::DimensionMismatch { expected: generator.dim(), got: ens.n });
    }
    let k_end = checkpoint(ens, t, "ensemble")?;
    let per_path: Vec<Option<f64>> = (0..ens.n_paths)
        .into_par_iter()
        .map(|p| {
            if let Some(s) = ens.stops[p] {
                if s.time <= t && s.reason == StopReason::OutOfGrid {
                    return None;
                }
            }
            let mut integral = 0.0;
            let mut prev = f.generator_value(generator, ens.h_at(p, 0))?;
            for k in 1..=k_end {
                let cur = f.generator_value(generator, ens.h_at(p, k))?;
                integral += 0.5 * (ens.times[k] - ens.times[k - 1]) * (prev + cur);
                prev = cur;
            }
            Some(f.value(ens.h_at(p, k_end)) - f.value(ens.h_at(p, 0)) - integral)
        })
        .collect();
    let kept: Vec<f64> = per_path.iter().flatten().copied().collect();
    let excluded = per_path.len() - kept.len();
    if kept.is_empty() {
        return Err(Error::DomainError("every path left the tabulated grid".into()));
    }
    Ok(MartingaleResidual { estimate: mean_se(&kept), excluded })
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "KS statistic needs non-empty samples");
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (na, nb) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0_f64;
    while i < x.len() && j < y.len() {
        let v = if x[i] <= y[j] { x[i] } else { y[j] };
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// KS distance between the marginals of component `i` of two samples of
/// slow states.
pub fn empirical_cdf_distance<A: AsRef<[f64]>, B: AsRef<[f64]>>(a: &[A], b: &[B], i: usize) -> f64 {
    let xa: Vec<f64> = a.iter().map(|h| h.as_ref()[i]).collect();
    let xb: Vec<f64> = b.iter().map(|h| h.as_ref()[i]).collect();
    ks_statistic(&xa, &xb)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GluingConfig {
    pub eps: f64,
    /// Integration step; `None` uses `0.05·ε²`.
    #[serde(default)]
    pub dt: Option<f64>,
    pub deltas: Vec<f64>,
    /// Half-width of the window around the binding for the page-independence runs.
    pub window: f64,
    pub runs_per_condition: usize,
    pub t_max: f64,
    #[serde(default = "default_min_hits")]
    pub min_hits: usize,
    pub master_seed: u64,
}

fn default_min_hits() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GluingCondition {
    pub delta: f64,
    pub start_page: usize,
    /// Runs that reached the binding and then moved `delta` away.
    pub hits: usize,
    /// Pages 1, 2, 3 after the binding visit.
    pub counts: [usize; 3],
    pub frequencies: [f64; 3],
    /// Pages on exit from the window, for the page-independence statistic.
    pub window_counts: [usize; 3],
    pub window_frequencies: [f64; 3],
    pub window_exits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GluingReport {
    pub conditions: Vec<GluingCondition>,
    /// Per delta: max pairwise total-variation distance across start pages of
    /// the window-exit distributions.
    pub page_independence: Vec<(f64, f64)>,
    /// Same statistic for the post-binding distributions.
    pub post_binding_spread: Vec<(f64, f64)>,
    pub pooled_counts: [usize; 3],
    pub pooled_hits: usize,
    /// `p̂₁ − p̂₂` and its standard error.
    pub well_difference: f64,
    pub well_difference_se: f64,
    /// Splitting ratios normalized to sum 1.
    pub gamma_hat: [f64; 3],
    /// `γ̂₁ + γ̂₂ − γ̂₃`.
    pub constraint_residual: f64,
    pub caveat: String,
}

fn frequencies(c: &[usize; 3]) -> [f64; 3] {
    let n: usize = c.iter().sum();
    if n == 0 {
        return [0.0; 3];
    }
    let n = n as f64;
    [c[0] as f64 / n, c[1] as f64 / n, c[2] as f64 / n]
}

fn max_tv(dists: &[[f64; 3]]) -> f64 {
    let mut m = 0.0_f64;
    for a in 0..dists.len() {
        for b in a + 1..dists.len() {
            let tv: f64 = (0..3).map(|k| (dists[a][k] - dists[b][k]).abs()).sum::<f64>() * 0.5;
            m = m.max(tv);
        }
    }
    m
}

/// Stream id for run `run` of a (delta, page, protocol) condition.
fn stream(d: usize, page: usize, protocol: usize, run: usize) -> u64 {
    ((d as u64) << 40) | ((page as u64) << 36) | ((protocol as u64) << 32) | run as u64
}

/// Splitting statistics near the binding for runs started at
/// `|h₂ − h_c| = δ` on each page.
pub fn gluing_splitting(system: &OpenBookSystem, cfg: &GluingConfig) -> Result<GluingReport> {
    if !(cfg.eps > 0.0) || cfg.deltas.is_empty() || cfg.runs_per_condition == 0 {
        return Err(Error::InvalidConfig("gluing needs eps > 0, some deltas and runs".into()));
    }
    let dt = cfg.dt.unwrap_or(0.05 * cfg.eps * cfg.eps);
    let mut conditions = Vec::new();
    let mut page_independence = Vec::new();
    let mut post_binding_spread = Vec::new();
    for (di, &delta) in cfg.deltas.iter().enumerate() {
        if delta >= cfg.window {
            return Err(Error::InvalidConfig(format!("delta {delta} must be below the window {}", cfg.window)));
        }
        let mut post = Vec::new();
        let mut win = Vec::new();
        for page in 1..=3 {
            // page 3 alternates between mirror-image starts so that neither
            // well is favored by the start location
            let starts = [
                binding_start_point(&system.book, page, delta, false)?,
                binding_start_point(&system.book, page, delta, true)?,
            ];
            let run = |protocol: usize, event: PageEvent| -> Vec<Option<usize>> {
                (0..cfg.runs_per_condition)
                    .into_par_iter()
                    .map(|r| {
                        let mut rng = path_rng(cfg.master_seed, stream(di, page, protocol, r));
                        let w0: f64 = rand::Rng::random(&mut rng);
                        let x0 = if page == 3 { starts[r % 2] } else { starts[0] };
                        system.run_until(x0, w0, cfg.eps, dt, cfg.t_max, event, &mut rng).map(|o| o.page)
                    })
                    .collect()
            };
            let mut counts = [0usize; 3];
            for k in run(0, PageEvent::AfterBinding { delta }).into_iter().flatten() {
                counts[k - 1] += 1;
            }
            let hits: usize = counts.iter().sum();
            if hits < cfg.min_hits {
                return Err(Error::InsufficientHits {
                    got: hits,
                    needed: cfg.min_hits,
                    context: format!("delta = {delta}, start page {page}"),
                });
            }
            let mut window_counts = [0usize; 3];
            for k in run(1, PageEvent::WindowExit { window: cfg.window }).into_iter().flatten() {
                window_counts[k - 1] += 1;
            }
            let window_exits = window_counts.iter().sum();
            let c = GluingCondition {
                delta,
                start_page: page,
                hits,
                counts,
                frequencies: frequencies(&counts),
                window_counts,
                window_frequencies: frequencies(&window_counts),
                window_exits,
            };
            post.push(c.frequencies);
            win.push(c.window_frequencies);
            conditions.push(c);
        }
        page_independence.push((delta, max_tv(&win)));
        post_binding_spread.push((delta, max_tv(&post)));
    }
    let mut pooled_counts = [0usize; 3];
    for c in &conditions {
        for k in 0..3 {
            pooled_counts[k] += c.counts[k];
        }
    }
    let pooled_hits: usize = pooled_counts.iter().sum();
    let p = frequencies(&pooled_counts);
    let well_difference = p[0] - p[1];
    let well_difference_se = ((p[0] + p[1] - well_difference * well_difference) / pooled_hits as f64).sqrt();
    Ok(GluingReport {
        conditions,
        page_independence,
        post_binding_spread,
        pooled_counts,
        pooled_hits,
        well_difference,
        well_difference_se,
        gamma_hat: p,
        constraint_residual: p[0] + p[1] - p[2],
        caveat: "gamma_hat are post-binding splitting frequencies; identifying them with the vertex gluing \
                 weights assumes the standard correspondence between gluing conditions and first-passage \
                 splitting, which is not derived here"
            .into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::averaging::{AveragedCoefficients, HGrid};
    use crate::simulate::{simulate_limit_diffusion, InitialState, SimulationConfig};

    fn generator() -> GeneratorSpec {
        let grid = HGrid::new(vec![-20.0, -20.0], vec![20.0, 20.0], vec![5, 5]).unwrap();
        GeneratorSpec::new(
            AveragedCoefficients::from_fn(grid, "test", |h, a, b| {
                a.copy_from_slice(&[1.0, 0.2, 0.2, 0.5]);
                b[0] = -0.1 * h[0];
                b[1] = 0.05;
            })
            .unwrap(),
        )
    }

    fn ensemble(n: usize, seed: u64) -> PathEnsemble {
        let mut cfg = SimulationConfig::new(1.0, 0.01, 1.0, n, seed);
        cfg.record_dt = Some(0.05);
        simulate_limit_diffusion(&generator(), &InitialState::at(vec![0.5, -0.5]), &cfg).unwrap()
    }

    #[test]
    fn derivatives_match_differences() {
        let fs = [
            TestFunction::Square { i: 1 },
            TestFunction::Product { i: 0, j: 1 },
            TestFunction::Gaussian,
            TestFunction::LogLog { i: 0 },
        ];
        let h = [0.03, 0.7];
        let e = 1e-5;
        for f in &fs {
            let (g, hs) = f.derivatives(&h);
            for a in 0..2 {
                let mut p = h;
                let mut m = h;
                p[a] += e;
                m[a] -= e;
                let fd = (f.value(&p) - f.value(&m)) / (2.0 * e);
                assert!((fd - g[a]).abs() < 1e-6 * (1.0 + g[a].abs()), "{f:?}");
                let (gp, _) = f.derivatives(&p);
                let (gm, _) = f.derivatives(&m);
                for b in 0..2 {
                    let fd2 = (gp[b] - gm[b]) / (2.0 * e);
                    assert!((fd2 - hs[b * 2 + a]).abs() < 1e-5 * (1.0 + hs[b * 2 + a].abs()), "{f:?}");
                }
            }
        }
    }

    #[test]
    fn self_comparison_is_zero() {
        let e = ensemble(200, 1);
        let r = moment_compare(&[&e], &e, &[TestFunction::Component { i: 0 }], &[0.5, 1.0]).unwrap();
        assert!(r.entries.iter().all(|x| x.difference == 0.0 && x.z == 0.0));
        assert!(matches!(
            moment_compare(&[&e], &e, &[TestFunction::Gaussian], &[0.33]),
            Err(Error::CheckpointMismatch(_))
        ));
    }

    #[test]
    fn constant_function_has_zero_residual() {
        let e = ensemble(50, 2);
        let r = martingale_residual(&e, &generator(), &TestFunction::Constant { value: 3.0 }, 1.0).unwrap();
        assert_eq!(r.estimate.mean, 0.0);
    }

    #[test]
    fn self_residual_is_small() {
        let e = ensemble(4000, 3);
        let r = martingale_residual(&e, &generator(), &TestFunction::Square { i: 0 }, 1.0).unwrap();
        assert!(r.estimate.mean.abs() < 3.0 * r.estimate.std_err + 5e-3, "{r:?}");
    }

    #[test]
    fn ks_examples() {
        assert_eq!(ks_statistic(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 0.0);
        assert_eq!(ks_statistic(&[0.0], &[1.0]), 1.0);
        assert!((ks_statistic(&[0.0, 1.0], &[0.5]) - 0.5).abs() < 1e-15);
        let a = vec![[0.0, 1.0], [2.0, 3.0]];
        assert_eq!(empirical_cdf_distance(&a, &a, 1), 0.0);
    }

    #[test]
    fn tv_and_frequencies() {
        let f = frequencies(&[1, 1, 2]);
        assert_eq!(f, [0.25, 0.25, 0.5]);
        assert!((max_tv(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.5, 0.5, 0.0]]) - 1.0).abs() < 1e-15);
    }
}
