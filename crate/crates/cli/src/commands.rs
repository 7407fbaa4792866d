//! The five subcommands. Each resolves its configuration completely before
//! doing any work, so the manifest records every value that shaped the run.

use std::f64::consts::SQRT_2;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use stochavg_core::analysis::ComparisonReport;
use stochavg_core::averaging::{
    local_coefficient_grid, tabulate_averaged, AveragedCoefficients, GeneratorSpec, HGrid, LocalCoefficients,
};
use stochavg_core::io::{
    read_ensemble_csv, read_json, write_coefficients_csv, write_ensemble_csv, write_json, write_stops_csv,
    write_table, EnsembleMeta, Manifest,
};
use stochavg_core::simulate::{
    simulate_landau_lifshitz, simulate_openbook, EnsembleKind, SimulationConfig, TwoWellState,
};
use stochavg_core::stats::{mean_se, variance};
use stochavg_core::systems::{build_openbook, DoubleWell, LandauLifshitzSpec, SeedGrid};
use stochavg_core::*;
use std::result::Result;

use crate::config::{default_grid, AnalysisConfig, AveragingConfig, RunConfig, SimulationSection, MODEL_NAMES};
use crate::failure::{Failure, Stage};

/// Command-line values that override the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub model: Option<String>,
    pub eps: Option<f64>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub paths: Option<usize>,
    pub limit: bool,
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// Output directory plus the manifest being assembled for it.
struct Artifacts {
    dir: PathBuf,
    manifest: Manifest,
}

impl Artifacts {
    fn new(dir: &Path, command: &str, cfg: &RunConfig) -> Result<Self, Failure> {
        std::fs::create_dir_all(dir)
            .map_err(|e| Failure::config(format!("output directory {}: {e}", dir.display())))?;
        let mut recorded = cfg.clone();
        // thread count does not affect results
        recorded.threads = None;
        let config = serde_json::to_value(&recorded).map_err(|e| Failure::config(format!("manifest: {e}")))?;
        Ok(Self { dir: dir.to_path_buf(), manifest: Manifest::new(command, Some(cfg.seed()), config) })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn table(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), Failure> {
        let n = write_table(&self.path(name), header, rows).stage("write")?;
        self.manifest.add(name, n);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        write_json(&self.path(name), value).stage("write")?;
        self.manifest.add(name, 1);
        Ok(())
    }

    fn text(&mut self, name: &str, lines: &[String]) -> Result<(), Failure> {
        let mut s = lines.join("\n");
        s.push('\n');
        std::fs::write(self.path(name), s).map_err(|e| Failure::config(format!("write {name}: {e}")))?;
        self.manifest.add(name, lines.len());
        Ok(())
    }

    fn finish(self) -> Result<(), Failure> {
        write_json(&self.path("manifest.json"), &self.manifest).stage("write")
    }
}

fn require_model(cfg: &RunConfig, allowed: &[&str], command: &str) -> Result<(), Failure> {
    let name = cfg.model_name();
    if allowed.contains(&name) {
        Ok(())
    } else {
        Err(Failure::config(format!("{command}: model.name `{name}` is not supported here (use {})", allowed.join(", "))))
    }
}

fn resolve_averaging(cfg: &mut RunConfig) -> AveragingConfig {
    let av = cfg.averaging.get_or_insert_with(AveragingConfig::default);
    av.resolve();
    av.clone()
}

/// Tabulated coefficients from the pipeline, or the configured constants.
fn coefficients(cfg: &RunConfig, av: &AveragingConfig) -> Result<AveragedCoefficients, Failure> {
    let grid = av.grid.clone().unwrap_or_else(default_grid);
    if let Some(c) = &av.constant {
        let n = grid.dim();
        if c.a.len() != n * n || c.b.len() != n {
            return Err(Failure::config(format!(
                "averaging.constant: expected {} entries in a and {n} in b for a {n}-dimensional grid",
                n * n
            )));
        }
        return AveragedCoefficients::from_fn(grid, "constant", |_, a, b| {
            a.copy_from_slice(&c.a);
            b.copy_from_slice(&c.b);
        })
        .stage("averaging");
    }
    require_model(cfg, &[MODEL_NAMES[0]], "averaging")?;
    let spec = cfg.coupled_spec();
    let h_max = grid.hi.iter().copied().fold(0.0, f64::max);
    spec.check(h_max).stage("model")?;
    let model = coupled_oscillator_model(spec).stage("model")?;
    tabulate_averaged(&model, &grid, &av.options()).stage("averaging")
}

fn grid_nodes(grid: &HGrid) -> Vec<Vec<f64>> {
    (0..grid.len())
        .map(|k| {
            let mut h = vec![0.0; grid.dim()];
            grid.node(k, &mut h);
            h
        })
        .collect()
}

pub fn average(mut cfg: RunConfig, o: &Overrides, out: &Path) -> Result<(), Failure> {
    apply_seed(&mut cfg, o);
    let av = resolve_averaging(&mut cfg);
    let coeffs = coefficients(&cfg, &av)?;
    let grid = coeffs.grid.clone();
    let nodes = grid_nodes(&grid);
    let locals: Vec<LocalCoefficients> = match &av.constant {
        Some(c) => nodes
            .iter()
            .map(|h| LocalCoefficients {
                n: grid.dim(),
                a_tilde: c.a.clone(),
                b_tilde: c.b.clone(),
                h: h.clone(),
                phi: vec![],
            })
            .collect(),
        None => {
            let model = coupled_oscillator_model(cfg.coupled_spec()).stage("model")?;
            let opts = av.options();
            local_coefficient_grid(&model, &nodes, opts.m_phi, &opts).stage("ellipticity")?
        }
    };
    let floor = av.ellipticity_floor.unwrap_or(0.04);
    let report = check_uniform_ellipticity(&locals, floor);
    let n = coeffs.n;
    let offdiag = (0..grid.len())
        .flat_map(|k| {
            let a = coeffs.node_a(k).to_vec();
            (0..n).flat_map(move |i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(move |(i, j)| a[i * n + j])
        })
        .fold(0.0_f64, |m, v| m.max(v.abs()));

    let mut art = Artifacts::new(out, "average", &cfg)?;
    let rows = write_coefficients_csv(&art.path("coefficients.csv"), &coeffs).stage("write")?;
    art.manifest.add("coefficients.csv", rows);
    art.json("ellipticity.json", &report)?;
    art.finish()?;
    println!("average: {} grid nodes, max |off-diagonal A| = {offdiag:e}", grid.len());
    println!(
        "ellipticity: {} (min eigenvalue {:e} at h = {:?}, floor {floor})",
        report.status, report.min_eigenvalue, report.h
    );
    Ok(())
}

/// Fixes the seed and fills the model parameters so the manifest is self-contained.
fn apply_seed(cfg: &mut RunConfig, o: &Overrides) {
    if let Some(s) = o.seed {
        cfg.seed = Some(s);
    }
    cfg.seed = Some(cfg.seed());
    let coupled = cfg.coupled_spec();
    let m = cfg.model.get_or_insert_with(Default::default);
    match m.name.as_str() {
        "coupled_oscillators" => {
            m.coupled.get_or_insert(coupled);
        }
        "landau_lifshitz" => {
            m.landau.get_or_insert_with(LandauLifshitzSpec::default);
        }
        _ => {
            m.double_well.get_or_insert_with(DoubleWell::default);
            m.sigma.get_or_insert([1.0, 1.0]);
        }
    }
}

/// Fills every simulation default for `model`.
fn resolve_simulation(cfg: &mut RunConfig, o: &Overrides) -> SimulationSection {
    let model = cfg.model_name().to_string();
    let s = cfg.simulation.get_or_insert_with(SimulationSection::default);
    if let Some(v) = o.eps {
        s.eps = Some(v);
    }
    if let Some(v) = o.dt {
        s.dt = Some(v);
    }
    if let Some(v) = o.t_end {
        s.t_end = Some(v);
    }
    if let Some(v) = o.paths {
        s.n_paths = Some(v);
    }
    if o.limit {
        s.limit = Some(true);
    }
    let limit = *s.limit.get_or_insert(false);
    let eps = *s.eps.get_or_insert(0.1);
    s.dt.get_or_insert(if limit { 1e-3 } else { 0.01 * eps * eps });
    let t_end = *s.t_end.get_or_insert(1.0);
    s.record_dt.get_or_insert(t_end / 100.0);
    s.n_paths.get_or_insert(1000);
    s.c_sub.get_or_insert(stochavg_core::simulate::DEFAULT_C_SUB);
    match model.as_str() {
        "landau_lifshitz" => {
            s.x0.get_or_insert([0.6, 0.0, 0.8]);
        }
        "double_well_openbook" => {
            let x = (1.0 + 0.8_f64.sqrt()).sqrt();
            s.two_well.get_or_insert(TwoWellState { x1: [1.0, 0.0], x2: [x, 0.0], w: [0.0, 0.0] });
        }
        _ => {
            s.h0.get_or_insert_with(|| vec![1.0, 1.0]);
            s.record_fast.get_or_insert(!limit);
        }
    }
    s.clone()
}

fn simulation_config(s: &SimulationSection, seed: u64) -> SimulationConfig {
    let mut c = SimulationConfig::new(
        s.eps.unwrap_or(0.1),
        s.dt.unwrap_or(1e-3),
        s.t_end.unwrap_or(1.0),
        s.n_paths.unwrap_or(1000),
        seed,
    );
    if let Some(v) = s.c_sub {
        c.c_sub = v;
    }
    c.h_floor = s.h_floor;
    c.stop_region = s.stop_region.clone();
    c.record_dt = s.record_dt;
    c.record_fast = s.record_fast.unwrap_or(true);
    c
}

fn initial_state(s: &SimulationSection) -> InitialState {
    InitialState {
        h: s.h0.clone().unwrap_or_else(|| vec![1.0, 1.0]),
        phi: s.phi0.clone().unwrap_or_default(),
        w: s.w0.clone().unwrap_or_default(),
    }
}

fn moment_rows(ens: &PathEnsemble) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["t".to_string(), "running".to_string()];
    for i in 1..=ens.n {
        header.push(format!("mean_h{i}"));
        header.push(format!("var_h{i}"));
    }
    let rows = ens
        .times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let running = ens.stops.iter().filter(|s| s.is_none_or(|s| s.time > t)).count();
            let mut r = vec![num(t), running.to_string()];
            for i in 0..ens.n {
                let xs = ens.marginal(k, i);
                r.push(num(mean_se(&xs).mean));
                r.push(num(variance(&xs)));
            }
            r
        })
        .collect();
    (header, rows)
}

fn write_path_ensemble(art: &mut Artifacts, ens: &PathEnsemble) -> Result<(), Failure> {
    let rows = write_ensemble_csv(&art.path("paths.csv"), ens).stage("write")?;
    art.manifest.add("paths.csv", rows);
    let rows = write_stops_csv(&art.path("stops.csv"), ens).stage("write")?;
    art.manifest.add("stops.csv", rows);
    let (header, rows) = moment_rows(ens);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    art.table("moments.csv", &header, &rows)
}

pub fn simulate(mut cfg: RunConfig, o: &Overrides, out: &Path) -> Result<(), Failure> {
    if let Some(m) = &o.model {
        cfg.model.get_or_insert_with(Default::default).name = m.clone();
        cfg.check()?;
    }
    apply_seed(&mut cfg, o);
    let seed = cfg.seed();
    let s = resolve_simulation(&mut cfg, o);
    let sim = simulation_config(&s, seed);
    let limit = s.limit.unwrap_or(false);
    match cfg.model_name() {
        "coupled_oscillators" if limit => {
            let av = resolve_averaging(&mut cfg);
            let coeffs = coefficients(&cfg, &av)?;
            let generator = GeneratorSpec::new(coeffs);
            let ens = simulate_limit_diffusion(&generator, &initial_state(&s), &sim).stage("simulate (limit)")?;
            let mut art = Artifacts::new(out, "simulate", &cfg)?;
            let rows = write_coefficients_csv(&art.path("coefficients.csv"), &generator.coeffs).stage("write")?;
            art.manifest.add("coefficients.csv", rows);
            write_path_ensemble(&mut art, &ens)?;
            art.finish()?;
            println!("simulate: {} limit paths, {} stopped", ens.n_paths, ens.stopped_count());
        }
        "coupled_oscillators" => {
            let model = coupled_oscillator_model(cfg.coupled_spec()).stage("model")?;
            let ens = simulate_fast_slow(&model, &initial_state(&s), &sim).stage("simulate")?;
            let mut art = Artifacts::new(out, "simulate", &cfg)?;
            write_path_ensemble(&mut art, &ens)?;
            art.finish()?;
            println!("simulate: {} paths at eps = {}, {} stopped", ens.n_paths, sim.eps, ens.stopped_count());
        }
        _ if limit => {
            return Err(Failure::config(format!(
                "simulate: --limit needs averaged coefficients, available for coupled_oscillators only (model.name = `{}`)",
                cfg.model_name()
            )))
        }
        "landau_lifshitz" => {
            let spec: LandauLifshitzSpec = cfg.model.as_ref().and_then(|m| m.landau).unwrap_or_default();
            let ens = simulate_landau_lifshitz(&spec, s.x0.unwrap_or([0.6, 0.0, 0.8]), &sim).stage("simulate")?;
            let mut art = Artifacts::new(out, "simulate", &cfg)?;
            let r = ens.times.len();
            let rows: Vec<Vec<String>> = (0..ens.n_paths)
                .flat_map(|p| {
                    let ens = &ens;
                    (0..r).map(move |k| vec![p.to_string(), num(ens.times[k]), num(ens.at(p, k))])
                })
                .collect();
            art.table("energies.csv", &["path", "t", "g"], &rows)?;
            let rows: Vec<Vec<String>> = (0..r)
                .map(|k| {
                    let xs = ens.marginal(k);
                    vec![num(ens.times[k]), num(mean_se(&xs).mean), num(variance(&xs))]
                })
                .collect();
            art.table("moments.csv", &["t", "mean_g", "var_g"], &rows)?;
            art.json("landau.json", &serde_json::json!({ "max_sphere_drift": ens.max_sphere_drift }))?;
            art.finish()?;
            println!("simulate: {} Landau-Lifshitz paths, max sphere drift {:e}", ens.n_paths, ens.max_sphere_drift);
        }
        _ => {
            let system = openbook_system(&cfg)?;
            let x0 = s.two_well.unwrap_or(TwoWellState { x1: [1.0, 0.0], x2: [1.3, 0.0], w: [0.0, 0.0] });
            let ens = simulate_openbook(&system, &x0, &sim).stage("simulate")?;
            let mut art = Artifacts::new(out, "simulate", &cfg)?;
            let rows: Vec<Vec<String>> = ens
                .paths
                .iter()
                .enumerate()
                .flat_map(|(p, path)| {
                    let times = &ens.times;
                    (0..times.len()).map(move |k| {
                        vec![p.to_string(), num(times[k]), num(path.h1[k]), num(path.h2[k]), path.page[k].to_string()]
                    })
                })
                .collect();
            art.table("paths.csv", &["path", "t", "h1", "h2", "page"], &rows)?;
            let rows: Vec<Vec<String>> = ens
                .paths
                .iter()
                .enumerate()
                .flat_map(|(p, path)| path.binding_times.iter().map(move |&t| vec![p.to_string(), num(t)]))
                .collect();
            art.table("binding.csv", &["path", "time"], &rows)?;
            art.finish()?;
            println!("simulate: {} open-book paths, {} binding crossings", ens.paths.len(), rows.len());
        }
    }
    Ok(())
}

fn openbook_system(cfg: &RunConfig) -> Result<OpenBookSystem, Failure> {
    let m = cfg.model.clone().unwrap_or_default();
    let well: DoubleWell = m.double_well.unwrap_or_default();
    let book = build_openbook(Arc::new(well), &SeedGrid::default()).stage("openbook")?;
    Ok(OpenBookSystem::new(book, m.sigma.unwrap_or([1.0, 1.0])))
}

fn default_functions() -> Vec<TestFunction> {
    vec![TestFunction::Component { i: 0 }, TestFunction::Square { i: 0 }, TestFunction::Product { i: 0, j: 1 }]
}

/// Ensemble written by an earlier `simulate` run.
fn load_run(dir: &Path) -> Result<PathEnsemble, Failure> {
    let missing = |what: &str| Failure::config(format!("compare: missing artifact {}", dir.join(what).display()));
    for f in ["manifest.json", "paths.csv", "stops.csv"] {
        if !dir.join(f).is_file() {
            return Err(missing(f));
        }
    }
    let m: Manifest = read_json(&dir.join("manifest.json")).stage("compare")?;
    let run: RunConfig = serde_json::from_value(m.config)
        .map_err(|e| Failure::config(format!("compare: {}: {e}", dir.join("manifest.json").display())))?;
    let s = run.simulation.clone().unwrap_or_default();
    let limit = s.limit.unwrap_or(false);
    let meta = EnsembleMeta {
        kind: if limit { EnsembleKind::Limit } else { EnsembleKind::FastSlow },
        eps: if limit { None } else { s.eps },
        dt: s.dt.unwrap_or(1e-3),
        master_seed: run.seed(),
    };
    read_ensemble_csv(&dir.join("paths.csv"), &dir.join("stops.csv"), meta).stage("compare")
}

struct Residual {
    function: String,
    label: String,
    estimate: stochavg_core::stats::MeanEstimate,
    excluded: usize,
}

fn residuals(
    finite: &[PathEnsemble],
    limit: &PathEnsemble,
    generator: &GeneratorSpec,
    fs: &[TestFunction],
    t: f64,
) -> Result<Vec<Residual>, Failure> {
    let mut out = vec![];
    for f in fs {
        for (e, label) in finite
            .iter()
            .map(|e| (e, e.eps.map(num).unwrap_or_default()))
            .chain(std::iter::once((limit, "limit".to_string())))
        {
            let r = martingale_residual(e, generator, f, t).stage("compare (residual)")?;
            out.push(Residual { function: f.label(), label, estimate: r.estimate, excluded: r.excluded });
        }
    }
    Ok(out)
}

fn summary(report: &ComparisonReport, res: &[Residual]) -> Vec<String> {
    let tag = |b: bool| if b { "PASS" } else { "FAIL" };
    let mut lines = vec![];
    for t in &report.trends {
        lines.push(format!(
            "{} weak-convergence {} t={}: non-increasing within 1 SE: {}, smallest-eps difference {:+e} within 3 SE ({:e}): {}",
            tag(t.non_increasing && t.final_within_3se),
            t.function,
            t.t,
            t.non_increasing,
            t.differences.last().copied().unwrap_or(f64::NAN),
            3.0 * t.pooled_se.last().copied().unwrap_or(f64::NAN),
            t.final_within_3se
        ));
    }
    let mut functions: Vec<&str> = res.iter().map(|r| r.function.as_str()).collect();
    functions.dedup();
    for f in functions {
        let rows: Vec<&Residual> = res.iter().filter(|r| r.function == f).collect();
        let (ladder, lim): (Vec<&Residual>, Vec<&Residual>) = rows.iter().partition(|r| r.label != "limit");
        let trend = ladder.windows(2).all(|w| w[1].estimate.mean.abs() <= w[0].estimate.mean.abs() + w[1].estimate.std_err);
        let self_ok = lim.iter().all(|r| r.estimate.mean.abs() <= 3.0 * r.estimate.std_err);
        lines.push(format!(
            "{} martingale-residual {f}: decreasing along the ladder: {trend}, limit self-residual within 3 SE: {self_ok}",
            tag(trend && self_ok)
        ));
    }
    lines
}

pub fn compare(mut cfg: RunConfig, o: &Overrides, out: &Path) -> Result<(), Failure> {
    apply_seed(&mut cfg, o);
    let seed = cfg.seed();
    let mut an: AnalysisConfig = cfg.analysis.clone().unwrap_or_default();
    let fs = an.functions.get_or_insert_with(default_functions).clone();
    let rfs = an.residual_functions.get_or_insert_with(|| vec![TestFunction::Square { i: 0 }]).clone();

    let (finite, limit, generator) = if let Some(runs) = an.finite_runs.clone() {
        let lim_dir = an
            .limit_run
            .clone()
            .ok_or_else(|| Failure::config("compare: analysis.limit_run is required with analysis.finite_runs"))?;
        let finite = runs.iter().map(|d| load_run(Path::new(d))).collect::<Result<Vec<_>, _>>()?;
        let limit = load_run(Path::new(&lim_dir))?;
        let generator = match cfg.averaging.is_some() {
            true => {
                let av = resolve_averaging(&mut cfg);
                Some(GeneratorSpec::new(coefficients(&cfg, &av)?))
            }
            false => None,
        };
        (finite, limit, generator)
    } else {
        let ladder = an.eps_ladder.clone().ok_or_else(|| {
            Failure::config("compare: set analysis.eps_ladder, or analysis.finite_runs and analysis.limit_run")
        })?;
        require_model(&cfg, &[MODEL_NAMES[0]], "compare")?;
        let factor = *an.dt_factor.get_or_insert(0.01);
        let limit_dt = *an.limit_dt.get_or_insert(1e-3);
        let av = resolve_averaging(&mut cfg);
        let mut s = resolve_simulation(&mut cfg, &Overrides { paths: o.paths, ..Default::default() });
        s.record_fast = Some(false);
        s.record_dt.get_or_insert(s.t_end.unwrap_or(1.0) / 100.0);
        // the ladder sets eps and dt per run
        s.eps = None;
        s.dt = None;
        cfg.simulation = Some(s.clone());
        let generator = GeneratorSpec::new(coefficients(&cfg, &av)?);
        let model = coupled_oscillator_model(cfg.coupled_spec()).stage("model")?;
        let init = initial_state(&s);
        let mut finite = vec![];
        // one master seed along the ladder: common random numbers keep the
        // eps trend from drowning in independent sampling noise
        for &eps in &ladder {
            let mut sim = simulation_config(&s, seed);
            sim.eps = eps;
            sim.dt = factor * eps * eps;
            finite.push(simulate_fast_slow(&model, &init, &sim).stage(&format!("simulate (eps = {eps})"))?);
        }
        let mut sim = simulation_config(&s, seed.wrapping_add(1));
        sim.dt = limit_dt;
        let limit = simulate_limit_diffusion(&generator, &init, &sim).stage("simulate (limit)")?;
        (finite, limit, Some(generator))
    };
    let checkpoints = an.checkpoints.get_or_insert_with(|| vec![*limit.times.last().unwrap_or(&0.0)]).clone();
    cfg.analysis = Some(an);

    let refs: Vec<&PathEnsemble> = finite.iter().collect();
    let report = moment_compare(&refs, &limit, &fs, &checkpoints).stage("compare")?;
    let t_res = *checkpoints.last().unwrap_or(&0.0);
    let res = match &generator {
        Some(g) => residuals(&finite, &limit, g, &rfs, t_res)?,
        None => vec![],
    };

    let mut art = Artifacts::new(out, "compare", &cfg)?;
    art.json("comparison.json", &report)?;
    let rows: Vec<Vec<String>> = report
        .entries
        .iter()
        .map(|e| {
            vec![
                e.function.clone(),
                num(e.t),
                num(e.eps),
                num(e.finite.mean),
                num(e.finite.std_err),
                num(e.limit.mean),
                num(e.limit.std_err),
                num(e.difference),
                num(e.pooled_se),
                num(e.z),
            ]
        })
        .collect();
    art.table(
        "comparison.csv",
        &["function", "t", "eps", "finite_mean", "finite_se", "limit_mean", "limit_se", "difference", "pooled_se", "z"],
        &rows,
    )?;
    if !res.is_empty() {
        let rows: Vec<Vec<String>> = res
            .iter()
            .map(|r| {
                vec![
                    r.function.clone(),
                    r.label.clone(),
                    num(t_res),
                    num(r.estimate.mean),
                    num(r.estimate.std_err),
                    r.excluded.to_string(),
                ]
            })
            .collect();
        art.table("residuals.csv", &["function", "eps", "t", "mean", "se", "excluded"], &rows)?;
    }
    let lines = summary(&report, &res);
    art.text("summary.txt", &lines)?;
    art.finish()?;
    for l in &lines {
        println!("{l}");
    }
    Ok(())
}

pub fn resonance(mut cfg: RunConfig, o: &Overrides, out: &Path) -> Result<(), Failure> {
    apply_seed(&mut cfg, o);
    let rc = cfg.resonance.get_or_insert_with(Default::default);
    let omega = rc.omega.get_or_insert_with(|| OmegaField::Constant { omega: vec![1.0, SQRT_2] }).clone();
    let n = match &omega {
        OmegaField::Affine { matrix, .. } => matrix.first().map(Vec::len).unwrap_or(0),
        OmegaField::Constant { .. } => rc.region.as_ref().map(|r| r.lo.len()).unwrap_or(2),
    };
    let region = rc.region.get_or_insert_with(|| BoxRegion { lo: vec![0.0; n], hi: vec![1.0; n] }).clone();
    let k_max = *rc.k_max.get_or_insert(10);
    let grid = *rc.grid.get_or_insert(16);
    let tol = *rc.tol.get_or_insert(stochavg_core::resonance::DEFAULT_SCAN_TOL);
    if region.lo.len() != n || region.hi.len() != n {
        return Err(Failure::config(format!("resonance.region must have {n} bounds per side")));
    }
    omega.check(n).stage("resonance")?;
    let p = omega.p();
    let field = |h: &[f64], w: &mut [f64]| omega.eval(h, w);
    let scan = resonance::resonance_scan_with(&field, p, &region, k_max, grid, tol).stage("resonance")?;

    let mut art = Artifacts::new(out, "resonance", &cfg)?;
    art.json("scan.json", &scan)?;
    let mut header: Vec<String> = (1..=p).map(|i| format!("k{i}")).collect();
    header.extend((1..=n).map(|i| format!("cell{i}")));
    let rows: Vec<Vec<String>> = scan
        .per_k
        .iter()
        .flat_map(|ks| {
            ks.cells.iter().map(move |c| {
                let mut r: Vec<String> = ks.k.k.iter().map(|v| v.to_string()).collect();
                r.extend(c.iter().map(|v| v.to_string()));
                r
            })
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    art.table("cells.csv", &header, &rows)?;
    art.finish()?;
    println!(
        "resonance: {} vectors checked, {} hit cells of {}, thinness {}",
        scan.vectors_checked,
        scan.hit_cells(),
        grid.pow(n as u32),
        scan.thinness
    );
    for w in &scan.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

pub fn openbook(mut cfg: RunConfig, o: &Overrides, out: &Path) -> Result<(), Failure> {
    if cfg.model.is_none() {
        cfg.model = Some(crate::config::ModelConfig { name: MODEL_NAMES[1].into(), ..Default::default() });
    }
    require_model(&cfg, &[MODEL_NAMES[1]], "openbook")?;
    apply_seed(&mut cfg, o);
    let ob = cfg.openbook.get_or_insert_with(Default::default);
    let eps = *ob.eps.get_or_insert(0.03);
    let gluing = GluingConfig {
        eps,
        dt: Some(*ob.dt.get_or_insert(0.05 * eps * eps)),
        deltas: ob.deltas.get_or_insert_with(|| vec![0.1, 0.05, 0.02]).clone(),
        window: *ob.window.get_or_insert(0.2),
        runs_per_condition: *ob.runs_per_condition.get_or_insert(600),
        t_max: *ob.t_max.get_or_insert(200.0),
        min_hits: *ob.min_hits.get_or_insert(500),
        master_seed: cfg.seed(),
    };
    let system = openbook_system(&cfg)?;
    let report = gluing_splitting(&system, &gluing).stage("openbook")?;

    let mut art = Artifacts::new(out, "openbook", &cfg)?;
    art.json("gluing.json", &report)?;
    let rows: Vec<Vec<String>> = report
        .conditions
        .iter()
        .map(|c| {
            let mut r = vec![num(c.delta), c.start_page.to_string(), c.hits.to_string()];
            r.extend(c.counts.iter().map(|v| v.to_string()));
            r.extend(c.frequencies.iter().map(|&v| num(v)));
            r.push(c.window_exits.to_string());
            r.extend(c.window_frequencies.iter().map(|&v| num(v)));
            r
        })
        .collect();
    art.table(
        "conditions.csv",
        &["delta", "start_page", "hits", "n1", "n2", "n3", "f1", "f2", "f3", "window_exits", "wf1", "wf2", "wf3"],
        &rows,
    )?;
    let rows: Vec<Vec<String>> = report
        .page_independence
        .iter()
        .zip(&report.post_binding_spread)
        .map(|(&(d, a), &(_, b))| vec![num(d), num(a), num(b)])
        .collect();
    art.table("page_independence.csv", &["delta", "window_tv", "post_binding_tv"], &rows)?;
    art.finish()?;
    println!(
        "openbook: pooled frequencies {:?}, p1 - p2 = {:+.4} ± {:.4}",
        report.gamma_hat, report.well_difference, report.well_difference_se
    );
    let stat: Vec<String> = report.page_independence.iter().map(|(d, v)| format!("{d}: {v:.4}")).collect();
    println!("page independence by delta: {}", stat.join(", "));
    Ok(())
}
