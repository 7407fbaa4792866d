//! Run configuration: one TOML file with explicit sections. Unknown keys are
//! rejected everywhere so that a typo cannot silently change a run.

use std::path::Path;

use serde::{Deserialize, Serialize};
use stochavg_core::averaging::{CoefficientOptions, HGrid};
use stochavg_core::io::Manifest;
use stochavg_core::simulate::{BoxRegion, TwoWellState};
use stochavg_core::systems::{CoupledOscillatorSpec, DoubleWell, LandauLifshitzSpec};
use stochavg_core::{OmegaField, TestFunction};

use crate::failure::Failure;

pub const MODEL_NAMES: [&str; 3] = ["coupled_oscillators", "double_well_openbook", "landau_lifshitz"];

pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub model: Option<ModelConfig>,
    pub averaging: Option<AveragingConfig>,
    pub simulation: Option<SimulationSection>,
    pub analysis: Option<AnalysisConfig>,
    pub resonance: Option<ResonanceConfig>,
    pub openbook: Option<OpenBookConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    /// Coupled-oscillator parameters; the doubly-noised spec if absent.
    pub coupled: Option<CoupledOscillatorSpec>,
    pub landau: Option<LandauLifshitzSpec>,
    pub double_well: Option<DoubleWell>,
    /// Forcing amplitudes of the two open-book oscillators.
    pub sigma: Option<[f64; 2]>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            name: MODEL_NAMES[0].into(),
            coupled: None,
            landau: None,
            double_well: None,
            sigma: None,
        }
    }
}

/// Closed-form coefficients that bypass the averaging pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantCoefficients {
    /// Row-major `n×n`.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AveragingConfig {
    pub m_w: Option<usize>,
    pub m_phi: Option<usize>,
    pub fd_step: Option<f64>,
    pub grid: Option<HGrid>,
    pub ellipticity_floor: Option<f64>,
    pub constant: Option<ConstantCoefficients>,
}

impl AveragingConfig {
    pub fn options(&self) -> CoefficientOptions {
        let d = CoefficientOptions::default();
        CoefficientOptions {
            m_w: self.m_w.unwrap_or(d.m_w),
            m_phi: self.m_phi.unwrap_or(d.m_phi),
            fd_step: self.fd_step.unwrap_or(d.fd_step),
        }
    }

    pub fn resolve(&mut self) {
        let o = self.options();
        self.m_w = Some(o.m_w);
        self.m_phi = Some(o.m_phi);
        self.fd_step = Some(o.fd_step);
        self.grid.get_or_insert_with(default_grid);
        self.ellipticity_floor.get_or_insert(0.04);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub eps: Option<f64>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub n_paths: Option<usize>,
    pub h0: Option<Vec<f64>>,
    pub phi0: Option<Vec<f64>>,
    pub w0: Option<Vec<f64>>,
    /// Landau–Lifshitz start point.
    pub x0: Option<[f64; 3]>,
    /// Open-book start state.
    pub two_well: Option<TwoWellState>,
    pub record_dt: Option<f64>,
    pub record_fast: Option<bool>,
    pub h_floor: Option<f64>,
    pub stop_region: Option<BoxRegion>,
    pub c_sub: Option<f64>,
    /// Simulate the limit diffusion instead of the fast-slow system.
    pub limit: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Strictly decreasing; runs the whole pipeline when no run directories are given.
    pub eps_ladder: Option<Vec<f64>>,
    /// Micro step as a multiple of `ε²` for ladder runs.
    pub dt_factor: Option<f64>,
    pub limit_dt: Option<f64>,
    pub functions: Option<Vec<TestFunction>>,
    pub checkpoints: Option<Vec<f64>>,
    pub residual_functions: Option<Vec<TestFunction>>,
    /// Output directories of earlier `simulate` runs, largest ε first.
    pub finite_runs: Option<Vec<String>>,
    pub limit_run: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonanceConfig {
    pub omega: Option<OmegaField>,
    pub region: Option<BoxRegion>,
    pub k_max: Option<i64>,
    pub grid: Option<usize>,
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpenBookConfig {
    pub eps: Option<f64>,
    pub dt: Option<f64>,
    pub deltas: Option<Vec<f64>>,
    pub window: Option<f64>,
    pub runs_per_condition: Option<usize>,
    pub t_max: Option<f64>,
    pub min_hits: Option<usize>,
}

/// Covers the actions reached from `h0 = (1, 1)` over unit time.
pub fn default_grid() -> HGrid {
    HGrid { lo: vec![1e-3, 1e-3], hi: vec![8.0, 8.0], points: vec![9, 9] }
}

const PRESETS: [(&str, &str); 2] = [
    ("oscillator-weak-convergence", include_str!("../presets/oscillator-weak-convergence.toml")),
    ("openbook-splitting", include_str!("../presets/openbook-splitting.toml")),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn parse(text: &str, origin: &str) -> Result<RunConfig, Failure> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| Failure::config(format!("{origin}: {e}")))?;
    cfg.check()?;
    Ok(cfg)
}

pub fn preset(name: &str) -> Result<RunConfig, Failure> {
    let (_, text) = PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| {
        Failure::config(format!("unknown preset `{name}` (available: {})", preset_names().join(", ")))
    })?;
    parse(text, &format!("preset {name}"))
}

/// Reads a TOML config, or the resolved config stored in a JSON manifest.
pub fn load(path: &Path) -> Result<RunConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("cannot read config {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let m: Manifest = serde_json::from_str(&text)
            .map_err(|e| Failure::config(format!("{}: not a manifest: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_value(m.config)
            .map_err(|e| Failure::config(format!("{}: manifest config: {e}", path.display())))?;
        cfg.check()?;
        return Ok(cfg);
    }
    parse(&text, &path.display().to_string())
}

impl RunConfig {
    pub fn check(&self) -> Result<(), Failure> {
        if let Some(m) = &self.model {
            if !MODEL_NAMES.contains(&m.name.as_str()) {
                return Err(Failure::config(format!(
                    "model.name: unknown model `{}` (expected one of {})",
                    m.name,
                    MODEL_NAMES.join(", ")
                )));
            }
        }
        if let Some(l) = self.analysis.as_ref().and_then(|a| a.eps_ladder.as_ref()) {
            if l.is_empty() || !l.windows(2).all(|w| w[1] < w[0]) || l.iter().any(|&e| !(e > 0.0)) {
                return Err(Failure::config(format!(
                    "analysis.eps_ladder must be positive and strictly decreasing, got {l:?}"
                )));
            }
        }
        if self.threads == Some(0) {
            return Err(Failure::config("threads must be at least 1"));
        }
        Ok(())
    }

    pub fn model_name(&self) -> &str {
        self.model.as_ref().map(|m| m.name.as_str()).unwrap_or(MODEL_NAMES[0])
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn coupled_spec(&self) -> CoupledOscillatorSpec {
        self.model.as_ref().and_then(|m| m.coupled.clone()).unwrap_or_else(CoupledOscillatorSpec::doubly_noised)
    }
}
