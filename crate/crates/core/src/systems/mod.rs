//! Slow-fast models in action-angle form and the built-in systems.

pub mod action_angle;
pub mod coupled;
pub mod landau;
pub mod openbook;

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::rng::path_rng;
use crate::torus::TorusGrid;

pub use action_angle::{action_angle_forward, action_angle_inverse, wrap01, DEFAULT_H_FLOOR};
pub use coupled::{
    cartesian_point, coupled_oscillator_model, CoupledOscillatorModel, CoupledOscillatorSpec,
    FrequencyProfile, Perturbation,
};
pub use landau::LandauLifshitzSpec;
pub use openbook::{
    build_openbook, project_to_openbook, CriticalKind, CriticalPoint, DoubleWell, Harmonic,
    OpenBook, PlanarHamiltonian, SeedGrid,
};

/// Slow (`n`), angle (`p`) and noise (`m`) dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub p: usize,
    pub m: usize,
}

/// A field `b(h, φ, w) = (b_h, b_φ)` on `ℝⁿ × 𝕋ᵖ × 𝕋ᵐ` whose `w`-mean is
/// `(0, ω(h))`.
pub trait SlowFastModel: Send + Sync {
    fn name(&self) -> &str;

    fn dims(&self) -> Dims;

    /// Writes `b_h` then `b_φ` into `out[..n + p]`.
    fn field(&self, h: &[f64], phi: &[f64], w: &[f64], out: &mut [f64]);

    fn omega(&self, h: &[f64], out: &mut [f64]);

    fn params(&self) -> serde_json::Value {
        serde_json::Value::Null
    }

    /// Rejects slow points where the chart degenerates.
    fn check_domain(&self, _h: &[f64]) -> Result<()> {
        Ok(())
    }

    fn as_coupled(&self) -> Option<&CoupledOscillatorModel> {
        None
    }
}

type FieldFn = dyn Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync;
type OmegaFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// A model assembled from closures.
pub struct FnModel {
    name: String,
    dims: Dims,
    field: Box<FieldFn>,
    omega: Box<OmegaFn>,
}

impl FnModel {
    pub fn new(
        name: impl Into<String>,
        dims: Dims,
        field: impl Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        omega: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self { name: name.into(), dims, field: Box::new(field), omega: Box::new(omega) }
    }
}

impl fmt::Debug for FnModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnModel").field("name", &self.name).field("dims", &self.dims).finish()
    }
}

impl SlowFastModel for FnModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn dims(&self) -> Dims {
        self.dims
    }

    fn field(&self, h: &[f64], phi: &[f64], w: &[f64], out: &mut [f64]) {
        (self.field)(h, phi, w, out)
    }

    fn omega(&self, h: &[f64], out: &mut [f64]) {
        (self.omega)(h, out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationOptions {
    pub h_lo: f64,
    pub h_hi: f64,
    pub points_per_axis: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self { h_lo: 0.25, h_hi: 2.0, points_per_axis: 128, tol: 1e-10, seed: 0x5EED }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub samples: usize,
    /// Largest `|mean_w b_h|` component.
    pub max_slow_mean: f64,
    /// Largest `|mean_w b_φ − ω(h)|` component.
    pub max_angle_deviation: f64,
    pub max_deviation: f64,
    pub worst_h: Vec<f64>,
    pub worst_phi: Vec<f64>,
    pub tol: f64,
    pub passed: bool,
}

/// Grid check of the averaging identity `mean_w b = (0, ω(h))` at random
/// slow points.
pub fn validate_model(model: &dyn SlowFastModel, sample_count: usize) -> Result<ValidationReport> {
    validate_model_with(model, sample_count, &ValidationOptions::default())
}

pub fn validate_model_with(
    model: &dyn SlowFastModel,
    sample_count: usize,
    opts: &ValidationOptions,
) -> Result<ValidationReport> {
    let Dims { n, p, m } = model.dims();
    let mut ppa = opts.points_per_axis;
    while m > 1 && ppa.pow(m as u32) > 1 << 16 && ppa > 8 {
        ppa /= 2;
    }
    let grid = TorusGrid::new(m, ppa)?;
    let mut rng = path_rng(opts.seed, 0);
    let mut h = vec![0.0; n];
    let mut phi = vec![0.0; p];
    let mut w = vec![0.0; m];
    let mut b = vec![0.0; n + p];
    let mut acc = vec![0.0; n + p];
    let mut om = vec![0.0; p];
    let mut report = ValidationReport {
        samples: sample_count,
        max_slow_mean: 0.0,
        max_angle_deviation: 0.0,
        max_deviation: 0.0,
        worst_h: vec![],
        worst_phi: vec![],
        tol: opts.tol,
        passed: true,
    };
    for _ in 0..sample_count {
        h.iter_mut().for_each(|v| *v = rng.random_range(opts.h_lo..opts.h_hi));
        phi.iter_mut().for_each(|v| *v = rng.random::<f64>());
        acc.iter_mut().for_each(|v| *v = 0.0);
        model.omega(&h, &mut om);
        for idx in 0..grid.len() {
            grid.coords(idx, &mut w);
            model.field(&h, &phi, &w, &mut b);
            for (k, v) in b[n..].iter_mut().enumerate() {
                *v -= om[k];
            }
            acc.iter_mut().zip(&b).for_each(|(a, v)| *a += v);
        }
        let inv = 1.0 / grid.len() as f64;
        let slow = acc[..n].iter().fold(0.0_f64, |mx, v| mx.max((v * inv).abs()));
        let ang = acc[n..].iter().fold(0.0_f64, |mx, v| mx.max((v * inv).abs()));
        report.max_slow_mean = report.max_slow_mean.max(slow);
        report.max_angle_deviation = report.max_angle_deviation.max(ang);
        if slow.max(ang) >= report.max_deviation {
            report.max_deviation = slow.max(ang);
            report.worst_h = h.clone();
            report.worst_phi = phi.clone();
        }
    }
    report.passed = report.max_deviation <= opts.tol;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn unperturbed_model_is_exact() {
        let spec = CoupledOscillatorSpec::unperturbed(
            FrequencyProfile::Constant { value: 1.0 },
            FrequencyProfile::Affine { offset: 1.0, slope: 1.0 },
        );
        let r = validate_model(&coupled_oscillator_model(spec).unwrap(), 8).unwrap();
        assert_eq!(r.max_deviation, 0.0);
        assert!(r.passed);
    }

    #[test]
    fn trigonometric_perturbation_passes() {
        let spec = CoupledOscillatorSpec {
            alpha21: Perturbation::sin_mode(3, 0.5).with_gain([0.2, 0.0, 0.0, -0.1]),
            ..CoupledOscillatorSpec::doubly_noised()
        };
        let r = validate_model(&coupled_oscillator_model(spec).unwrap(), 16).unwrap();
        assert!(r.max_deviation <= 1e-10, "{r:?}");
    }

    #[test]
    fn offset_is_detected_with_expected_pattern() {
        let spec = CoupledOscillatorSpec {
            alpha11: Perturbation::cos_mode(1, 1.0).with_offset(0.1),
            ..CoupledOscillatorSpec::single_noised()
        };
        let r = validate_model(&coupled_oscillator_model(spec).unwrap(), 16).unwrap();
        assert!(!r.passed);
        // slow mean is 0.1·√(2h₁)·cos 2πφ₁ at the worst sample
        let expect = 0.1 * (2.0 * r.worst_h[0]).sqrt() * (2.0 * PI * r.worst_phi[0]).cos().abs();
        let angle = 0.1 * (2.0 * PI * r.worst_phi[0]).sin().abs() / (2.0 * PI * (2.0 * r.worst_h[0]).sqrt());
        assert!((r.max_deviation - expect.max(angle)).abs() < 1e-12);
    }

    #[test]
    fn closure_model() {
        let m = FnModel::new(
            "shear",
            Dims { n: 1, p: 1, m: 1 },
            |_h, _phi, w, out| {
                out[0] = (2.0 * PI * w[0]).cos();
                out[1] = 3.0;
            },
            |_h, out| out[0] = 3.0,
        );
        assert!(validate_model(&m, 4).unwrap().passed);
    }
}
