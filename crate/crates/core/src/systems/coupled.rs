//! Two harmonic oscillators with fast random perturbations.
//!
//! In Cartesian coordinates `x_i ∈ ℝ²` each oscillator rotates with
//! frequency `ω_i(h_i)` (cycles per unit time) and is pushed by
//! `α_i(x₁, x₂, w_i)`, where `w_i` is the `i`-th coordinate of the noise on
//! 𝕋². In action-angle form the slow and angle velocities are
//!
//! `β_{i1} = √(2h_i)·(cos 2πφ_i·α_{i1} + sin 2πφ_i·α_{i2})`,
//! `β_{i2} = (−sin 2πφ_i·α_{i1} + cos 2πφ_i·α_{i2}) / (2π√(2h_i))`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{Dims, SlowFastModel};
use crate::error::{Error, Result};
use crate::systems::action_angle::DEFAULT_H_FLOOR;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FrequencyProfile {
    Constant { value: f64 },
    /// `ω(h) = offset + slope·h`
    Affine { offset: f64, slope: f64 },
}

impl FrequencyProfile {
    pub fn eval(&self, h: f64) -> f64 {
        match *self {
            FrequencyProfile::Constant { value } => value,
            FrequencyProfile::Affine { offset, slope } => offset + slope * h,
        }
    }
}

/// `α(x, w) = (1 + gain·x)·(offset + Σ_k cos_k·cos 2πkw + sin_k·sin 2πkw)`,
/// `x = (x₁₁, x₁₂, x₂₁, x₂₂)`. A nonzero `offset` breaks the zero-mean
/// requirement and exists to exercise validation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Perturbation {
    pub offset: f64,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
    pub gain: [f64; 4],
}

impl Perturbation {
    pub fn zero() -> Self {
        Self::default()
    }

    /// `amp·cos(2πkw)`, `k ≥ 1`.
    pub fn cos_mode(k: usize, amp: f64) -> Self {
        let mut cos = vec![0.0; k];
        cos[k - 1] = amp;
        Self { cos, ..Self::default() }
    }

    /// `amp·sin(2πkw)`, `k ≥ 1`.
    pub fn sin_mode(k: usize, amp: f64) -> Self {
        let mut sin = vec![0.0; k];
        sin[k - 1] = amp;
        Self { sin, ..Self::default() }
    }

    pub fn with_gain(mut self, gain: [f64; 4]) -> Self {
        self.gain = gain;
        self
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    pub fn is_zero(&self) -> bool {
        self.offset == 0.0 && self.cos.iter().chain(&self.sin).all(|&c| c == 0.0)
    }

    /// The `w`-profile `g(w)`.
    pub fn profile(&self, w: f64) -> f64 {
        let mut s = self.offset;
        for (k, c) in self.cos.iter().enumerate() {
            s += c * (2.0 * PI * (k + 1) as f64 * w).cos();
        }
        for (k, c) in self.sin.iter().enumerate() {
            s += c * (2.0 * PI * (k + 1) as f64 * w).sin();
        }
        s
    }

    /// The `x`-amplitude `1 + gain·x`.
    pub fn amplitude(&self, x: &[f64; 4]) -> f64 {
        1.0 + self.gain.iter().zip(x).map(|(g, v)| g * v).sum::<f64>()
    }

    pub fn eval(&self, x: &[f64; 4], w: f64) -> f64 {
        self.amplitude(x) * self.profile(w)
    }

    /// Largest wavenumber present.
    pub fn degree(&self) -> usize {
        self.cos.len().max(self.sin.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupledOscillatorSpec {
    pub omega1: FrequencyProfile,
    pub omega2: FrequencyProfile,
    #[serde(default)]
    pub alpha11: Perturbation,
    #[serde(default)]
    pub alpha12: Perturbation,
    #[serde(default)]
    pub alpha21: Perturbation,
    #[serde(default)]
    pub alpha22: Perturbation,
    /// Radius below which the action-angle chart is refused.
    #[serde(default = "default_h_floor")]
    pub h_floor: f64,
}

fn default_h_floor() -> f64 {
    DEFAULT_H_FLOOR
}

impl CoupledOscillatorSpec {
    pub fn unperturbed(omega1: FrequencyProfile, omega2: FrequencyProfile) -> Self {
        Self {
            omega1,
            omega2,
            alpha11: Perturbation::zero(),
            alpha12: Perturbation::zero(),
            alpha21: Perturbation::zero(),
            alpha22: Perturbation::zero(),
            h_floor: DEFAULT_H_FLOOR,
        }
    }

    /// First oscillator driven by `(cos 2πw₁, sin 2πw₁)`, second unperturbed.
    pub fn single_noised() -> Self {
        Self {
            alpha11: Perturbation::cos_mode(1, 1.0),
            alpha12: Perturbation::sin_mode(1, 1.0),
            ..Self::unperturbed(
                FrequencyProfile::Constant { value: 1.0 },
                FrequencyProfile::Constant { value: std::f64::consts::SQRT_2 },
            )
        }
    }

    /// Both oscillators driven by `(cos 2πw_i, sin 2πw_i)`.
    pub fn doubly_noised() -> Self {
        Self {
            alpha21: Perturbation::cos_mode(1, 1.0),
            alpha22: Perturbation::sin_mode(1, 1.0),
            ..Self::single_noised()
        }
    }

    pub fn alpha(&self, i: usize, j: usize) -> &Perturbation {
        match (i, j) {
            (0, 0) => &self.alpha11,
            (0, 1) => &self.alpha12,
            (1, 0) => &self.alpha21,
            (1, 1) => &self.alpha22,
            _ => panic!("oscillator index out of range"),
        }
    }

    pub fn omega(&self, i: usize, h: f64) -> f64 {
        if i == 0 {
            self.omega1.eval(h)
        } else {
            self.omega2.eval(h)
        }
    }

    /// True when no perturbation depends on the Cartesian point.
    pub fn is_x_independent(&self) -> bool {
        [&self.alpha11, &self.alpha12, &self.alpha21, &self.alpha22]
            .iter()
            .all(|a| a.gain == [0.0; 4])
    }

    /// Structural checks: finite parameters, positive floor, positive
    /// frequencies on `h ∈ [0, h_max]`.
    pub fn check(&self, h_max: f64) -> Result<()> {
        if !(self.h_floor > 0.0 && self.h_floor.is_finite()) {
            return Err(Error::InvalidConfig(format!("h_floor must be positive, got {}", self.h_floor)));
        }
        for (i, p) in [&self.omega1, &self.omega2].iter().enumerate() {
            let lo = p.eval(0.0);
            let hi = p.eval(h_max);
            if !(lo > 0.0 && hi > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "omega{} must be positive on [0, {h_max}]",
                    i + 1
                )));
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                let a = self.alpha(i, j);
                if !a.cos.iter().chain(&a.sin).chain(&a.gain).all(|v| v.is_finite()) || !a.offset.is_finite() {
                    return Err(Error::InvalidConfig(format!("alpha{}{} is not finite", i + 1, j + 1)));
                }
            }
        }
        Ok(())
    }

    /// Smallest normalized Gram determinant of `(α_{i1}, α_{i2})` in `L²(𝕋¹)`
    /// over the sample points; zero signals linear dependence.
    pub fn min_gram_determinant(&self, x_samples: &[[f64; 4]], m_w: usize) -> f64 {
        let mut worst = f64::INFINITY;
        for x in x_samples {
            for i in 0..2 {
                let (a, b) = (self.alpha(i, 0), self.alpha(i, 1));
                let (mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0);
                for k in 0..m_w {
                    let w = k as f64 / m_w as f64;
                    let (va, vb) = (a.eval(x, w), b.eval(x, w));
                    aa += va * va;
                    bb += vb * vb;
                    ab += va * vb;
                }
                let (aa, bb, ab) = (aa / m_w as f64, bb / m_w as f64, ab / m_w as f64);
                let det = aa * bb - ab * ab;
                let norm = aa * bb;
                worst = worst.min(if norm > 0.0 { det / norm } else { 0.0 });
            }
        }
        worst
    }
}

/// Cartesian point of the pair for actions `h` and angles `φ`.
pub fn cartesian_point(h: &[f64], phi: &[f64]) -> [f64; 4] {
    let r1 = (2.0 * h[0]).sqrt();
    let r2 = (2.0 * h[1]).sqrt();
    let (s1, c1) = (2.0 * PI * phi[0]).sin_cos();
    let (s2, c2) = (2.0 * PI * phi[1]).sin_cos();
    [r1 * c1, r1 * s1, r2 * c2, r2 * s2]
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledOscillatorModel {
    spec: CoupledOscillatorSpec,
}

pub fn coupled_oscillator_model(spec: CoupledOscillatorSpec) -> Result<CoupledOscillatorModel> {
    if !(spec.h_floor > 0.0) {
        return Err(Error::InvalidConfig("h_floor must be positive".into()));
    }
    Ok(CoupledOscillatorModel { spec })
}

impl CoupledOscillatorModel {
    pub fn spec(&self) -> &CoupledOscillatorSpec {
        &self.spec
    }
}

impl SlowFastModel for CoupledOscillatorModel {
    fn name(&self) -> &str {
        "coupled_oscillators"
    }

    fn dims(&self) -> Dims {
        Dims { n: 2, p: 2, m: 2 }
    }

    fn field(&self, h: &[f64], phi: &[f64], w: &[f64], out: &mut [f64]) {
        let x = cartesian_point(h, phi);
        for i in 0..2 {
            let r = (2.0 * h[i]).sqrt();
            let (s, c) = (2.0 * PI * phi[i]).sin_cos();
            let a1 = self.spec.alpha(i, 0).eval(&x, w[i]);
            let a2 = self.spec.alpha(i, 1).eval(&x, w[i]);
            out[i] = r * (c * a1 + s * a2);
            out[2 + i] = self.spec.omega(i, h[i]) + (-s * a1 + c * a2) / (2.0 * PI * r);
        }
    }

    fn omega(&self, h: &[f64], out: &mut [f64]) {
        out[0] = self.spec.omega(0, h[0]);
        out[1] = self.spec.omega(1, h[1]);
    }

    fn params(&self) -> serde_json::Value {
        serde_json::to_value(&self.spec).unwrap_or(serde_json::Value::Null)
    }

    fn check_domain(&self, h: &[f64]) -> Result<()> {
        for &hi in &h[..2] {
            let r = if hi > 0.0 { (2.0 * hi).sqrt() } else { 0.0 };
            if r <= self.spec.h_floor {
                return Err(Error::OriginSingularity { radius: r, floor: self.spec.h_floor });
            }
        }
        Ok(())
    }

    fn as_coupled(&self) -> Option<&CoupledOscillatorModel> {
        Some(self)
    }
}
