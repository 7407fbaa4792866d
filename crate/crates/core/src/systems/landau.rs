//! Landau–Lifshitz magnetization dynamics `ẋ = x × ∇G(x, w)` on the sphere
//! `|x|²/2 = z₁`.
//!
//! `G(x, w) = G̃(x) + σ·(cos 2πw·x₁ + sin 2πw·x₂)` with the axial energy
//! `G̃(x) = zeeman·x₃ + anisotropy·x₃²/2`. When `|anisotropy|·√(2z₁) < |zeeman|`
//! the only critical points of `G̃` on the sphere are the poles, so the
//! averaged dynamics lives on an interval of `G̃` values.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandauLifshitzSpec {
    pub z1: f64,
    pub zeeman: f64,
    #[serde(default)]
    pub anisotropy: f64,
    pub sigma: f64,
}

impl Default for LandauLifshitzSpec {
    fn default() -> Self {
        Self { z1: 0.5, zeeman: 1.0, anisotropy: 0.0, sigma: 1.0 }
    }
}

impl LandauLifshitzSpec {
    pub fn check(&self) -> Result<()> {
        if !(self.z1 > 0.0) {
            return Err(Error::InvalidConfig(format!("z1 must be positive, got {}", self.z1)));
        }
        let r = (2.0 * self.z1).sqrt();
        if self.anisotropy.abs() * r >= self.zeeman.abs() {
            return Err(Error::InvalidConfig(
                "anisotropy too strong: the axial energy has interior critical points".into(),
            ));
        }
        Ok(())
    }

    pub fn radius(&self) -> f64 {
        (2.0 * self.z1).sqrt()
    }

    pub fn g_tilde(&self, x: [f64; 3]) -> f64 {
        self.zeeman * x[2] + 0.5 * self.anisotropy * x[2] * x[2]
    }

    pub fn g(&self, x: [f64; 3], w: f64) -> f64 {
        let (s, c) = (2.0 * PI * w).sin_cos();
        self.g_tilde(x) + self.sigma * (c * x[0] + s * x[1])
    }

    pub fn grad_g(&self, x: [f64; 3], w: f64) -> [f64; 3] {
        let (s, c) = (2.0 * PI * w).sin_cos();
        [self.sigma * c, self.sigma * s, self.zeeman + self.anisotropy * x[2]]
    }

    /// `x × ∇G(x, w)`.
    pub fn velocity(&self, x: [f64; 3], w: f64) -> [f64; 3] {
        cross(x, self.grad_g(x, w))
    }

    /// Range `(G̃(south), G̃(north))` of the axial energy on the sphere.
    pub fn energy_range(&self) -> (f64, f64) {
        let r = self.radius();
        let a = self.g_tilde([0.0, 0.0, -r]);
        let b = self.g_tilde([0.0, 0.0, r]);
        (a.min(b), a.max(b))
    }

    /// Rescales `x` onto the sphere `|x|² = 2z₁`.
    pub fn project(&self, x: [f64; 3]) -> [f64; 3] {
        let n = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        let s = self.radius() / n;
        [x[0] * s, x[1] * s, x[2] * s]
    }
}

pub fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_mean_recovers_axial_energy() {
        let s = LandauLifshitzSpec { anisotropy: 0.3, ..Default::default() };
        let x = [0.3, -0.4, 0.5];
        let m = 64;
        let mean: f64 = (0..m).map(|k| s.g(x, k as f64 / m as f64)).sum::<f64>() / m as f64;
        assert!((mean - s.g_tilde(x)).abs() < 1e-14);
    }

    #[test]
    fn velocity_is_tangent() {
        let s = LandauLifshitzSpec::default();
        let x = s.project([0.2, 0.7, -0.1]);
        let v = s.velocity(x, 0.3);
        assert!((v[0] * x[0] + v[1] * x[1] + v[2] * x[2]).abs() < 1e-15);
    }

    #[test]
    fn strong_anisotropy_rejected() {
        assert!(LandauLifshitzSpec { anisotropy: 2.0, ..Default::default() }.check().is_err());
        assert!(LandauLifshitzSpec::default().check().is_ok());
        assert_eq!(LandauLifshitzSpec::default().energy_range(), (-1.0, 1.0));
    }
}
