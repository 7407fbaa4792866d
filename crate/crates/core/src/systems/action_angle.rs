//! Action-angle chart of the harmonic oscillator `H = |x|²/2`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const DEFAULT_H_FLOOR: f64 = 1e-8;

/// `x ↦ (h, φ)` with `h = |x|²/2` and `φ = atan2(x₂, x₁)/2π ∈ [0, 1)`.
pub fn action_angle_forward(x: [f64; 2], h_floor: f64) -> Result<(f64, f64)> {
    let r = x[0].hypot(x[1]);
    if r <= h_floor {
        return Err(Error::OriginSingularity { radius: r, floor: h_floor });
    }
    let h = 0.5 * (x[0] * x[0] + x[1] * x[1]);
    Ok((h, wrap01(x[1].atan2(x[0]) / (2.0 * PI))))
}

/// `(h, φ) ↦ √(2h)·(cos 2πφ, sin 2πφ)`.
pub fn action_angle_inverse(h: f64, phi: f64) -> [f64; 2] {
    let r = (2.0 * h).sqrt();
    let (s, c) = (2.0 * PI * phi).sin_cos();
    [r * c, r * s]
}

/// Reduces to `[0, 1)`; guards the `-tiny → 1.0` rounding case.
pub fn wrap01(v: f64) -> f64 {
    let r = v - v.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn axis_points() {
        assert_eq!(action_angle_forward([1.0, 0.0], DEFAULT_H_FLOOR).unwrap(), (0.5, 0.0));
        let (h, phi) = action_angle_forward([0.0, 1.0], DEFAULT_H_FLOOR).unwrap();
        assert_eq!(h, 0.5);
        assert!((phi - 0.25).abs() < 1e-16);
    }

    #[test]
    fn three_four_five() {
        let (h, phi) = action_angle_forward([3.0, 4.0], DEFAULT_H_FLOOR).unwrap();
        assert_eq!(h, 12.5);
        assert!((phi - 0.147583617650433).abs() < 1e-12);
        let x = action_angle_inverse(h, phi);
        assert!((x[0] - 3.0).abs() < 1e-12 && (x[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn origin_is_rejected() {
        assert!(matches!(
            action_angle_forward([0.0, 0.0], DEFAULT_H_FLOOR),
            Err(Error::OriginSingularity { .. })
        ));
    }

    #[test]
    fn wrap_edge_cases() {
        assert_eq!(wrap01(-1e-300), 0.0);
        assert_eq!(wrap01(1.0), 0.0);
        assert_eq!(wrap01(-0.25), 0.75);
    }

    proptest! {
        #[test]
        fn roundtrip(logr in -4.0f64..4.0, theta in 0.0f64..(2.0 * PI)) {
            let r = 10f64.powf(logr);
            let x = [r * theta.cos(), r * theta.sin()];
            let (h, phi) = action_angle_forward(x, DEFAULT_H_FLOOR).unwrap();
            prop_assert!((0.0..1.0).contains(&phi));
            let y = action_angle_inverse(h, phi);
            prop_assert!((y[0] - x[0]).abs() <= 1e-12 * r.max(1.0));
            prop_assert!((y[1] - x[1]).abs() <= 1e-12 * r.max(1.0));
        }
    }
}
