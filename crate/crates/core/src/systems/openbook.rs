//! Planar Hamiltonians with a figure-eight separatrix and the associated
//! three-page open book.
//!
//! Level sets of a double-well `H₂` are parametrized by a graph with edges
//! `I₁`, `I₂` (inside each loop of the figure eight) and `I₃` (outside). A
//! point is charted as `(h₂, k)`; the binding is `h₂ = H₂(O₃)`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TOL_SEP: f64 = 1e-10;
const DEDUP_RADIUS: f64 = 1e-6;

pub trait PlanarHamiltonian: Send + Sync {
    fn value(&self, x: [f64; 2]) -> f64;
    fn gradient(&self, x: [f64; 2]) -> [f64; 2];
    fn hessian(&self, x: [f64; 2]) -> [[f64; 2]; 2];

    /// `H(x) = f(x₁) + x₂²/2`: sublevel lobes are then split by the vertical
    /// line through the saddle.
    fn is_separable(&self) -> bool {
        false
    }
}

/// `H(x) = (x₁² − a²)²/4 + x₂²/2 + tilt·x₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DoubleWell {
    pub well: f64,
    #[serde(default)]
    pub tilt: f64,
}

impl Default for DoubleWell {
    fn default() -> Self {
        Self { well: 1.0, tilt: 0.0 }
    }
}

impl PlanarHamiltonian for DoubleWell {
    fn value(&self, x: [f64; 2]) -> f64 {
        let q = x[0] * x[0] - self.well * self.well;
        0.25 * q * q + 0.5 * x[1] * x[1] + self.tilt * x[0]
    }

    fn gradient(&self, x: [f64; 2]) -> [f64; 2] {
        [x[0] * (x[0] * x[0] - self.well * self.well) + self.tilt, x[1]]
    }

    fn hessian(&self, x: [f64; 2]) -> [[f64; 2]; 2] {
        [[3.0 * x[0] * x[0] - self.well * self.well, 0.0], [0.0, 1.0]]
    }

    fn is_separable(&self) -> bool {
        true
    }
}

/// `H(x) = k·|x|²/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub k: f64,
}

impl PlanarHamiltonian for Harmonic {
    fn value(&self, x: [f64; 2]) -> f64 {
        0.5 * self.k * (x[0] * x[0] + x[1] * x[1])
    }

    fn gradient(&self, x: [f64; 2]) -> [f64; 2] {
        [self.k * x[0], self.k * x[1]]
    }

    fn hessian(&self, _x: [f64; 2]) -> [[f64; 2]; 2] {
        [[self.k, 0.0], [0.0, self.k]]
    }
}

/// Skew gradient `∇̄H = (∂₂H, −∂₁H)`.
pub fn skew_gradient(h: &dyn PlanarHamiltonian, x: [f64; 2]) -> [f64; 2] {
    let g = h.gradient(x);
    [g[1], -g[0]]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedGrid {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub n: usize,
}

impl Default for SeedGrid {
    fn default() -> Self {
        Self { lo: [-2.0, -2.0], hi: [2.0, 2.0], n: 21 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalKind {
    Minimum,
    Saddle,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub x: [f64; 2],
    pub value: f64,
    pub kind: CriticalKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Page {
    pub index: usize,
    pub h2_min: f64,
    pub h2_max: f64,
}

/// Three-page open book for a double-well `H₂`.
#[derive(Clone)]
pub struct OpenBook {
    hamiltonian: Arc<dyn PlanarHamiltonian>,
    /// Well minima; well 1 has the larger `x₁`.
    pub minima: [CriticalPoint; 2],
    pub saddle: CriticalPoint,
    pub pages: [Page; 3],
    pub tol_sep: f64,
}

impl fmt::Debug for OpenBook {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OpenBook")
            .field("minima", &self.minima)
            .field("saddle", &self.saddle)
            .field("pages", &self.pages)
            .field("tol_sep", &self.tol_sep)
            .finish()
    }
}

impl OpenBook {
    /// Binding level `H₂(O₃)`.
    pub fn binding(&self) -> f64 {
        self.saddle.value
    }

    pub fn hamiltonian(&self) -> &dyn PlanarHamiltonian {
        self.hamiltonian.as_ref()
    }

    pub fn with_tol_sep(mut self, tol: f64) -> Self {
        self.tol_sep = tol;
        self
    }

    /// Well index (1 or 2) of a point with `H₂ < H₂(O₃)`.
    pub fn lobe(&self, x: [f64; 2]) -> usize {
        if self.hamiltonian.is_separable() {
            let right = x[0] > self.saddle.x[0];
            return if right == (self.minima[0].x[0] > self.saddle.x[0]) { 1 } else { 2 };
        }
        let y = descend(self.hamiltonian.as_ref(), x, self.step_cap());
        let d0 = dist(y, self.minima[0].x);
        let d1 = dist(y, self.minima[1].x);
        if d0 <= d1 {
            1
        } else {
            2
        }
    }

    fn step_cap(&self) -> f64 {
        0.05 * dist(self.minima[0].x, self.saddle.x).min(dist(self.minima[1].x, self.saddle.x))
    }

    /// Page of a point that is not on the separatrix, without the tolerance test.
    pub fn page_of(&self, x: [f64; 2]) -> (f64, usize) {
        let h = self.hamiltonian.value(x);
        if h > self.binding() {
            (h, 3)
        } else {
            (h, self.lobe(x))
        }
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Armijo gradient descent with capped step length.
fn descend(h: &dyn PlanarHamiltonian, mut x: [f64; 2], cap: f64) -> [f64; 2] {
    let mut fx = h.value(x);
    for _ in 0..20_000 {
        let g = h.gradient(x);
        let gn = g[0].hypot(g[1]);
        if gn < 1e-10 {
            break;
        }
        let mut t = (1.0f64).min(cap / gn);
        loop {
            let y = [x[0] - t * g[0], x[1] - t * g[1]];
            let fy = h.value(y);
            if fy <= fx - 1e-4 * t * gn * gn || t < 1e-14 {
                x = y;
                fx = fy;
                break;
            }
            t *= 0.5;
        }
    }
    x
}

fn newton(h: &dyn PlanarHamiltonian, mut x: [f64; 2]) -> Option<[f64; 2]> {
    for _ in 0..200 {
        let g = h.gradient(x);
        let gn = g[0].hypot(g[1]);
        if gn < 1e-13 {
            return Some(x);
        }
        let m = h.hessian(x);
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if det.abs() < 1e-14 {
            return None;
        }
        let dx = [(m[1][1] * g[0] - m[0][1] * g[1]) / det, (m[0][0] * g[1] - m[1][0] * g[0]) / det];
        // damping: halve until the gradient norm decreases
        let mut t = 1.0;
        loop {
            let y = [x[0] - t * dx[0], x[1] - t * dx[1]];
            let gy = h.gradient(y);
            if gy[0].hypot(gy[1]) < gn || t < 1e-6 {
                x = y;
                break;
            }
            t *= 0.5;
        }
        if !(x[0].is_finite() && x[1].is_finite()) || x[0].abs() > 1e6 || x[1].abs() > 1e6 {
            return None;
        }
    }
    let g = h.gradient(x);
    (g[0].hypot(g[1]) < 1e-10).then_some(x)
}

/// All critical points reached by damped Newton from the seed grid.
pub fn critical_points(h: &dyn PlanarHamiltonian, seeds: &SeedGrid) -> Vec<CriticalPoint> {
    let mut found: Vec<CriticalPoint> = Vec::new();
    let n = seeds.n.max(2);
    for i in 0..n {
        for j in 0..n {
            let s = [
                seeds.lo[0] + (seeds.hi[0] - seeds.lo[0]) * i as f64 / (n - 1) as f64,
                seeds.lo[1] + (seeds.hi[1] - seeds.lo[1]) * j as f64 / (n - 1) as f64,
            ];
            let Some(x) = newton(h, s) else { continue };
            if found.iter().any(|c| dist(c.x, x) < DEDUP_RADIUS) {
                continue;
            }
            let m = h.hessian(x);
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            let kind = if det > 1e-12 && m[0][0] > 0.0 {
                CriticalKind::Minimum
            } else if det < -1e-12 {
                CriticalKind::Saddle
            } else {
                CriticalKind::Other
            };
            found.push(CriticalPoint { x, value: h.value(x), kind });
        }
    }
    found
}

/// Builds the open book of a double-well Hamiltonian.
pub fn build_openbook(h: Arc<dyn PlanarHamiltonian>, seeds: &SeedGrid) -> Result<OpenBook> {
    let cps = critical_points(h.as_ref(), seeds);
    let mut minima: Vec<CriticalPoint> =
        cps.iter().copied().filter(|c| c.kind == CriticalKind::Minimum).collect();
    let saddles: Vec<CriticalPoint> =
        cps.iter().copied().filter(|c| c.kind == CriticalKind::Saddle).collect();
    let other = cps.len() - minima.len() - saddles.len();
    if minima.len() != 2 || saddles.len() != 1 || other != 0 {
        return Err(Error::CriticalPointCountMismatch {
            minima: minima.len(),
            saddles: saddles.len(),
            other,
        });
    }
    minima.sort_by(|a, b| b.x[0].total_cmp(&a.x[0]).then(b.x[1].total_cmp(&a.x[1])));
    let saddle = saddles[0];
    let hc = saddle.value;
    let pages = [
        Page { index: 1, h2_min: minima[0].value, h2_max: hc },
        Page { index: 2, h2_min: minima[1].value, h2_max: hc },
        Page { index: 3, h2_min: hc, h2_max: f64::INFINITY },
    ];
    Ok(OpenBook { hamiltonian: h, minima: [minima[0], minima[1]], saddle, pages, tol_sep: DEFAULT_TOL_SEP })
}

/// Chart `(h₂, k)` of a planar point.
pub fn project_to_openbook(x: [f64; 2], book: &OpenBook) -> Result<(f64, usize)> {
    let h = book.hamiltonian().value(x);
    let gap = h - book.binding();
    if gap.abs() < book.tol_sep {
        return Err(Error::OnSeparatrix { gap: gap.abs() });
    }
    Ok(book.page_of(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn book() -> OpenBook {
        build_openbook(Arc::new(DoubleWell::default()), &SeedGrid::default()).unwrap()
    }

    #[test]
    fn double_well_structure() {
        let b = book();
        assert!((b.minima[0].x[0] - 1.0).abs() < 1e-12 && b.minima[0].x[1].abs() < 1e-12);
        assert!((b.minima[1].x[0] + 1.0).abs() < 1e-12);
        assert!(b.minima[0].value.abs() < 1e-20 && b.minima[1].value.abs() < 1e-20);
        assert!(b.saddle.x[0].abs() < 1e-12 && b.saddle.x[1].abs() < 1e-12);
        assert!((b.binding() - 0.25).abs() < 1e-15);
        assert_eq!(b.pages[0].h2_max, 0.25);
        assert_eq!(b.pages[2].h2_min, 0.25);
        assert_eq!(b.pages[2].h2_max, f64::INFINITY);
    }

    #[test]
    fn single_well_is_rejected() {
        let r = build_openbook(Arc::new(Harmonic { k: 1.0 }), &SeedGrid::default());
        assert!(matches!(
            r,
            Err(Error::CriticalPointCountMismatch { minima: 1, saddles: 0, other: 0 })
        ));
    }

    #[test]
    fn projections() {
        let b = book();
        assert_eq!(project_to_openbook([1.0, 0.0], &b).unwrap(), (0.0, 1));
        assert_eq!(project_to_openbook([-1.0, 0.0], &b).unwrap(), (0.0, 2));
        assert_eq!(project_to_openbook([2.0, 0.0], &b).unwrap(), (2.25, 3));
        assert!(matches!(project_to_openbook([0.0, 0.0], &b), Err(Error::OnSeparatrix { .. })));
    }

    #[test]
    fn descent_agrees_with_separable_shortcut() {
        let b = book();
        for x in [[0.3, 0.1], [-0.05, 0.3], [1.2, -0.4], [-1.3, 0.2], [0.01, -0.2]] {
            let y = descend(&DoubleWell::default(), x, b.step_cap());
            let by_descent = if dist(y, b.minima[0].x) < dist(y, b.minima[1].x) { 1 } else { 2 };
            assert_eq!(by_descent, b.lobe(x), "at {x:?}");
        }
    }

    #[test]
    fn tilted_well_orders_minima() {
        let b = build_openbook(Arc::new(DoubleWell { well: 1.0, tilt: 0.05 }), &SeedGrid::default()).unwrap();
        assert!(b.minima[0].x[0] > 0.0 && b.minima[1].x[0] < 0.0);
        // the tilt lifts the right well
        assert!(b.minima[0].value > b.minima[1].value);
    }

    fn heun_orbit(h: &DoubleWell, mut x: [f64; 2], dt: f64, steps: usize) -> Vec<[f64; 2]> {
        let mut out = vec![x];
        for _ in 0..steps {
            let k1 = skew_gradient(h, x);
            let y = [x[0] + dt * k1[0], x[1] + dt * k1[1]];
            let k2 = skew_gradient(h, y);
            x = [x[0] + 0.5 * dt * (k1[0] + k2[0]), x[1] + 0.5 * dt * (k1[1] + k2[1])];
            out.push(x);
        }
        out
    }

    proptest! {
        #[test]
        fn chart_is_constant_along_orbits(x0 in -1.8f64..1.8, x1 in -1.2f64..1.2) {
            let b = book();
            let h = DoubleWell::default();
            let start = project_to_openbook([x0, x1], &b);
            prop_assume!(start.is_ok());
            let (h0, k0) = start.unwrap();
            prop_assume!((h0 - 0.25).abs() > 1e-2 && h0 < 2.0);
            for x in heun_orbit(&h, [x0, x1], 1e-3, 5000) {
                let (hh, k) = b.page_of(x);
                prop_assert_eq!(k, k0);
                prop_assert!((hh - h0).abs() < 1e-4);
            }
        }
    }
}
