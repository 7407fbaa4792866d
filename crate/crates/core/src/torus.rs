//! Cell problem and calculus on the flat unit torus `𝕋^m`.
//!
//! Functions are sampled on a uniform periodic grid with `M` (even) points per
//! axis and coordinates `i/M`. Means use the periodic trapezoidal rule, which
//! is exact for trigonometric polynomials resolved by the grid. The corrector
//! equation `½Δu = −g` is solved mode by mode: `û_k = ĝ_k / (2π²|k|²)`,
//! `û_0 = 0`.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TOL_MEAN: f64 = 1e-10;
const MIN_SOLVE_POINTS: usize = 4;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusGrid {
    dim: usize,
    points_per_axis: usize,
}

impl TorusGrid {
    pub fn new(dim: usize, points_per_axis: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidGrid("torus dimension must be positive".into()));
        }
        if points_per_axis == 0 || points_per_axis % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be even and positive, got {points_per_axis}"
            )));
        }
        let total = points_per_axis
            .checked_pow(dim as u32)
            .ok_or_else(|| Error::InvalidGrid("grid size overflows".into()))?;
        if total > 1 << 26 {
            return Err(Error::InvalidGrid(format!("grid of {total} points is too large")));
        }
        Ok(Self { dim, points_per_axis })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.points_per_axis as f64
    }

    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Per-axis indices of a flat (row-major, last axis fastest) index.
    pub fn multi_index(&self, mut flat: usize, out: &mut [usize]) {
        let m = self.points_per_axis;
        for a in (0..self.dim).rev() {
            out[a] = flat % m;
            flat /= m;
        }
    }

    /// Coordinates in `[0, 1)^dim` of a flat index.
    pub fn coords(&self, mut flat: usize, out: &mut [f64]) {
        let m = self.points_per_axis;
        let h = self.spacing();
        for a in (0..self.dim).rev() {
            out[a] = (flat % m) as f64 * h;
            flat /= m;
        }
    }

    /// Signed wavenumber of the `i`-th FFT bin; the Nyquist bin maps to `-M/2`.
    pub fn wavenumber(&self, i: usize) -> i64 {
        let m = self.points_per_axis;
        if i < m / 2 {
            i as i64
        } else {
            i as i64 - m as i64
        }
    }
}

/// Scalar or vector field sampled on a [`TorusGrid`], stored component-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusFunction {
    grid: TorusGrid,
    components: usize,
    values: Vec<f64>,
}

impl TorusFunction {
    pub fn zeros(grid: TorusGrid, components: usize) -> Self {
        Self { grid, components, values: vec![0.0; grid.len() * components] }
    }

    pub fn from_values(grid: TorusGrid, components: usize, values: Vec<f64>) -> Result<Self> {
        if components == 0 || values.len() != grid.len() * components {
            return Err(Error::DimensionMismatch {
                expected: grid.len() * components.max(1),
                got: values.len(),
            });
        }
        Ok(Self { grid, components, values })
    }

    pub fn from_fn(grid: TorusGrid, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let mut w = vec![0.0; grid.dim()];
        let values = (0..grid.len())
            .map(|i| {
                grid.coords(i, &mut w);
                f(&w)
            })
            .collect();
        Self { grid, components: 1, values }
    }

    /// Vector-valued constructor; `f` writes all `components` values at a point.
    pub fn from_fn_vec(
        grid: TorusGrid,
        components: usize,
        mut f: impl FnMut(&[f64], &mut [f64]),
    ) -> Self {
        let n = grid.len();
        let mut w = vec![0.0; grid.dim()];
        let mut buf = vec![0.0; components];
        let mut values = vec![0.0; n * components];
        for i in 0..n {
            grid.coords(i, &mut w);
            f(&w, &mut buf);
            for (c, v) in buf.iter().enumerate() {
                values[c * n + i] = *v;
            }
        }
        Self { grid, components, values }
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let n = self.grid.len();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Max absolute pointwise difference; panics on shape mismatch.
    pub fn max_abs_diff(&self, other: &TorusFunction) -> f64 {
        assert_eq!(self.values.len(), other.values.len(), "shape mismatch");
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            grid: self.grid,
            components: self.components,
            values: self.values.iter().map(|v| a * v).collect(),
        }
    }

    pub fn axpy(&self, a: f64, other: &TorusFunction) -> Self {
        assert_eq!(self.values.len(), other.values.len(), "shape mismatch");
        Self {
            grid: self.grid,
            components: self.components,
            values: self.values.iter().zip(&other.values).map(|(x, y)| x + a * y).collect(),
        }
    }
}

/// Uniform periodic quadrature mean over the torus, one entry per component.
pub fn mean_over_torus(g: &TorusFunction) -> Vec<f64> {
    (0..g.components).map(|c| mean(g.component(c))).collect()
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonOptions {
    pub tol_mean: f64,
    /// Remove the grid mean of the input instead of rejecting it.
    pub subtract_mean: bool,
}

impl Default for PoissonOptions {
    fn default() -> Self {
        Self { tol_mean: DEFAULT_TOL_MEAN, subtract_mean: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralSolveReport {
    /// Sup-norm of `½Δu + (g − mean g)` on the grid, with the Laplacian
    /// assembled from the spectral derivative used by [`grad_w`].
    pub residual_sup: f64,
    /// The input mean that was removed (largest in magnitude over components).
    pub mean_removed: f64,
}

/// Zero-mean solution of `½Δu = −(g − mean g)` on the torus, componentwise.
pub fn solve_poisson(
    g: &TorusFunction,
    opts: PoissonOptions,
) -> Result<(TorusFunction, SpectralSolveReport)> {
    let grid = g.grid();
    if grid.points_per_axis() < MIN_SOLVE_POINTS {
        return Err(Error::GridTooCoarse { points: grid.points_per_axis(), min: MIN_SOLVE_POINTS });
    }
    let means = mean_over_torus(g);
    let mean_removed = means.iter().copied().fold(0.0, |m: f64, v| if v.abs() > m.abs() { v } else { m });
    if !opts.subtract_mean && mean_removed.abs() > opts.tol_mean {
        return Err(Error::MeanNotZero { mean: mean_removed, tol: opts.tol_mean });
    }
    let mut spectral = Spectral::new(grid);
    let n = grid.len();
    let mut out = Vec::with_capacity(n * g.components());
    let mut residual_sup = 0.0_f64;
    for c in 0..g.components() {
        let mut ghat = spectral.forward_real(g.component(c));
        ghat[0] = Complex64::new(0.0, 0.0);
        let uhat = spectral.poisson_from_spectrum(&ghat);
        // ½ Σ_a D_a² û + ĝ, with the same Nyquist convention as the gradient
        let mut res = ghat;
        let mut idx = vec![0usize; grid.dim()];
        for (flat, r) in res.iter_mut().enumerate() {
            grid.multi_index(flat, &mut idx);
            let mut d2 = 0.0;
            for &i in &idx {
                if i != grid.points_per_axis() / 2 {
                    let k = 2.0 * PI * grid.wavenumber(i) as f64;
                    d2 -= k * k;
                }
            }
            *r += uhat[flat] * (0.5 * d2);
        }
        let r = spectral.inverse_real(res);
        residual_sup = r.iter().fold(residual_sup, |m, v| m.max(v.abs()));
        out.extend(spectral.inverse_real(uhat));
    }
    Ok((
        TorusFunction { grid, components: g.components(), values: out },
        SpectralSolveReport { residual_sup, mean_removed },
    ))
}

/// Spectral gradient. A scalar input yields `dim` components; a field with
/// `d` components yields `d·dim`, ordered `(component, axis)`.
pub fn grad_w(u: &TorusFunction) -> TorusFunction {
    let grid = u.grid();
    let mut spectral = Spectral::new(grid);
    let mut values = Vec::with_capacity(grid.len() * grid.dim() * u.components());
    for c in 0..u.components() {
        let uhat = spectral.forward_real(u.component(c));
        for axis in 0..grid.dim() {
            values.extend(spectral.inverse_real(spectral.derivative(&uhat, axis)));
        }
    }
    TorusFunction { grid, components: grid.dim() * u.components(), values }
}

/// Corrector and its derivative from the explicit convolution formulas on 𝕋¹.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormCorrector {
    pub u: TorusFunction,
    pub du: TorusFunction,
}

/// Solves `½u'' = −g` on the unit circle by quadrature of
///
/// `u(w) = ∫₀^w (w − ½ − v)² g(v) dv + ∫_w^1 (w + ½ − v)² g(v) dv`,
/// `u'(w) = −2∫₀^w (½ + v) g(v) dv + 2∫_w^1 (½ − v) g(v) dv`.
///
/// Both integrands are smooth except at `v = w`, which is a grid node, so the
/// trapezoidal sums are corrected with the Euler–Maclaurin jump terms
/// (`−h²g/6 + h⁴g''/120` for `u`, `+h²g'/6 − h⁴g'''/360` for `u'`), with the
/// derivatives of `g` taken by periodic finite differences.
pub fn poisson_1d_closed_form(g: &TorusFunction) -> Result<ClosedFormCorrector> {
    let grid = g.grid();
    if grid.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: grid.dim() });
    }
    if g.components() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: g.components() });
    }
    let (u, du) = closed_form_1d(g.values());
    Ok(ClosedFormCorrector {
        u: TorusFunction { grid, components: 1, values: u },
        du: TorusFunction { grid, components: 1, values: du },
    })
}

pub(crate) fn closed_form_1d(gv: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let m = gv.len();
    let h = 1.0 / m as f64;
    let at = |i: isize| gv[i.rem_euclid(m as isize) as usize];
    let mut u = vec![0.0; m];
    let mut du = vec![0.0; m];
    for j in 0..m {
        let w = j as f64 * h;
        let mut su = 0.0;
        let mut sd = 0.0;
        for (k, &gk) in gv.iter().enumerate() {
            let v = k as f64 * h;
            if k < j {
                let s = w - 0.5 - v;
                su += s * s * gk;
                sd += -2.0 * (0.5 + v) * gk;
            } else if k > j {
                let s = w + 0.5 - v;
                su += s * s * gk;
                sd += 2.0 * (0.5 - v) * gk;
            } else {
                su += 0.25 * gk;
                // average of the one-sided limits of the u' integrand
                sd += -2.0 * w * gk;
            }
        }
        let ji = j as isize;
        let (gm3, gm2, gm1, g0, gp1, gp2, gp3) =
            (at(ji - 3), at(ji - 2), at(ji - 1), at(ji), at(ji + 1), at(ji + 2), at(ji + 3));
        let d1 = (gp3 - 9.0 * gp2 + 45.0 * gp1 - 45.0 * gm1 + 9.0 * gm2 - gm3) / (60.0 * h);
        let d2 = (2.0 * gp3 - 27.0 * gp2 + 270.0 * gp1 - 490.0 * g0 + 270.0 * gm1 - 27.0 * gm2
            + 2.0 * gm3)
            / (180.0 * h * h);
        let d3 = (-gp3 + 8.0 * gp2 - 13.0 * gp1 + 13.0 * gm1 - 8.0 * gm2 + gm3) / (8.0 * h * h * h);
        let h2 = h * h;
        let h4 = h2 * h2;
        u[j] = su * h - h2 * g0 / 6.0 + h4 * d2 / 120.0;
        du[j] = sd * h + h2 * d1 / 6.0 - h4 * d3 / 360.0;
    }
    (u, du)
}

/// FFT helper bound to one grid; transforms are applied axis by axis.
pub(crate) struct Spectral {
    grid: TorusGrid,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    lines: Vec<Complex64>,
}

impl Spectral {
    pub(crate) fn new(grid: TorusGrid) -> Self {
        let m = grid.points_per_axis();
        let (fwd, inv) = PLANNER.with(|p| {
            let mut p = p.borrow_mut();
            (p.plan_fft_forward(m), p.plan_fft_inverse(m))
        });
        let scratch_len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        Self {
            grid,
            fwd,
            inv,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            lines: Vec::new(),
        }
    }

    fn transform(&mut self, data: &mut [Complex64], forward: bool) {
        let m = self.grid.points_per_axis();
        let n = self.grid.len();
        let fft = if forward { self.fwd.clone() } else { self.inv.clone() };
        for axis in 0..self.grid.dim() {
            let stride = m.pow((self.grid.dim() - 1 - axis) as u32);
            if stride == 1 {
                fft.process_with_scratch(data, &mut self.scratch);
                continue;
            }
            let block = m * stride;
            self.lines.resize(block, Complex64::new(0.0, 0.0));
            for start in (0..n).step_by(block) {
                for off in 0..stride {
                    for j in 0..m {
                        self.lines[off * m + j] = data[start + j * stride + off];
                    }
                }
                fft.process_with_scratch(&mut self.lines, &mut self.scratch);
                for off in 0..stride {
                    for j in 0..m {
                        data[start + j * stride + off] = self.lines[off * m + j];
                    }
                }
            }
        }
    }

    pub(crate) fn forward_real(&mut self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, true);
        data
    }

    pub(crate) fn inverse_real(&mut self, mut spectrum: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut spectrum, false);
        let scale = 1.0 / self.grid.len() as f64;
        spectrum.iter().map(|c| c.re * scale).collect()
    }

    pub(crate) fn poisson_from_spectrum(&self, ghat: &[Complex64]) -> Vec<Complex64> {
        let grid = self.grid;
        let mut idx = vec![0usize; grid.dim()];
        ghat.iter()
            .enumerate()
            .map(|(flat, g)| {
                if flat == 0 {
                    return Complex64::new(0.0, 0.0);
                }
                grid.multi_index(flat, &mut idx);
                let k2: f64 = idx.iter().map(|&i| (grid.wavenumber(i) as f64).powi(2)).sum();
                g / (2.0 * PI * PI * k2)
            })
            .collect()
    }

    pub(crate) fn derivative(&self, uhat: &[Complex64], axis: usize) -> Vec<Complex64> {
        let grid = self.grid;
        let m = grid.points_per_axis();
        let stride = m.pow((grid.dim() - 1 - axis) as u32);
        uhat.iter()
            .enumerate()
            .map(|(flat, u)| {
                let i = (flat / stride) % m;
                if i == m / 2 {
                    Complex64::new(0.0, 0.0)
                } else {
                    let k = 2.0 * PI * grid.wavenumber(i) as f64;
                    Complex64::new(-k * u.im, k * u.re)
                }
            })
            .collect()
    }
}
