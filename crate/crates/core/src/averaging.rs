//! Local and averaged diffusion coefficients of the slow variables.
//!
//! At a slow point `x = (h, φ)` let `α = b − mean_w b` and let `u_i` solve
//! `½Δ_w u_i = −α_i` for each slow component. Then
//!
//! - `Ã_ij(x) = mean_w(∇_w u_i · ∇_w u_j)`
//! - `B̃_i(x)  = mean_w(∇_x u_i · b)`, with the full field `b`
//!
//! and `Ā(h)`, `B̄(h)` are their means over the angles. The limiting generator
//! is `Lf = ½ Σ Ā_ij ∂_i∂_j f + Σ B̄_i ∂_i f`.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, psd_sqrt};
use crate::stats::slope_through_origin;
use crate::systems::{cartesian_point, Dims, SlowFastModel};
use crate::torus::{closed_form_1d, mean, Spectral, TorusGrid};

pub const MIN_NOISE_POINTS: usize = 16;
pub const MIN_ANGLE_POINTS: usize = 8;
/// Interpolation supports at most this many slow dimensions.
pub const MAX_SLOW_DIM: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientOptions {
    /// Noise grid points per axis.
    pub m_w: usize,
    /// Angle grid points per axis for averaging.
    pub m_phi: usize,
    pub fd_step: f64,
}

impl Default for CoefficientOptions {
    fn default() -> Self {
        Self { m_w: 64, m_phi: 8, fd_step: 1e-4 }
    }
}

impl CoefficientOptions {
    fn check_local(&self) -> Result<()> {
        if !(self.fd_step > 0.0) || !self.fd_step.is_finite() {
            return Err(Error::FdStepInvalid(self.fd_step));
        }
        if self.m_w < MIN_NOISE_POINTS {
            return Err(Error::GridTooCoarse { points: self.m_w, min: MIN_NOISE_POINTS });
        }
        Ok(())
    }

    fn check_angles(&self) -> Result<()> {
        self.check_local()?;
        if self.m_phi < MIN_ANGLE_POINTS {
            return Err(Error::GridTooCoarse { points: self.m_phi, min: MIN_ANGLE_POINTS });
        }
        Ok(())
    }
}

/// `Ã` (row-major `n×n`) and `B̃` at one slow point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalCoefficients {
    pub n: usize,
    pub a_tilde: Vec<f64>,
    pub b_tilde: Vec<f64>,
    pub h: Vec<f64>,
    pub phi: Vec<f64>,
}

impl LocalCoefficients {
    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.a_tilde[i * self.n + j]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.a_tilde, self.n)
    }

    /// Largest componentwise difference in `Ã` and `B̃`.
    pub fn max_abs_diff(&self, other: &LocalCoefficients) -> f64 {
        self.a_tilde
            .iter()
            .zip(&other.a_tilde)
            .chain(self.b_tilde.iter().zip(&other.b_tilde))
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Central-difference step in an action coordinate; shrinks near `h = 0` so
/// the stencil stays on the same side.
fn action_step(fd_step: f64, h: f64) -> f64 {
    if h != 0.0 {
        fd_step.min(0.05 * h.abs())
    } else {
        fd_step
    }
}

fn sample_field(model: &dyn SlowFastModel, grid: TorusGrid, x: &[f64], n: usize, out: &mut [f64]) {
    let Dims { p, m, .. } = model.dims();
    let big = grid.len();
    let (h, phi) = x.split_at(n);
    let mut w = vec![0.0; m];
    let mut b = vec![0.0; n + p];
    for k in 0..big {
        grid.coords(k, &mut w);
        model.field(h, &phi[..p], &w, &mut b);
        for (c, v) in b.iter().enumerate() {
            out[c * big + k] = *v;
        }
    }
}

fn zero_mean_corrector(spectral: &mut Spectral, g: &[f64]) -> Vec<Complex64> {
    let mut ghat = spectral.forward_real(g);
    ghat[0] = Complex64::new(0.0, 0.0);
    spectral.poisson_from_spectrum(&ghat)
}

/// Generic spectral pipeline for `Ã(h, φ)`, `B̃(h, φ)`.
pub fn local_coefficients(
    model: &dyn SlowFastModel,
    h: &[f64],
    phi: &[f64],
    opts: &CoefficientOptions,
) -> Result<LocalCoefficients> {
    opts.check_local()?;
    let Dims { n, p, m } = model.dims();
    if h.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: h.len() });
    }
    if phi.len() != p {
        return Err(Error::DimensionMismatch { expected: p, got: phi.len() });
    }
    model.check_domain(h)?;
    let grid = TorusGrid::new(m, opts.m_w)?;
    let big = grid.len();
    let inv = 1.0 / big as f64;
    let mut spectral = Spectral::new(grid);

    let mut x: Vec<f64> = h.iter().chain(phi).copied().collect();
    let mut b = vec![0.0; (n + p) * big];
    sample_field(model, grid, &x, n, &mut b);

    let mut grads = Vec::with_capacity(n * m);
    for i in 0..n {
        let uhat = zero_mean_corrector(&mut spectral, &b[i * big..(i + 1) * big]);
        for a in 0..m {
            let d = spectral.derivative(&uhat, a);
            grads.push(spectral.inverse_real(d));
        }
    }
    let mut a_tilde = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let mut s = 0.0;
            for a in 0..m {
                let (gi, gj) = (&grads[i * m + a], &grads[j * m + a]);
                s += gi.iter().zip(gj).map(|(u, v)| u * v).sum::<f64>();
            }
            a_tilde[i * n + j] = s * inv;
            a_tilde[j * n + i] = s * inv;
        }
    }

    // ∇_x u_i: the cell problem is linear, so difference α and solve once.
    let mut b_tilde = vec![0.0; n];
    let mut bp = vec![0.0; (n + p) * big];
    let mut bm = vec![0.0; (n + p) * big];
    let mut diff = vec![0.0; big];
    for d in 0..n + p {
        let step = if d < n { action_step(opts.fd_step, h[d]) } else { opts.fd_step };
        let x0 = x[d];
        x[d] = x0 + step;
        sample_field(model, grid, &x, n, &mut bp);
        x[d] = x0 - step;
        sample_field(model, grid, &x, n, &mut bm);
        x[d] = x0;
        let bd = &b[d * big..(d + 1) * big];
        for i in 0..n {
            let (sp, sm) = (&bp[i * big..(i + 1) * big], &bm[i * big..(i + 1) * big]);
            for k in 0..big {
                diff[k] = (sp[k] - sm[k]) / (2.0 * step);
            }
            let duhat = zero_mean_corrector(&mut spectral, &diff);
            let du = spectral.inverse_real(duhat);
            b_tilde[i] += du.iter().zip(bd).map(|(u, v)| u * v).sum::<f64>() * inv;
        }
    }
    Ok(LocalCoefficients { n, a_tilde, b_tilde, h: h.to_vec(), phi: phi.to_vec() })
}

/// Per-oscillator data for the one-dimensional formulas.
struct OscillatorTerms {
    /// `∂_w u_{i1}` on the grid.
    dw_u: Vec<f64>,
    /// `∂u_{i1}/∂h_k` and `∂u_{i1}/∂φ_k` for `k = 0, 1`.
    du_dh: [Vec<f64>; 2],
    du_dphi: [Vec<f64>; 2],
    beta1: Vec<f64>,
    beta2: Vec<f64>,
}

/// Independent route to `Ã`, `B̃` for the coupled-oscillator family using
/// the one-dimensional correctors `U_ij` from the explicit convolution
/// formula, analytic derivatives of the amplitudes, and the reduction of
/// the double integrals over 𝕋² to products of integrals over 𝕋¹.
pub fn coupled_oscillator_local_coefficients_closed(
    model: &dyn SlowFastModel,
    h: &[f64],
    phi: &[f64],
    m_w: usize,
) -> Result<LocalCoefficients> {
    let cm = model.as_coupled().ok_or_else(|| {
        Error::ModelKindMismatch(format!("model `{}` is not a coupled-oscillator model", model.name()))
    })?;
    if h.len() != 2 || phi.len() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: h.len().max(phi.len()) });
    }
    if m_w < MIN_NOISE_POINTS {
        return Err(Error::GridTooCoarse { points: m_w, min: MIN_NOISE_POINTS });
    }
    model.check_domain(h)?;
    let spec = cm.spec();
    let x = cartesian_point(h, phi);
    let r = [(2.0 * h[0]).sqrt(), (2.0 * h[1]).sqrt()];
    let cs: [(f64, f64); 2] = [(2.0 * PI * phi[0]).sin_cos(), (2.0 * PI * phi[1]).sin_cos()];

    let terms: Vec<OscillatorTerms> = (0..2)
        .map(|i| {
            let (s, c) = cs[i];
            let mut amp = [0.0; 2];
            let mut damp_dh = [[0.0; 2]; 2];
            let mut damp_dphi = [[0.0; 2]; 2];
            let mut g = [vec![], vec![]];
            let mut u = [vec![], vec![]];
            let mut du = [vec![], vec![]];
            for j in 0..2 {
                let a = spec.alpha(i, j);
                amp[j] = a.amplitude(&x);
                for k in 0..2 {
                    let (sk, ck) = cs[k];
                    let (g0, g1) = (a.gain[2 * k], a.gain[2 * k + 1]);
                    damp_dh[j][k] = (g0 * ck + g1 * sk) / r[k];
                    damp_dphi[j][k] = 2.0 * PI * r[k] * (-g0 * sk + g1 * ck);
                }
                g[j] = (0..m_w).map(|q| a.profile(q as f64 / m_w as f64)).collect();
                let (uj, duj) = closed_form_1d(&g[j]);
                u[j] = uj;
                du[j] = duj;
            }
            let ri = r[i];
            let lin = |f1: f64, f2: f64, v: &[Vec<f64>; 2]| -> Vec<f64> {
                (0..m_w).map(|q| f1 * v[0][q] + f2 * v[1][q]).collect()
            };
            let dw_u = lin(ri * c * amp[0], ri * s * amp[1], &du);
            let beta1 = lin(ri * c * amp[0], ri * s * amp[1], &g);
            let beta2 = lin(-s * amp[0] / (2.0 * PI * ri), c * amp[1] / (2.0 * PI * ri), &g);
            let du_dh = [0, 1].map(|k| {
                let mut f1 = ri * c * damp_dh[0][k];
                let mut f2 = ri * s * damp_dh[1][k];
                if k == i {
                    f1 += c * amp[0] / ri;
                    f2 += s * amp[1] / ri;
                }
                lin(f1, f2, &u)
            });
            let du_dphi = [0, 1].map(|k| {
                let mut f1 = ri * c * damp_dphi[0][k];
                let mut f2 = ri * s * damp_dphi[1][k];
                if k == i {
                    f1 += -2.0 * PI * ri * s * amp[0];
                    f2 += 2.0 * PI * ri * c * amp[1];
                }
                lin(f1, f2, &u)
            });
            OscillatorTerms { dw_u, du_dh, du_dphi, beta1, beta2 }
        })
        .collect();

    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / m_w as f64;
    let mut a_tilde = vec![0.0; 4];
    let mut b_tilde = vec![0.0; 2];
    for i in 0..2 {
        let t = &terms[i];
        a_tilde[i * 2 + i] = dot(&t.dw_u, &t.dw_u);
        let j = 1 - i;
        let o = &terms[j];
        b_tilde[i] = dot(&t.du_dh[i], &t.beta1)
            + dot(&t.du_dphi[i], &t.beta2)
            + mean(&t.du_dh[j]) * mean(&o.beta1)
            + mean(&t.du_dphi[j]) * mean(&o.beta2);
    }
    let a12 = mean(&terms[0].dw_u) * mean(&terms[1].dw_u);
    a_tilde[1] = a12;
    a_tilde[2] = a12;
    Ok(LocalCoefficients { n: 2, a_tilde, b_tilde, h: h.to_vec(), phi: phi.to_vec() })
}

/// `Ā(h)`, `B̄(h)` at one slow point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedPoint {
    pub h: Vec<f64>,
    pub a_bar: Vec<f64>,
    pub b_bar: Vec<f64>,
}

fn angle_nodes(p: usize, m_phi: usize) -> Vec<Vec<f64>> {
    let total = m_phi.pow(p as u32);
    (0..total)
        .map(|mut idx| {
            let mut v = vec![0.0; p];
            for a in (0..p).rev() {
                v[a] = (idx % m_phi) as f64 / m_phi as f64;
                idx /= m_phi;
            }
            v
        })
        .collect()
}

/// Uniform periodic quadrature of the local coefficients over `φ ∈ 𝕋ᵖ`.
pub fn average_over_angles(
    model: &dyn SlowFastModel,
    h: &[f64],
    opts: &CoefficientOptions,
) -> Result<AveragedPoint> {
    opts.check_angles()?;
    let Dims { n, p, .. } = model.dims();
    let nodes = angle_nodes(p, opts.m_phi);
    let locals: Vec<LocalCoefficients> = nodes
        .par_iter()
        .map(|phi| local_coefficients(model, h, phi, opts))
        .collect::<Result<_>>()?;
    let mut a_bar = vec![0.0; n * n];
    let mut b_bar = vec![0.0; n];
    for l in &locals {
        a_bar.iter_mut().zip(&l.a_tilde).for_each(|(s, v)| *s += v);
        b_bar.iter_mut().zip(&l.b_tilde).for_each(|(s, v)| *s += v);
    }
    let inv = 1.0 / locals.len() as f64;
    a_bar.iter_mut().chain(b_bar.iter_mut()).for_each(|v| *v *= inv);
    Ok(AveragedPoint { h: h.to_vec(), a_bar, b_bar })
}

/// Rectangular grid over the slow variables; nodes include both ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HGrid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub points: Vec<usize>,
}

impl HGrid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, points: Vec<usize>) -> Result<Self> {
        let g = Self { lo, hi, points };
        g.check()?;
        Ok(g)
    }

    pub fn check(&self) -> Result<()> {
        let n = self.lo.len();
        if n == 0 || n > MAX_SLOW_DIM {
            return Err(Error::InvalidGrid(format!("slow dimension {n} not in 1..={MAX_SLOW_DIM}")));
        }
        if self.hi.len() != n || self.points.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: self.hi.len().min(self.points.len()) });
        }
        for a in 0..n {
            if !(self.hi[a] > self.lo[a]) || self.points[a] < 2 {
                return Err(Error::InvalidGrid(format!(
                    "axis {a}: need lo < hi and at least 2 points"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, a: usize) -> f64 {
        (self.hi[a] - self.lo[a]) / (self.points[a] - 1) as f64
    }

    /// Node coordinates for a flat index (last axis fastest).
    pub fn node(&self, mut idx: usize, out: &mut [f64]) {
        for a in (0..self.dim()).rev() {
            let i = idx % self.points[a];
            idx /= self.points[a];
            out[a] = self.lo[a] + self.spacing(a) * i as f64;
        }
    }

    pub fn contains(&self, h: &[f64]) -> bool {
        h.iter().enumerate().all(|(a, &v)| v >= self.lo[a] && v <= self.hi[a])
    }
}

/// `Ā`, `B̄` tabulated on an [`HGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedCoefficients {
    pub grid: HGrid,
    pub n: usize,
    /// `len × n × n`, row-major per node.
    pub a_bar: Vec<f64>,
    /// `len × n`.
    pub b_bar: Vec<f64>,
    pub model: String,
    pub options: Option<CoefficientOptions>,
}

impl AveragedCoefficients {
    /// Tabulates closed-form coefficients `f(h, A, B)`.
    pub fn from_fn(
        grid: HGrid,
        model: impl Into<String>,
        f: impl Fn(&[f64], &mut [f64], &mut [f64]),
    ) -> Result<Self> {
        grid.check()?;
        let n = grid.dim();
        let mut a_bar = vec![0.0; grid.len() * n * n];
        let mut b_bar = vec![0.0; grid.len() * n];
        let mut h = vec![0.0; n];
        for k in 0..grid.len() {
            grid.node(k, &mut h);
            f(&h, &mut a_bar[k * n * n..(k + 1) * n * n], &mut b_bar[k * n..(k + 1) * n]);
        }
        Ok(Self { grid, n, a_bar, b_bar, model: model.into(), options: None })
    }

    pub fn node_a(&self, k: usize) -> &[f64] {
        &self.a_bar[k * self.n * self.n..(k + 1) * self.n * self.n]
    }

    pub fn node_b(&self, k: usize) -> &[f64] {
        &self.b_bar[k * self.n..(k + 1) * self.n]
    }

    /// Multilinear interpolation; `false` if `h` lies outside the grid.
    pub fn interpolate(&self, h: &[f64], a: &mut [f64], b: &mut [f64]) -> bool {
        let n = self.n;
        let g = &self.grid;
        if !g.contains(h) {
            return false;
        }
        let mut base = [0usize; MAX_SLOW_DIM];
        let mut t = [0.0f64; MAX_SLOW_DIM];
        for ax in 0..n {
            let s = (h[ax] - g.lo[ax]) / g.spacing(ax);
            let i = (s.floor() as usize).min(g.points[ax] - 2);
            base[ax] = i;
            t[ax] = s - i as f64;
        }
        a[..n * n].iter_mut().for_each(|v| *v = 0.0);
        b[..n].iter_mut().for_each(|v| *v = 0.0);
        for corner in 0..(1usize << n) {
            let mut wgt = 1.0;
            let mut flat = 0usize;
            for ax in 0..n {
                let bit = (corner >> ax) & 1;
                wgt *= if bit == 1 { t[ax] } else { 1.0 - t[ax] };
                flat = flat * g.points[ax] + base[ax] + bit;
            }
            if wgt == 0.0 {
                continue;
            }
            for (o, v) in a[..n * n].iter_mut().zip(self.node_a(flat)) {
                *o += wgt * v;
            }
            for (o, v) in b[..n].iter_mut().zip(self.node_b(flat)) {
                *o += wgt * v;
            }
        }
        true
    }
}

/// Averages the coefficients at every node of `grid` (parallel over nodes,
/// written back by index).
pub fn tabulate_averaged(
    model: &dyn SlowFastModel,
    grid: &HGrid,
    opts: &CoefficientOptions,
) -> Result<AveragedCoefficients> {
    grid.check()?;
    opts.check_angles()?;
    let n = model.dims().n;
    if grid.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: grid.dim() });
    }
    let points: Vec<AveragedPoint> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let mut h = vec![0.0; n];
            grid.node(k, &mut h);
            average_over_angles(model, &h, opts)
        })
        .collect::<Result<_>>()?;
    let mut a_bar = Vec::with_capacity(grid.len() * n * n);
    let mut b_bar = Vec::with_capacity(grid.len() * n);
    for p in &points {
        a_bar.extend_from_slice(&p.a_bar);
        b_bar.extend_from_slice(&p.b_bar);
    }
    Ok(AveragedCoefficients {
        grid: grid.clone(),
        n,
        a_bar,
        b_bar,
        model: model.name().to_string(),
        options: Some(*opts),
    })
}

/// The limiting generator: tabulated coefficients with multilinear
/// interpolation and a PSD square root of `Ā`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub coeffs: AveragedCoefficients,
    /// Whether any node needed eigenvalue flooring.
    pub clamped: bool,
    /// Largest negative eigenvalue magnitude clamped at a node.
    pub clamp_magnitude: f64,
    /// Largest `|Ā_ij − Ā_ji|` over the nodes.
    pub asymmetry: f64,
}

impl GeneratorSpec {
    pub fn new(coeffs: AveragedCoefficients) -> Self {
        let n = coeffs.n;
        let mut clamp_magnitude = 0.0_f64;
        let mut asymmetry = 0.0_f64;
        for k in 0..coeffs.grid.len() {
            let a = coeffs.node_a(k);
            for i in 0..n {
                for j in 0..n {
                    asymmetry = asymmetry.max((a[i * n + j] - a[j * n + i]).abs());
                }
            }
            let e = min_eigenvalue(a, n);
            if e < 0.0 {
                clamp_magnitude = clamp_magnitude.max(-e);
            }
        }
        Self { coeffs, clamped: clamp_magnitude > 0.0, clamp_magnitude, asymmetry }
    }

    pub fn dim(&self) -> usize {
        self.coeffs.n
    }

    pub fn eval(&self, h: &[f64], a: &mut [f64], b: &mut [f64]) -> bool {
        self.coeffs.interpolate(h, a, b)
    }

    /// `Lf(h)` given the gradient and row-major Hessian of `f` at `h`.
    pub fn apply(&self, h: &[f64], grad: &[f64], hess: &[f64]) -> Option<f64> {
        let n = self.dim();
        let mut a = [0.0; MAX_SLOW_DIM * MAX_SLOW_DIM];
        let mut b = [0.0; MAX_SLOW_DIM];
        if !self.eval(h, &mut a, &mut b) {
            return None;
        }
        let mut s = 0.0;
        for i in 0..n {
            s += b[i] * grad[i];
            for j in 0..n {
                s += 0.5 * a[i * n + j] * hess[i * n + j];
            }
        }
        Some(s)
    }

    /// Writes `σ = Ā^{1/2}` (floored); returns `None` outside the grid.
    pub fn sqrt_diffusion(&self, h: &[f64], sigma: &mut [f64], b: &mut [f64]) -> Option<f64> {
        let n = self.dim();
        let mut a = [0.0; MAX_SLOW_DIM * MAX_SLOW_DIM];
        let mut work = [0.0; 2 * MAX_SLOW_DIM * MAX_SLOW_DIM + MAX_SLOW_DIM];
        if !self.eval(h, &mut a, b) {
            return None;
        }
        Some(psd_sqrt(&a[..n * n], n, sigma, &mut work))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipticityReport {
    pub min_eigenvalue: f64,
    pub h: Vec<f64>,
    pub phi: Vec<f64>,
    pub a_floor: f64,
    pub holds: bool,
    /// `"elliptic"`, `"degenerate"` (min eigenvalue ≈ 0) or `"below_floor"`.
    pub status: String,
    /// `sup |Ã_ij|` and `sup |B̃_i|` over the samples.
    pub sup_a: f64,
    pub sup_b: f64,
}

/// Minimum eigenvalue of `Ã` over sampled local coefficients.
pub fn check_uniform_ellipticity(coeffs: &[LocalCoefficients], a_floor: f64) -> EllipticityReport {
    let mut rep = EllipticityReport {
        min_eigenvalue: f64::INFINITY,
        h: vec![],
        phi: vec![],
        a_floor,
        holds: false,
        status: String::new(),
        sup_a: 0.0,
        sup_b: 0.0,
    };
    for c in coeffs {
        let e = c.min_eigenvalue();
        if e < rep.min_eigenvalue {
            rep.min_eigenvalue = e;
            rep.h = c.h.clone();
            rep.phi = c.phi.clone();
        }
        rep.sup_a = c.a_tilde.iter().fold(rep.sup_a, |m, v| m.max(v.abs()));
        rep.sup_b = c.b_tilde.iter().fold(rep.sup_b, |m, v| m.max(v.abs()));
    }
    rep.holds = rep.min_eigenvalue >= a_floor && a_floor > 0.0;
    rep.status = if rep.min_eigenvalue.abs() <= 1e-12 * rep.sup_a.max(1.0) {
        "degenerate"
    } else if rep.holds {
        "elliptic"
    } else {
        "below_floor"
    }
    .to_string();
    rep
}

/// Local coefficients on a product of slow points and a uniform angle grid.
pub fn local_coefficient_grid(
    model: &dyn SlowFastModel,
    h_points: &[Vec<f64>],
    m_phi: usize,
    opts: &CoefficientOptions,
) -> Result<Vec<LocalCoefficients>> {
    let p = model.dims().p;
    let nodes = angle_nodes(p, m_phi);
    let jobs: Vec<(usize, usize)> =
        (0..h_points.len()).flat_map(|i| (0..nodes.len()).map(move |j| (i, j))).collect();
    jobs.par_iter()
        .map(|&(i, j)| local_coefficients(model, &h_points[i], &nodes[j], opts))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallActionReport {
    pub h2: f64,
    pub d11_direct: f64,
    pub d11_slope: f64,
    pub samples: Vec<f64>,
    pub a11_bar: Vec<f64>,
}

/// Compares `D₁₁(h₂) = mean_{φ₂} ∫ (∂_w U₁₁)² + (∂_w U₁₂)² dw` at `x₁ = 0`
/// with the slope through the origin of `Ā₁₁(·, h₂)` over `h1_samples`.
pub fn small_action_asymptotics(
    model: &dyn SlowFastModel,
    h2: f64,
    h1_samples: &[f64],
    opts: &CoefficientOptions,
) -> Result<SmallActionReport> {
    let cm = model.as_coupled().ok_or_else(|| {
        Error::ModelKindMismatch(format!("model `{}` is not a coupled-oscillator model", model.name()))
    })?;
    if h1_samples.len() < 4 {
        return Err(Error::DomainError(format!("need at least 4 samples, got {}", h1_samples.len())));
    }
    if let Some(bad) = h1_samples.iter().find(|&&v| !(v > 0.0 && v <= 0.25)) {
        return Err(Error::DomainError(format!("sample {bad} outside (0, 0.25]")));
    }
    opts.check_angles()?;
    let spec = cm.spec();
    let m_w = opts.m_w;
    let mut d11 = 0.0;
    for q in 0..opts.m_phi {
        let phi2 = q as f64 / opts.m_phi as f64;
        let (s2, c2) = (2.0 * PI * phi2).sin_cos();
        let r2 = (2.0 * h2).sqrt();
        let x = [0.0, 0.0, r2 * c2, r2 * s2];
        for j in 0..2 {
            let a = spec.alpha(0, j);
            let g: Vec<f64> = (0..m_w).map(|k| a.profile(k as f64 / m_w as f64)).collect();
            let (_, du) = closed_form_1d(&g);
            let amp = a.amplitude(&x);
            d11 += amp * amp * du.iter().map(|v| v * v).sum::<f64>() / m_w as f64;
        }
    }
    d11 /= opts.m_phi as f64;
    let a11: Vec<f64> = h1_samples
        .iter()
        .map(|&h1| average_over_angles(model, &[h1, h2], opts).map(|p| p.a_bar[0]))
        .collect::<Result<_>>()?;
    let slope = if a11.iter().all(|v| *v == 0.0) { 0.0 } else { slope_through_origin(h1_samples, &a11) };
    Ok(SmallActionReport { h2, d11_direct: d11, d11_slope: slope, samples: h1_samples.to_vec(), a11_bar: a11 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InaccessibilitySample {
    pub h: Vec<f64>,
    pub lf: f64,
    /// `B_i − A_ii/(2h_i)`.
    pub drift_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InaccessibilityReport {
    pub axis: usize,
    pub samples: Vec<InaccessibilitySample>,
    pub max_lf: f64,
    pub passed: bool,
}

/// Evaluates `Lf` for `f(h) = ln(−ln h_axis)` at the given slow points, with
/// coefficients `(A, B)` supplied by `coeffs`. Passes iff every `Lf < 0`.
pub fn inaccessibility_certificate(
    points: &[Vec<f64>],
    axis: usize,
    mut coeffs: impl FnMut(&[f64]) -> Result<(Vec<f64>, Vec<f64>)>,
) -> Result<InaccessibilityReport> {
    let lim = (-1.0f64).exp();
    let mut samples = Vec::with_capacity(points.len());
    for h in points {
        let x = h[axis];
        if !(x > 0.0 && x < lim) {
            return Err(Error::DomainError(format!("h_{axis} = {x} outside (0, 1/e)")));
        }
        let (a, b) = coeffs(h)?;
        let n = h.len();
        let l = x.ln();
        let f1 = 1.0 / (x * l);
        let f2 = -(l + 1.0) / (x * l).powi(2);
        let aii = a[axis * n + axis];
        let lf = 0.5 * aii * f2 + b[axis] * f1;
        samples.push(InaccessibilitySample { h: h.clone(), lf, drift_margin: b[axis] - aii / (2.0 * x) });
    }
    let max_lf = samples.iter().map(|s| s.lf).fold(f64::NEG_INFINITY, f64::max);
    Ok(InaccessibilityReport { axis, passed: !samples.is_empty() && max_lf < 0.0, samples, max_lf })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{coupled_oscillator_model, CoupledOscillatorSpec, FrequencyProfile, FnModel, Perturbation};
    use std::f64::consts::PI;

    fn opts(m_w: usize) -> CoefficientOptions {
        CoefficientOptions { m_w, m_phi: 8, fd_step: 1e-4 }
    }

    fn single() -> crate::systems::CoupledOscillatorModel {
        coupled_oscillator_model(CoupledOscillatorSpec::single_noised()).unwrap()
    }

    #[test]
    fn zero_perturbation_gives_zero() {
        let m = coupled_oscillator_model(CoupledOscillatorSpec::unperturbed(
            FrequencyProfile::Constant { value: 1.0 },
            FrequencyProfile::Constant { value: 2.0 },
        ))
        .unwrap();
        let c = local_coefficients(&m, &[0.7, 1.1], &[0.2, 0.4], &opts(16)).unwrap();
        assert!(c.a_tilde.iter().chain(&c.b_tilde).all(|v| v.abs() < 1e-14), "{c:?}");
        let cc = coupled_oscillator_local_coefficients_closed(&m, &[0.7, 1.1], &[0.2, 0.4], 64).unwrap();
        assert!(cc.a_tilde.iter().chain(&cc.b_tilde).all(|v| *v == 0.0));
        let avg = average_over_angles(&m, &[0.7, 1.1], &opts(16)).unwrap();
        assert!(avg.a_bar.iter().chain(&avg.b_bar).all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn single_noised_values() {
        let m = single();
        for phi in [[0.0, 0.0], [0.3, 0.8]] {
            let c = local_coefficients(&m, &[0.8, 1.2], &phi, &opts(32)).unwrap();
            assert!((c.a(0, 0) - 0.8 / (PI * PI)).abs() < 1e-12);
            assert!(c.a(1, 1).abs() < 1e-15 && c.a(0, 1).abs() < 1e-15);
            assert!((c.b_tilde[0] - 1.0 / (2.0 * PI * PI)).abs() < 1e-8, "{c:?}");
            let cc = coupled_oscillator_local_coefficients_closed(&m, &[0.8, 1.2], &phi, 256).unwrap();
            assert!(c.max_abs_diff(&cc) < 1e-8, "{c:?} {cc:?}");
        }
    }

    #[test]
    fn closed_form_rejects_other_models() {
        let m = FnModel::new("x", Dims { n: 1, p: 1, m: 1 }, |_, _, _, o| o.fill(0.0), |_, o| o[0] = 1.0);
        assert!(matches!(
            coupled_oscillator_local_coefficients_closed(&m, &[1.0], &[0.0], 64),
            Err(Error::ModelKindMismatch(_))
        ));
    }

    #[test]
    fn option_errors() {
        let m = single();
        let bad = CoefficientOptions { fd_step: 0.0, ..opts(32) };
        assert!(matches!(local_coefficients(&m, &[1.0, 1.0], &[0.0, 0.0], &bad), Err(Error::FdStepInvalid(_))));
        assert!(matches!(
            local_coefficients(&m, &[1.0, 1.0], &[0.0, 0.0], &opts(8)),
            Err(Error::GridTooCoarse { .. })
        ));
        assert!(matches!(
            local_coefficients(&m, &[0.0, 1.0], &[0.0, 0.0], &opts(16)),
            Err(Error::OriginSingularity { .. })
        ));
    }

    #[test]
    fn x_dependent_generic_matches_closed() {
        let spec = CoupledOscillatorSpec {
            alpha11: Perturbation::cos_mode(1, 1.0).with_gain([0.2, -0.1, 0.05, 0.1]),
            alpha12: Perturbation { sin: vec![0.5, 0.3], ..Default::default() },
            alpha21: Perturbation::cos_mode(2, 0.8).with_gain([0.0, 0.1, -0.2, 0.0]),
            alpha22: Perturbation::sin_mode(1, 0.6).with_gain([0.1, 0.0, 0.0, 0.1]),
            ..CoupledOscillatorSpec::single_noised()
        };
        let m = coupled_oscillator_model(spec).unwrap();
        let (h, phi) = ([0.6, 1.4], [0.11, 0.73]);
        let g = local_coefficients(&m, &h, &phi, &opts(64)).unwrap();
        let c = coupled_oscillator_local_coefficients_closed(&m, &h, &phi, 256).unwrap();
        assert!(g.max_abs_diff(&c) < 1e-7, "{g:?}\n{c:?}");
        assert!(g.a(0, 1).abs() < 1e-12);
    }

    #[test]
    fn scaling_is_quadratic() {
        let spec = CoupledOscillatorSpec {
            alpha11: Perturbation::cos_mode(1, 1.0).with_gain([0.2, 0.0, 0.0, 0.1]),
            ..CoupledOscillatorSpec::doubly_noised()
        };
        let mut doubled = spec.clone();
        for a in [&mut doubled.alpha11, &mut doubled.alpha12, &mut doubled.alpha21, &mut doubled.alpha22] {
            a.cos.iter_mut().chain(a.sin.iter_mut()).for_each(|v| *v *= 2.0);
        }
        let (h, phi) = ([0.9, 0.5], [0.3, 0.6]);
        let c1 = local_coefficients(&coupled_oscillator_model(spec).unwrap(), &h, &phi, &opts(32)).unwrap();
        let c2 = local_coefficients(&coupled_oscillator_model(doubled).unwrap(), &h, &phi, &opts(32)).unwrap();
        for (a, b) in c1.a_tilde.iter().chain(&c1.b_tilde).zip(c2.a_tilde.iter().chain(&c2.b_tilde)) {
            assert!((4.0 * a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn ellipticity_of_doubly_noised() {
        let m = coupled_oscillator_model(CoupledOscillatorSpec::doubly_noised()).unwrap();
        let pts: Vec<Vec<f64>> = [0.5, 1.0, 2.0]
            .iter()
            .flat_map(|&a| [0.5, 1.0, 2.0].iter().map(move |&b| vec![a, b]))
            .collect();
        let locals = local_coefficient_grid(&m, &pts, 8, &opts(16)).unwrap();
        let rep = check_uniform_ellipticity(&locals, 0.04);
        assert!((rep.min_eigenvalue - 0.5 / (PI * PI)).abs() < 1e-12);
        assert!(rep.holds);
        assert_eq!(rep.status, "elliptic");
    }

    #[test]
    fn degenerate_ellipticity() {
        let m = coupled_oscillator_model(CoupledOscillatorSpec::unperturbed(
            FrequencyProfile::Constant { value: 1.0 },
            FrequencyProfile::Constant { value: 2.0 },
        ))
        .unwrap();
        let locals = local_coefficient_grid(&m, &[vec![1.0, 1.0]], 8, &opts(16)).unwrap();
        let rep = check_uniform_ellipticity(&locals, 0.04);
        assert_eq!(rep.min_eigenvalue, 0.0);
        assert_eq!(rep.status, "degenerate");
        assert!(!rep.holds);
    }

    #[test]
    fn small_action_slope() {
        let rep = small_action_asymptotics(&single(), 1.0, &[0.02, 0.05, 0.1, 0.2], &opts(32)).unwrap();
        assert!((rep.d11_direct - 1.0 / (PI * PI)).abs() < 1e-8, "{rep:?}");
        assert!((rep.d11_slope - 1.0 / (PI * PI)).abs() < 1e-10);
        assert!(small_action_asymptotics(&single(), 1.0, &[0.02, 0.05, 0.1], &opts(32)).is_err());
    }

    #[test]
    fn certificate_arithmetic() {
        let pts = vec![vec![0.01]];
        let rep = inaccessibility_certificate(&pts, 0, |h| Ok((vec![h[0]], vec![0.5]))).unwrap();
        assert!((rep.samples[0].lf + 2.36).abs() < 0.01, "{rep:?}");
        assert!(rep.passed);
        let rep = inaccessibility_certificate(&pts, 0, |h| Ok((vec![h[0]], vec![0.0]))).unwrap();
        assert!((rep.samples[0].lf - 8.50).abs() < 0.01);
        assert!(!rep.passed);
        let rep = inaccessibility_certificate(&pts, 0, |_| Ok((vec![0.0], vec![0.0]))).unwrap();
        assert_eq!(rep.max_lf, 0.0);
        assert!(!rep.passed);
        assert!(matches!(
            inaccessibility_certificate(&[vec![0.5]], 0, |_| Ok((vec![0.0], vec![0.0]))),
            Err(Error::DomainError(_))
        ));
    }

    #[test]
    fn interpolation_reproduces_affine() {
        let grid = HGrid::new(vec![0.0, 1.0], vec![2.0, 3.0], vec![3, 5]).unwrap();
        let c = AveragedCoefficients::from_fn(grid, "affine", |h, a, b| {
            a.copy_from_slice(&[h[0], 0.5, 0.5, h[1]]);
            b.copy_from_slice(&[1.0 + h[0] - h[1], 2.0]);
        })
        .unwrap();
        let (mut a, mut b) = ([0.0; 4], [0.0; 2]);
        assert!(c.interpolate(&[0.37, 2.91], &mut a, &mut b));
        assert!((a[0] - 0.37).abs() < 1e-14 && (a[3] - 2.91).abs() < 1e-14);
        assert!((b[0] - (1.0 + 0.37 - 2.91)).abs() < 1e-14);
        assert!(c.interpolate(&[2.0, 3.0], &mut a, &mut b));
        assert!(!c.interpolate(&[2.1, 3.0], &mut a, &mut b));
    }

    #[test]
    fn generator_applies_operator() {
        let grid = HGrid::new(vec![0.0], vec![1.0], vec![2]).unwrap();
        let gen = GeneratorSpec::new(
            AveragedCoefficients::from_fn(grid, "bm", |_, a, b| {
                a[0] = 2.0;
                b[0] = 0.5;
            })
            .unwrap(),
        );
        // f = h²: Lf = ½·2·2 + 0.5·2h
        assert_eq!(gen.apply(&[0.5], &[1.0], &[2.0]), Some(2.5));
        assert!(!gen.clamped);
    }
}
