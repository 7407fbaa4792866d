//! Resonance relations `k·ω(h) = 0`: enumeration, grid scans of the zero
//! sets, and discounted occupation times of their neighborhoods.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulate::{BoxRegion, PathEnsemble};
use crate::stats::{linear_fit, mean_se, LinearFit, MeanEstimate};

pub const MIN_SCAN_GRID: usize = 8;
/// `|k·ω| < tol` at a cell corner counts as a hit.
pub const DEFAULT_SCAN_TOL: f64 = 1e-12;
/// Required `e^{−λT}` for occupation estimates.
pub const MAX_DISCOUNT_TAIL: f64 = 0.01;

/// Integer vector, gcd-reduced with its first nonzero entry positive.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ResonanceVector {
    pub k: Vec<i64>,
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl ResonanceVector {
    pub fn new(mut k: Vec<i64>) -> Result<Self> {
        let g = k.iter().fold(0, |g, &v| gcd(g, v));
        if g == 0 {
            return Err(Error::DomainError("resonance vector must be nonzero".into()));
        }
        let lead = k.iter().copied().find(|&v| v != 0).unwrap_or(1);
        let s = if lead < 0 { -g } else { g };
        k.iter_mut().for_each(|v| *v /= s);
        Ok(Self { k })
    }

    pub fn dot(&self, omega: &[f64]) -> f64 {
        self.k.iter().zip(omega).map(|(&k, w)| k as f64 * w).sum()
    }

    pub fn norm_bound(&self) -> i64 {
        self.k.iter().map(|v| v.abs()).max().unwrap_or(0)
    }

    /// Whether `k` is already its own canonical representative.
    pub fn is_canonical(k: &[i64]) -> bool {
        let g = k.iter().fold(0, |g, &v| gcd(g, v));
        g == 1 && k.iter().copied().find(|&v| v != 0).is_some_and(|v| v > 0)
    }
}

/// All canonical vectors with `max |k_j| ≤ k_max`, in lexicographic order.
pub fn canonical_vectors(p: usize, k_max: i64) -> Vec<ResonanceVector> {
    let mut out = Vec::new();
    let side = (2 * k_max + 1) as usize;
    let total = side.pow(p as u32);
    let mut k = vec![0i64; p];
    for idx in 0..total {
        let mut r = idx;
        for j in (0..p).rev() {
            k[j] = (r % side) as i64 - k_max;
            r /= side;
        }
        if ResonanceVector::is_canonical(&k) {
            out.push(ResonanceVector { k: k.clone() });
        }
    }
    out
}

/// Frequency fields usable from configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OmegaField {
    Constant { omega: Vec<f64> },
    /// `ω(h) = offset + matrix·h`, one matrix row per frequency.
    Affine { offset: Vec<f64>, matrix: Vec<Vec<f64>> },
}

impl OmegaField {
    pub fn p(&self) -> usize {
        match self {
            OmegaField::Constant { omega } => omega.len(),
            OmegaField::Affine { offset, .. } => offset.len(),
        }
    }

    pub fn eval(&self, h: &[f64], out: &mut [f64]) {
        match self {
            OmegaField::Constant { omega } => out.copy_from_slice(omega),
            OmegaField::Affine { offset, matrix } => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = offset[i] + matrix[i].iter().zip(h).map(|(a, x)| a * x).sum::<f64>();
                }
            }
        }
    }

    pub fn check(&self, n: usize) -> Result<()> {
        if let OmegaField::Affine { offset, matrix } = self {
            if matrix.len() != offset.len() {
                return Err(Error::DimensionMismatch { expected: offset.len(), got: matrix.len() });
            }
            if let Some(row) = matrix.iter().find(|r| r.len() != n) {
                return Err(Error::DimensionMismatch { expected: n, got: row.len() });
            }
        }
        if self.p() == 0 {
            return Err(Error::InvalidConfig("frequency field has no components".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceCheck {
    pub min_value: f64,
    pub k: ResonanceVector,
    pub resonant: bool,
}

/// Smallest `|k·ω|` over canonical `k` with `max |k_j| ≤ k_max`; ties go to
/// the first vector in lexicographic order.
pub fn is_resonant(omega: &[f64], k_max: i64, tol: f64) -> Result<ResonanceCheck> {
    if k_max < 1 {
        return Err(Error::InvalidConfig(format!("K must be at least 1, got {k_max}")));
    }
    let mut best: Option<(f64, ResonanceVector)> = None;
    for k in canonical_vectors(omega.len(), k_max) {
        let v = k.dot(omega).abs();
        if best.as_ref().is_none_or(|(b, _)| v < *b) {
            best = Some((v, k));
        }
    }
    let (min_value, k) = best.ok_or_else(|| Error::DomainError("no candidate vectors".into()))?;
    Ok(ResonanceCheck { min_value, k, resonant: min_value <= tol })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KScan {
    pub k: ResonanceVector,
    /// Multi-indices of hit cells.
    pub cells: Vec<Vec<usize>>,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceScan {
    pub region: BoxRegion,
    pub grid: usize,
    pub k_max: i64,
    pub tol: f64,
    /// Only vectors with at least one hit cell.
    pub per_k: Vec<KScan>,
    pub vectors_checked: usize,
    /// Fraction of cells hit by some `k`.
    pub thinness: f64,
    pub warnings: Vec<String>,
}

impl ResonanceScan {
    pub fn hit_cells(&self) -> usize {
        (self.thinness * (self.grid.pow(self.region.lo.len() as u32)) as f64).round() as usize
    }
}

pub fn resonance_scan(
    omega: &(dyn Fn(&[f64], &mut [f64]) + Sync),
    p: usize,
    region: &BoxRegion,
    k_max: i64,
    grid: usize,
) -> Result<ResonanceScan> {
    resonance_scan_with(omega, p, region, k_max, grid, DEFAULT_SCAN_TOL)
}

/// Marks the cells of a uniform grid on `region` where `k·ω` changes sign
/// across the corners or nearly vanishes at a corner.
pub fn resonance_scan_with(
    omega: &(dyn Fn(&[f64], &mut [f64]) + Sync),
    p: usize,
    region: &BoxRegion,
    k_max: i64,
    grid: usize,
    tol: f64,
) -> Result<ResonanceScan> {
    if k_max < 1 {
        return Err(Error::InvalidConfig(format!("K must be at least 1, got {k_max}")));
    }
    if grid < MIN_SCAN_GRID {
        return Err(Error::GridTooCoarse { points: grid, min: MIN_SCAN_GRID });
    }
    let n = region.lo.len();
    if region.hi.len() != n || n == 0 {
        return Err(Error::DimensionMismatch { expected: n, got: region.hi.len() });
    }
    if (0..n).any(|a| !(region.hi[a] > region.lo[a]) || !region.hi[a].is_finite() || !region.lo[a].is_finite()) {
        return Err(Error::InvalidGrid("scan region must be a bounded nonempty box".into()));
    }
    let side = grid + 1;
    let n_corners = side.pow(n as u32);
    let n_cells = grid.pow(n as u32);
    let mut corner_omega = vec![0.0; n_corners * p];
    let mut h = vec![0.0; n];
    for c in 0..n_corners {
        let mut r = c;
        for a in 0..n {
            let i = r % side;
            r /= side;
            h[a] = region.lo[a] + (region.hi[a] - region.lo[a]) * i as f64 / grid as f64;
        }
        omega(&h, &mut corner_omega[c * p..(c + 1) * p]);
    }
    // corner offsets of a cell in the flat corner index
    let offsets: Vec<usize> = (0..1usize << n)
        .map(|mask| {
            let mut off = 0;
            let mut stride = 1;
            for a in 0..n {
                if mask >> a & 1 == 1 {
                    off += stride;
                }
                stride *= side;
            }
            off
        })
        .collect();
    let cell_base = |cell: usize| -> (usize, Vec<usize>) {
        let mut r = cell;
        let mut base = 0;
        let mut stride = 1;
        let mut mi = vec![0; n];
        for m in mi.iter_mut() {
            *m = r % grid;
            r /= grid;
            base += *m * stride;
            stride *= side;
        }
        (base, mi)
    };

    let vectors = canonical_vectors(p, k_max);
    let per_k: Vec<(KScan, Vec<usize>)> = vectors
        .par_iter()
        .map(|k| {
            let vals: Vec<f64> = (0..n_corners).map(|c| k.dot(&corner_omega[c * p..(c + 1) * p])).collect();
            let mut cells = Vec::new();
            let mut flat = Vec::new();
            for cell in 0..n_cells {
                let (base, mi) = cell_base(cell);
                let (mut lo, mut hi, mut near) = (f64::INFINITY, f64::NEG_INFINITY, false);
                for &o in &offsets {
                    let v = vals[base + o];
                    lo = lo.min(v);
                    hi = hi.max(v);
                    near |= v.abs() < tol;
                }
                if near || (lo < 0.0 && hi > 0.0) {
                    cells.push(mi);
                    flat.push(cell);
                }
            }
            let fraction = cells.len() as f64 / n_cells as f64;
            (KScan { k: k.clone(), cells, fraction }, flat)
        })
        .collect();

    let mut union = BTreeSet::new();
    let mut warnings = Vec::new();
    let mut kept = Vec::new();
    for (ks, flat) in per_k {
        if ks.cells.is_empty() {
            continue;
        }
        if ks.fraction >= 1.0 {
            warnings.push(format!(
                "k = {:?} is resonant on every cell: the resonance set is not thin (globally resonant frequencies)",
                ks.k.k
            ));
        }
        union.extend(flat);
        kept.push(ks);
    }
    let thinness = union.len() as f64 / n_cells as f64;
    if thinness >= 0.5 && warnings.is_empty() {
        warnings.push(format!("resonance cells cover {:.1}% of the region", 100.0 * thinness));
    }
    Ok(ResonanceScan {
        region: region.clone(),
        grid,
        k_max,
        tol,
        per_k: kept,
        vectors_checked: vectors.len(),
        thinness,
        warnings,
    })
}

/// Monte Carlo estimate of `E ∫₀^T e^{−λs} 1{dist(H(s), N) ≤ γ} ds` by the
/// trapezoid rule on the record grid. The tail beyond `T` is at most
/// `e^{−λT}/λ`, and `e^{−λT} ≤ 0.01` is required.
pub fn occupation_time(
    paths: &PathEnsemble,
    distance: impl Fn(&[f64]) -> f64,
    gamma: f64,
    lambda: f64,
) -> Result<MeanEstimate> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidConfig(format!("lambda must be positive, got {lambda}")));
    }
    let t_end = paths.times.last().copied().unwrap_or(0.0);
    let residual = (-lambda * t_end).exp();
    if residual > MAX_DISCOUNT_TAIL {
        return Err(Error::PathsTooShort { residual });
    }
    let r = paths.n_records();
    let weights: Vec<f64> = paths.times.iter().map(|&t| (-lambda * t).exp()).collect();
    let per_path: Vec<f64> = (0..paths.n_paths)
        .map(|p| {
            let ind = |k: usize| if distance(paths.h_at(p, k)) <= gamma { weights[k] } else { 0.0 };
            let mut s = 0.0;
            let mut prev = ind(0);
            for k in 1..r {
                let cur = ind(k);
                s += 0.5 * (paths.times[k] - paths.times[k - 1]) * (prev + cur);
                prev = cur;
            }
            s
        })
        .collect();
    Ok(mean_se(&per_path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationFit {
    pub gammas: Vec<f64>,
    pub estimates: Vec<MeanEstimate>,
    pub fit: LinearFit,
    /// Fitted constant `C` in `occupation ≤ C·γ`.
    pub c: f64,
}

/// Occupation estimates over several `γ` with a least-squares line.
pub fn occupation_fit(
    paths: &PathEnsemble,
    distance: impl Fn(&[f64]) -> f64,
    gammas: &[f64],
    lambda: f64,
) -> Result<OccupationFit> {
    let estimates = gammas
        .iter()
        .map(|&g| occupation_time(paths, &distance, g, lambda))
        .collect::<Result<Vec<_>>>()?;
    let y: Vec<f64> = estimates.iter().map(|e| e.mean).collect();
    let fit = linear_fit(gammas, &y);
    Ok(OccupationFit { gammas: gammas.to_vec(), estimates, c: fit.slope, fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_min(omega: &[f64], k_max: i64) -> f64 {
        let p = omega.len();
        let side = (2 * k_max + 1) as usize;
        let mut best = f64::INFINITY;
        for idx in 1..side.pow(p as u32) {
            let mut r = idx;
            let mut s = 0.0;
            let mut nonzero = false;
            let mut k = vec![0i64; omega.len()];
            for kj in k.iter_mut().rev() {
                *kj = (r % side) as i64 - k_max;
                r /= side;
                nonzero |= *kj != 0;
            }
            for (kj, w) in k.iter().zip(omega) {
                s += *kj as f64 * w;
            }
            if nonzero {
                best = best.min(s.abs());
            }
        }
        best
    }

    #[test]
    fn canonical_form() {
        assert_eq!(ResonanceVector::new(vec![-4, 2]).unwrap().k, vec![2, -1]);
        assert_eq!(ResonanceVector::new(vec![0, -3]).unwrap().k, vec![0, 1]);
        assert!(ResonanceVector::new(vec![0, 0]).is_err());
        // (2K+1)² − 1 = 8 raw vectors for K = 1, 4 canonical
        assert_eq!(canonical_vectors(2, 1).len(), 4);
    }

    #[test]
    fn resonant_examples() {
        let r = is_resonant(&[1.0, 1.0], 3, 1e-12).unwrap();
        assert_eq!((r.min_value, r.k.k.clone(), r.resonant), (0.0, vec![1, -1], true));
        let r = is_resonant(&[1.0, 0.5], 3, 1e-12).unwrap();
        assert_eq!((r.min_value, r.k.k), (0.0, vec![1, -2]));
        let s2 = 2f64.sqrt();
        let r = is_resonant(&[1.0, s2], 5, 1e-12).unwrap();
        assert_eq!(r.k.k, vec![3, -2]);
        assert!((r.min_value - (3.0 - 2.0 * s2)).abs() < 1e-14);
        assert!(!r.resonant);
        let r = is_resonant(&[1.0, s2], 7, 1e-12).unwrap();
        assert_eq!(r.k.k, vec![7, -5]);
        assert!((r.min_value - (5.0 * s2 - 7.0)).abs() < 1e-14);
    }

    #[test]
    fn scans() {
        let unit = BoxRegion { lo: vec![0.0], hi: vec![1.0] };
        let s2 = 2f64.sqrt();
        let irr = resonance_scan(&|_h, o| o.copy_from_slice(&[1.0, s2]), 2, &unit, 10, 16).unwrap();
        assert!(irr.per_k.is_empty() && irr.thinness == 0.0);
        let rat = resonance_scan(&|_h, o| o.copy_from_slice(&[1.0, 2.0]), 2, &unit, 10, 16).unwrap();
        assert_eq!(rat.thinness, 1.0);
        assert_eq!(rat.per_k[0].k.k, vec![2, -1]);
        assert!(!rat.warnings.is_empty());
        let line = BoxRegion { lo: vec![0.0], hi: vec![2.0] };
        let f = |h: &[f64], o: &mut [f64]| o.copy_from_slice(&[1.0, h[0]]);
        let s = resonance_scan(&f, 2, &line, 1, 16).unwrap();
        let k = s.per_k.iter().find(|k| k.k.k == vec![1, -1]).unwrap();
        assert_eq!(k.cells, vec![vec![7], vec![8]]);
        assert!((k.fraction - 2.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn affine_field() {
        let f = OmegaField::Affine { offset: vec![1.0, 0.0], matrix: vec![vec![0.0], vec![1.0]] };
        f.check(1).unwrap();
        let mut o = [0.0; 2];
        f.eval(&[0.7], &mut o);
        assert_eq!(o, [1.0, 0.7]);
        assert!(f.check(2).is_err());
    }

    proptest! {
        #[test]
        fn enumeration_is_complete(a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0, k in 1i64..4) {
            let omega = [a, b, c];
            let r = is_resonant(&omega, k, 0.0).unwrap();
            prop_assert_eq!(r.min_value, brute_min(&omega, k));
        }

        #[test]
        fn refinement_shrinks_transverse_sets(g in 8usize..40, slope in 0.3f64..3.0) {
            let line = BoxRegion { lo: vec![0.0, 0.0], hi: vec![2.0, 1.0] };
            let f = move |h: &[f64], o: &mut [f64]| o.copy_from_slice(&[1.0 + slope * h[1], 0.5 + h[0]]);
            let coarse = resonance_scan(&f, 2, &line, 2, g).unwrap();
            let fine = resonance_scan(&f, 2, &line, 2, 2 * g).unwrap();
            prop_assert!(fine.thinness <= coarse.thinness + 0.1);
        }
    }
}
