//! Small dense symmetric linear algebra, sized for n ≤ a handful.

/// Cyclic Jacobi eigen-decomposition of a symmetric `n×n` row-major matrix.
///
/// On return `a` is destroyed, `eig` holds eigenvalues and `vecs` the
/// eigenvectors as columns (row-major).
pub fn jacobi_eigen(a: &mut [f64], n: usize, eig: &mut [f64], vecs: &mut [f64]) {
    for i in 0..n {
        for j in 0..n {
            vecs[i * n + j] = if i == j { 1.0 } else { 0.0 };
        }
    }
    for _sweep in 0..64 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[i * n + j] * a[i * n + j];
            }
        }
        let scale: f64 = (0..n).map(|i| a[i * n + i].abs()).sum::<f64>().max(1e-300);
        if off.sqrt() <= 1e-15 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = vecs[k * n + p];
                    let vkq = vecs[k * n + q];
                    vecs[k * n + p] = c * vkp - s * vkq;
                    vecs[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    for i in 0..n {
        eig[i] = a[i * n + i];
    }
}

/// Smallest eigenvalue of a symmetric matrix (copied internally).
pub fn min_eigenvalue(a: &[f64], n: usize) -> f64 {
    let mut work = a.to_vec();
    let mut eig = vec![0.0; n];
    let mut vecs = vec![0.0; n * n];
    jacobi_eigen(&mut work, n, &mut eig, &mut vecs);
    eig.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Symmetric PSD square root with eigenvalues floored at zero.
///
/// Returns the magnitude of the most negative eigenvalue that was clamped
/// (0 if none). `work` needs `n*n + n + n*n` entries.
pub fn psd_sqrt(a: &[f64], n: usize, out: &mut [f64], work: &mut [f64]) -> f64 {
    let (m, rest) = work.split_at_mut(n * n);
    let (eig, rest) = rest.split_at_mut(n);
    let vecs = &mut rest[..n * n];
    // symmetrize to kill interpolation asymmetry
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = 0.5 * (a[i * n + j] + a[j * n + i]);
        }
    }
    if n == 1 {
        let v = m[0];
        out[0] = v.max(0.0).sqrt();
        return (-v).max(0.0);
    }
    jacobi_eigen(m, n, eig, vecs);
    let mut clamp = 0.0_f64;
    for e in eig.iter_mut() {
        if *e < 0.0 {
            clamp = clamp.max(-*e);
            *e = 0.0;
        }
        *e = e.sqrt();
    }
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += vecs[i * n + k] * eig[k] * vecs[j * n + k];
            }
            out[i * n + j] = s;
        }
    }
    clamp
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn diagonal_eigenvalues() {
        let mut a = [3.0, 0.0, 0.0, 1.0];
        let mut e = [0.0; 2];
        let mut v = [0.0; 4];
        jacobi_eigen(&mut a, 2, &mut e, &mut v);
        let mut e = e.to_vec();
        e.sort_by(f64::total_cmp);
        assert_eq!(e, vec![1.0, 3.0]);
    }

    #[test]
    fn two_by_two_known() {
        // eigenvalues 1 and 3
        assert!((min_eigenvalue(&[2.0, 1.0, 1.0, 2.0], 2) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sqrt_clamps_negative() {
        let mut out = [0.0; 4];
        let mut work = [0.0; 10];
        let clamp = psd_sqrt(&[1.0, 0.0, 0.0, -1e-12], 2, &mut out, &mut work);
        assert!((clamp - 1e-12).abs() < 1e-20);
        assert!((out[0] - 1.0).abs() < 1e-15 && out[3] == 0.0);
    }

    fn sym(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-2.0..2.0f64, n * n).prop_map(move |r| {
            // R Rᵀ is PSD
            let mut a = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    a[i * n + j] = (0..n).map(|k| r[i * n + k] * r[j * n + k]).sum();
                }
            }
            a
        })
    }

    proptest! {
        #[test]
        fn sqrt_squares_back(a in sym(3)) {
            let mut s = [0.0; 9];
            let mut work = [0.0; 21];
            psd_sqrt(&a, 3, &mut s, &mut work);
            for i in 0..3 {
                for j in 0..3 {
                    let v: f64 = (0..3).map(|k| s[i * 3 + k] * s[k * 3 + j]).sum();
                    prop_assert!((v - a[i * 3 + j]).abs() < 1e-9 * (1.0 + a[i * 3 + i].abs() + a[j * 3 + j].abs()));
                }
            }
        }

        #[test]
        fn reconstruction(a in sym(4)) {
            let mut w = a.clone();
            let mut e = [0.0; 4];
            let mut v = [0.0; 16];
            jacobi_eigen(&mut w, 4, &mut e, &mut v);
            for i in 0..4 {
                for j in 0..4 {
                    let r: f64 = (0..4).map(|k| v[i * 4 + k] * e[k] * v[j * 4 + k]).sum();
                    prop_assert!((r - a[i * 4 + j]).abs() < 1e-10 * (1.0 + a.iter().map(|x| x.abs()).sum::<f64>()));
                }
            }
        }
    }
}
