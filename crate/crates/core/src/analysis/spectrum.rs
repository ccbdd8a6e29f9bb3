use crate::error::{Error, Result};
use crate::game::SymbolUsageMatrix;

const MAX_SWEEPS: usize = 100;

/// Normalized singular values of the usage matrix, descending, divided by
/// the largest. With `center`, each column (symbol) has its mean over rows
/// removed first.
pub fn usage_spectrum(usage: &SymbolUsageMatrix, center: bool) -> Result<Vec<f64>> {
    let rows = usage.counts.len();
    let cols = usage.n_symbols();
    let mut a: Vec<f64> = usage.counts.iter().flatten().map(|&c| c as f64).collect();
    if a.len() != rows * cols {
        return Err(Error::Consistency("ragged usage matrix".into()));
    }
    if center {
        for j in 0..cols {
            let mean = (0..rows).map(|i| a[i * cols + j]).sum::<f64>() / rows as f64;
            for i in 0..rows {
                a[i * cols + j] -= mean;
            }
        }
    }
    let sv = singular_values(&a, rows, cols)?;
    let top = sv.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return Err(Error::Domain("usage matrix has no nonzero singular value".into()));
    }
    Ok(sv.into_iter().map(|s| s / top).collect())
}

/// Singular values of a row-major `rows x cols` matrix, descending, from the
/// eigenvalues of the smaller Gram matrix.
pub fn singular_values(a: &[f64], rows: usize, cols: usize) -> Result<Vec<f64>> {
    if a.len() != rows * cols {
        return Err(Error::shape("matrix elements", rows * cols, a.len()));
    }
    if rows == 0 || cols == 0 {
        return Err(Error::Domain("empty matrix".into()));
    }
    let at = |i: usize, j: usize| a[i * cols + j];
    let n = rows.min(cols);
    let mut g = vec![0.0; n * n];
    for p in 0..n {
        for q in p..n {
            let v: f64 = if cols <= rows {
                (0..rows).map(|i| at(i, p) * at(i, q)).sum()
            } else {
                (0..cols).map(|j| at(p, j) * at(q, j)).sum()
            };
            g[p * n + q] = v;
            g[q * n + p] = v;
        }
    }
    let mut sv: Vec<f64> = jacobi_eigenvalues(g, n)?
        .into_iter()
        .map(|l| l.max(0.0).sqrt())
        .collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    Ok(sv)
}

/// Eigenvalues of a symmetric `n x n` matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(mut a: Vec<f64>, n: usize) -> Result<Vec<f64>> {
    if a.len() != n * n {
        return Err(Error::shape("symmetric matrix elements", n * n, a.len()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("jacobi input".into()));
    }
    let scale: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    if scale == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let tol = f64::EPSILON * scale;
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| a[p * n + q] * a[p * n + q])
            .sum::<f64>()
            .sqrt();
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (a[p * n + p], a[q * n + q]);
                let theta = (aqq - app) / (2.0 * apq);
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
            }
        }
    }
    Ok((0..n).map(|i| a[i * n + i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::UsageRows;

    fn usage(counts: Vec<Vec<u64>>) -> SymbolUsageMatrix {
        SymbolUsageMatrix {
            rows: UsageRows::ConceptPair,
            row_labels: (0..counts.len()).map(|i| i.to_string()).collect(),
            counts,
        }
    }

    #[test]
    fn rank_one() {
        let u = [1u64, 2, 3, 4];
        let v = [2u64, 1, 5];
        let m = usage(u.iter().map(|&a| v.iter().map(|&b| a * b).collect()).collect());
        let s = usage_spectrum(&m, false).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-12);
        assert!(s[1..].iter().all(|x| x.abs() < 1e-10), "{s:?}");
    }

    #[test]
    fn diagonal() {
        let m = usage(vec![vec![3, 0, 0], vec![0, 2, 0], vec![0, 0, 1]]);
        let s = usage_spectrum(&m, false).unwrap();
        for (a, b) in s.iter().zip([1.0, 2.0 / 3.0, 1.0 / 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_and_constant_columns_are_domain_errors() {
        assert!(matches!(usage_spectrum(&usage(vec![vec![0, 0]; 3]), false), Err(Error::Domain(_))));
        // every row identical: nothing left after centering
        assert!(matches!(usage_spectrum(&usage(vec![vec![4, 1]; 3]), true), Err(Error::Domain(_))));
    }

    #[test]
    fn jacobi_known_2x2() {
        let mut e = jacobi_eigenvalues(vec![2.0, 1.0, 1.0, 2.0], 2).unwrap();
        e.sort_by(f64::total_cmp);
        assert!((e[0] - 1.0).abs() < 1e-14 && (e[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn wide_and_tall_agree() {
        let a = [1.0, 2.0, 0.0, 4.0, -1.0, 3.0];
        let mut t = [0.0; 6];
        for i in 0..2 {
            for j in 0..3 {
                t[j * 2 + i] = a[i * 3 + j];
            }
        }
        let s1 = singular_values(&a, 2, 3).unwrap();
        let s2 = singular_values(&t, 3, 2).unwrap();
        for (x, y) in s1.iter().zip(&s2) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
