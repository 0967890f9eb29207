//! Cyclic Jacobi eigensolver for symmetric matrices.

use crate::linalg::{max_abs, Mat, Vector};
use crate::{Error, Result};

const MAX_SWEEPS: usize = 100;

fn check_symmetric(m: &Mat) -> Result<()> {
    if !m.is_square() {
        return Err(Error::dim("eigenvalues need a square matrix"));
    }
    let scale = max_abs(m);
    let residual = max_abs(&(m - m.transpose()));
    if residual > 1e-10 * scale {
        return Err(Error::NotSymmetric { residual });
    }
    Ok(())
}

fn jacobi(m: &Mat, tol: f64, want_vectors: bool) -> Result<(Vector, Option<Mat>)> {
    check_symmetric(m)?;
    let n = m.nrows();
    let mut a = crate::linalg::symmetrize(m);
    let mut v = want_vectors.then(|| Mat::identity(n, n));
    let norm = a.norm();
    let target = tol.max(f64::EPSILON) * norm;

    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() <= target * 1e-2 || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                if let Some(v) = v.as_mut() {
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let vals = Vector::from_iterator(n, order.iter().map(|&i| a[(i, i)]));
    let vecs = v.map(|v| Mat::from_fn(n, n, |r, c| v[(r, order[c])]));
    Ok((vals, vecs))
}

/// Eigenvalues in ascending order.
pub fn eig_sym(m: &Mat, tol: f64) -> Result<Vector> {
    Ok(jacobi(m, tol, false)?.0)
}

/// Ascending eigenvalues and the matching orthonormal eigenvectors (as columns).
pub fn eig_sym_vectors(m: &Mat, tol: f64) -> Result<(Vector, Mat)> {
    let (vals, vecs) = jacobi(m, tol, true)?;
    Ok((vals, vecs.expect("vectors requested")))
}

pub fn lambda_max(m: &Mat) -> Result<f64> {
    let e = eig_sym(m, 1e-14)?;
    Ok(e.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

pub fn lambda_min(m: &Mat) -> Result<f64> {
    let e = eig_sym(m, 1e-14)?;
    Ok(e.iter().copied().fold(f64::INFINITY, f64::min))
}
