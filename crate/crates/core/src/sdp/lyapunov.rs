//! Lyapunov equations `ÃᵀP + PÃ = −Q` through the Kronecker-vectorized system.

use super::eig::lambda_min;
use crate::linalg::{kron, max_abs, symmetrize, Mat, Vector};
use crate::{Error, Result};

/// Solves `ÃᵀP + PÃ = −Q` without checking stability. Fails only if the
/// Kronecker system is singular.
pub fn lyapunov_solve_unchecked(a: &Mat, q: &Mat) -> Result<Mat> {
    let n = a.nrows();
    if !a.is_square() || q.shape() != (n, n) {
        return Err(Error::dim("Lyapunov: A and Q must be square of equal size"));
    }
    let at = a.transpose();
    let eye = Mat::identity(n, n);
    let big = kron(&eye, &at) + kron(&at, &eye);
    let rhs = -Vector::from_column_slice(q.as_slice());
    let lu = big.lu();
    let sol = lu.solve(&rhs).ok_or(Error::Singular)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    Ok(symmetrize(&Mat::from_column_slice(n, n, sol.as_slice())))
}

/// `true` iff every eigenvalue of `A` has real part below `−tol`.
///
/// Uses the Lyapunov characterisation: `A + tol·I` is Hurwitz iff the solution
/// of `(A + tol·I)ᵀP + P(A + tol·I) = −I` exists and is positive definite.
pub fn hurwitz_check(a: &Mat, tol: f64) -> bool {
    if !a.is_square() {
        return false;
    }
    let n = a.nrows();
    if n == 0 {
        return true;
    }
    let shifted = a + Mat::identity(n, n) * tol;
    match lyapunov_solve_unchecked(&shifted, &Mat::identity(n, n)) {
        Ok(p) => {
            // Relative residual: single-output Bass loops are near-defective and P is large.
            let residual = lyapunov_residual(&shifted, &p, &Mat::identity(n, n));
            let scale = 1.0 + max_abs(&p) * (1.0 + max_abs(&shifted));
            residual <= 1e-9 * scale && lambda_min(&p).map(|l| l > 0.0).unwrap_or(false)
        }
        Err(_) => false,
    }
}

/// Max-entry residual of `ÃᵀP + PÃ + Q`.
pub fn lyapunov_residual(a: &Mat, p: &Mat, q: &Mat) -> f64 {
    max_abs(&(a.transpose() * p + p * a + q))
}

/// Solves `ÃᵀP + PÃ = −Q` for Hurwitz `Ã`.
pub fn lyapunov_solve(a: &Mat, q: &Mat) -> Result<Mat> {
    if !hurwitz_check(a, 0.0) {
        return Err(Error::NotHurwitz);
    }
    if max_abs(&(q - q.transpose())) > 1e-10 * max_abs(q) {
        return Err(Error::NotSymmetric {
            residual: max_abs(&(q - q.transpose())),
        });
    }
    lyapunov_solve_unchecked(a, q)
}
