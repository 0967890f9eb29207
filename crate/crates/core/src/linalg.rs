//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Maximum absolute row sum.
pub fn inf_norm(m: &Mat) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = Mat::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let s = a[(i, j)];
            if s == 0.0 {
                continue;
            }
            out.view_mut((i * br, j * bc), (br, bc)).copy_from(&(b * s));
        }
    }
    out
}

/// Exactly symmetric part `(M + Mᵀ)/2`.
pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn block_diag(blocks: &[Mat]) -> Mat {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

pub fn vstack(blocks: &[Mat]) -> Result<Mat> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    if blocks.iter().any(|b| b.ncols() != cols) {
        return Err(Error::dim("vstack: column counts differ"));
    }
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), b.shape()).copy_from(b);
        r += b.nrows();
    }
    Ok(out)
}

pub fn hstack(blocks: &[Mat]) -> Result<Mat> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    if blocks.iter().any(|b| b.nrows() != rows) {
        return Err(Error::dim("hstack: row counts differ"));
    }
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        out.view_mut((0, c), b.shape()).copy_from(b);
        c += b.ncols();
    }
    Ok(out)
}

/// 2×2 block matrix `[[a, b], [c, d]]`.
pub fn block2(a: &Mat, b: &Mat, c: &Mat, d: &Mat) -> Result<Mat> {
    vstack(&[hstack(&[a.clone(), b.clone()])?, hstack(&[c.clone(), d.clone()])?])
}

/// Numerical rank by Gaussian elimination with full pivoting.
///
/// Rows below `tol * max|M|` count as zero; the rest are equilibrated to unit
/// max-norm (rank-preserving) and pivots below `tol` are treated as zero.
/// Equilibration keeps geometrically decaying row blocks, as in observability
/// matrices of scaled pairs, from being swamped by the leading rows.
pub fn rank(m: &Mat, tol: f64) -> usize {
    let (rows, cols) = m.shape();
    let floor = tol * max_abs(m).max(f64::MIN_POSITIVE);
    let mut a = m.clone();
    for i in 0..rows {
        let r = a.row(i).amax();
        if r <= floor {
            a.row_mut(i).fill(0.0);
        } else {
            a.row_mut(i).unscale_mut(r);
        }
    }
    let thresh = tol;
    let mut r = 0;
    while r < rows.min(cols) {
        let mut best = (r, r, 0.0);
        for i in r..rows {
            for j in r..cols {
                let v = a[(i, j)].abs();
                if v > best.2 {
                    best = (i, j, v);
                }
            }
        }
        if best.2 <= thresh {
            break;
        }
        a.swap_rows(r, best.0);
        a.swap_columns(r, best.1);
        let piv = a[(r, r)];
        for i in r + 1..rows {
            let f = a[(i, r)] / piv;
            if f != 0.0 {
                for j in r..cols {
                    a[(i, j)] -= f * a[(r, j)];
                }
            }
        }
        r += 1;
    }
    r
}

/// Moore-Penrose pseudo-inverse of a full-column-rank matrix via the normal equations.
pub fn pinv_full_column(m: &Mat) -> Result<Mat> {
    let gram = m.transpose() * m;
    let inv = gram.try_inverse().ok_or(Error::Singular)?;
    Ok(inv * m.transpose())
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<Mat> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::Schema("ragged matrix rows".into()));
    }
    Ok(Mat::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Serde adapter storing a matrix as a row-major array of rows.
pub mod serde_rows {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Mat, s: S) -> std::result::Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Mat, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Serde adapter for a list of matrices.
pub mod serde_rows_vec {
    use super::*;

    pub fn serialize<S: Serializer>(ms: &[Mat], s: S) -> std::result::Result<S::Ok, S::Error> {
        ms.iter().map(to_rows).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Mat>, D::Error> {
        let all = Vec::<Vec<Vec<f64>>>::deserialize(d)?;
        all.iter()
            .map(|rows| from_rows(rows).map_err(serde::de::Error::custom))
            .collect()
    }
}

/// Serde adapter for an optional matrix.
pub mod serde_rows_opt {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Option<Mat>, s: S) -> std::result::Result<S::Ok, S::Error> {
        m.as_ref().map(to_rows).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Mat>, D::Error> {
        let rows = Option::<Vec<Vec<f64>>>::deserialize(d)?;
        rows.map(|r| from_rows(&r).map_err(serde::de::Error::custom))
            .transpose()
    }
}

/// Serde adapter storing a vector as a plain array.
pub mod serde_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Vector, s: S) -> std::result::Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vector, D::Error> {
        Ok(Vector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inf_norm_is_max_row_sum() {
        let m = Mat::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 0.5]);
        assert_eq!(inf_norm(&m), 3.0);
    }

    #[test]
    fn kron_identity() {
        let a = Mat::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let k = kron(&Mat::identity(2, 2), &a);
        assert_eq!(k.view((2, 2), (2, 2)), a.view((0, 0), (2, 2)));
        assert_eq!(k[(0, 2)], 0.0);
    }

    #[test]
    fn rank_examples() {
        let m = Mat::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 1.0, 1.0]);
        assert_eq!(rank(&m, 1e-9), 2);
        assert_eq!(rank(&Mat::zeros(3, 2), 1e-9), 0);
        assert_eq!(rank(&Mat::identity(4, 4), 1e-9), 4);
    }

    #[test]
    fn pinv_of_unit_columns_is_transpose() {
        let b = Mat::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let p = pinv_full_column(&b).unwrap();
        assert!((p - b.transpose()).abs().max() < 1e-15);
    }
}
