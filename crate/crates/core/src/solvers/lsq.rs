//! Least squares on column subsets via QR with column pivoting.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::types::{IndexSetProjection, SensingMatrix};

/// Smallest pivot must exceed this fraction of the largest.
pub const PIVOT_RATIO: f64 = 1e-10;

/// `a^T y / a^T a`.
pub fn lsq_rank1(a: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
    if a.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: y.len(),
            context: "rank-one least squares",
        });
    }
    let aa = a.dot(a);
    if aa == 0.0 {
        return Err(Error::ZeroColumn);
    }
    Ok(a.dot(y) / aa)
}

/// Pivot-based condition estimate `max |R_ii| / min |R_ii|` of a thin QR.
pub fn pivot_condition(b: &DMatrix<f64>) -> f64 {
    if b.ncols() == 0 {
        return 1.0;
    }
    if b.ncols() > b.nrows() {
        return f64::INFINITY;
    }
    let r = b.clone().col_piv_qr().r();
    let diag: Vec<f64> = (0..b.ncols()).map(|i| r[(i, i)].abs()).collect();
    let max = diag.iter().copied().fold(0.0, f64::max);
    let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
    if max == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// `argmin_z ||B z - y||` for a tall, full-column-rank `B`.
pub fn lsq_columns(b: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let (m, k) = b.shape();
    if y.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: y.len(),
            context: "least-squares right-hand side",
        });
    }
    if k == 0 {
        return Ok(DVector::zeros(0));
    }
    if k > m {
        return Err(Error::Singular {
            condition: f64::INFINITY,
        });
    }
    let qr = b.clone().col_piv_qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..k).map(|i| r[(i, i)].abs()).collect();
    let max = diag.iter().copied().fold(0.0, f64::max);
    let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
    if max == 0.0 {
        return Err(Error::ZeroColumn);
    }
    if min < PIVOT_RATIO * max {
        return Err(Error::Singular {
            condition: max / min,
        });
    }
    let qty = qr.q().transpose() * y;
    let mut z = r
        .solve_upper_triangular(&qty)
        .ok_or(Error::Singular {
            condition: f64::INFINITY,
        })?;
    qr.p().inv_permute_rows(&mut z);
    Ok(z)
}

/// The `N`-vector supported on `Omega` whose restriction solves `min ||A_Omega z - y||`.
pub fn lsq_subspace(
    a: &SensingMatrix,
    omega: &IndexSetProjection,
    y: &DVector<f64>,
) -> Result<DVector<f64>> {
    if omega.ambient_dim() != a.cols() {
        return Err(Error::DimensionMismatch {
            expected: a.cols(),
            got: omega.ambient_dim(),
            context: "projection ambient dimension",
        });
    }
    let z = lsq_columns(&a.submatrix(omega), y)?;
    Ok(omega.embed(&z))
}

/// Singular values of `B`, descending.
pub fn singular_values(b: &DMatrix<f64>) -> Vec<f64> {
    if b.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = b.singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// `||B^+||_{2->2} = 1 / sigma_min(B)` for full column rank `B`.
pub fn pinv_norm(b: &DMatrix<f64>) -> Result<f64> {
    if b.ncols() > b.nrows() {
        return Err(Error::Singular {
            condition: f64::INFINITY,
        });
    }
    let s = singular_values(b);
    let (max, min) = match (s.first(), s.last()) {
        (Some(&max), Some(&min)) => (max, min),
        _ => return Ok(0.0),
    };
    if min <= PIVOT_RATIO * max || min == 0.0 {
        return Err(Error::Singular {
            condition: if min == 0.0 { f64::INFINITY } else { max / min },
        });
    }
    Ok(1.0 / min)
}

/// Minimum-norm least-squares solution `B^+ y` via the SVD (any shape, any rank).
pub fn min_norm_lsq(b: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    if b.is_empty() {
        return DVector::zeros(b.ncols());
    }
    let svd = b.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = smax * 1e-12 * b.nrows().max(b.ncols()) as f64;
    svd.solve(y, eps).unwrap_or_else(|_| DVector::zeros(b.ncols()))
}
