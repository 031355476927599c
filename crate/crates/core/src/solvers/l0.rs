//! Exhaustive l0 minimization for desk-scale instances.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};

use super::lsq::lsq_columns;
use crate::error::{Error, Result};
use crate::types::SensingMatrix;

pub const L0_MAX_AMBIENT: usize = 20;
pub const L0_MAX_SPARSITY: usize = 4;

pub fn l0_oracle(a: &SensingMatrix, y: &DVector<f64>, eta: f64, s_max: usize) -> Result<DVector<f64>> {
    l0_oracle_matrix(a.matrix(), y, eta, s_max)
}

/// Sparsest `z` with `||B z - y|| <= eta`, by enumerating supports of size
/// `0..=s_max` in lexicographic order. Ties go to the smaller residual, then
/// to the lexicographically first support. Rank-deficient supports are skipped.
pub fn l0_oracle_matrix(b: &DMatrix<f64>, y: &DVector<f64>, eta: f64, s_max: usize) -> Result<DVector<f64>> {
    let (m, n) = b.shape();
    if n > L0_MAX_AMBIENT || s_max > L0_MAX_SPARSITY {
        return Err(Error::InvalidInput(format!(
            "l0 oracle is capped at N <= {L0_MAX_AMBIENT} and s <= {L0_MAX_SPARSITY} (got N = {n}, s = {s_max})"
        )));
    }
    if y.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: y.len(),
            context: "l0 oracle measurement",
        });
    }
    if !(eta >= 0.0) {
        return Err(Error::InvalidInput(format!("eta = {eta} must be >= 0")));
    }
    let feasible = eta + 1e-9 * y.norm().max(1.0);
    if y.norm() <= feasible {
        return Ok(DVector::zeros(n));
    }
    for s in 1..=s_max.min(n) {
        let mut best: Option<(f64, Vec<usize>, DVector<f64>)> = None;
        for support in (0..n).combinations(s) {
            let sub = b.select_columns(&support);
            let Ok(z) = lsq_columns(&sub, y) else {
                continue;
            };
            let residual = (&sub * &z - y).norm();
            if residual <= feasible && best.as_ref().is_none_or(|(r, _, _)| residual < *r) {
                best = Some((residual, support, z));
            }
        }
        if let Some((_, support, z)) = best {
            let mut x = DVector::zeros(n);
            for (j, &k) in support.iter().enumerate() {
                x[k] = z[j];
            }
            return Ok(x);
        }
    }
    Err(Error::NoFeasibleSupport { s_max })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_single_column() {
        let a = SensingMatrix::gaussian(6, 8, 2, true).unwrap();
        let y = a.matrix().column(2).into_owned();
        let x = l0_oracle(&a, &y, 0.0, 2).unwrap();
        let support: Vec<usize> = (0..8).filter(|&k| x[k] != 0.0).collect();
        assert_eq!(support, vec![2]);
    }

    #[test]
    fn large_eta_returns_zero() {
        let a = SensingMatrix::gaussian(6, 8, 2, true).unwrap();
        let y = a.matrix().column(1).into_owned();
        let x = l0_oracle(&a, &y, 10.0, 2).unwrap();
        assert_eq!(x, DVector::zeros(8));
    }

    #[test]
    fn caps_are_enforced() {
        let a = SensingMatrix::gaussian(6, 21, 2, true).unwrap();
        assert!(l0_oracle(&a, &DVector::zeros(6), 0.0, 1).is_err());
        let a = SensingMatrix::gaussian(6, 10, 2, true).unwrap();
        assert!(l0_oracle(&a, &DVector::zeros(6), 0.0, 5).is_err());
    }

    #[test]
    fn reports_missing_support() {
        let a = SensingMatrix::gaussian(8, 10, 4, true).unwrap();
        let y = a.matrix().column(0) + a.matrix().column(1) + a.matrix().column(2);
        assert!(matches!(
            l0_oracle(&a, &y, 0.0, 2),
            Err(Error::NoFeasibleSupport { s_max: 2 })
        ));
    }
}
