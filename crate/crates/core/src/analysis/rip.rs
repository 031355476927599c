use itertools::Itertools;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::frames::sample_subset;
use crate::rng::{derive_seed, rng_from};
use crate::types::{FusionFrame, IndexSetProjection, SensingMatrix, SparsityPattern};

/// Largest number of supports enumerated exhaustively.
pub const EXHAUSTIVE_CAP: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RipMethod {
    Exhaustive,
    /// A lower bound on the true constant.
    MonteCarlo { trials: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RipEstimate {
    pub sparsity: usize,
    pub delta: f64,
    pub method: RipMethod,
    /// 0-based column pool the supports were drawn from, if restricted.
    pub subspace: Option<Vec<usize>>,
    /// A support attaining `delta` (0-based).
    pub worst_support: Vec<usize>,
}

/// `max(lambda_max - 1, 1 - lambda_min)` of `A_S^T A_S`.
pub fn support_deviation(a: &DMatrix<f64>, support: &[usize]) -> f64 {
    match support {
        [] => 0.0,
        [j] => (a.column(*j).norm_squared() - 1.0).abs(),
        [j, k] => {
            let (cj, ck) = (a.column(*j), a.column(*k));
            let g11 = cj.norm_squared();
            let g22 = ck.norm_squared();
            let g12 = cj.dot(&ck);
            let mid = 0.5 * (g11 + g22);
            let rad = (0.25 * (g11 - g22) * (g11 - g22) + g12 * g12).sqrt();
            ((mid + rad) - 1.0).max(1.0 - (mid - rad))
        }
        _ => {
            let sub = a.select_columns(support);
            let eig = SymmetricEigen::new(sub.tr_mul(&sub));
            let max = eig.eigenvalues.max();
            let min = eig.eigenvalues.min();
            (max - 1.0).max(1.0 - min)
        }
    }
}

/// `C(k, s)`, saturating at `u128::MAX`.
pub fn count_supports(k: usize, s: usize) -> u128 {
    if s > k {
        return 0;
    }
    let s = s.min(k - s);
    let mut c: u128 = 1;
    for i in 0..s {
        c = match c.checked_mul((k - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    c
}

fn pool(a: &SensingMatrix, omega: Option<&IndexSetProjection>) -> Result<Vec<usize>> {
    match omega {
        Some(p) => {
            if p.ambient_dim() != a.cols() {
                return Err(Error::DimensionMismatch {
                    expected: a.cols(),
                    got: p.ambient_dim(),
                    context: "RIP subspace",
                });
            }
            Ok(p.indices().to_vec())
        }
        None => Ok((0..a.cols()).collect()),
    }
}

fn scan<I: Iterator<Item = Vec<usize>>>(a: &DMatrix<f64>, supports: I) -> (f64, Vec<usize>) {
    let mut best = (0.0, Vec::new());
    for support in supports {
        let d = support_deviation(a, &support);
        if d > best.0 || best.1.is_empty() {
            best = (d, support);
        }
    }
    best
}

/// Exact `delta_s` over supports drawn from `omega` (all columns if `None`).
pub fn rip_exhaustive(a: &SensingMatrix, s: usize, omega: Option<&IndexSetProjection>) -> Result<RipEstimate> {
    let pool = pool(a, omega)?;
    if s == 0 || s > pool.len() {
        return Err(Error::InvalidInput(format!(
            "sparsity {s} must lie in 1..={}",
            pool.len()
        )));
    }
    let supports = count_supports(pool.len(), s);
    if supports > EXHAUSTIVE_CAP {
        return Err(Error::EnumerationCap {
            supports,
            cap: EXHAUSTIVE_CAP,
        });
    }
    let (delta, worst_support) = scan(a.matrix(), pool.iter().copied().combinations(s));
    Ok(RipEstimate {
        sparsity: s,
        delta,
        method: RipMethod::Exhaustive,
        subspace: omega.map(|p| p.indices().to_vec()),
        worst_support,
    })
}

/// Largest deviation over `trials` random supports; a lower bound on `delta_s`.
///
/// Trial `t` uses the stream `derive_seed(seed, t)`, so a run with more trials
/// scans a superset of supports. If `trials` covers every support the scan is exhaustive.
pub fn rip_montecarlo(
    a: &SensingMatrix,
    s: usize,
    omega: Option<&IndexSetProjection>,
    trials: usize,
    seed: u64,
) -> Result<RipEstimate> {
    let pool = pool(a, omega)?;
    if s == 0 || s > pool.len() || trials == 0 {
        return Err(Error::InvalidInput(format!(
            "need 1 <= s <= {} and trials >= 1",
            pool.len()
        )));
    }
    let (delta, worst_support) = if count_supports(pool.len(), s) <= trials as u128 {
        scan(a.matrix(), pool.iter().copied().combinations(s))
    } else {
        scan(
            a.matrix(),
            (0..trials).map(|t| {
                let mut rng = rng_from(derive_seed(seed, t as u64));
                let mut support: Vec<usize> =
                    sample_subset(pool.len(), s, &mut rng).into_iter().map(|j| pool[j]).collect();
                support.sort_unstable();
                support
            }),
        )
    };
    Ok(RipEstimate {
        sparsity: s,
        delta,
        method: RipMethod::MonteCarlo { trials, seed },
        subspace: omega.map(|p| p.indices().to_vec()),
        worst_support,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PripReport {
    pub estimates: Vec<RipEstimate>,
    /// `delta_i <= target_i`.
    pub pass: Vec<bool>,
    /// `C min_i (1 - delta_i)`.
    pub lower: f64,
    /// `D max_i (1 + delta_i)`.
    pub upper: f64,
    pub vectors_tested: usize,
    /// Random distributed-sparse vectors violating the sandwich inequality.
    pub sandwich_violations: usize,
}

/// Partial RIP per subspace and the resulting sandwich bounds, checked on
/// `vectors` random distributed-sparse vectors.
///
/// Subspaces whose support count exceeds the cap fall back to Monte Carlo with
/// `EXHAUSTIVE_CAP` trials.
pub fn prip_check(
    a: &SensingMatrix,
    frame: &FusionFrame,
    pattern: &SparsityPattern,
    delta_targets: &[f64],
    vectors: usize,
    seed: u64,
) -> Result<PripReport> {
    pattern.check_against(frame)?;
    if delta_targets.len() != 1 && delta_targets.len() != frame.len() {
        return Err(Error::InvalidInput(format!(
            "need 1 or {} delta targets, got {}",
            frame.len(),
            delta_targets.len()
        )));
    }
    let mut estimates = Vec::with_capacity(frame.len());
    for (i, (p, &s)) in frame.projections().iter().zip(pattern.per_subspace()).enumerate() {
        let est = if s == 0 {
            RipEstimate {
                sparsity: 0,
                delta: 0.0,
                method: RipMethod::Exhaustive,
                subspace: Some(p.indices().to_vec()),
                worst_support: Vec::new(),
            }
        } else {
            match rip_exhaustive(a, s, Some(p)) {
                Ok(e) => e,
                Err(Error::EnumerationCap { .. }) => {
                    rip_montecarlo(a, s, Some(p), EXHAUSTIVE_CAP as usize, derive_seed(seed, i as u64))?
                }
                Err(e) => return Err(e.in_subspace(i + 1)),
            }
        };
        estimates.push(est);
    }
    let target = |i: usize| delta_targets[if delta_targets.len() == 1 { 0 } else { i }];
    let pass = estimates.iter().enumerate().map(|(i, e)| e.delta <= target(i)).collect();
    let min_lower = estimates.iter().map(|e| 1.0 - e.delta).fold(f64::INFINITY, f64::min);
    let max_upper = estimates.iter().map(|e| 1.0 + e.delta).fold(0.0, f64::max);
    let lower = frame.lower_bound() as f64 * min_lower;
    let upper = frame.upper_bound() as f64 * max_upper;

    let mut violations = 0;
    let mut rng = rng_from(derive_seed(seed, u64::MAX));
    for _ in 0..vectors {
        let v = distributed_sparse(frame, pattern, &mut rng);
        let energy: f64 = frame
            .projections()
            .iter()
            .map(|p| a.apply_projected(p, &v).norm_squared())
            .sum();
        let norm2 = v.norm_squared();
        let tol = 1e-10 * norm2.max(1.0);
        if energy < lower * norm2 - tol || energy > upper * norm2 + tol {
            violations += 1;
        }
    }
    Ok(PripReport {
        estimates,
        pass,
        lower,
        upper,
        vectors_tested: vectors,
        sandwich_violations: violations,
    })
}

/// Random `x` with `||P_i x||_0 <= s_i` for every `i`: coordinates are visited in
/// random order and kept while every subspace containing them has room.
pub(crate) fn distributed_sparse(
    frame: &FusionFrame,
    pattern: &SparsityPattern,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> DVector<f64> {
    let n = frame.ambient_dim();
    let mut room: Vec<usize> = pattern.per_subspace().to_vec();
    let mut owners: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, p) in frame.projections().iter().enumerate() {
        for &k in p.indices() {
            owners[k].push(i);
        }
    }
    let mut x = DVector::zeros(n);
    for k in sample_subset(n, n, rng) {
        if !owners[k].is_empty() && owners[k].iter().all(|&i| room[i] > 0) {
            for &i in &owners[k] {
                room[i] -= 1;
            }
            x[k] = StandardNormal.sample(rng);
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_has_zero_constant() {
        let a = SensingMatrix::from_matrix(DMatrix::identity(6, 6)).unwrap();
        for s in 1..=3 {
            assert!(rip_exhaustive(&a, s, None).unwrap().delta.abs() < 1e-12);
        }
    }

    #[test]
    fn repeated_column_breaks_rip() {
        let mut m = DMatrix::identity(4, 4);
        m.set_column(1, &m.column(0).into_owned());
        let a = SensingMatrix::from_matrix(m).unwrap();
        assert!(rip_exhaustive(&a, 2, None).unwrap().delta >= 1.0 - 1e-12);
    }

    #[test]
    fn support_counts() {
        assert_eq!(count_supports(40, 2), 780);
        assert_eq!(count_supports(5, 0), 1);
        assert_eq!(count_supports(3, 4), 0);
        assert_eq!(count_supports(1000, 500), u128::MAX);
    }

    #[test]
    fn cap_is_reported() {
        let a = SensingMatrix::gaussian(5, 200, 1, true).unwrap();
        assert!(matches!(rip_exhaustive(&a, 4, None), Err(Error::EnumerationCap { .. })));
    }

    #[test]
    fn montecarlo_bounded_by_exhaustive() {
        let a = SensingMatrix::gaussian(10, 16, 4, true).unwrap();
        let exact = rip_exhaustive(&a, 3, None).unwrap().delta;
        let mut prev = 0.0;
        for trials in [1, 10, 100] {
            let mc = rip_montecarlo(&a, 3, None, trials, 8).unwrap().delta;
            assert!(mc <= exact + 1e-15);
            assert!(mc >= prev);
            prev = mc;
        }
        let all = rip_montecarlo(&a, 3, None, 560, 8).unwrap().delta;
        assert_eq!(all, exact);
    }
}
