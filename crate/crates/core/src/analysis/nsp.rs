use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use super::rip::count_supports;
use crate::error::{Error, Result};
use crate::frames::sample_subset;
use crate::rng::{derive_seed, gaussian_vector, rng_from};
use crate::types::{IndexSetProjection, SensingMatrix};

/// `4 / sqrt(41)`: the RIP-to-NSP conversion requires `delta` strictly below this.
pub const RIP_TO_NSP_LIMIT: f64 = 0.624_695_047_554_424_3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NspConstants {
    pub rho: f64,
    pub tau: f64,
}

impl NspConstants {
    /// Constants of the l1 form implied by the l2 form at order `s`:
    /// `||v_S||_1 <= sqrt(s) ||v_S||_2`, so `(rho, tau) -> (rho, sqrt(s) tau)`.
    pub fn l1_from_l2(self, s: usize) -> NspConstants {
        NspConstants {
            rho: self.rho,
            tau: (s as f64).sqrt() * self.tau,
        }
    }
}

/// l2 robust null space constants implied by a RIP constant of order `2s`:
/// `rho = delta / (sqrt(1 - delta^2) - delta/4)`, `tau = sqrt(1 + delta) / (same)`.
pub fn rip_to_nsp(delta: f64) -> Result<NspConstants> {
    if !(0.0..RIP_TO_NSP_LIMIT).contains(&delta) || delta.is_nan() {
        return Err(Error::DeltaOutOfRange { delta });
    }
    let denom = (1.0 - delta * delta).sqrt() - delta / 4.0;
    Ok(NspConstants {
        rho: delta / denom,
        tau: (1.0 + delta).sqrt() / denom,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NspReport {
    pub vectors_tested: usize,
    pub violations: usize,
    /// Largest `(lhs - rhs) / ||P v||_1` seen; positive means a violation.
    pub worst_excess: f64,
    /// The vector attaining `worst_excess` (length `N`).
    pub worst_vector: Option<DVector<f64>>,
    /// 0-based support attaining `worst_excess`.
    pub worst_support: Vec<usize>,
}

/// Searches for violations of
/// `||(Pv)_S||_1 <= rho ||(Pv)_{S^c}||_1 + tau ||A v||_2`
/// over `v` in `range(P)` and `|S| <= s`. A clean report is evidence, not a proof.
pub fn nsp_sample_check(
    a: &SensingMatrix,
    omega: &IndexSetProjection,
    s: usize,
    rho: f64,
    tau: f64,
    trials: usize,
    seed: u64,
) -> Result<NspReport> {
    nsp_sample_check_q(a, omega, s, rho, tau, 1.0, trials, seed)
}

/// The l_q form: `||(Pv)_S||_q <= rho / s^(1 - 1/q) ||(Pv)_{S^c}||_1 + tau ||A v||_2`.
///
/// For each sampled `v` the worst support (the `s` largest entries) is used, which
/// maximizes the left side and minimizes the right side at once. Sampled
/// vectors cycle through four kinds: Gaussian on `Omega`, null-space vectors of
/// `A_Omega`, vectors concentrated on a random `s`-set, and the least singular
/// direction of `A_S` for an `s`-set `S` (every set in turn when they are few).
#[allow(clippy::too_many_arguments)]
pub fn nsp_sample_check_q(
    a: &SensingMatrix,
    omega: &IndexSetProjection,
    s: usize,
    rho: f64,
    tau: f64,
    q: f64,
    trials: usize,
    seed: u64,
) -> Result<NspReport> {
    if omega.ambient_dim() != a.cols() {
        return Err(Error::DimensionMismatch {
            expected: a.cols(),
            got: omega.ambient_dim(),
            context: "NSP subspace",
        });
    }
    if q < 1.0 || trials == 0 {
        return Err(Error::InvalidInput("need q >= 1 and trials >= 1".into()));
    }
    let k = omega.rank();
    let s = s.min(k);
    let a_omega = a.submatrix(omega);
    let pinv = if k > 0 {
        a_omega.clone().pseudo_inverse(1e-12).ok()
    } else {
        None
    };
    let scale = 1.0 / (s.max(1) as f64).powf(1.0 - 1.0 / q);
    let enumerable = s > 0 && count_supports(k, s) <= (trials / 4).max(1) as u128;
    let mut all_sets = if enumerable {
        Some(itertools::Itertools::combinations(0..k, s))
    } else {
        None
    };

    let mut report = NspReport {
        vectors_tested: 0,
        violations: 0,
        worst_excess: f64::NEG_INFINITY,
        worst_vector: None,
        worst_support: Vec::new(),
    };
    if k == 0 {
        return Ok(report);
    }
    for t in 0..trials {
        let mut rng = rng_from(derive_seed(seed, t as u64));
        let local: DVector<f64> = match t % 4 {
            0 => gaussian_vector(k, &mut rng),
            1 => {
                let g = gaussian_vector(k, &mut rng);
                match &pinv {
                    Some(pinv) => {
                        let null = &g - pinv * (&a_omega * &g);
                        // Injective A_Omega: the kernel is trivial, fall back to g.
                        if null.norm() > 1e-8 * g.norm() {
                            null
                        } else {
                            g
                        }
                    }
                    None => g,
                }
            }
            2 => {
                let mut v = gaussian_vector(k, &mut rng) * 1e-2;
                for j in sample_subset(k, s.max(1), &mut rng) {
                    let big: f64 = StandardNormal.sample(&mut rng);
                    v[j] += big;
                }
                v
            }
            _ => {
                let set = match all_sets.as_mut().and_then(|it| it.next()) {
                    Some(set) => set,
                    None => sample_subset(k, s.max(1), &mut rng),
                };
                least_singular_on(&a_omega, &set, k)
            }
        };
        if local.norm() == 0.0 {
            continue;
        }
        let v = omega.embed(&local);
        let av = a.matrix() * &v;
        report.vectors_tested += 1;

        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&i, &j| local[j].abs().total_cmp(&local[i].abs()));
        let (head, tail) = order.split_at(s);
        let lhs = head.iter().map(|&j| local[j].abs().powf(q)).sum::<f64>().powf(1.0 / q);
        let tail_l1: f64 = tail.iter().map(|&j| local[j].abs()).sum();
        let rhs = rho * scale * tail_l1 + tau * av.norm();
        let excess = (lhs - rhs) / local.lp_norm(1);
        if lhs > rhs * (1.0 + 1e-12) + 1e-14 * local.lp_norm(1) {
            report.violations += 1;
        }
        if excess > report.worst_excess {
            report.worst_excess = excess;
            report.worst_vector = Some(v);
            let mut support: Vec<usize> = head.iter().map(|&j| omega.indices()[j]).collect();
            support.sort_unstable();
            report.worst_support = support;
        }
    }
    Ok(report)
}

/// Right singular vector of `A_S` for the smallest singular value, placed in a length-`k` vector.
fn least_singular_on(a_omega: &DMatrix<f64>, set: &[usize], k: usize) -> DVector<f64> {
    let sub = a_omega.select_columns(set);
    let gram = sub.tr_mul(&sub);
    let eig = nalgebra::SymmetricEigen::new(gram);
    let (idx, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, &l)| if l < best.1 { (i, l) } else { best });
    let dir = eig.eigenvectors.column(idx);
    let mut v = DVector::zeros(k);
    for (j, &col) in set.iter().enumerate() {
        v[col] = dir[j];
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversion_values() {
        let c = rip_to_nsp(0.0).unwrap();
        assert_eq!((c.rho, c.tau), (0.0, 1.0));
        let c = rip_to_nsp(0.5).unwrap();
        let denom = 0.75f64.sqrt() - 0.125;
        assert!((c.rho - 0.5 / denom).abs() < 1e-15);
        assert!((c.rho - 0.6748).abs() < 1e-4);
        assert!((c.tau - 1.6528).abs() < 1e-4);
        assert!(rip_to_nsp(RIP_TO_NSP_LIMIT).is_err());
        assert!(rip_to_nsp(-0.1).is_err());
        let near = rip_to_nsp(0.6246).unwrap();
        assert!(near.rho < 1.0 && near.rho > 0.999);
    }

    #[test]
    fn limit_constant() {
        assert!((RIP_TO_NSP_LIMIT - 4.0 / 41f64.sqrt()).abs() < 1e-16);
    }

    #[test]
    fn null_vector_on_small_support_is_found() {
        // Columns 0 and 1 cancel: v = e0 + e1 is in the kernel.
        let m = DMatrix::from_row_slice(2, 4, &[1.0, -1.0, 0.0, 0.3, 0.5, -0.5, 1.0, 0.2]);
        let a = SensingMatrix::from_matrix(m).unwrap();
        let omega = IndexSetProjection::new(4, vec![0, 1]).unwrap();
        let report = nsp_sample_check(&a, &omega, 2, 0.5, 100.0, 40, 1).unwrap();
        assert!(report.violations > 0);
    }

    #[test]
    fn huge_tau_gives_no_violations() {
        let a = SensingMatrix::gaussian(10, 20, 3, true).unwrap();
        let omega = IndexSetProjection::new(20, (0..8).collect()).unwrap();
        let report = nsp_sample_check(&a, &omega, 2, 0.1, 1e6, 200, 5).unwrap();
        assert_eq!(report.violations, 0);
        assert_eq!(report.vectors_tested, 200);
    }
}
