use nalgebra::DVector;

use super::nsp::{NspConstants, RIP_TO_NSP_LIMIT};
use crate::error::{Error, Result};
use crate::solvers::{lsq_columns, pinv_norm};
use crate::types::{FusionFrame, IndexSetProjection, SensingMatrix, SparsityPattern};

/// Noise information for bound evaluation.
#[derive(Debug, Clone, Copy)]
pub enum NoiseInput<'a> {
    /// The actual noise vectors `e_i`.
    Vectors(&'a [DVector<f64>]),
    /// Only the norms `||e_i|| <= eta_i`; `||A^+ e||` is then bounded by `||A^+|| eta`.
    Norms(&'a [f64]),
}

impl NoiseInput<'_> {
    fn len(&self) -> usize {
        match self {
            NoiseInput::Vectors(v) => v.len(),
            NoiseInput::Norms(v) => v.len(),
        }
    }

    fn norm(&self, i: usize) -> f64 {
        match self {
            NoiseInput::Vectors(v) => v[i].norm(),
            NoiseInput::Norms(v) => v[i],
        }
    }
}

fn lower_bound(frame: &FusionFrame) -> Result<f64> {
    let coverage = frame.validate();
    if !coverage.valid {
        return Err(Error::UncoveredIndices {
            uncovered: coverage.uncovered,
        });
    }
    Ok(frame.lower_bound() as f64)
}

fn check_len(expected: usize, got: usize, context: &'static str) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            expected,
            got,
            context,
        });
    }
    Ok(())
}

/// `||A_Omega^+ e||_2`, exact for a noise vector and via `||A_Omega^+|| eta` for a norm.
fn pinv_noise(a: &SensingMatrix, p: &IndexSetProjection, noise: &NoiseInput, i: usize) -> Result<f64> {
    let sub = a.submatrix(p);
    match noise {
        NoiseInput::Vectors(v) => Ok(lsq_columns(&sub, &v[i])?.norm()),
        NoiseInput::Norms(v) => Ok(pinv_norm(&sub)? * v[i]),
    }
}

/// `(1/C) sum_i ||A_{Omega_i}^+ e_i||_2^2`, a bound on the squared fused error
/// of pseudo-inverse local solves.
pub fn bound_prop2(frame: &FusionFrame, a: &SensingMatrix, noise: NoiseInput) -> Result<f64> {
    let c = lower_bound(frame)?;
    check_len(frame.len(), noise.len(), "noise count vs frame size")?;
    let mut total = 0.0;
    for (i, p) in frame.projections().iter().enumerate() {
        let v = pinv_noise(a, p, &noise, i).map_err(|e| e.in_subspace(i + 1))?;
        total += v * v;
    }
    Ok(total / c)
}

fn check_rho(constants: &[NspConstants]) -> Result<()> {
    for c in constants {
        if !(0.0..1.0).contains(&c.rho) {
            return Err(Error::RhoOutOfRange { rho: c.rho });
        }
    }
    Ok(())
}

/// `(2/C) (<rho_vec, sigma> + <tau_vec, eta>)` with
/// `rho_vec_i = (1 + rho_i)/(1 - rho_i)` and `tau_vec_i = 2 tau_i/(1 - rho_i)`,
/// for l1 null space constants.
pub fn bound_rdnsp(
    frame: &FusionFrame,
    constants: &[NspConstants],
    best_term: &[f64],
    eta: &[f64],
) -> Result<f64> {
    let c = lower_bound(frame)?;
    check_len(frame.len(), constants.len(), "NSP constants vs frame size")?;
    check_len(frame.len(), best_term.len(), "best-term errors vs frame size")?;
    check_len(frame.len(), eta.len(), "noise bounds vs frame size")?;
    check_rho(constants)?;
    let total: f64 = constants
        .iter()
        .zip(best_term.iter().zip(eta))
        .map(|(k, (sigma, eta))| {
            (1.0 + k.rho) / (1.0 - k.rho) * sigma + 2.0 * k.tau / (1.0 - k.rho) * eta
        })
        .sum();
    Ok(2.0 / c * total)
}

/// l_p companion for l2 null space constants, `1 <= p <= 2`:
/// `(1/C) (<rho_vec, sigma> / s^(1-1/p) + <tau_vec, eta> / s^(1/2-1/p))` with
/// `rho_vec_i = 2(1 + rho_i)^2/(1 - rho_i)` and `tau_vec_i = (3 - rho_i)/(1 - rho_i) tau_i`.
pub fn bound_rdnsp_lp(
    frame: &FusionFrame,
    constants: &[NspConstants],
    best_term: &[f64],
    eta: &[f64],
    s: usize,
    p: f64,
) -> Result<f64> {
    let c = lower_bound(frame)?;
    check_len(frame.len(), constants.len(), "NSP constants vs frame size")?;
    check_len(frame.len(), best_term.len(), "best-term errors vs frame size")?;
    check_len(frame.len(), eta.len(), "noise bounds vs frame size")?;
    check_rho(constants)?;
    if !(1.0..=2.0).contains(&p) || s == 0 {
        return Err(Error::InvalidInput(format!("need 1 <= p <= 2 and s >= 1 (p = {p}, s = {s})")));
    }
    let s = s as f64;
    let rho_term: f64 = constants
        .iter()
        .zip(best_term)
        .map(|(k, sigma)| 2.0 * (1.0 + k.rho).powi(2) / (1.0 - k.rho) * sigma)
        .sum();
    let tau_term: f64 = constants
        .iter()
        .zip(eta)
        .map(|(k, eta)| (3.0 - k.rho) / (1.0 - k.rho) * k.tau * eta)
        .sum();
    Ok((rho_term / s.powf(1.0 - 1.0 / p) + tau_term / s.powf(0.5 - 1.0 / p)) / c)
}

/// Two disjoint blocks, BPDN on the first and least squares on the second:
/// `||A_{Omega_2}^+ e_2|| + 2(1+rho)/(1-rho) sigma_1 + 4 tau/(1-rho) ||e_1||`.
pub fn bound_two_blocks(
    a: &SensingMatrix,
    omega2: &IndexSetProjection,
    e2: &DVector<f64>,
    constants: NspConstants,
    sigma1: f64,
    e1_norm: f64,
) -> Result<f64> {
    check_rho(&[constants])?;
    let ls = lsq_columns(&a.submatrix(omega2), e2)?.norm();
    let NspConstants { rho, tau } = constants;
    Ok(ls + 2.0 * (1.0 + rho) / (1.0 - rho) * sigma1 + 4.0 * tau / (1.0 - rho) * e1_norm)
}

/// Mixed bound for least squares on some subspaces and BPDN on the rest:
/// `(1/C) (sum_lsq ||A^+ e_i|| + sum_bpdn [2(1+rho_i)/(1-rho_i) sigma_i + 4 tau_i/(1-rho_i) ||e_i||])`.
///
/// `constants[i]` is `None` for least-squares subspaces; `best_term[i]` is ignored there.
pub fn bound_constrained_recovery(
    frame: &FusionFrame,
    a: &SensingMatrix,
    constants: &[Option<NspConstants>],
    best_term: &[f64],
    noise: NoiseInput,
) -> Result<f64> {
    let c = lower_bound(frame)?;
    check_len(frame.len(), constants.len(), "NSP constants vs frame size")?;
    check_len(frame.len(), best_term.len(), "best-term errors vs frame size")?;
    check_len(frame.len(), noise.len(), "noise count vs frame size")?;
    let mut total = 0.0;
    for (i, p) in frame.projections().iter().enumerate() {
        total += match constants[i] {
            None => pinv_noise(a, p, &noise, i).map_err(|e| e.in_subspace(i + 1))?,
            Some(k) => {
                check_rho(&[k])?;
                2.0 * (1.0 + k.rho) / (1.0 - k.rho) * best_term[i]
                    + 4.0 * k.tau / (1.0 - k.rho) * noise.norm(i)
            }
        };
    }
    Ok(total / c)
}

/// `960 sqrt(2) / (16 - 41 delta^2)^2`, the uniform-constant upper estimate.
pub fn informal_constant(delta: f64) -> Result<f64> {
    if !(0.0..RIP_TO_NSP_LIMIT).contains(&delta) {
        return Err(Error::DeltaOutOfRange { delta });
    }
    let d = 16.0 - 41.0 * delta * delta;
    Ok(960.0 * std::f64::consts::SQRT_2 / (d * d))
}

/// `(n / C) * constant(delta) * eta` for uniform `delta` and `eta = max_i eta_i`.
pub fn informal_bound(frame: &FusionFrame, delta: f64, eta: f64) -> Result<f64> {
    let c = lower_bound(frame)?;
    Ok(frame.len() as f64 / c * informal_constant(delta)? * eta)
}

/// `C_subg min(delta)^-2 (s_max ln(e N / s_max) + ln(2 n / eps))` before rounding.
///
/// `c_subg` stands in for a constant that is not known explicitly; 1 is only a placeholder.
pub fn required_measurements_real(
    ambient_dim: usize,
    pattern: &SparsityPattern,
    delta_targets: &[f64],
    eps: f64,
    c_subg: f64,
) -> Result<f64> {
    if pattern.is_empty() || delta_targets.is_empty() {
        return Err(Error::InvalidInput("need a non-empty pattern and delta targets".into()));
    }
    if !(c_subg > 0.0) || !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidInput(format!(
            "need C_subg > 0 and 0 < eps < 1 (C_subg = {c_subg}, eps = {eps})"
        )));
    }
    let delta = delta_targets.iter().copied().fold(f64::INFINITY, f64::min);
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidInput(format!("delta targets must lie in (0, 1), min is {delta}")));
    }
    let s = pattern.max() as f64;
    let n = pattern.len() as f64;
    let sparse_term = if s > 0.0 {
        s * (std::f64::consts::E * ambient_dim as f64 / s).ln()
    } else {
        0.0
    };
    Ok(c_subg / (delta * delta) * (sparse_term + (2.0 * n / eps).ln()))
}

pub fn required_measurements(
    ambient_dim: usize,
    pattern: &SparsityPattern,
    delta_targets: &[f64],
    eps: f64,
    c_subg: f64,
) -> Result<usize> {
    Ok(required_measurements_real(ambient_dim, pattern, delta_targets, eps, c_subg)?.ceil() as usize)
}

/// `sigma_{s_i}(P_i x)_1`: the l1 mass of `P_i x` outside its `s_i` largest entries.
pub fn best_term_errors(x: &DVector<f64>, frame: &FusionFrame, pattern: &SparsityPattern) -> Result<Vec<f64>> {
    pattern.check_against(frame)?;
    check_len(frame.ambient_dim(), x.len(), "signal length")?;
    Ok(frame
        .projections()
        .iter()
        .zip(pattern.per_subspace())
        .map(|(p, &s)| {
            let mut mags: Vec<f64> = p.indices().iter().map(|&k| x[k].abs()).collect();
            mags.sort_by(|a, b| b.total_cmp(a));
            mags.iter().skip(s).sum()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn partition(n: usize, sizes: &[usize]) -> FusionFrame {
        let mut start = 0;
        let projections = sizes
            .iter()
            .map(|&s| {
                let p = IndexSetProjection::new(n, (start..start + s).collect()).unwrap();
                start += s;
                p
            })
            .collect();
        FusionFrame::new(n, projections).unwrap()
    }

    #[test]
    fn best_term_drops_smallest() {
        let frame = partition(3, &[3]);
        let x = DVector::from_vec(vec![3.0, -2.0, 1.0]);
        let e = best_term_errors(&x, &frame, &SparsityPattern::new(vec![2])).unwrap();
        assert_eq!(e, vec![1.0]);
    }

    #[test]
    fn zero_noise_zero_bound() {
        let a = SensingMatrix::gaussian(6, 8, 1, true).unwrap();
        let frame = partition(8, &[4, 4]);
        let b = bound_prop2(&frame, &a, NoiseInput::Norms(&[0.0, 0.0])).unwrap();
        assert_eq!(b, 0.0);
        let k = NspConstants { rho: 0.3, tau: 2.0 };
        assert_eq!(bound_rdnsp(&frame, &[k, k], &[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn single_column_reduces_to_rank_one() {
        let a = SensingMatrix::gaussian(5, 1, 2, false).unwrap();
        let frame = partition(1, &[1]);
        let eta = 0.7;
        let b = bound_prop2(&frame, &a, NoiseInput::Norms(&[eta])).unwrap();
        let col = a.matrix().column(0).norm_squared();
        assert!((b - eta * eta / col).abs() < 1e-12);
    }

    #[test]
    fn rdnsp_is_linear_in_eta() {
        let frame = partition(4, &[2, 2]);
        let k = NspConstants { rho: 0.4, tau: 1.5 };
        let b1 = bound_rdnsp(&frame, &[k, k], &[0.0, 0.0], &[0.1, 0.1]).unwrap();
        let b2 = bound_rdnsp(&frame, &[k, k], &[0.0, 0.0], &[0.2, 0.2]).unwrap();
        assert!((b2 - 2.0 * b1).abs() < 1e-15);
        assert!(bound_rdnsp(&frame, &[k, NspConstants { rho: 1.0, tau: 1.0 }], &[0.0; 2], &[0.0; 2]).is_err());
    }

    #[test]
    fn informal_constant_at_zero() {
        assert!((informal_constant(0.0).unwrap() - 960.0 * 2f64.sqrt() / 256.0).abs() < 1e-12);
        assert!(informal_constant(0.7).is_err());
    }

    #[test]
    fn measurement_planning_scaling() {
        let pattern = SparsityPattern::new(vec![5, 5]);
        let m1 = required_measurements_real(1000, &pattern, &[0.5], 0.01, 1.0).unwrap();
        let m2 = required_measurements_real(1000, &pattern, &[0.25], 0.01, 1.0).unwrap();
        assert!((m2 / m1 - 4.0).abs() < 1e-12);
        let doubled = SparsityPattern::new(vec![10, 10]);
        let m3 = required_measurements_real(1000, &doubled, &[0.5], 0.01, 1.0).unwrap();
        // s ln(eN/s) grows sublinearly in s, so m grows but less than doubles.
        assert!(m3 > m1 && m3 < 2.0 * m1);
    }
}
