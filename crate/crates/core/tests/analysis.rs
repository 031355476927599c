use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;

use fusecs::analysis::{best_term_errors, bound_prop2, bound_rdnsp, rip_exhaustive, rip_to_nsp, NoiseInput};
use fusecs::rng::{gaussian_vector, rng_from};
use fusecs::{FusionFrame, IndexSetProjection, SensingMatrix, SparsityPattern};

fn frame_from(n: usize, sets: &[Vec<usize>]) -> FusionFrame {
    let projections = sets
        .iter()
        .map(|s| IndexSetProjection::new(n, s.clone()).unwrap())
        .collect();
    FusionFrame::new(n, projections).unwrap()
}

/// Max over all s-subsets of `cols` of the largest |eigenvalue - 1| of the Gram matrix.
fn brute_force_delta(a: &DMatrix<f64>, cols: &[usize], s: usize) -> f64 {
    let mut worst = 0.0f64;
    let mut subset: Vec<usize> = (0..s).collect();
    loop {
        let chosen: Vec<usize> = subset.iter().map(|&j| cols[j]).collect();
        let sub = a.select_columns(&chosen);
        for l in SymmetricEigen::new(sub.tr_mul(&sub)).eigenvalues.iter() {
            worst = worst.max((l - 1.0).abs());
        }
        // Next combination in lexicographic order.
        let mut i = s;
        while i > 0 && subset[i - 1] == cols.len() - s + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return worst;
        }
        subset[i - 1] += 1;
        for j in i..s {
            subset[j] = subset[j - 1] + 1;
        }
    }
}

#[test]
fn exhaustive_rip_matches_eigen_scan() {
    let a = SensingMatrix::gaussian(12, 16, 11, true).unwrap();
    let all: Vec<usize> = (0..16).collect();
    for s in 1..=3 {
        let est = rip_exhaustive(&a, s, None).unwrap().delta;
        assert!((est - brute_force_delta(a.matrix(), &all, s)).abs() <= 1e-12);
    }
    let omega = IndexSetProjection::new(16, vec![1, 4, 5, 9, 12, 15]).unwrap();
    let est = rip_exhaustive(&a, 2, Some(&omega)).unwrap().delta;
    assert!((est - brute_force_delta(a.matrix(), omega.indices(), 2)).abs() <= 1e-12);
}

#[test]
fn rip_to_nsp_closed_form_and_domain() {
    let k = rip_to_nsp(0.0).unwrap();
    assert_eq!((k.rho, k.tau), (0.0, 1.0));
    let d: f64 = 0.3;
    let denom = (1.0 - d * d).sqrt() - d / 4.0;
    let k = rip_to_nsp(d).unwrap();
    assert!((k.rho - d / denom).abs() < 1e-15 && (k.tau - (1.0 + d).sqrt() / denom).abs() < 1e-15);
    assert!(rip_to_nsp(4.0 / 41f64.sqrt()).is_err());
    assert!(rip_to_nsp(-0.1).is_err());
    assert!(rip_to_nsp(f64::NAN).is_err());
    let l1 = rip_to_nsp(d).unwrap().l1_from_l2(4);
    assert!((l1.tau - 2.0 * k.tau).abs() < 1e-15);
}

#[test]
fn prop2_bound_matches_direct_formula() {
    let a = SensingMatrix::gaussian(10, 8, 2, true).unwrap();
    let frame = frame_from(8, &[vec![0, 1, 2, 3], vec![2, 3, 4, 5, 6, 7], vec![0, 7]]);
    let mut rng = rng_from(3);
    let noise: Vec<DVector<f64>> = (0..3).map(|_| gaussian_vector(10, &mut rng)).collect();
    let direct: f64 = frame
        .projections()
        .iter()
        .zip(&noise)
        .map(|(p, e)| {
            let pinv = a.matrix().select_columns(p.indices()).pseudo_inverse(1e-14).unwrap();
            (pinv * e).norm_squared()
        })
        .sum::<f64>();
    // Coordinates 0, 1, 4, 5, 6 are covered once, so C = 1.
    let bound = bound_prop2(&frame, &a, NoiseInput::Vectors(&noise)).unwrap();
    assert!((bound - direct).abs() <= 1e-10 * direct);
    let norms: Vec<f64> = noise.iter().map(|e| e.norm()).collect();
    assert!(bound_prop2(&frame, &a, NoiseInput::Norms(&norms)).unwrap() >= bound);
}

#[test]
fn bounds_reject_uncovered_frames() {
    let a = SensingMatrix::gaussian(6, 4, 2, true).unwrap();
    let frame = frame_from(4, &[vec![0, 1]]);
    assert!(bound_prop2(&frame, &a, NoiseInput::Norms(&[0.1])).is_err());
}

#[test]
fn rdnsp_bound_formula() {
    let frame = frame_from(4, &[vec![0, 1], vec![1, 2, 3]]);
    let k = rip_to_nsp(0.2).unwrap();
    let bound = bound_rdnsp(&frame, &[k, k], &[0.5, 1.0], &[0.1, 0.2]).unwrap();
    let v = |sigma: f64, eta: f64| (1.0 + k.rho) / (1.0 - k.rho) * sigma + 2.0 * k.tau / (1.0 - k.rho) * eta;
    assert!((bound - 2.0 * (v(0.5, 0.1) + v(1.0, 0.2))).abs() < 1e-14);
}

proptest! {
    #[test]
    fn best_term_error_is_tail_mass(values in prop::collection::vec(-3.0..3.0f64, 10), s in 0usize..5) {
        let x = DVector::from_vec(values.clone());
        let frame = frame_from(10, &[(0..6).collect(), (4..10).collect()]);
        let errs = best_term_errors(&x, &frame, &SparsityPattern::uniform(2, s)).unwrap();
        for (p, err) in frame.projections().iter().zip(errs) {
            let mut mags: Vec<f64> = p.indices().iter().map(|&k| values[k].abs()).collect();
            mags.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let tail: f64 = mags[..mags.len() - s.min(mags.len())].iter().sum();
            prop_assert!((err - tail).abs() <= 1e-12);
        }
    }

    #[test]
    fn nsp_constants_increase_with_delta(a in 0.0..0.62f64, b in 0.0..0.62f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (k1, k2) = (rip_to_nsp(lo).unwrap(), rip_to_nsp(hi).unwrap());
        prop_assert!(k1.rho <= k2.rho && k1.tau <= k2.tau);
        prop_assert!(k2.rho < 1.0);
    }
}
