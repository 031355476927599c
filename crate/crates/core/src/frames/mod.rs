//! Projection families, the fusion-frame operator and its inverse, and the
//! coverage / lower-frame-bound quantities of random coordinate families.

pub mod haar;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from};
use crate::types::{FusionFrame, IndexSetProjection};

/// How to build a family of coordinate projections.
#[derive(Debug, Clone, PartialEq)]
pub enum FamilyKind {
    /// Consecutive blocks of the given sizes.
    Partition { sizes: Vec<usize> },
    /// `count` independent uniformly random subsets of size `rank`.
    RandomFixedRank { rank: usize, count: usize, seed: u64 },
    /// `Omega_i = {i}` for every coordinate.
    Singletons,
    /// Haar coefficient blocks: one coarse block plus one block per detail level.
    HaarLevels { levels: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionFamilySpec {
    pub kind: FamilyKind,
    pub ambient_dim: usize,
}

impl ProjectionFamilySpec {
    pub fn new(kind: FamilyKind, ambient_dim: usize) -> Self {
        ProjectionFamilySpec { kind, ambient_dim }
    }

    pub fn check(&self) -> Result<()> {
        let n = self.ambient_dim;
        if n == 0 {
            return Err(Error::InvalidInput("ambient dimension must be >= 1".into()));
        }
        match &self.kind {
            FamilyKind::Partition { sizes } => {
                if sizes.iter().sum::<usize>() != n || sizes.contains(&0) {
                    return Err(Error::InvalidInput(format!(
                        "partition sizes {sizes:?} must be positive and sum to {n}"
                    )));
                }
            }
            FamilyKind::RandomFixedRank { rank, count, .. } => {
                if *rank == 0 || *rank > n || *count == 0 {
                    return Err(Error::InvalidInput(format!(
                        "random family needs 1 <= rank <= {n} and count >= 1 (rank {rank}, count {count})"
                    )));
                }
            }
            FamilyKind::Singletons => {}
            FamilyKind::HaarLevels { levels } => haar::check_levels(n, *levels)?,
        }
        Ok(())
    }

    /// `key = value` lines for the experiment config format.
    pub fn to_config_lines(&self) -> Vec<String> {
        let mut lines = vec![format!("N = {}", self.ambient_dim)];
        match &self.kind {
            FamilyKind::Partition { sizes } => {
                lines.push("family = partition".into());
                let sizes: Vec<String> = sizes.iter().map(|s| s.to_string()).collect();
                lines.push(format!("sizes = {}", sizes.join(", ")));
            }
            FamilyKind::RandomFixedRank { rank, count, seed } => {
                lines.push("family = random_fixed_rank".into());
                lines.push(format!("r = {rank}"));
                lines.push(format!("n = {count}"));
                lines.push(format!("family_seed = {seed}"));
            }
            FamilyKind::Singletons => lines.push("family = singletons".into()),
            FamilyKind::HaarLevels { levels } => {
                lines.push("family = haar_levels".into());
                lines.push(format!("levels = {levels}"));
            }
        }
        lines
    }
}

/// Build the frame described by `spec`.
pub fn build_family(spec: &ProjectionFamilySpec) -> Result<FusionFrame> {
    spec.check()?;
    let n = spec.ambient_dim;
    let projections = match &spec.kind {
        FamilyKind::Partition { sizes } => {
            let mut start = 0;
            sizes
                .iter()
                .map(|&size| {
                    let p = IndexSetProjection::new(n, (start..start + size).collect());
                    start += size;
                    p
                })
                .collect::<Result<Vec<_>>>()?
        }
        FamilyKind::RandomFixedRank { rank, count, seed } => {
            let mut rng = rng_from(*seed);
            draw_random_family(n, *rank, *count, &mut rng)?
        }
        FamilyKind::Singletons => (0..n)
            .map(|k| IndexSetProjection::new(n, vec![k]))
            .collect::<Result<Vec<_>>>()?,
        FamilyKind::HaarLevels { levels } => haar::level_blocks(n, *levels)?
            .into_iter()
            .map(|block| IndexSetProjection::new(n, block.collect()))
            .collect::<Result<Vec<_>>>()?,
    };
    FusionFrame::new(n, projections)
}

/// Uniform size-`rank` subset of `0..ambient_dim` by partial Fisher-Yates.
pub fn sample_subset(ambient_dim: usize, rank: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..ambient_dim).collect();
    let (chosen, _) = pool.partial_shuffle(rng, rank);
    chosen.to_vec()
}

pub fn draw_random_family(
    ambient_dim: usize,
    rank: usize,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<IndexSetProjection>> {
    (0..count)
        .map(|_| IndexSetProjection::new(ambient_dim, sample_subset(ambient_dim, rank, rng)))
        .collect()
}

/// Smallest `n >= log(N/eps) / log(N/(N-r))`; 1 when a single projection covers everything.
pub fn min_projection_count(ambient_dim: usize, rank: usize, eps: f64) -> Result<usize> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidInput(format!("eps = {eps} must lie in (0, 1)")));
    }
    if rank == 0 {
        return Err(Error::InvalidInput("rank must be >= 1".into()));
    }
    if rank > ambient_dim {
        return Err(Error::InvalidInput(format!("rank {rank} exceeds N = {ambient_dim}")));
    }
    if rank == ambient_dim {
        return Ok(1);
    }
    let n = ambient_dim as f64;
    let bound = (n / eps).ln() / (n / (n - rank as f64)).ln();
    // Guard against `bound` landing a hair above an integer through rounding.
    let rounded = bound.round();
    let count = if (bound - rounded).abs() <= 1e-9 * bound.max(1.0) {
        rounded
    } else {
        bound.ceil()
    };
    Ok((count as usize).max(1))
}

/// `N ((N - r) / N)^n`, the union-style bound on the probability that some
/// coordinate is left uncovered.
pub fn uncovered_probability_bound(ambient_dim: usize, rank: usize, count: usize) -> f64 {
    let n = ambient_dim as f64;
    let miss = (ambient_dim.saturating_sub(rank)) as f64 / n;
    n * miss.powi(count as i32)
}

/// `S v = sum_i P_i v`, i.e. `(S v)_k = M(k) v_k`.
pub fn apply_fusion_operator(frame: &FusionFrame, v: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim(frame, v)?;
    Ok(DVector::from_iterator(
        v.len(),
        v.iter()
            .zip(frame.multiplicities())
            .map(|(value, &m)| m as f64 * value),
    ))
}

/// `S^{-1} v`, i.e. `v_k / M(k)`. Fails on frames that leave coordinates uncovered.
pub fn invert_fusion_exact(frame: &FusionFrame, v: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim(frame, v)?;
    let coverage = frame.validate();
    if !coverage.valid {
        return Err(Error::UncoveredIndices {
            uncovered: coverage.uncovered,
        });
    }
    Ok(invert_fusion_pseudo(frame, v))
}

/// Moore-Penrose inverse of `S`: uncovered coordinates map to zero.
pub fn invert_fusion_pseudo(frame: &FusionFrame, v: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        v.len(),
        v.iter().zip(frame.multiplicities()).map(|(value, &m)| {
            if m == 0 {
                0.0
            } else {
                value / m as f64
            }
        }),
    )
}

fn check_dim(frame: &FusionFrame, v: &DVector<f64>) -> Result<()> {
    if v.len() != frame.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: frame.ambient_dim(),
            got: v.len(),
            context: "fusion operator input",
        });
    }
    Ok(())
}

/// A positive operator `S` with known bounds `C I <= S <= D I`.
pub trait FusionOperator {
    fn dim(&self) -> usize;
    fn apply(&self, v: &DVector<f64>) -> DVector<f64>;
    /// `(C, D)`.
    fn frame_bounds(&self) -> (f64, f64);
}

impl FusionOperator for FusionFrame {
    fn dim(&self) -> usize {
        self.ambient_dim()
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            v.len(),
            v.iter()
                .zip(self.multiplicities())
                .map(|(value, &m)| m as f64 * value),
        )
    }

    fn frame_bounds(&self) -> (f64, f64) {
        (self.lower_bound() as f64, self.upper_bound() as f64)
    }
}

/// Iterates `x_k = x_{k-1} + 2/(C+D) (Sx - S x_{k-1})` from `x_0 = 0`.
pub struct FrameIterates<'a, O: FusionOperator + ?Sized> {
    op: &'a O,
    target: &'a DVector<f64>,
    current: DVector<f64>,
    step: f64,
    last_update: f64,
}

impl<'a, O: FusionOperator + ?Sized> FrameIterates<'a, O> {
    pub fn new(op: &'a O, target: &'a DVector<f64>) -> Self {
        let (c, d) = op.frame_bounds();
        FrameIterates {
            op,
            target,
            current: DVector::zeros(target.len()),
            step: 2.0 / (c + d),
            last_update: f64::INFINITY,
        }
    }

    /// Euclidean norm of the most recent update `x_k - x_{k-1}`.
    pub fn last_update(&self) -> f64 {
        self.last_update
    }
}

impl<O: FusionOperator + ?Sized> Iterator for FrameIterates<'_, O> {
    type Item = DVector<f64>;

    fn next(&mut self) -> Option<DVector<f64>> {
        let mut update = self.target - self.op.apply(&self.current);
        update *= self.step;
        self.last_update = update.norm();
        self.current += update;
        Some(self.current.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameAlgorithmOptions {
    /// Relative-update stopping threshold.
    pub tol: f64,
    /// Iteration cap; `None` uses [`default_max_iterations`].
    pub k_max: Option<usize>,
}

impl Default for FrameAlgorithmOptions {
    fn default() -> Self {
        FrameAlgorithmOptions {
            tol: 1e-10,
            k_max: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameAlgorithmResult {
    pub estimate: DVector<f64>,
    pub iterations: usize,
    /// Contraction ratio `(D - C) / (D + C)`.
    pub ratio: f64,
    pub converged: bool,
}

/// Contraction ratio of the frame algorithm.
pub fn contraction_ratio(lower: f64, upper: f64) -> f64 {
    (upper - lower) / (upper + lower)
}

/// `10 * ceil(log(tol) / log(ratio))`, capped at `10^5`; 1 for tight frames.
pub fn default_max_iterations(ratio: f64, tol: f64) -> usize {
    const CAP: usize = 100_000;
    if ratio <= 0.0 {
        return 1;
    }
    if ratio >= 1.0 {
        return CAP;
    }
    let k = (tol.ln() / ratio.ln()).ceil();
    ((10.0 * k) as usize).clamp(1, CAP)
}

/// Recover `x` from `Sx` by the frame algorithm.
pub fn frame_algorithm<O: FusionOperator + ?Sized>(
    op: &O,
    sx: &DVector<f64>,
    opts: FrameAlgorithmOptions,
) -> Result<FrameAlgorithmResult> {
    if sx.len() != op.dim() {
        return Err(Error::DimensionMismatch {
            expected: op.dim(),
            got: sx.len(),
            context: "frame algorithm input",
        });
    }
    let (c, d) = op.frame_bounds();
    if !(c > 0.0) || d < c {
        return Err(Error::InvalidInput(format!(
            "frame algorithm needs 0 < C <= D, got C = {c}, D = {d}"
        )));
    }
    let ratio = contraction_ratio(c, d);
    let k_max = opts.k_max.unwrap_or_else(|| default_max_iterations(ratio, opts.tol)).max(1);
    let mut iterates = FrameIterates::new(op, sx);
    let mut estimate = DVector::zeros(sx.len());
    let mut converged = false;
    let mut iterations = 0;
    while iterations < k_max {
        let Some(x_k) = iterates.next() else { break };
        iterations += 1;
        estimate = x_k;
        if ratio == 0.0 {
            // One step is exact for tight frames.
            converged = true;
            break;
        }
        let scale = estimate.norm();
        let update = iterates.last_update();
        if update <= opts.tol * scale || update == 0.0 {
            converged = true;
            break;
        }
    }
    Ok(FrameAlgorithmResult {
        estimate,
        iterations,
        ratio,
        converged,
    })
}

/// `P[C >= l] = (1 - F(l-1; n, r/N))^N` with `F` the binomial CDF, evaluated as written.
///
/// The formula treats the multiplicities `M(k)` as independent, which they are
/// not for fixed-size subsets; compare against
/// [`lower_bound_tail_montecarlo`] for the true probability.
pub fn lower_bound_distribution(ambient_dim: usize, rank: usize, count: usize, l: usize) -> Result<f64> {
    if l > count {
        return Err(Error::InvalidInput(format!("l = {l} exceeds n = {count}")));
    }
    if rank > ambient_dim || ambient_dim == 0 {
        return Err(Error::InvalidInput(format!("need 0 <= r <= N, got r = {rank}, N = {ambient_dim}")));
    }
    if l == 0 {
        return Ok(1.0);
    }
    let p = rank as f64 / ambient_dim as f64;
    let binom = Binomial::new(p, count as u64)
        .map_err(|e| Error::InvalidInput(format!("binomial parameters: {e}")))?;
    let below = binom.cdf((l - 1) as u64);
    Ok((1.0 - below).max(0.0).powi(ambient_dim as i32))
}

/// Per-trial lower frame bounds `C = min_k M(k)` for nested random families.
///
/// Trial `t` draws `max(n_values)` subsets from the stream `derive_seed(seed, t)`
/// and reads `C` off each prefix, so `C` is non-decreasing in `n` within a trial.
/// Row `t` of the result holds the values for `n_values` in order.
pub fn lower_bound_samples(
    ambient_dim: usize,
    rank: usize,
    n_values: &[usize],
    trials: usize,
    seed: u64,
) -> Vec<Vec<usize>> {
    let n_max = n_values.iter().copied().max().unwrap_or(0);
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_from(derive_seed(seed, t as u64));
            let mut counts = vec![0usize; ambient_dim];
            let mut pool: Vec<usize> = (0..ambient_dim).collect();
            let mut by_prefix = vec![0usize; n_max + 1];
            for n in 1..=n_max {
                let (chosen, _) = pool.partial_shuffle(&mut rng, rank);
                for &k in chosen.iter() {
                    counts[k] += 1;
                }
                by_prefix[n] = counts.iter().copied().min().unwrap_or(0);
            }
            n_values.iter().map(|&n| by_prefix[n]).collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerBoundStats {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

/// Mean and standard deviation of `min_k M(k)` over `trials` random families per `n`.
pub fn expected_lower_bound_montecarlo(
    ambient_dim: usize,
    rank: usize,
    n_values: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<LowerBoundStats>> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be >= 1".into()));
    }
    if rank == 0 || rank > ambient_dim {
        return Err(Error::InvalidInput(format!("need 1 <= r <= N, got r = {rank}, N = {ambient_dim}")));
    }
    let samples = lower_bound_samples(ambient_dim, rank, n_values, trials, seed);
    Ok(n_values
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let values: Vec<f64> = samples.iter().map(|row| row[j] as f64).collect();
            let s = crate::stats::summarize(&values);
            LowerBoundStats {
                n,
                mean: s.mean,
                std: s.std,
            }
        })
        .collect())
}

/// Empirical `P[C >= l]` for random families.
pub fn lower_bound_tail_montecarlo(
    ambient_dim: usize,
    rank: usize,
    count: usize,
    l: usize,
    trials: usize,
    seed: u64,
) -> f64 {
    let samples = lower_bound_samples(ambient_dim, rank, &[count], trials, seed);
    samples.iter().filter(|row| row[0] >= l).count() as f64 / trials as f64
}

/// Empirical frequency of families that leave some coordinate uncovered.
pub fn coverage_failure_frequency(
    ambient_dim: usize,
    rank: usize,
    n_values: &[usize],
    trials: usize,
    seed: u64,
) -> Vec<f64> {
    let samples = lower_bound_samples(ambient_dim, rank, n_values, trials, seed);
    (0..n_values.len())
        .map(|j| samples.iter().filter(|row| row[j] == 0).count() as f64 / trials as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(n: usize, sets: &[&[usize]]) -> FusionFrame {
        FusionFrame::new(
            n,
            sets.iter()
                .map(|s| IndexSetProjection::from_one_based(n, s).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn singletons_are_tight() {
        let f = build_family(&ProjectionFamilySpec::new(FamilyKind::Singletons, 3)).unwrap();
        assert_eq!(f.len(), 3);
        assert_eq!(f.projections()[1].indices(), &[1]);
        assert_eq!((f.lower_bound(), f.upper_bound()), (1, 1));
    }

    #[test]
    fn partition_blocks() {
        let f = build_family(&ProjectionFamilySpec::new(
            FamilyKind::Partition { sizes: vec![2, 2] },
            4,
        ))
        .unwrap();
        assert_eq!(f.projections()[0].one_based(), vec![1, 2]);
        assert_eq!(f.projections()[1].one_based(), vec![3, 4]);
        assert_eq!((f.lower_bound(), f.upper_bound()), (1, 1));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let bad = [
            ProjectionFamilySpec::new(FamilyKind::Partition { sizes: vec![2, 3] }, 4),
            ProjectionFamilySpec::new(FamilyKind::RandomFixedRank { rank: 0, count: 2, seed: 0 }, 4),
            ProjectionFamilySpec::new(FamilyKind::RandomFixedRank { rank: 5, count: 2, seed: 0 }, 4),
            ProjectionFamilySpec::new(FamilyKind::HaarLevels { levels: 3 }, 12),
        ];
        for spec in &bad {
            assert!(build_family(spec).is_err(), "{spec:?}");
        }
    }

    #[test]
    fn random_family_is_deterministic_and_sized() {
        let spec = ProjectionFamilySpec::new(FamilyKind::RandomFixedRank { rank: 5, count: 4, seed: 9 }, 20);
        let a = build_family(&spec).unwrap();
        let b = build_family(&spec).unwrap();
        assert_eq!(a, b);
        assert!(a.projections().iter().all(|p| p.rank() == 5));
    }

    #[test]
    fn haar_family_partitions_coefficients() {
        let f = build_family(&ProjectionFamilySpec::new(FamilyKind::HaarLevels { levels: 8 }, 1024)).unwrap();
        assert_eq!(f.len(), 9);
        assert_eq!((f.lower_bound(), f.upper_bound()), (1, 1));
    }

    #[test]
    fn projection_counts() {
        assert_eq!(min_projection_count(1000, 500, 0.01).unwrap(), 17);
        assert_eq!(min_projection_count(600, 300, 0.0733).unwrap(), 13);
        assert_eq!(min_projection_count(2, 1, 0.5).unwrap(), 2);
        assert_eq!(min_projection_count(10, 10, 0.1).unwrap(), 1);
        assert!(min_projection_count(10, 5, 1.5).is_err());
    }

    #[test]
    fn uncovered_bound_values() {
        assert_eq!(uncovered_probability_bound(10, 10, 1), 0.0);
        assert!((uncovered_probability_bound(2, 1, 1) - 1.0).abs() < 1e-15);
        let b = uncovered_probability_bound(1000, 500, 17);
        assert!((b - 1000.0 * 2f64.powi(-17)).abs() < 1e-15);
        assert!(b <= 0.01);
    }

    #[test]
    fn fusion_operator_counts_multiplicity() {
        let f = frame(3, &[&[1, 2], &[2, 3]]);
        let v = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        let sv = apply_fusion_operator(&f, &v).unwrap();
        assert_eq!(sv.as_slice(), &[1.0, 2.0, 1.0]);
        let back = invert_fusion_exact(&f, &sv).unwrap();
        assert_eq!(back.as_slice(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn inverse_on_uncovered_frame_names_indices() {
        let f = frame(4, &[&[1, 2], &[2, 3]]);
        let err = invert_fusion_exact(&f, &DVector::zeros(4)).unwrap_err();
        match err {
            Error::UncoveredIndices { uncovered } => assert_eq!(uncovered, vec![4]),
            other => panic!("unexpected {other:?}"),
        }
        assert!(apply_fusion_operator(&f, &DVector::zeros(3)).is_err());
    }

    #[test]
    fn tight_frame_is_exact_in_one_iteration() {
        let full = IndexSetProjection::full(4).unwrap();
        let f = FusionFrame::new(4, vec![full.clone(), full.clone(), full]).unwrap();
        let x = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let sx = apply_fusion_operator(&f, &x).unwrap();
        let res = frame_algorithm(&f, &sx, FrameAlgorithmOptions::default()).unwrap();
        assert_eq!(res.iterations, 1);
        assert_eq!(res.ratio, 0.0);
        assert!((res.estimate - x).amax() < 1e-15);
    }

    #[test]
    fn frame_algorithm_respects_envelope_on_two_sets() {
        let f = frame(3, &[&[1, 2], &[2, 3]]);
        let x = DVector::from_vec(vec![0.3, -1.2, 2.0]);
        let sx = apply_fusion_operator(&f, &x).unwrap();
        let ratio: f64 = 1.0 / 3.0;
        for (k, x_k) in FrameIterates::new(&f, &sx).take(40).enumerate() {
            let err = (&x - x_k).norm();
            assert!(err <= ratio.powi(k as i32 + 1) * x.norm() + 1e-12);
        }
        let res = frame_algorithm(&f, &sx, FrameAlgorithmOptions::default()).unwrap();
        assert!(res.converged);
        assert!((res.estimate - x).amax() < 1e-9);
    }

    #[test]
    fn frame_algorithm_flags_non_convergence() {
        let f = frame(3, &[&[1, 2], &[2, 3]]);
        let sx = DVector::from_vec(vec![1.0, 2.0, 1.0]);
        let res = frame_algorithm(&f, &sx, FrameAlgorithmOptions { tol: 1e-12, k_max: Some(3) }).unwrap();
        assert!(!res.converged);
        assert_eq!(res.iterations, 3);
    }

    #[test]
    fn default_iteration_cap() {
        assert_eq!(default_max_iterations(0.0, 1e-10), 1);
        assert_eq!(default_max_iterations(0.5, 1e-10), 340);
        assert_eq!(default_max_iterations(0.999999, 1e-10), 100_000);
    }

    #[test]
    fn lower_bound_distribution_trivial_cases() {
        assert_eq!(lower_bound_distribution(10, 3, 4, 0).unwrap(), 1.0);
        assert!((lower_bound_distribution(1, 1, 3, 3).unwrap() - 1.0).abs() < 1e-15);
        assert!((lower_bound_distribution(2, 1, 2, 1).unwrap() - 0.5625).abs() < 1e-12);
        assert!(lower_bound_distribution(2, 1, 2, 3).is_err());
    }

    #[test]
    fn full_rank_families_have_c_equal_n() {
        let stats = expected_lower_bound_montecarlo(10, 10, &[1, 4, 7], 5, 3).unwrap();
        for s in stats {
            assert_eq!(s.mean, s.n as f64);
            assert_eq!(s.std, 0.0);
        }
    }

    #[test]
    fn coverage_frequency_is_zero_for_full_rank() {
        assert_eq!(coverage_failure_frequency(20, 20, &[1, 2], 50, 1), vec![0.0, 0.0]);
    }
}
