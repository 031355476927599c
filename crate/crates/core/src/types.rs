//! Domain types shared by every module.
//!
//! Index sets are stored 0-based internally. Everything that crosses a
//! user-facing boundary (files, error messages, reports) is 1-based.

use std::fmt;
use std::ops::Deref;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// A real signal of length `N >= 1` with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalVector(DVector<f64>);

impl SignalVector {
    pub fn new(entries: DVector<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidInput("signal must have length >= 1".into()));
        }
        check_finite(entries.as_slice())?;
        Ok(SignalVector(entries))
    }

    pub fn from_vec(entries: Vec<f64>) -> Result<Self> {
        Self::new(DVector::from_vec(entries))
    }

    pub fn zeros(len: usize) -> Self {
        SignalVector(DVector::zeros(len.max(1)))
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }
}

impl Deref for SignalVector {
    type Target = DVector<f64>;

    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

impl From<SignalVector> for DVector<f64> {
    fn from(v: SignalVector) -> Self {
        v.0
    }
}

pub(crate) fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(pos) => Err(Error::NonFinite(pos)),
        None => Ok(()),
    }
}

/// Where a sensing matrix came from.
#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Gaussian { seed: u64 },
    Bernoulli { seed: u64 },
    File { path: PathBuf },
    Explicit,
}

/// An `m x N` measurement matrix.
#[derive(Debug, Clone)]
pub struct SensingMatrix {
    data: DMatrix<f64>,
    provenance: Provenance,
    normalized: bool,
}

impl SensingMatrix {
    pub fn new(data: DMatrix<f64>, provenance: Provenance, normalized: bool) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "sensing matrix must be at least 1x1, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        check_finite(data.as_slice())?;
        Ok(SensingMatrix {
            data,
            provenance,
            normalized,
        })
    }

    pub fn from_matrix(data: DMatrix<f64>) -> Result<Self> {
        Self::new(data, Provenance::Explicit, false)
    }

    /// I.i.d. standard normal entries, scaled by `1/sqrt(m)` when `normalized`.
    pub fn gaussian(rows: usize, cols: usize, seed: u64, normalized: bool) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = if normalized { 1.0 / (rows as f64).sqrt() } else { 1.0 };
        let data = DMatrix::from_fn(rows, cols, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        });
        Self::new(data, Provenance::Gaussian { seed }, normalized)
    }

    /// Rademacher (+1/-1) entries, scaled by `1/sqrt(m)` when `normalized`.
    pub fn bernoulli(rows: usize, cols: usize, seed: u64, normalized: bool) -> Result<Self> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = if normalized { 1.0 / (rows as f64).sqrt() } else { 1.0 };
        let data = DMatrix::from_fn(rows, cols, |_, _| {
            if rng.random::<bool>() {
                scale
            } else {
                -scale
            }
        });
        Self::new(data, Provenance::Bernoulli { seed }, normalized)
    }

    /// Same matrix with every column rescaled to unit Euclidean norm.
    pub fn with_unit_columns(&self) -> Result<Self> {
        let mut data = self.data.clone();
        for mut col in data.column_iter_mut() {
            let norm = col.norm();
            if norm == 0.0 {
                return Err(Error::ZeroColumn);
            }
            col /= norm;
        }
        Self::new(data, self.provenance.clone(), true)
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Mean Euclidean column norm; close to 1 for normalized Gaussian matrices.
    pub fn column_norm_mean(&self) -> f64 {
        let total: f64 = self.data.column_iter().map(|c| c.norm()).sum();
        total / self.cols() as f64
    }

    /// `A_Omega`: the columns of `A` listed in the projection's index set.
    pub fn submatrix(&self, projection: &IndexSetProjection) -> DMatrix<f64> {
        self.data.select_columns(projection.indices())
    }

    pub fn columns(&self, indices: &[usize]) -> DMatrix<f64> {
        self.data.select_columns(indices)
    }

    /// `A * P * v` without materializing `P`.
    pub fn apply_projected(&self, projection: &IndexSetProjection, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.rows());
        for &k in projection.indices() {
            let coef = v[k];
            if coef != 0.0 {
                out.axpy(coef, &self.data.column(k), 1.0);
            }
        }
        out
    }
}

/// Orthogonal coordinate projection onto the span of `{e_k : k in Omega}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IndexSetProjection {
    ambient_dim: usize,
    indices: Vec<usize>,
}

impl IndexSetProjection {
    /// Build from 0-based indices. Duplicates and out-of-range indices are errors.
    pub fn new(ambient_dim: usize, mut indices: Vec<usize>) -> Result<Self> {
        if ambient_dim == 0 {
            return Err(Error::InvalidInput("ambient dimension must be >= 1".into()));
        }
        indices.sort_unstable();
        for pair in indices.windows(2) {
            if pair[0] == pair[1] {
                return Err(Error::DuplicateIndex { index: pair[0] + 1 });
            }
        }
        if let Some(&last) = indices.last() {
            if last >= ambient_dim {
                return Err(Error::IndexOutOfRange {
                    index: last + 1,
                    ambient_dim,
                });
            }
        }
        Ok(IndexSetProjection {
            ambient_dim,
            indices,
        })
    }

    /// Build from 1-based indices, the convention used in files and reports.
    pub fn from_one_based(ambient_dim: usize, indices: &[usize]) -> Result<Self> {
        let zero_based = indices
            .iter()
            .map(|&k| {
                if k == 0 || k > ambient_dim {
                    Err(Error::IndexOutOfRange {
                        index: k,
                        ambient_dim,
                    })
                } else {
                    Ok(k - 1)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(ambient_dim, zero_based)
    }

    pub fn full(ambient_dim: usize) -> Result<Self> {
        Self::new(ambient_dim, (0..ambient_dim).collect())
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    /// Sorted 0-based indices.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.indices.iter().map(|k| k + 1).collect()
    }

    pub fn rank(&self) -> usize {
        self.indices.len()
    }

    pub fn contains(&self, k: usize) -> bool {
        self.indices.binary_search(&k).is_ok()
    }

    /// `P v`: keep the entries in `Omega`, zero the rest.
    pub fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.ambient_dim {
            return Err(Error::DimensionMismatch {
                expected: self.ambient_dim,
                got: v.len(),
                context: "projection input",
            });
        }
        let mut out = DVector::zeros(self.ambient_dim);
        for &k in &self.indices {
            out[k] = v[k];
        }
        Ok(out)
    }

    /// The entries of `v` on `Omega`, in index order.
    pub fn restrict(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.indices.len(), self.indices.iter().map(|&k| v[k]))
    }

    /// Inverse of [`restrict`](Self::restrict): place `values` on `Omega` in a zero vector.
    pub fn embed(&self, values: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.ambient_dim);
        for (&k, &v) in self.indices.iter().zip(values.iter()) {
            out[k] = v;
        }
        out
    }
}

/// Coverage report of a fusion frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coverage {
    pub valid: bool,
    /// 1-based indices `k` with `M(k) = 0`.
    pub uncovered: Vec<usize>,
}

/// An ordered family of coordinate projections with cached multiplicities.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionFrame {
    ambient_dim: usize,
    projections: Vec<IndexSetProjection>,
    multiplicities: Vec<usize>,
    lower_bound: usize,
    upper_bound: usize,
}

impl FusionFrame {
    pub fn new(ambient_dim: usize, projections: Vec<IndexSetProjection>) -> Result<Self> {
        if projections.is_empty() {
            return Err(Error::InvalidInput("fusion frame needs at least one projection".into()));
        }
        if let Some(p) = projections.iter().find(|p| p.ambient_dim() != ambient_dim) {
            return Err(Error::DimensionMismatch {
                expected: ambient_dim,
                got: p.ambient_dim(),
                context: "projection ambient dimension",
            });
        }
        let multiplicities = count_multiplicities(ambient_dim, &projections);
        let lower_bound = *multiplicities.iter().min().unwrap_or(&0);
        let upper_bound = *multiplicities.iter().max().unwrap_or(&0);
        Ok(FusionFrame {
            ambient_dim,
            projections,
            multiplicities,
            lower_bound,
            upper_bound,
        })
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn projections(&self) -> &[IndexSetProjection] {
        &self.projections
    }

    pub fn len(&self) -> usize {
        self.projections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.projections.is_empty()
    }

    /// `M(k)`, the number of index sets containing coordinate `k` (0-based `k`).
    pub fn multiplicities(&self) -> &[usize] {
        &self.multiplicities
    }

    /// `C = min_k M(k)`.
    pub fn lower_bound(&self) -> usize {
        self.lower_bound
    }

    /// `D = max_k M(k)`.
    pub fn upper_bound(&self) -> usize {
        self.upper_bound
    }

    pub fn validate(&self) -> Coverage {
        let uncovered: Vec<usize> = self
            .multiplicities
            .iter()
            .enumerate()
            .filter(|(_, &m)| m == 0)
            .map(|(k, _)| k + 1)
            .collect();
        Coverage {
            valid: uncovered.is_empty(),
            uncovered,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.lower_bound >= 1
    }

    /// The first `n` projections as a new frame.
    pub fn prefix(&self, n: usize) -> Result<Self> {
        Self::new(self.ambient_dim, self.projections[..n.min(self.len())].to_vec())
    }
}

pub(crate) fn count_multiplicities(ambient_dim: usize, projections: &[IndexSetProjection]) -> Vec<usize> {
    let mut counts = vec![0usize; ambient_dim];
    for p in projections {
        for &k in p.indices() {
            counts[k] += 1;
        }
    }
    counts
}

/// Validate a frame, returning the coverage report. Never fails.
pub fn validate(frame: &FusionFrame) -> Coverage {
    frame.validate()
}

/// Per-subspace sparsity levels `s_1..s_n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityPattern {
    per_subspace: Vec<usize>,
}

impl SparsityPattern {
    pub fn new(per_subspace: Vec<usize>) -> Self {
        SparsityPattern { per_subspace }
    }

    pub fn uniform(n: usize, s: usize) -> Self {
        SparsityPattern {
            per_subspace: vec![s; n],
        }
    }

    pub fn per_subspace(&self) -> &[usize] {
        &self.per_subspace
    }

    pub fn total(&self) -> usize {
        self.per_subspace.iter().sum()
    }

    pub fn max(&self) -> usize {
        self.per_subspace.iter().copied().max().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.per_subspace.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_subspace.is_empty()
    }

    /// Checks `s_i <= rank(P_i)` and that there is one level per projection.
    pub fn check_against(&self, frame: &FusionFrame) -> Result<()> {
        if self.per_subspace.len() != frame.len() {
            return Err(Error::DimensionMismatch {
                expected: frame.len(),
                got: self.per_subspace.len(),
                context: "sparsity pattern length",
            });
        }
        for (i, (&s, p)) in self.per_subspace.iter().zip(frame.projections()).enumerate() {
            if s > p.rank() {
                return Err(Error::InvalidInput(format!(
                    "sparsity s_{} = {} exceeds rank {} of its projection",
                    i + 1,
                    s,
                    p.rank()
                )));
            }
        }
        Ok(())
    }

    /// Whether `x` satisfies `||P_i x||_0 <= s_i` for every `i`.
    pub fn admits(&self, frame: &FusionFrame, x: &DVector<f64>) -> bool {
        frame
            .projections()
            .iter()
            .zip(&self.per_subspace)
            .all(|(p, &s)| p.indices().iter().filter(|&&k| x[k] != 0.0).count() <= s)
    }
}

/// Local measurement vectors `y^(i)` with their noise bounds `eta_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    measurements: Vec<DVector<f64>>,
    noise_bounds: Vec<f64>,
}

impl MeasurementSet {
    pub fn new(measurements: Vec<DVector<f64>>, noise_bounds: Vec<f64>) -> Result<Self> {
        if measurements.len() != noise_bounds.len() {
            return Err(Error::DimensionMismatch {
                expected: measurements.len(),
                got: noise_bounds.len(),
                context: "noise bounds per measurement",
            });
        }
        if let Some(first) = measurements.first() {
            let m = first.len();
            for y in &measurements {
                if y.len() != m {
                    return Err(Error::DimensionMismatch {
                        expected: m,
                        got: y.len(),
                        context: "measurement length",
                    });
                }
                check_finite(y.as_slice())?;
            }
        }
        for &eta in &noise_bounds {
            if !eta.is_finite() || eta < 0.0 {
                return Err(Error::InvalidInput(format!("noise bound {eta} must be finite and >= 0")));
            }
        }
        Ok(MeasurementSet {
            measurements,
            noise_bounds,
        })
    }

    pub fn measurements(&self) -> &[DVector<f64>] {
        &self.measurements
    }

    pub fn noise_bounds(&self) -> &[f64] {
        &self.noise_bounds
    }

    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    pub fn with_noise_bounds(mut self, noise_bounds: Vec<f64>) -> Result<Self> {
        let measurements = std::mem::take(&mut self.measurements);
        Self::new(measurements, noise_bounds)
    }

    /// Check the measurement length against the sensing matrix.
    pub fn check_rows(&self, rows: usize) -> Result<()> {
        match self.measurements.iter().find(|y| y.len() != rows) {
            Some(y) => Err(Error::DimensionMismatch {
                expected: rows,
                got: y.len(),
                context: "measurement length vs sensing matrix rows",
            }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    LeastSquares,
    Bpdn,
    L1Analysis,
    L1Synthesis,
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            SolverKind::LeastSquares => "lsq",
            SolverKind::Bpdn => "bpdn",
            SolverKind::L1Analysis => "l1_analysis",
            SolverKind::L1Synthesis => "l1_synthesis",
        };
        f.write_str(name)
    }
}

/// Outcome of one fused recovery.
#[derive(Debug, Clone)]
pub struct RecoveryReport {
    pub local_estimates: Vec<DVector<f64>>,
    pub fused_estimate: DVector<f64>,
    /// `||A P_i x^(i) - y^(i)||_2` per subspace.
    pub residuals: Vec<f64>,
    pub solver_used: Vec<SolverKind>,
    pub iterations: Vec<usize>,
    pub converged: Vec<bool>,
    /// Iterations of the frame algorithm when used for fusion.
    pub fusion_iterations: Option<usize>,
    pub theoretical_bound: Option<f64>,
    pub achieved_error: Option<f64>,
}

impl RecoveryReport {
    /// Record `||x - x_hat||_2` against a known ground truth.
    pub fn with_ground_truth(mut self, x: &DVector<f64>) -> Self {
        self.achieved_error = Some((&self.fused_estimate - x).norm());
        self
    }

    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_indices_are_rejected() {
        let err = IndexSetProjection::new(5, vec![1, 3, 1]).unwrap_err();
        assert!(matches!(err, Error::DuplicateIndex { index: 2 }));
    }

    #[test]
    fn out_of_range_index_is_rejected() {
        assert!(IndexSetProjection::from_one_based(4, &[0]).is_err());
        assert!(IndexSetProjection::from_one_based(4, &[5]).is_err());
        assert!(IndexSetProjection::new(4, vec![4]).is_err());
    }

    #[test]
    fn indices_are_sorted() {
        let p = IndexSetProjection::from_one_based(6, &[5, 1, 3]).unwrap();
        assert_eq!(p.indices(), &[0, 2, 4]);
        assert_eq!(p.one_based(), vec![1, 3, 5]);
    }

    #[test]
    fn partition_frame_is_valid() {
        let frame = FusionFrame::new(
            6,
            vec![
                IndexSetProjection::from_one_based(6, &[1, 2, 3]).unwrap(),
                IndexSetProjection::from_one_based(6, &[4, 5, 6]).unwrap(),
            ],
        )
        .unwrap();
        assert_eq!(validate(&frame), Coverage { valid: true, uncovered: vec![] });
        assert_eq!((frame.lower_bound(), frame.upper_bound()), (1, 1));
    }

    #[test]
    fn overlapping_frame_reports_uncovered_index() {
        let frame = FusionFrame::new(
            4,
            vec![
                IndexSetProjection::from_one_based(4, &[1, 2]).unwrap(),
                IndexSetProjection::from_one_based(4, &[2, 3]).unwrap(),
            ],
        )
        .unwrap();
        let report = frame.validate();
        assert!(!report.valid);
        assert_eq!(report.uncovered, vec![4]);
        assert_eq!(frame.multiplicities(), &[1, 2, 1, 0]);
    }

    #[test]
    fn non_finite_signal_is_rejected() {
        assert!(SignalVector::from_vec(vec![1.0, f64::NAN]).is_err());
        assert!(SignalVector::from_vec(vec![]).is_err());
    }

    #[test]
    fn normalized_gaussian_has_unit_column_norms_on_average() {
        let a = SensingMatrix::gaussian(100, 200, 7, true).unwrap();
        assert!((a.column_norm_mean() - 1.0).abs() < 0.2);
    }

    #[test]
    fn bernoulli_entries_are_signs() {
        let a = SensingMatrix::bernoulli(4, 9, 1, true).unwrap();
        assert!(a.matrix().iter().all(|&v| (v.abs() - 0.5).abs() < 1e-15));
    }

    #[test]
    fn sparsity_pattern_rank_check() {
        let frame = FusionFrame::new(
            4,
            vec![
                IndexSetProjection::new(4, vec![0, 1]).unwrap(),
                IndexSetProjection::new(4, vec![2, 3]).unwrap(),
            ],
        )
        .unwrap();
        assert!(SparsityPattern::new(vec![2, 1]).check_against(&frame).is_ok());
        assert!(SparsityPattern::new(vec![3, 1]).check_against(&frame).is_err());
        assert!(SparsityPattern::new(vec![1]).check_against(&frame).is_err());
    }

    #[test]
    fn measurement_set_rejects_negative_eta() {
        let y = vec![DVector::zeros(3)];
        assert!(MeasurementSet::new(y.clone(), vec![-1.0]).is_err());
        assert!(MeasurementSet::new(y, vec![0.5]).is_ok());
    }
}
