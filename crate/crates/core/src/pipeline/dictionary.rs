//! Local-dictionary variant: general subspace projections, per-channel
//! dictionaries `D_i`, l1-analysis or l1-synthesis local solves.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::Execution;
use crate::error::{Error, Result};
use crate::solvers::{bpdn_matrix, l1_analysis, SolverOptions};
use crate::types::{IndexSetProjection, MeasurementSet, RecoveryReport, SolverKind};

/// Relative norm below which a projected column counts as annihilated.
pub const KERNEL_TOL: f64 = 1e-10;

/// Orthogonal projection `U U^T` onto `span(U)`, `U` orthonormal.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceProjection {
    basis: DMatrix<f64>,
}

impl SubspaceProjection {
    /// Orthonormalizes the columns of `spanning` (rank-revealing SVD).
    pub fn from_spanning(spanning: &DMatrix<f64>) -> Result<Self> {
        if let Some(pos) = spanning.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        let n = spanning.nrows();
        if spanning.ncols() == 0 {
            return Ok(SubspaceProjection { basis: DMatrix::zeros(n, 0) });
        }
        let svd = spanning.clone().svd(true, false);
        let u = svd.u.as_ref().expect("requested U");
        let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&j| smax > 0.0 && svd.singular_values[j] > 1e-12 * smax)
            .collect();
        Ok(SubspaceProjection { basis: u.select_columns(&keep) })
    }

    /// Uses `basis` as given; its columns must be orthonormal to 1e-10.
    pub fn from_orthonormal(basis: DMatrix<f64>) -> Result<Self> {
        let gram = basis.tr_mul(&basis);
        let eye = DMatrix::<f64>::identity(basis.ncols(), basis.ncols());
        if (gram - eye).amax() > 1e-10 {
            return Err(Error::InvalidInput("basis columns are not orthonormal".into()));
        }
        Ok(SubspaceProjection { basis })
    }

    pub fn from_coordinates(p: &IndexSetProjection) -> Self {
        let mut basis = DMatrix::zeros(p.ambient_dim(), p.rank());
        for (j, &k) in p.indices().iter().enumerate() {
            basis[(k, j)] = 1.0;
        }
        SubspaceProjection { basis }
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.basis * self.basis.tr_mul(v)
    }

    pub fn apply_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        &self.basis * self.basis.tr_mul(m)
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }
}

/// `D_i = [d_k for k in omega, P_i d_j for j in gamma]`; columns in `lambda` are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDictionary {
    /// 0-based subspace index.
    pub index: usize,
    pub matrix: DMatrix<f64>,
    /// Columns of `D` lying in `W_i`.
    pub omega: Vec<usize>,
    /// Columns moved by `P_i` but not annihilated.
    pub gamma: Vec<usize>,
    /// Columns in `ker P_i`.
    pub lambda: Vec<usize>,
}

impl LocalDictionary {
    pub fn len(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.ncols() == 0
    }

    /// `[x_omega; x_gamma]`, the coefficients the local measurement sees.
    pub fn local_coefficients(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.omega.len() + self.gamma.len(),
            self.omega.iter().chain(&self.gamma).map(|&k| x[k]),
        )
    }
}

pub fn build_local_dictionary(
    dict: &DMatrix<f64>,
    index: usize,
    subspace: &SubspaceProjection,
    tol_kernel: f64,
) -> Result<LocalDictionary> {
    if dict.nrows() != subspace.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: subspace.ambient_dim(),
            got: dict.nrows(),
            context: "dictionary rows vs subspace ambient dimension",
        });
    }
    if let Some(pos) = dict.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(pos));
    }
    let projected = subspace.apply_matrix(dict);
    let (mut omega, mut gamma, mut lambda) = (Vec::new(), Vec::new(), Vec::new());
    for k in 0..dict.ncols() {
        let norm = dict.column(k).norm();
        let kept = projected.column(k).norm();
        if kept <= tol_kernel * norm || norm == 0.0 {
            lambda.push(k);
        } else if (projected.column(k) - dict.column(k)).norm() <= tol_kernel * norm {
            omega.push(k);
        } else {
            gamma.push(k);
        }
    }
    let mut matrix = DMatrix::zeros(dict.nrows(), omega.len() + gamma.len());
    for (j, &k) in omega.iter().enumerate() {
        matrix.set_column(j, &dict.column(k));
    }
    for (j, &k) in gamma.iter().enumerate() {
        matrix.set_column(omega.len() + j, &projected.column(k));
    }
    Ok(LocalDictionary {
        index,
        matrix,
        omega,
        gamma,
        lambda,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DictMethod {
    /// `min ||D_i^+ g||_1 s.t. ||A g - y_i|| <= eta_i`.
    Analysis,
    /// BPDN on `A D_i`, then `f_i = D_i x_i`.
    Synthesis,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DictConfig {
    pub method: DictMethod,
    pub execution: Execution,
    pub noise_estimates: Option<Vec<f64>>,
    pub solver: SolverOptions,
}

impl Default for DictConfig {
    fn default() -> Self {
        DictConfig {
            method: DictMethod::Analysis,
            execution: Execution::SequentialOnline,
            noise_estimates: None,
            solver: SolverOptions::default(),
        }
    }
}

struct LocalResult {
    signal: DVector<f64>,
    iterations: usize,
    converged: bool,
}

fn solve_dict_local(
    a: &DMatrix<f64>,
    dict: &LocalDictionary,
    y: &DVector<f64>,
    eta: f64,
    cfg: &DictConfig,
) -> Result<LocalResult> {
    match cfg.method {
        DictMethod::Analysis => {
            let sol = l1_analysis(a, &dict.matrix, y, eta, &cfg.solver)?;
            Ok(LocalResult {
                signal: sol.signal,
                iterations: sol.iterations,
                converged: sol.converged,
            })
        }
        DictMethod::Synthesis => {
            if dict.is_empty() {
                let residual = y.norm();
                if residual > eta + cfg.solver.tol_abs {
                    return Err(Error::Infeasible { residual, eta });
                }
                return Ok(LocalResult {
                    signal: DVector::zeros(a.ncols()),
                    iterations: 0,
                    converged: true,
                });
            }
            let sol = bpdn_matrix(&(a * &dict.matrix), y, eta, &cfg.solver)?;
            Ok(LocalResult {
                signal: &dict.matrix * sol.x,
                iterations: sol.iterations,
                converged: sol.converged,
            })
        }
    }
}

/// `f_hat = S^{-1} sum_i f_hat_i` with `S = sum_i U_i U_i^T`.
pub fn dict_fused_recover(
    a: &DMatrix<f64>,
    subspaces: &[SubspaceProjection],
    dicts: &[LocalDictionary],
    ys: &MeasurementSet,
    cfg: &DictConfig,
) -> Result<RecoveryReport> {
    let n = a.ncols();
    let count = subspaces.len();
    if dicts.len() != count || ys.len() != count {
        return Err(Error::DimensionMismatch {
            expected: count,
            got: if dicts.len() != count { dicts.len() } else { ys.len() },
            context: "dictionaries / measurements vs subspace count",
        });
    }
    if let Some(bad) = subspaces.iter().find(|s| s.ambient_dim() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: bad.ambient_dim(),
            context: "subspace ambient dimension",
        });
    }
    ys.check_rows(a.nrows())?;
    cfg.solver.validate()?;
    let etas: Vec<f64> = match &cfg.noise_estimates {
        Some(e) if e.len() != count => {
            return Err(Error::DimensionMismatch {
                expected: count,
                got: e.len(),
                context: "noise estimates vs subspace count",
            })
        }
        Some(e) => e.clone(),
        None => ys.noise_bounds().to_vec(),
    };

    let solve = |i: usize| {
        solve_dict_local(a, &dicts[i], &ys.measurements()[i], etas[i], cfg).map_err(|e| e.in_subspace(i + 1))
    };
    let locals: Vec<LocalResult> = match cfg.execution {
        Execution::SequentialOnline => (0..count).map(solve).collect::<Result<_>>()?,
        Execution::ParallelBatch => (0..count).into_par_iter().map(solve).collect::<Result<_>>()?,
    };
    let mut sum = DVector::zeros(n);
    for local in &locals {
        sum += &local.signal;
    }

    let mut s = DMatrix::zeros(n, n);
    for sub in subspaces {
        s += sub.matrix();
    }
    let fused_estimate = if (&s - DMatrix::<f64>::identity(n, n)).amax() <= 1e-10 {
        sum
    } else {
        let chol = nalgebra::Cholesky::new(s).ok_or(Error::Singular {
            condition: f64::INFINITY,
        })?;
        chol.solve(&sum)
    };

    let kind = match cfg.method {
        DictMethod::Analysis => SolverKind::L1Analysis,
        DictMethod::Synthesis => SolverKind::L1Synthesis,
    };
    let mut report = RecoveryReport {
        local_estimates: Vec::with_capacity(count),
        fused_estimate,
        residuals: Vec::with_capacity(count),
        solver_used: vec![kind; count],
        iterations: Vec::with_capacity(count),
        converged: Vec::with_capacity(count),
        fusion_iterations: None,
        theoretical_bound: None,
        achieved_error: None,
    };
    for (i, local) in locals.into_iter().enumerate() {
        report.residuals.push((a * &local.signal - &ys.measurements()[i]).norm());
        report.local_estimates.push(local.signal);
        report.iterations.push(local.iterations);
        report.converged.push(local.converged);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::haar::{level_blocks, synthesis_matrix};

    #[test]
    fn identity_and_zero_projections() {
        let d = DMatrix::from_fn(4, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let full = SubspaceProjection::from_spanning(&DMatrix::identity(4, 4)).unwrap();
        let local = build_local_dictionary(&d, 0, &full, KERNEL_TOL).unwrap();
        assert!(local.gamma.is_empty() && local.lambda.is_empty());
        assert_eq!(local.matrix, d);
        let zero = SubspaceProjection::from_spanning(&DMatrix::zeros(4, 0)).unwrap();
        let local = build_local_dictionary(&d, 0, &zero, KERNEL_TOL).unwrap();
        assert_eq!(local.lambda.len(), 6);
        assert!(local.is_empty());
    }

    #[test]
    fn haar_levels_split_cleanly() {
        let h = synthesis_matrix(8, 3).unwrap();
        for (i, block) in level_blocks(8, 3).unwrap().into_iter().enumerate() {
            let cols: Vec<usize> = block.clone().collect();
            let sub = SubspaceProjection::from_orthonormal(h.select_columns(&cols)).unwrap();
            let local = build_local_dictionary(&h, i, &sub, KERNEL_TOL).unwrap();
            assert_eq!(local.omega, cols);
            assert!(local.gamma.is_empty());
            assert_eq!(local.lambda.len(), 8 - cols.len());
        }
    }

    #[test]
    fn moved_columns_are_projected() {
        let d = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]);
        let sub = SubspaceProjection::from_spanning(&DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
        let local = build_local_dictionary(&d, 0, &sub, KERNEL_TOL).unwrap();
        assert_eq!((local.omega.clone(), local.gamma.clone(), local.lambda.clone()), (vec![0], vec![2], vec![1]));
        assert!((local.matrix.column(1)[0] - 1.0).abs() < 1e-15 && local.matrix.column(1)[1].abs() < 1e-15);
    }
}
