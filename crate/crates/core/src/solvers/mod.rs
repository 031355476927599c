//! Local recovery engines.

mod bpdn;
mod l0;
mod l1analysis;
mod lsq;

pub use bpdn::{bpdn, bpdn_matrix, global_stacked_solve, BpdnSolution};
pub use l0::{l0_oracle, l0_oracle_matrix, L0_MAX_AMBIENT, L0_MAX_SPARSITY};
pub use l1analysis::{l1_analysis, l1_analysis_admm, AnalysisSolution};
pub use lsq::{
    lsq_columns, lsq_rank1, lsq_subspace, min_norm_lsq, pinv_norm, pivot_condition,
    singular_values, PIVOT_RATIO,
};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::types::{IndexSetProjection, SensingMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iter: usize,
    pub tol_abs: f64,
    pub tol_rel: f64,
    /// ADMM penalty; adapted during the run by residual balancing.
    pub penalty: f64,
    pub verbose: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iter: 5000,
            tol_abs: 1e-8,
            tol_rel: 1e-6,
            penalty: 1.0,
            verbose: false,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::InvalidInput("max_iter must be >= 1".into()));
        }
        if !(self.tol_abs > 0.0 && self.tol_rel > 0.0) {
            return Err(Error::InvalidInput("solver tolerances must be positive".into()));
        }
        if !(self.penalty > 0.0 && self.penalty.is_finite()) {
            return Err(Error::InvalidInput("penalty must be positive".into()));
        }
        Ok(())
    }
}

/// A linear map `R^N -> R^m` whose nonzero columns are `matrix`, placed at
/// `columns`; every other column is zero. `A P_i` is the typical instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnOperator {
    matrix: DMatrix<f64>,
    columns: Vec<usize>,
    ambient_dim: usize,
}

impl ColumnOperator {
    pub fn new(matrix: DMatrix<f64>, columns: Vec<usize>, ambient_dim: usize) -> Result<Self> {
        if matrix.ncols() != columns.len() {
            return Err(Error::DimensionMismatch {
                expected: matrix.ncols(),
                got: columns.len(),
                context: "operator column map",
            });
        }
        // Reuse the index-set checks (sorted, unique, in range).
        let checked = IndexSetProjection::new(ambient_dim, columns.clone())?;
        if checked.indices() != columns.as_slice() {
            return Err(Error::InvalidInput("operator columns must be sorted".into()));
        }
        Ok(ColumnOperator {
            matrix,
            columns,
            ambient_dim,
        })
    }

    /// Every column active.
    pub fn dense(matrix: DMatrix<f64>) -> Self {
        let n = matrix.ncols();
        ColumnOperator {
            matrix,
            columns: (0..n).collect(),
            ambient_dim: n,
        }
    }

    /// `A P` for a coordinate projection `P`.
    pub fn projected(a: &SensingMatrix, p: &IndexSetProjection) -> Self {
        ColumnOperator {
            matrix: a.submatrix(p),
            columns: p.indices().to_vec(),
            ambient_dim: p.ambient_dim(),
        }
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    /// The active columns.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let restricted = DVector::from_iterator(self.columns.len(), self.columns.iter().map(|&k| x[k]));
        &self.matrix * restricted
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.rows(), self.ambient_dim);
        for (j, &k) in self.columns.iter().enumerate() {
            out.set_column(k, &self.matrix.column(j));
        }
        out
    }
}
