//! Fused recovery: synthesize local measurements, solve each channel, fuse
//! with the inverse fusion-frame operator.

mod dictionary;
mod doppler;

pub use dictionary::{
    build_local_dictionary, dict_fused_recover, DictConfig, DictMethod, LocalDictionary,
    SubspaceProjection, KERNEL_TOL,
};
pub use doppler::{doppler_demo, doppler_signal, doppler_value, DopplerConfig, DopplerOutcome, DopplerSetup};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frames::{frame_algorithm, invert_fusion_exact, invert_fusion_pseudo, FrameAlgorithmOptions};
use crate::rng::{derive_seed, gaussian_vector, rng_from, vector_of_norm};
use crate::solvers::{bpdn, l1_analysis, lsq_columns, ColumnOperator, SolverOptions};
use crate::types::{FusionFrame, MeasurementSet, RecoveryReport, SensingMatrix, SolverKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverPolicy {
    /// Least squares when `rank(P_i) <= m` and `A_{Omega_i}` is numerically full rank, else BPDN.
    Auto,
    ForceLsq,
    ForceBpdn,
    ForceL1Analysis,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FusionMode {
    ExactDiagonal,
    FrameAlgorithm(FrameAlgorithmOptions),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    /// One channel at a time, accumulating the running sum.
    SequentialOnline,
    /// Channels solved concurrently, then summed in index order.
    ParallelBatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub solver_policy: SolverPolicy,
    pub fusion_mode: FusionMode,
    pub execution: Execution,
    /// Overrides the measurement set's noise bounds when present.
    pub noise_estimates: Option<Vec<f64>>,
    pub solver: SolverOptions,
    /// Estimate uncovered coordinates as 0 instead of failing.
    pub allow_uncovered: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            solver_policy: SolverPolicy::Auto,
            fusion_mode: FusionMode::ExactDiagonal,
            execution: Execution::SequentialOnline,
            noise_estimates: None,
            solver: SolverOptions::default(),
            allow_uncovered: false,
        }
    }
}

/// Smallest pivot accepted by the auto policy before falling back to BPDN.
pub const AUTO_SIGMA_MIN: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpec {
    None,
    /// Gaussian direction rescaled to norm `eta_i` exactly (one value, or one per channel).
    ExactNorm(Vec<f64>),
    /// i.i.d. Gaussian entries with standard deviation `sigma`.
    Gaussian { sigma: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthesized {
    /// Noise bounds are the true noise norms.
    pub measurements: MeasurementSet,
    pub noise: Vec<DVector<f64>>,
}

/// `y_i = A P_i x + e_i`; channel `i` draws its noise from `derive_seed(seed, i)`.
pub fn synthesize_measurements(
    x: &DVector<f64>,
    a: &SensingMatrix,
    frame: &FusionFrame,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<Synthesized> {
    if x.len() != a.cols() || frame.ambient_dim() != a.cols() {
        return Err(Error::DimensionMismatch {
            expected: a.cols(),
            got: if x.len() != a.cols() { x.len() } else { frame.ambient_dim() },
            context: "signal / frame vs sensing matrix columns",
        });
    }
    let n = frame.len();
    if let NoiseSpec::ExactNorm(norms) = noise {
        if norms.len() != 1 && norms.len() != n {
            return Err(Error::InvalidInput(format!("need 1 or {n} noise norms, got {}", norms.len())));
        }
    }
    let m = a.rows();
    let mut ys = Vec::with_capacity(n);
    let mut es = Vec::with_capacity(n);
    for (i, p) in frame.projections().iter().enumerate() {
        let mut rng = rng_from(derive_seed(seed, i as u64));
        let e = match noise {
            NoiseSpec::None => DVector::zeros(m),
            NoiseSpec::ExactNorm(norms) => {
                let eta = norms[if norms.len() == 1 { 0 } else { i }];
                vector_of_norm(m, eta, &mut rng)
            }
            NoiseSpec::Gaussian { sigma } => gaussian_vector(m, &mut rng) * *sigma,
        };
        ys.push(a.apply_projected(p, x) + &e);
        es.push(e);
    }
    let bounds = es.iter().map(|e| e.norm()).collect();
    Ok(Synthesized {
        measurements: MeasurementSet::new(ys, bounds)?,
        noise: es,
    })
}

struct LocalSolve {
    estimate: DVector<f64>,
    residual: f64,
    kind: SolverKind,
    iterations: usize,
    converged: bool,
}

fn auto_prefers_lsq(sub: &DMatrix<f64>) -> bool {
    let (m, k) = sub.shape();
    if k == 0 || k > m {
        return false;
    }
    let r = sub.clone().col_piv_qr().r();
    let diag: Vec<f64> = (0..k).map(|i| r[(i, i)].abs()).collect();
    let max = diag.iter().copied().fold(0.0, f64::max);
    let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
    min > AUTO_SIGMA_MIN && min >= crate::solvers::PIVOT_RATIO * max
}

fn solve_local(
    a: &SensingMatrix,
    frame: &FusionFrame,
    i: usize,
    y: &DVector<f64>,
    eta: f64,
    cfg: &PipelineConfig,
) -> Result<LocalSolve> {
    let p = &frame.projections()[i];
    let sub = a.submatrix(p);
    let kind = match cfg.solver_policy {
        SolverPolicy::Auto if auto_prefers_lsq(&sub) => SolverKind::LeastSquares,
        SolverPolicy::Auto | SolverPolicy::ForceBpdn => SolverKind::Bpdn,
        SolverPolicy::ForceLsq => SolverKind::LeastSquares,
        SolverPolicy::ForceL1Analysis => SolverKind::L1Analysis,
    };
    let (estimate, iterations, converged) = match kind {
        SolverKind::LeastSquares => (p.embed(&lsq_columns(&sub, y)?), 0, true),
        SolverKind::Bpdn => {
            let sol = bpdn(&ColumnOperator::projected(a, p), y, eta, &cfg.solver)?;
            (sol.x, sol.iterations, sol.converged)
        }
        _ => {
            // Dictionary of the coordinate subspace: the unit vectors e_k, k in Omega.
            let mut dict = DMatrix::zeros(a.cols(), p.rank());
            for (j, &k) in p.indices().iter().enumerate() {
                dict[(k, j)] = 1.0;
            }
            let sol = l1_analysis(a.matrix(), &dict, y, eta, &cfg.solver)?;
            (sol.signal, sol.iterations, sol.converged)
        }
    };
    let residual = (a.apply_projected(p, &estimate) - y).norm();
    Ok(LocalSolve {
        estimate,
        residual,
        kind,
        iterations,
        converged,
    })
}

/// `x_hat = S^{-1} sum_i x_hat_i` with local solves chosen by the policy.
pub fn fused_recover(
    a: &SensingMatrix,
    frame: &FusionFrame,
    ys: &MeasurementSet,
    cfg: &PipelineConfig,
) -> Result<RecoveryReport> {
    if frame.ambient_dim() != a.cols() {
        return Err(Error::DimensionMismatch {
            expected: a.cols(),
            got: frame.ambient_dim(),
            context: "frame ambient dimension",
        });
    }
    if ys.len() != frame.len() {
        return Err(Error::DimensionMismatch {
            expected: frame.len(),
            got: ys.len(),
            context: "measurement count vs frame size",
        });
    }
    ys.check_rows(a.rows())?;
    cfg.solver.validate()?;
    let etas: Vec<f64> = match &cfg.noise_estimates {
        Some(e) => {
            if e.len() != frame.len() {
                return Err(Error::DimensionMismatch {
                    expected: frame.len(),
                    got: e.len(),
                    context: "noise estimates vs frame size",
                });
            }
            e.clone()
        }
        None => ys.noise_bounds().to_vec(),
    };
    let coverage = frame.validate();
    if !coverage.valid && !cfg.allow_uncovered {
        return Err(Error::UncoveredIndices {
            uncovered: coverage.uncovered,
        });
    }

    let solve = |i: usize| {
        solve_local(a, frame, i, &ys.measurements()[i], etas[i], cfg).map_err(|e| e.in_subspace(i + 1))
    };
    let mut sum = DVector::zeros(a.cols());
    let locals: Vec<LocalSolve> = match cfg.execution {
        Execution::SequentialOnline => {
            let mut out = Vec::with_capacity(frame.len());
            for i in 0..frame.len() {
                let local = solve(i)?;
                sum += &local.estimate;
                out.push(local);
            }
            out
        }
        Execution::ParallelBatch => {
            let out = (0..frame.len()).into_par_iter().map(solve).collect::<Result<Vec<_>>>()?;
            for local in &out {
                sum += &local.estimate;
            }
            out
        }
    };

    let (fused_estimate, fusion_iterations) = match cfg.fusion_mode {
        FusionMode::ExactDiagonal => {
            if coverage.valid {
                (invert_fusion_exact(frame, &sum)?, None)
            } else {
                (invert_fusion_pseudo(frame, &sum), None)
            }
        }
        FusionMode::FrameAlgorithm(opts) => {
            let res = frame_algorithm(frame, &sum, opts)?;
            (res.estimate, Some(res.iterations))
        }
    };

    let mut report = RecoveryReport {
        local_estimates: Vec::with_capacity(locals.len()),
        fused_estimate,
        residuals: Vec::with_capacity(locals.len()),
        solver_used: Vec::with_capacity(locals.len()),
        iterations: Vec::with_capacity(locals.len()),
        converged: Vec::with_capacity(locals.len()),
        fusion_iterations,
        theoretical_bound: None,
        achieved_error: None,
    };
    for local in locals {
        report.local_estimates.push(local.estimate);
        report.residuals.push(local.residual);
        report.solver_used.push(local.kind);
        report.iterations.push(local.iterations);
        report.converged.push(local.converged);
    }
    Ok(report)
}

/// Relative l1 mass of `x` outside the 0-based index set `omega`.
pub fn mass_outside(x: &DVector<f64>, omega: &[usize]) -> f64 {
    let total = x.lp_norm(1);
    if total == 0.0 {
        return 0.0;
    }
    let inside: f64 = omega.iter().map(|&k| x[k].abs()).sum();
    ((total - inside) / total).max(0.0)
}

/// One CSV row per subspace (1-based) plus a final `fused` row.
pub fn report_csv(report: &RecoveryReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["subspace", "solver", "iterations", "converged", "residual", "estimate_l2"])?;
    for i in 0..report.local_estimates.len() {
        w.write_record([
            (i + 1).to_string(),
            report.solver_used[i].to_string(),
            report.iterations[i].to_string(),
            report.converged[i].to_string(),
            format!("{:.16e}", report.residuals[i]),
            format!("{:.16e}", report.local_estimates[i].norm()),
        ])?;
    }
    w.write_record([
        "fused".to_string(),
        String::new(),
        report.fusion_iterations.map_or(String::new(), |k| k.to_string()),
        report.all_converged().to_string(),
        String::new(),
        format!("{:.16e}", report.fused_estimate.norm()),
    ])?;
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    String::from_utf8(bytes).map_err(|e| Error::InvalidInput(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{build_family, FamilyKind, ProjectionFamilySpec};
    use crate::rng::sparse_gaussian;

    #[test]
    fn noiseless_partition_lsq_is_exact() {
        let a = SensingMatrix::gaussian(10, 30, 1, true).unwrap();
        let frame = build_family(&ProjectionFamilySpec::new(FamilyKind::Partition { sizes: vec![10, 10, 10] }, 30)).unwrap();
        let x = gaussian_vector(30, &mut rng_from(2));
        let syn = synthesize_measurements(&x, &a, &frame, &NoiseSpec::None, 3).unwrap();
        let report = fused_recover(&a, &frame, &syn.measurements, &PipelineConfig::default()).unwrap();
        assert!(report.solver_used.iter().all(|k| *k == SolverKind::LeastSquares));
        assert!((&report.fused_estimate - &x).amax() < 1e-8);
    }

    #[test]
    fn exact_norm_noise() {
        let a = SensingMatrix::gaussian(8, 12, 1, true).unwrap();
        let frame = build_family(&ProjectionFamilySpec::new(FamilyKind::Partition { sizes: vec![6, 6] }, 12)).unwrap();
        let x = DVector::zeros(12);
        let syn = synthesize_measurements(&x, &a, &frame, &NoiseSpec::ExactNorm(vec![0.3]), 3).unwrap();
        for e in &syn.noise {
            assert!((e.norm() - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let a = SensingMatrix::gaussian(12, 40, 5, true).unwrap();
        let frame = build_family(&ProjectionFamilySpec::new(
            FamilyKind::RandomFixedRank { rank: 20, count: 6, seed: 9 },
            40,
        ))
        .unwrap();
        let x = sparse_gaussian(40, 6, &mut rng_from(4));
        let syn = synthesize_measurements(&x, &a, &frame, &NoiseSpec::ExactNorm(vec![0.01]), 3).unwrap();
        let mut cfg = PipelineConfig {
            allow_uncovered: true,
            ..PipelineConfig::default()
        };
        let seq = fused_recover(&a, &frame, &syn.measurements, &cfg).unwrap();
        cfg.execution = Execution::ParallelBatch;
        let par = fused_recover(&a, &frame, &syn.measurements, &cfg).unwrap();
        assert_eq!(seq.fused_estimate, par.fused_estimate);
    }

    #[test]
    fn uncovered_frame_is_rejected_by_default() {
        let a = SensingMatrix::gaussian(4, 4, 1, true).unwrap();
        let frame = FusionFrame::new(4, vec![crate::types::IndexSetProjection::new(4, vec![0, 1]).unwrap()]).unwrap();
        let syn = synthesize_measurements(&DVector::zeros(4), &a, &frame, &NoiseSpec::None, 0).unwrap();
        let err = fused_recover(&a, &frame, &syn.measurements, &PipelineConfig::default()).unwrap_err();
        assert!(matches!(err, Error::UncoveredIndices { .. }));
    }
}
