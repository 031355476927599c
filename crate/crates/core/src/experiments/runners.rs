//! The six experiments. Each returns a typed result that renders to tables.

use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::{fmt_f64, ExperimentReport, Table};
use crate::error::Result;
use crate::frames::{
    build_family, coverage_failure_frequency, expected_lower_bound_montecarlo, min_projection_count,
    uncovered_probability_bound, FamilyKind, LowerBoundStats, ProjectionFamilySpec,
};
use crate::pipeline::{
    doppler_demo, fused_recover, mass_outside, synthesize_measurements, DopplerConfig, DopplerSetup,
    NoiseSpec, PipelineConfig,
};
use crate::rng::{derive_seed, derive_seed2, rng_from, sparse_gaussian, vector_of_norm};
use crate::solvers::{bpdn, ColumnOperator};
use crate::stats::{linear_fit, summarize, LinearFit, Summary};
use crate::types::{FusionFrame, MeasurementSet, RecoveryReport, SensingMatrix, SolverKind};

fn pipeline_config(cfg: &ExperimentConfig) -> PipelineConfig {
    PipelineConfig {
        solver_policy: cfg.policy,
        fusion_mode: cfg.fusion,
        execution: cfg.execution,
        noise_estimates: None,
        solver: cfg.solver.clone(),
        allow_uncovered: true,
    }
}

fn projection_count(cfg: &ExperimentConfig) -> Result<usize> {
    match cfg.count {
        Some(n) => Ok(n),
        None => min_projection_count(cfg.ambient_dim, cfg.rank, cfg.eps),
    }
}

fn random_family(cfg: &ExperimentConfig, count: usize, seed: u64) -> Result<FusionFrame> {
    build_family(&ProjectionFamilySpec::new(
        FamilyKind::RandomFixedRank {
            rank: cfg.rank,
            count,
            seed,
        },
        cfg.ambient_dim,
    ))
}

/// Largest relative l1 mass of a local BPDN estimate outside its index set.
fn max_outside_mass(report: &RecoveryReport, frame: &FusionFrame) -> f64 {
    report
        .local_estimates
        .iter()
        .zip(frame.projections())
        .zip(&report.solver_used)
        .filter(|(_, kind)| **kind == SolverKind::Bpdn)
        .map(|((x, p), _)| mass_outside(x, p.indices()))
        .fold(0.0, f64::max)
}

fn relative(err: f64, x: &DVector<f64>) -> f64 {
    let norm = x.norm();
    if norm == 0.0 {
        err
    } else {
        err / norm
    }
}

fn bool_str(b: bool) -> String {
    b.to_string()
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryTrial {
    pub trial: usize,
    pub seed: u64,
    pub covered: bool,
    pub lsq_channels: usize,
    pub bpdn_channels: usize,
    pub fused_rel_error: f64,
    pub global_rel_error: f64,
    pub max_outside_mass: f64,
    pub converged: bool,
    pub fused_seconds: f64,
    pub global_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryExamplesResult {
    pub count: usize,
    pub noise: f64,
    pub trials: Vec<RecoveryTrial>,
}

/// Fused recovery against single-sensor BPDN on the same `A`.
pub fn run_recovery_examples(cfg: &ExperimentConfig) -> Result<RecoveryExamplesResult> {
    cfg.validate()?;
    let count = match &cfg.family {
        Some(spec) => build_family(spec)?.len(),
        None => projection_count(cfg)?,
    };
    let noise = cfg.noise_levels.first().copied().unwrap_or(0.0);
    let pipe = pipeline_config(cfg);
    let trials = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = derive_seed(cfg.seed, trial as u64);
            let a = SensingMatrix::gaussian(cfg.rows, cfg.ambient_dim, derive_seed(seed, 0), true)?;
            let frame = match &cfg.family {
                Some(ProjectionFamilySpec {
                    kind: FamilyKind::RandomFixedRank { rank, count, .. },
                    ambient_dim,
                }) => build_family(&ProjectionFamilySpec::new(
                    FamilyKind::RandomFixedRank {
                        rank: *rank,
                        count: *count,
                        seed: derive_seed(seed, 1),
                    },
                    *ambient_dim,
                ))?,
                Some(spec) => build_family(spec)?,
                None => random_family(cfg, count, derive_seed(seed, 1))?,
            };
            let x = sparse_gaussian(cfg.ambient_dim, cfg.sparsity, &mut rng_from(derive_seed(seed, 2)));
            let spec = if noise > 0.0 {
                NoiseSpec::ExactNorm(vec![noise])
            } else {
                NoiseSpec::None
            };
            let syn = synthesize_measurements(&x, &a, &frame, &spec, derive_seed(seed, 3))?;

            let t0 = Instant::now();
            let report = fused_recover(&a, &frame, &syn.measurements, &pipe)?;
            let fused_seconds = t0.elapsed().as_secs_f64();

            let t1 = Instant::now();
            let e = vector_of_norm(cfg.rows, noise, &mut rng_from(derive_seed(seed, 4)));
            let y = a.matrix() * &x + e;
            let global = bpdn(&ColumnOperator::dense(a.matrix().clone()), &y, noise, &cfg.solver)?;
            let global_seconds = t1.elapsed().as_secs_f64();

            Ok(RecoveryTrial {
                trial,
                seed,
                covered: frame.is_valid(),
                lsq_channels: report.solver_used.iter().filter(|k| **k == SolverKind::LeastSquares).count(),
                bpdn_channels: report.solver_used.iter().filter(|k| **k == SolverKind::Bpdn).count(),
                fused_rel_error: relative((&report.fused_estimate - &x).norm(), &x),
                global_rel_error: relative((&global.x - &x).norm(), &x),
                max_outside_mass: max_outside_mass(&report, &frame),
                converged: report.all_converged() && global.converged,
                fused_seconds,
                global_seconds,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RecoveryExamplesResult { count, noise, trials })
}

impl RecoveryExamplesResult {
    /// Fraction of trials with fused relative error `<= tol`.
    pub fn fused_success_rate(&self, tol: f64) -> f64 {
        fraction(self.trials.iter().map(|t| t.fused_rel_error <= tol))
    }

    /// Fraction of trials with global relative error `> tol`.
    pub fn global_failure_rate(&self, tol: f64) -> f64 {
        fraction(self.trials.iter().map(|t| t.global_rel_error > tol))
    }

    pub fn report(&self, cfg: &ExperimentConfig) -> ExperimentReport {
        let exp = cfg.experiment.name().to_string();
        let mut trials = Table::new(&[
            "experiment", "trial", "seed", "N", "m", "s", "r", "n", "noise", "covered", "lsq_channels",
            "bpdn_channels", "fused_rel_error", "global_rel_error", "max_outside_mass", "converged",
        ]);
        let mut timing = Table::new(&["experiment", "trial", "seed", "fused_seconds", "global_seconds"]);
        for t in &self.trials {
            trials.push(vec![
                exp.clone(),
                t.trial.to_string(),
                t.seed.to_string(),
                cfg.ambient_dim.to_string(),
                cfg.rows.to_string(),
                cfg.sparsity.to_string(),
                cfg.rank.to_string(),
                self.count.to_string(),
                fmt_f64(self.noise),
                bool_str(t.covered),
                t.lsq_channels.to_string(),
                t.bpdn_channels.to_string(),
                fmt_f64(t.fused_rel_error),
                fmt_f64(t.global_rel_error),
                fmt_f64(t.max_outside_mass),
                bool_str(t.converged),
            ]);
            timing.push(vec![
                exp.clone(),
                t.trial.to_string(),
                t.seed.to_string(),
                fmt_f64(t.fused_seconds),
                fmt_f64(t.global_seconds),
            ]);
        }
        let fused = summarize(&self.trials.iter().map(|t| t.fused_rel_error).collect::<Vec<_>>());
        let global = summarize(&self.trials.iter().map(|t| t.global_rel_error).collect::<Vec<_>>());
        let mut summary = Table::new(&[
            "experiment", "N", "m", "s", "r", "n", "trials", "fused_success_rate", "global_failure_rate",
            "fused_mean", "global_mean",
        ]);
        summary.push(vec![
            exp,
            cfg.ambient_dim.to_string(),
            cfg.rows.to_string(),
            cfg.sparsity.to_string(),
            cfg.rank.to_string(),
            self.count.to_string(),
            self.trials.len().to_string(),
            fmt_f64(self.fused_success_rate(1e-3)),
            fmt_f64(self.global_failure_rate(0.1)),
            fmt_f64(fused.mean),
            fmt_f64(global.mean),
        ]);
        ExperimentReport {
            experiment: cfg.experiment,
            summary_lines: vec![format!(
                "fused rel. error <= 1e-3 in {:.0}% of trials, global BPDN rel. error > 0.1 in {:.0}%",
                100.0 * self.fused_success_rate(1e-3),
                100.0 * self.global_failure_rate(0.1)
            )],
            all_converged: self.trials.iter().all(|t| t.converged),
            tables: vec![("trials".into(), trials), ("summary".into(), summary)],
            timing,
        }
    }
}

fn fraction(flags: impl Iterator<Item = bool>) -> f64 {
    let (mut hit, mut total) = (0usize, 0usize);
    for f in flags {
        total += 1;
        hit += f as usize;
    }
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub multiple: f64,
    pub count: usize,
    /// `(matrix, trial, trial_seed, covered, rel_error, converged)` in trial order.
    pub samples: Vec<(usize, usize, u64, bool, f64, bool)>,
}

impl SweepPoint {
    pub fn summary(&self) -> Summary {
        summarize(&self.samples.iter().map(|s| s.4).collect::<Vec<_>>())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub n_min: usize,
    pub points: Vec<SweepPoint>,
    pub seconds: Vec<f64>,
}

/// Recovery error as the number of projections runs over multiples of the minimum.
pub fn run_projections_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let n_min = projection_count(cfg)?;
    let counts: Vec<usize> = cfg
        .multiples
        .iter()
        .map(|&mult| ((mult * n_min as f64).round() as usize).max(1))
        .collect();
    let pipe = pipeline_config(cfg);
    let total = cfg.trials * cfg.vectors;
    let per_trial = (0..total)
        .into_par_iter()
        .map(|t| {
            let start = Instant::now();
            let (matrix, vector) = (t / cfg.vectors, t % cfg.vectors);
            let matrix_seed = derive_seed(cfg.seed, matrix as u64);
            let seed = derive_seed(matrix_seed, vector as u64 + 1);
            let a = SensingMatrix::gaussian(cfg.rows, cfg.ambient_dim, derive_seed(matrix_seed, 0), true)?;
            let x = sparse_gaussian(cfg.ambient_dim, cfg.sparsity, &mut rng_from(derive_seed(seed, 0)));
            let mut out = Vec::with_capacity(counts.len());
            for (k, &n) in counts.iter().enumerate() {
                let frame = random_family(cfg, n, derive_seed2(seed, 1, k as u64))?;
                let syn = synthesize_measurements(&x, &a, &frame, &NoiseSpec::None, derive_seed(seed, 2))?;
                let report = fused_recover(&a, &frame, &syn.measurements, &pipe)?;
                let err = relative((&report.fused_estimate - &x).norm(), &x);
                out.push((matrix, t, seed, frame.is_valid(), err, report.all_converged()));
            }
            Ok((out, start.elapsed().as_secs_f64()))
        })
        .collect::<Result<Vec<_>>>()?;
    let points = cfg
        .multiples
        .iter()
        .zip(&counts)
        .enumerate()
        .map(|(k, (&multiple, &count))| SweepPoint {
            multiple,
            count,
            samples: per_trial.iter().map(|(rows, _)| rows[k]).collect(),
        })
        .collect();
    Ok(SweepResult {
        n_min,
        points,
        seconds: per_trial.iter().map(|(_, s)| *s).collect(),
    })
}

impl SweepResult {
    pub fn report(&self, cfg: &ExperimentConfig) -> ExperimentReport {
        let exp = cfg.experiment.name().to_string();
        let mut trials = Table::new(&[
            "experiment", "trial", "matrix", "seed", "matrix_seed", "N", "m", "s", "r", "n_min", "multiple", "n",
            "covered", "rel_error", "converged",
        ]);
        let mut summary = Table::new(&[
            "experiment", "N", "m", "s", "r", "n_min", "multiple", "n", "samples", "min", "mean", "max", "std",
        ]);
        let mut converged = true;
        for p in &self.points {
            for &(matrix, t, seed, covered, err, conv) in &p.samples {
                converged &= conv;
                trials.push(vec![
                    exp.clone(),
                    t.to_string(),
                    matrix.to_string(),
                    seed.to_string(),
                    derive_seed(cfg.seed, matrix as u64).to_string(),
                    cfg.ambient_dim.to_string(),
                    cfg.rows.to_string(),
                    cfg.sparsity.to_string(),
                    cfg.rank.to_string(),
                    self.n_min.to_string(),
                    fmt_f64(p.multiple),
                    p.count.to_string(),
                    bool_str(covered),
                    fmt_f64(err),
                    bool_str(conv),
                ]);
            }
            let s = p.summary();
            summary.push(vec![
                exp.clone(),
                cfg.ambient_dim.to_string(),
                cfg.rows.to_string(),
                cfg.sparsity.to_string(),
                cfg.rank.to_string(),
                self.n_min.to_string(),
                fmt_f64(p.multiple),
                p.count.to_string(),
                p.samples.len().to_string(),
                fmt_f64(s.min),
                fmt_f64(s.mean),
                fmt_f64(s.max),
                fmt_f64(s.std),
            ]);
        }
        let mut timing = Table::new(&["experiment", "trial", "seconds"]);
        for (t, s) in self.seconds.iter().enumerate() {
            timing.push(vec![exp.clone(), t.to_string(), fmt_f64(*s)]);
        }
        let lines = self
            .points
            .iter()
            .map(|p| format!("n = {:>4} ({:.1} x {}): mean rel. error {:.3e}", p.count, p.multiple, self.n_min, p.summary().mean))
            .collect();
        ExperimentReport {
            experiment: cfg.experiment,
            tables: vec![("trials".into(), trials), ("summary".into(), summary)],
            timing,
            summary_lines: lines,
            all_converged: converged,
        }
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct FrameboundPreset {
    pub rank: usize,
    pub seed: u64,
    pub stats: Vec<LowerBoundStats>,
    pub fit: LinearFit,
}

impl FrameboundPreset {
    pub fn zeta(&self, ambient_dim: usize, n: usize) -> f64 {
        (self.rank * n) as f64 / ambient_dim as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameboundResult {
    pub presets: Vec<FrameboundPreset>,
    pub seconds: Vec<f64>,
}

/// Mean lower frame bound against the number of projections, one curve per rank.
pub fn run_framebound_growth(cfg: &ExperimentConfig) -> Result<FrameboundResult> {
    cfg.validate()?;
    let mut presets = Vec::new();
    let mut seconds = Vec::new();
    for &rank in &cfg.ranks {
        let start = Instant::now();
        let mut ns: Vec<usize> = cfg
            .oversampling
            .iter()
            .map(|z| ((z * cfg.ambient_dim as f64 / rank as f64).round() as usize).max(1))
            .collect();
        ns.dedup();
        let seed = derive_seed(cfg.seed, rank as u64);
        let stats = expected_lower_bound_montecarlo(cfg.ambient_dim, rank, &ns, cfg.trials, seed)?;
        let xs: Vec<f64> = stats.iter().map(|s| s.n as f64).collect();
        let ys: Vec<f64> = stats.iter().map(|s| s.mean).collect();
        presets.push(FrameboundPreset {
            rank,
            seed,
            fit: linear_fit(&xs, &ys),
            stats,
        });
        seconds.push(start.elapsed().as_secs_f64());
    }
    Ok(FrameboundResult { presets, seconds })
}

impl FrameboundResult {
    pub fn report(&self, cfg: &ExperimentConfig) -> ExperimentReport {
        let exp = cfg.experiment.name().to_string();
        let n = cfg.ambient_dim;
        let mut summary = Table::new(&["experiment", "seed", "N", "r", "trials", "n", "zeta", "mean_C", "std_C"]);
        let mut fit = Table::new(&[
            "experiment", "N", "r", "trials", "slope", "intercept", "r_squared", "slope_over_rank_ratio",
        ]);
        let mut timing = Table::new(&["experiment", "r", "seconds"]);
        let mut lines = Vec::new();
        for (p, secs) in self.presets.iter().zip(&self.seconds) {
            for s in &p.stats {
                summary.push(vec![
                    exp.clone(),
                    p.seed.to_string(),
                    n.to_string(),
                    p.rank.to_string(),
                    cfg.trials.to_string(),
                    s.n.to_string(),
                    fmt_f64(p.zeta(n, s.n)),
                    fmt_f64(s.mean),
                    fmt_f64(s.std),
                ]);
            }
            let ratio = p.fit.slope / (p.rank as f64 / n as f64);
            fit.push(vec![
                exp.clone(),
                n.to_string(),
                p.rank.to_string(),
                cfg.trials.to_string(),
                fmt_f64(p.fit.slope),
                fmt_f64(p.fit.intercept),
                fmt_f64(p.fit.r_squared),
                fmt_f64(ratio),
            ]);
            timing.push(vec![exp.clone(), p.rank.to_string(), fmt_f64(*secs)]);
            lines.push(format!(
                "r = {}: slope {:.4} (r/N = {:.4}), R^2 = {:.5}",
                p.rank,
                p.fit.slope,
                p.rank as f64 / n as f64,
                p.fit.r_squared
            ));
        }
        ExperimentReport {
            experiment: cfg.experiment,
            tables: vec![("summary".into(), summary), ("fit".into(), fit)],
            timing,
            summary_lines: lines,
            all_converged: true,
        }
    }
}

// ---------------------------------------------------------------------------

pub const NOISE_METHODS: [&str; 3] = ["fused_min", "fused_double", "global_bpdn"];

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTrial {
    pub trial: usize,
    pub matrix: usize,
    pub seed: u64,
    /// `errors[method][theta index]`, methods as in [`NOISE_METHODS`].
    pub errors: [Vec<f64>; 3],
    pub converged: bool,
    pub seconds: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseCurve {
    pub method: &'static str,
    pub count: usize,
    /// One summary per noise level.
    pub summaries: Vec<Summary>,
    /// Line through `(theta, mean error)`.
    pub fit: LinearFit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseResult {
    pub n_min: usize,
    pub thetas: Vec<f64>,
    pub trials: Vec<NoiseTrial>,
    pub curves: Vec<NoiseCurve>,
}

/// Error against per-channel noise norm for the minimal and doubled
/// projection counts and for single-sensor BPDN. The doubled family extends
/// the minimal one, and noise directions are shared across the noise grid.
pub fn run_noise_robustness(cfg: &ExperimentConfig) -> Result<NoiseResult> {
    cfg.validate()?;
    let n_min = projection_count(cfg)?;
    let thetas = cfg.noise_levels.clone();
    let pipe = pipeline_config(cfg);
    let total = cfg.trials * cfg.vectors;
    let trials = (0..total)
        .into_par_iter()
        .map(|t| {
            let (matrix, vector) = (t / cfg.vectors, t % cfg.vectors);
            let matrix_seed = derive_seed(cfg.seed, matrix as u64);
            let seed = derive_seed(matrix_seed, vector as u64 + 1);
            let a = SensingMatrix::gaussian(cfg.rows, cfg.ambient_dim, derive_seed(matrix_seed, 0), true)?;
            let x = sparse_gaussian(cfg.ambient_dim, cfg.sparsity, &mut rng_from(derive_seed(seed, 0)));
            let double = random_family(cfg, 2 * n_min, derive_seed(seed, 1))?;
            let minimal = double.prefix(n_min)?;
            let global_op = ColumnOperator::dense(a.matrix().clone());
            let mut errors: [Vec<f64>; 3] = Default::default();
            let mut seconds = [0.0; 3];
            let mut converged = true;
            for &theta in &thetas {
                let syn = synthesize_measurements(&x, &a, &double, &NoiseSpec::ExactNorm(vec![theta]), derive_seed(seed, 2))?;
                let ys = syn.measurements;
                let ys_min = MeasurementSet::new(ys.measurements()[..n_min].to_vec(), ys.noise_bounds()[..n_min].to_vec())?;
                for (k, (frame, meas)) in [(&minimal, &ys_min), (&double, &ys)].into_iter().enumerate() {
                    let start = Instant::now();
                    let report = fused_recover(&a, frame, meas, &pipe)?;
                    seconds[k] += start.elapsed().as_secs_f64();
                    converged &= report.all_converged();
                    errors[k].push((&report.fused_estimate - &x).norm());
                }
                let start = Instant::now();
                let e = vector_of_norm(cfg.rows, theta, &mut rng_from(derive_seed(seed, 3)));
                let sol = bpdn(&global_op, &(a.matrix() * &x + e), theta, &cfg.solver)?;
                seconds[2] += start.elapsed().as_secs_f64();
                converged &= sol.converged;
                errors[2].push((&sol.x - &x).norm());
            }
            Ok(NoiseTrial {
                trial: t,
                matrix,
                seed,
                errors,
                converged,
                seconds,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let curves = NOISE_METHODS
        .iter()
        .enumerate()
        .map(|(k, &method)| {
            let summaries: Vec<Summary> = (0..thetas.len())
                .map(|j| summarize(&trials.iter().map(|t| t.errors[k][j]).collect::<Vec<_>>()))
                .collect();
            let means: Vec<f64> = summaries.iter().map(|s| s.mean).collect();
            NoiseCurve {
                method,
                count: [n_min, 2 * n_min, 1][k],
                fit: linear_fit(&thetas, &means),
                summaries,
            }
        })
        .collect();
    Ok(NoiseResult {
        n_min,
        thetas,
        trials,
        curves,
    })
}

impl NoiseResult {
    pub fn curve(&self, method: &str) -> Option<&NoiseCurve> {
        self.curves.iter().find(|c| c.method == method)
    }

    pub fn report(&self, cfg: &ExperimentConfig) -> ExperimentReport {
        let exp = cfg.experiment.name().to_string();
        let mut trials = Table::new(&[
            "experiment", "trial", "matrix", "seed", "matrix_seed", "N", "m", "s", "r", "n_min", "theta", "method",
            "n", "error", "converged",
        ]);
        let mut timing = Table::new(&["experiment", "trial", "method", "seconds"]);
        for t in &self.trials {
            for (k, method) in NOISE_METHODS.iter().enumerate() {
                for (j, theta) in self.thetas.iter().enumerate() {
                    trials.push(vec![
                        exp.clone(),
                        t.trial.to_string(),
                        t.matrix.to_string(),
                        t.seed.to_string(),
                        derive_seed(cfg.seed, t.matrix as u64).to_string(),
                        cfg.ambient_dim.to_string(),
                        cfg.rows.to_string(),
                        cfg.sparsity.to_string(),
                        cfg.rank.to_string(),
                        self.n_min.to_string(),
                        fmt_f64(*theta),
                        method.to_string(),
                        self.curves[k].count.to_string(),
                        fmt_f64(t.errors[k][j]),
                        bool_str(t.converged),
                    ]);
                }
                timing.push(vec![exp.clone(), t.trial.to_string(), method.to_string(), fmt_f64(t.seconds[k])]);
            }
        }
        let mut summary = Table::new(&[
            "experiment", "N", "m", "s", "r", "method", "n", "theta", "samples", "min", "mean", "max", "std",
        ]);
        let mut fit = Table::new(&["experiment", "method", "n", "slope", "intercept", "r_squared"]);
        let mut lines = Vec::new();
        for c in &self.curves {
            for (theta, s) in self.thetas.iter().zip(&c.summaries) {
                summary.push(vec![
                    exp.clone(),
                    cfg.ambient_dim.to_string(),
                    cfg.rows.to_string(),
                    cfg.sparsity.to_string(),
                    cfg.rank.to_string(),
                    c.method.to_string(),
                    c.count.to_string(),
                    fmt_f64(*theta),
                    self.trials.len().to_string(),
                    fmt_f64(s.min),
                    fmt_f64(s.mean),
                    fmt_f64(s.max),
                    fmt_f64(s.std),
                ]);
            }
            fit.push(vec![
                exp.clone(),
                c.method.to_string(),
                c.count.to_string(),
                fmt_f64(c.fit.slope),
                fmt_f64(c.fit.intercept),
                fmt_f64(c.fit.r_squared),
            ]);
            lines.push(format!(
                "{} (n = {}): error ~ {:.4} theta + {:.4}, R^2 = {:.4}",
                c.method, c.count, c.fit.slope, c.fit.intercept, c.fit.r_squared
            ));
        }
        ExperimentReport {
            experiment: cfg.experiment,
            tables: vec![("trials".into(), trials), ("summary".into(), summary), ("fit".into(), fit)],
            timing,
            summary_lines: lines,
            all_converged: self.trials.iter().all(|t| t.converged),
        }
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct DopplerTrial {
    pub trial: usize,
    pub seed: u64,
    pub fused_error: f64,
    pub global_error: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DopplerResult {
    pub trials: Vec<DopplerTrial>,
}

impl DopplerResult {
    pub fn fused_better_rate(&self) -> f64 {
        fraction(self.trials.iter().map(|t| t.fused_error < t.global_error))
    }
}

/// Haar-level fused l1-analysis against global l1-analysis, one draw per trial.
pub fn run_doppler_demo(cfg: &ExperimentConfig) -> Result<DopplerResult> {
    cfg.validate()?;
    let setup = DopplerSetup::new(cfg.ambient_dim, cfg.levels)?;
    let trials = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let start = Instant::now();
            let seed = derive_seed(cfg.seed, trial as u64);
            let out = doppler_demo(
                &setup,
                &DopplerConfig {
                    len: cfg.ambient_dim,
                    rows: cfg.rows,
                    levels: cfg.levels,
                    sigma: cfg.sigma,
                    seed,
                    eta: None,
                    solver: cfg.solver.clone(),
                },
            )?;
            Ok(DopplerTrial {
                trial,
                seed,
                fused_error: out.fused_error,
                global_error: out.global_error,
                seconds: start.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DopplerResult { trials })
}

impl DopplerResult {
    pub fn report(&self, cfg: &ExperimentConfig) -> ExperimentReport {
        let exp = cfg.experiment.name().to_string();
        let mut trials = Table::new(&[
            "experiment", "trial", "seed", "N", "m", "levels", "sigma", "fused_error", "global_error", "fused_better",
        ]);
        let mut timing = Table::new(&["experiment", "trial", "seconds"]);
        for t in &self.trials {
            trials.push(vec![
                exp.clone(),
                t.trial.to_string(),
                t.seed.to_string(),
                cfg.ambient_dim.to_string(),
                cfg.rows.to_string(),
                cfg.levels.to_string(),
                fmt_f64(cfg.sigma),
                fmt_f64(t.fused_error),
                fmt_f64(t.global_error),
                bool_str(t.fused_error < t.global_error),
            ]);
            timing.push(vec![exp.clone(), t.trial.to_string(), fmt_f64(t.seconds)]);
        }
        let fused = summarize(&self.trials.iter().map(|t| t.fused_error).collect::<Vec<_>>());
        let global = summarize(&self.trials.iter().map(|t| t.global_error).collect::<Vec<_>>());
        let mut summary = Table::new(&[
            "experiment", "N", "m", "levels", "sigma", "trials", "fused_better_rate", "fused_mean", "global_mean",
        ]);
        summary.push(vec![
            exp,
            cfg.ambient_dim.to_string(),
            cfg.rows.to_string(),
            cfg.levels.to_string(),
            fmt_f64(cfg.sigma),
            self.trials.len().to_string(),
            fmt_f64(self.fused_better_rate()),
            fmt_f64(fused.mean),
            fmt_f64(global.mean),
        ]);
        ExperimentReport {
            experiment: cfg.experiment,
            tables: vec![("trials".into(), trials), ("summary".into(), summary)],
            timing,
            summary_lines: vec![format!(
                "fused error {:.3} vs global {:.3} on average; fused better in {:.0}% of draws",
                fused.mean,
                global.mean,
                100.0 * self.fused_better_rate()
            )],
            all_converged: true,
        }
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoveragePoint {
    pub count: usize,
    pub empirical: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageResult {
    pub n_min: usize,
    pub points: Vec<CoveragePoint>,
    pub seconds: f64,
}

/// Empirical frequency of uncovered families next to the union bound.
pub fn run_coverage_check(cfg: &ExperimentConfig) -> Result<CoverageResult> {
    cfg.validate()?;
    let start = Instant::now();
    let n_min = min_projection_count(cfg.ambient_dim, cfg.rank, cfg.eps)?;
    let freq = coverage_failure_frequency(cfg.ambient_dim, cfg.rank, &cfg.n_values, cfg.trials, cfg.seed);
    let points = cfg
        .n_values
        .iter()
        .zip(freq)
        .map(|(&count, empirical)| CoveragePoint {
            count,
            empirical,
            bound: uncovered_probability_bound(cfg.ambient_dim, cfg.rank, count),
        })
        .collect();
    Ok(CoverageResult {
        n_min,
        points,
        seconds: start.elapsed().as_secs_f64(),
    })
}

impl CoverageResult {
    pub fn report(&self, cfg: &ExperimentConfig) -> ExperimentReport {
        let exp = cfg.experiment.name().to_string();
        let mut summary = Table::new(&[
            "experiment", "seed", "N", "r", "trials", "n", "empirical_uncovered", "formula_bound", "n_min",
        ]);
        for p in &self.points {
            summary.push(vec![
                exp.clone(),
                cfg.seed.to_string(),
                cfg.ambient_dim.to_string(),
                cfg.rank.to_string(),
                cfg.trials.to_string(),
                p.count.to_string(),
                fmt_f64(p.empirical),
                fmt_f64(p.bound),
                self.n_min.to_string(),
            ]);
        }
        let mut timing = Table::new(&["experiment", "seconds"]);
        timing.push(vec![exp, fmt_f64(self.seconds)]);
        let violations = self.points.iter().filter(|p| p.empirical > p.bound).count();
        ExperimentReport {
            experiment: cfg.experiment,
            tables: vec![("summary".into(), summary)],
            timing,
            summary_lines: vec![format!(
                "minimal count for eps = {}: {}; empirical frequency above the bound at {} of {} counts",
                cfg.eps,
                self.n_min,
                violations,
                self.points.len()
            )],
            all_converged: true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::ExperimentKind;

    #[test]
    fn tiny_recovery_examples() {
        let mut cfg = ExperimentConfig::defaults(ExperimentKind::RecoveryExamples);
        (cfg.ambient_dim, cfg.rows, cfg.sparsity, cfg.rank, cfg.count, cfg.trials) = (40, 20, 10, 20, Some(8), 3);
        let res = run_recovery_examples(&cfg).unwrap();
        assert_eq!(res.trials.len(), 3);
        let report = res.report(&cfg);
        assert_eq!(report.table("trials").unwrap().rows.len(), 3);
    }

    #[test]
    fn coverage_full_rank_never_fails() {
        let mut cfg = ExperimentConfig::defaults(ExperimentKind::CoverageCheck);
        (cfg.ambient_dim, cfg.rank, cfg.n_values, cfg.trials) = (10, 10, vec![1, 2], 1000);
        let res = run_coverage_check(&cfg).unwrap();
        assert!(res.points.iter().all(|p| p.empirical == 0.0));
    }
}
