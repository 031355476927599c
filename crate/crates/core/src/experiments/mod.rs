//! Seeded experiment harness: configuration, runners and CSV output.
//!
//! Trial `t` of an experiment with base seed `b` uses the seed
//! `derive_seed(b, t)`; every random object inside the trial is drawn from a
//! further `derive_seed(trial_seed, stream)`. Rows are written in trial order
//! whatever the number of worker threads, so output files are reproducible.

mod config;
mod runners;

pub use config::{policy_name, ExperimentConfig, ExperimentKind};
pub use runners::{
    run_coverage_check, run_doppler_demo, run_framebound_growth, run_noise_robustness,
    run_projections_sweep, run_recovery_examples, CoveragePoint, CoverageResult, DopplerResult,
    DopplerTrial, FrameboundPreset, FrameboundResult, NoiseCurve, NoiseResult, NoiseTrial,
    RecoveryExamplesResult, RecoveryTrial, SweepPoint, SweepResult, NOISE_METHODS,
};

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Float format used in every CSV: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(&self.header)?;
        for row in &self.rows {
            writer.write_record(row)?;
        }
        let bytes = writer
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        String::from_utf8(bytes).map_err(|e| Error::InvalidInput(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv_string()?)?;
        Ok(())
    }
}

/// Tables produced by one experiment run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub experiment: ExperimentKind,
    /// `(name, table)`, written to `<experiment>_<name>.csv`.
    pub tables: Vec<(String, Table)>,
    /// Wall-clock seconds per trial and method; kept apart because it is not reproducible.
    pub timing: Table,
    pub summary_lines: Vec<String>,
    /// False when some iterative solve hit its iteration cap.
    pub all_converged: bool,
}

impl ExperimentReport {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Writes every table plus the effective config; returns the written paths.
    pub fn write_to(&self, dir: &Path, cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (name, table) in &self.tables {
            let path = dir.join(format!("{}_{}.csv", self.experiment, name));
            table.write(&path)?;
            written.push(path);
        }
        let path = dir.join(format!("{}_timing.csv", self.experiment));
        self.timing.write(&path)?;
        written.push(path);
        let path = dir.join(format!("{}_config.txt", self.experiment));
        fs::write(&path, cfg.to_config_text())?;
        written.push(path);
        Ok(written)
    }
}

/// Runs `cfg` on at most `jobs` worker threads (all cores when `None`).
pub fn run_experiment(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        if j == 0 {
            return Err(Error::Config("--jobs must be >= 1".into()));
        }
        builder = builder.num_threads(j);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| match cfg.experiment {
        ExperimentKind::RecoveryExamples => run_recovery_examples(cfg).map(|r| r.report(cfg)),
        ExperimentKind::ProjectionsSweep => run_projections_sweep(cfg).map(|r| r.report(cfg)),
        ExperimentKind::FrameboundGrowth => run_framebound_growth(cfg).map(|r| r.report(cfg)),
        ExperimentKind::NoiseRobustness => run_noise_robustness(cfg).map(|r| r.report(cfg)),
        ExperimentKind::DopplerDemo => run_doppler_demo(cfg).map(|r| r.report(cfg)),
        ExperimentKind::CoverageCheck => run_coverage_check(cfg).map(|r| r.report(cfg)),
    })
}

/// CSV columns of each output file, for `--help`.
pub fn csv_schema(kind: ExperimentKind) -> &'static str {
    match kind {
        ExperimentKind::RecoveryExamples => {
            "trials: experiment,trial,seed,N,m,s,r,n,noise,covered,lsq_channels,bpdn_channels,fused_rel_error,global_rel_error,max_outside_mass,converged\n\
             summary: experiment,N,m,s,r,n,trials,fused_success_rate,global_failure_rate,fused_mean,global_mean"
        }
        ExperimentKind::ProjectionsSweep => {
            "trials: experiment,trial,matrix,seed,matrix_seed,N,m,s,r,n_min,multiple,n,covered,rel_error,converged\n\
             summary: experiment,N,m,s,r,n_min,multiple,n,samples,min,mean,max,std"
        }
        ExperimentKind::FrameboundGrowth => {
            "summary: experiment,seed,N,r,trials,n,zeta,mean_C,std_C\n\
             fit: experiment,N,r,trials,slope,intercept,r_squared,slope_over_rank_ratio"
        }
        ExperimentKind::NoiseRobustness => {
            "trials: experiment,trial,matrix,seed,matrix_seed,N,m,s,r,n_min,theta,method,n,error,converged\n\
             summary: experiment,N,m,s,r,method,n,theta,samples,min,mean,max,std\n\
             fit: experiment,method,n,slope,intercept,r_squared"
        }
        ExperimentKind::DopplerDemo => {
            "trials: experiment,trial,seed,N,m,levels,sigma,fused_error,global_error,fused_better\n\
             summary: experiment,N,m,levels,sigma,trials,fused_better_rate,fused_mean,global_mean"
        }
        ExperimentKind::CoverageCheck => {
            "summary: experiment,seed,N,r,trials,n,empirical_uncovered,formula_bound,n_min"
        }
    }
}
