use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fusecs::experiments::{csv_schema, run_experiment, ExperimentConfig, ExperimentKind};
use fusecs::frames::min_projection_count;
use fusecs::io::{read_columns, read_index_sets, read_matrix, write_vector};
use fusecs::pipeline::{fused_recover, report_csv, PipelineConfig, SolverPolicy};
use fusecs::{Error, MeasurementSet, SensingMatrix};

const AFTER_HELP: &str = "\
Exit codes: 0 success, 2 configuration error, 3 solver did not converge, 1 other failure.

Config files hold one `key = value` per line, `#` starts a comment, lists are
comma-separated. Keys: experiment, preset, N, m, s, r, n, eps, trials, vectors,
seed, noise_levels, multiples, n_values, ranks, oversampling, sigma, levels,
family, sizes, family_seed, policy, fusion, fusion_tol, fusion_kmax, execution,
max_iter, tol_abs, tol_rel, penalty, out.

Each run writes <experiment>_<table>.csv (floats with 17 significant digits),
<experiment>_timing.csv (wall clock, not reproducible) and the effective
<experiment>_config.txt to the output directory.";

#[derive(Parser)]
#[command(name = "fusecs", version, about = "Fused compressed sensing experiments and solvers", after_help = AFTER_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fused recovery vs single-sensor BPDN on dense signals.
    #[command(name = "recovery_examples", after_help = csv_schema(ExperimentKind::RecoveryExamples))]
    RecoveryExamples(RunArgs),
    /// Recovery error as a function of the number of projections.
    #[command(name = "projections_sweep", after_help = csv_schema(ExperimentKind::ProjectionsSweep))]
    ProjectionsSweep(RunArgs),
    /// Growth of the expected lower frame bound of random families.
    #[command(name = "framebound_growth", after_help = csv_schema(ExperimentKind::FrameboundGrowth))]
    FrameboundGrowth(RunArgs),
    /// Error against per-channel noise norm.
    #[command(name = "noise_robustness", after_help = csv_schema(ExperimentKind::NoiseRobustness))]
    NoiseRobustness(RunArgs),
    /// Haar-level fused l1-analysis of a noisy Doppler signal.
    #[command(name = "doppler_demo", after_help = csv_schema(ExperimentKind::DopplerDemo))]
    DopplerDemo(RunArgs),
    /// Empirical probability of leaving a coordinate uncovered.
    #[command(name = "coverage_check", after_help = csv_schema(ExperimentKind::CoverageCheck))]
    CoverageCheck(RunArgs),
    /// Smallest number of random rank-r index sets covering 1..N with probability 1 - eps.
    Plan {
        #[arg(long = "N")]
        ambient_dim: usize,
        #[arg(long = "r")]
        rank: usize,
        #[arg(long)]
        eps: f64,
    },
    /// One-shot fused recovery from files.
    Solve(SolveArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Config file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Full-scale trial counts.
    #[arg(long)]
    full: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Auto,
    Lsq,
    Bpdn,
    L1Analysis,
}

#[derive(Args)]
struct SolveArgs {
    /// Sensing matrix A (m x N CSV).
    #[arg(long)]
    matrix: PathBuf,
    /// Index sets, one per line, 1-based.
    #[arg(long)]
    frame: PathBuf,
    /// Measurements: m x n CSV, column i is y_i.
    #[arg(long)]
    measurements: PathBuf,
    /// Noise bound, one value or one per subspace (comma-separated).
    #[arg(long, value_delimiter = ',', default_value = "0")]
    eta: Vec<f64>,
    #[arg(long, value_enum, default_value = "auto")]
    policy: PolicyArg,
    /// Fill uncovered coordinates with 0 instead of failing.
    #[arg(long)]
    allow_uncovered: bool,
    /// Where to write the fused estimate (one value per line); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write the per-subspace report CSV; stderr when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Parse { .. } => 2,
        Error::Subspace { source, .. } => exit_code(source),
        _ => 1,
    }
}

fn fail(err: Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(exit_code(&err))
}

fn run(kind: ExperimentKind, args: RunArgs) -> ExitCode {
    let mut cfg = match &args.config {
        Some(path) => match ExperimentConfig::from_file(path) {
            Ok(cfg) => cfg,
            Err(e @ Error::Io(_)) => return fail(Error::Config(format!("{}: {e}", path.display()))),
            Err(e) => return fail(e),
        },
        None => ExperimentConfig::defaults(kind),
    };
    if cfg.experiment != kind {
        return fail(Error::Config(format!(
            "config describes '{}' but '{}' was requested",
            cfg.experiment, kind
        )));
    }
    if args.full {
        cfg.apply_full();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = args.trials {
        cfg.trials = trials;
    }
    if let Some(out) = args.out {
        cfg.out_dir = out;
    }
    if let Err(e) = cfg.validate() {
        return fail(e);
    }
    let report = match run_experiment(&cfg, args.jobs) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    match report.write_to(&cfg.out_dir, &cfg) {
        Ok(paths) => {
            for line in &report.summary_lines {
                println!("{line}");
            }
            for p in paths {
                println!("wrote {}", p.display());
            }
        }
        Err(e) => return fail(e),
    }
    if report.all_converged {
        ExitCode::SUCCESS
    } else {
        eprintln!("warning: some solves hit the iteration cap");
        ExitCode::from(3)
    }
}

fn solve(args: SolveArgs) -> Result<bool, Error> {
    let a = SensingMatrix::from_matrix(read_matrix(&args.matrix)?)?;
    let frame = read_index_sets(&args.frame, a.cols())?;
    let ys = read_columns(&args.measurements)?;
    let etas = match args.eta.len() {
        1 => vec![args.eta[0]; ys.len()],
        _ => args.eta.clone(),
    };
    let ys = MeasurementSet::new(ys, etas)?;
    let cfg = PipelineConfig {
        solver_policy: match args.policy {
            PolicyArg::Auto => SolverPolicy::Auto,
            PolicyArg::Lsq => SolverPolicy::ForceLsq,
            PolicyArg::Bpdn => SolverPolicy::ForceBpdn,
            PolicyArg::L1Analysis => SolverPolicy::ForceL1Analysis,
        },
        allow_uncovered: args.allow_uncovered,
        ..PipelineConfig::default()
    };
    let report = fused_recover(&a, &frame, &ys, &cfg)?;
    let csv = report_csv(&report)?;
    match &args.report {
        Some(path) => std::fs::write(path, csv)?,
        None => eprint!("{csv}"),
    }
    match &args.out {
        Some(path) => write_vector(path, &report.fused_estimate)?,
        None => {
            for v in report.fused_estimate.iter() {
                println!("{v:.16e}");
            }
        }
    }
    Ok(report.all_converged())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::RecoveryExamples(a) => run(ExperimentKind::RecoveryExamples, a),
        Command::ProjectionsSweep(a) => run(ExperimentKind::ProjectionsSweep, a),
        Command::FrameboundGrowth(a) => run(ExperimentKind::FrameboundGrowth, a),
        Command::NoiseRobustness(a) => run(ExperimentKind::NoiseRobustness, a),
        Command::DopplerDemo(a) => run(ExperimentKind::DopplerDemo, a),
        Command::CoverageCheck(a) => run(ExperimentKind::CoverageCheck, a),
        Command::Plan { ambient_dim, rank, eps } => match min_projection_count(ambient_dim, rank, eps) {
            Ok(n) => {
                println!("{n}");
                ExitCode::SUCCESS
            }
            Err(Error::InvalidInput(msg)) => fail(Error::Config(msg)),
            Err(e) => fail(e),
        },
        Command::Solve(args) => match solve(args) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => {
                eprintln!("warning: some local solves hit the iteration cap");
                ExitCode::from(3)
            }
            Err(e) => fail(e),
        },
    }
}
