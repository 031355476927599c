use std::time::Instant;

use fusecs::experiments::{
    run_coverage_check, run_experiment, run_projections_sweep, run_recovery_examples, ExperimentConfig,
    ExperimentKind,
};
use fusecs::Error;

const TINY: &str = "\
# small custom setup
experiment = recovery_examples
preset = custom
N = 40
m = 20
s = 10
r = 20
n = auto
trials = 3
seed = 12
";

#[test]
fn defaults_round_trip_through_config_text() {
    for kind in ExperimentKind::ALL {
        let cfg = ExperimentConfig::defaults(kind);
        let back = ExperimentConfig::parse(&cfg.to_config_text()).unwrap();
        assert_eq!(back, cfg, "{kind}");
    }
    let tiny = ExperimentConfig::parse(TINY).unwrap();
    assert_eq!(ExperimentConfig::parse(&tiny.to_config_text()).unwrap(), tiny);
}

#[test]
fn parse_errors_carry_line_numbers() {
    let err = ExperimentConfig::parse("experiment = coverage_check\n\nbogus = 1\n").unwrap_err();
    match err {
        Error::Parse { line, .. } => assert_eq!(line, 3),
        other => panic!("unexpected {other:?}"),
    }
    assert!(ExperimentConfig::parse("experiment = nope\n").is_err());
    assert!(ExperimentConfig::parse("experiment = coverage_check\ntrials = 10\n").is_err());
    assert!(ExperimentConfig::parse("experiment = recovery_examples\npreset = 9\n").is_err());
}

#[test]
fn tiny_custom_recovery_is_fast_and_accurate() {
    let cfg = ExperimentConfig::parse(TINY).unwrap();
    let start = Instant::now();
    let res = run_recovery_examples(&cfg).unwrap();
    assert!(start.elapsed().as_secs_f64() < 5.0);
    assert_eq!(res.trials.len(), 3);
    for t in res.trials.iter().filter(|t| t.covered) {
        assert!(t.fused_rel_error < 1e-6, "trial {}: {}", t.trial, t.fused_rel_error);
    }
}

#[test]
fn csv_output_is_reproducible_across_thread_counts() {
    let cfg = ExperimentConfig::parse(TINY).unwrap();
    let one = run_experiment(&cfg, Some(1)).unwrap();
    let two = run_experiment(&cfg, Some(2)).unwrap();
    assert_eq!(one.tables, two.tables);
    let dir = tempfile::tempdir().unwrap();
    let paths = one.write_to(dir.path(), &cfg).unwrap();
    let trials = std::fs::read_to_string(dir.path().join("recovery_examples_trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 1 + 3);
    assert!(paths.iter().any(|p| p.ends_with("recovery_examples_timing.csv")));
    let written = std::fs::read_to_string(dir.path().join("recovery_examples_config.txt")).unwrap();
    assert_eq!(ExperimentConfig::parse(&written).unwrap(), cfg);
}

#[test]
fn sweep_well_above_minimum_recovers() {
    let text = "experiment = projections_sweep\nN = 100\nm = 60\ns = 20\nr = 50\nmultiples = 3\ntrials = 1\nvectors = 3\n";
    let cfg = ExperimentConfig::parse(text).unwrap();
    let res = run_projections_sweep(&cfg).unwrap();
    assert_eq!(res.points.len(), 1);
    let point = &res.points[0];
    assert_eq!(point.count, (3.0 * res.n_min as f64).round() as usize);
    for sample in &point.samples {
        assert!(sample.4 < 0.01, "relative error {}", sample.4);
    }
}

#[test]
fn coverage_with_full_rank_never_fails() {
    let text = "experiment = coverage_check\nN = 50\nr = 50\nn_values = 1, 2, 3\ntrials = 1000\n";
    let cfg = ExperimentConfig::parse(text).unwrap();
    let res = run_coverage_check(&cfg).unwrap();
    assert!(res.points.iter().all(|p| p.empirical == 0.0));
}

#[test]
fn zero_jobs_is_a_config_error() {
    let cfg = ExperimentConfig::parse(TINY).unwrap();
    assert!(matches!(run_experiment(&cfg, Some(0)), Err(Error::Config(_))));
}
