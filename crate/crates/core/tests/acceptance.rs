//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on failure.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use fusecs::analysis::{
    best_term_errors, bound_prop2, bound_rdnsp, rip_exhaustive, rip_to_nsp, NoiseInput, RIP_TO_NSP_LIMIT,
};
use fusecs::experiments::{
    run_doppler_demo, run_framebound_growth, run_noise_robustness, run_recovery_examples, ExperimentConfig,
    ExperimentKind,
};
use fusecs::frames::{
    build_family, coverage_failure_frequency, frame_algorithm, invert_fusion_exact, min_projection_count,
    FamilyKind, FrameAlgorithmOptions, FrameIterates, FusionOperator, ProjectionFamilySpec,
};
use fusecs::pipeline::{fused_recover, mass_outside, synthesize_measurements, NoiseSpec, PipelineConfig, SolverPolicy};
use fusecs::rng::{derive_seed, gaussian_vector, rng_from, sparse_gaussian};
use fusecs::solvers::{bpdn, l0_oracle, ColumnOperator, SolverOptions};
use fusecs::{SensingMatrix, SparsityPattern};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Largest local BPDN l1 mass outside its index set, accumulated across criteria.
static OUTSIDE_MASS: std::sync::Mutex<(f64, usize)> = std::sync::Mutex::new((0.0, 0));

fn record_outside_mass(mass: f64) {
    let mut guard = OUTSIDE_MASS.lock().unwrap();
    guard.0 = guard.0.max(mass);
    guard.1 += 1;
}

fn c1_coverage() -> Outcome {
    let n = min_projection_count(1000, 500, 0.01).unwrap();
    let trials = 10_000;
    let freq = coverage_failure_frequency(1000, 500, &[17], trials, 2024)[0];
    let limit = 0.01 + 3.0 * (0.01f64 / trials as f64).sqrt();
    outcome(
        n == 17 && freq <= limit,
        format!("min_projection_count = {n}, uncovered frequency at n=17: {freq:.4} (limit {limit:.4})"),
    )
}

fn c2_frame_algorithm() -> Outcome {
    let mut rng = rng_from(77);
    let (mut envelope_ok, mut match_ok) = (true, true);
    let mut worst_match = 0.0f64;
    let mut frames = 0;
    let mut attempt = 0u64;
    while frames < 50 {
        attempt += 1;
        let n = rng.random_range(5..=200usize);
        let rank = rng.random_range(1..=n);
        let count = rng.random_range(1..=12usize);
        let frame = build_family(&ProjectionFamilySpec::new(
            FamilyKind::RandomFixedRank {
                rank,
                count,
                seed: derive_seed(77, attempt),
            },
            n,
        ))
        .unwrap();
        if !frame.is_valid() {
            continue;
        }
        frames += 1;
        let x = gaussian_vector(n, &mut rng);
        let sx = frame.apply(&x);
        let (c, d) = frame.frame_bounds();
        let ratio = (d - c) / (d + c);
        for (k, xk) in FrameIterates::new(&frame, &sx).take(200).enumerate() {
            let bound = ratio.powi(k as i32 + 1) * x.norm() + 1e-9;
            if (&xk - &x).norm() > bound {
                envelope_ok = false;
            }
        }
        let res = frame_algorithm(&frame, &sx, FrameAlgorithmOptions { tol: 1e-13, k_max: None }).unwrap();
        let exact = invert_fusion_exact(&frame, &sx).unwrap();
        let diff = (&res.estimate - &exact).amax();
        worst_match = worst_match.max(diff);
        match_ok &= res.converged && diff <= 1e-8;
    }
    outcome(
        envelope_ok && match_ok,
        format!("50 valid frames: envelope held = {envelope_ok}, max |frame algorithm - exact inverse| = {worst_match:.2e}"),
    )
}

fn c3_dense_recovery() -> Outcome {
    let mut cfg = ExperimentConfig::defaults(ExperimentKind::RecoveryExamples);
    cfg.apply_preset(1).unwrap();
    cfg.trials = 20;
    cfg.seed = 3;
    let res = run_recovery_examples(&cfg).unwrap();
    for t in &res.trials {
        record_outside_mass(t.max_outside_mass);
    }
    let fused = res.fused_success_rate(1e-3);
    let global = res.global_failure_rate(0.1);
    outcome(
        fused >= 0.9 && global >= 0.9,
        format!(
            "N=600 m=250 s=200 r=300 n=13: fused rel. error <= 1e-3 in {:.0}%, global BPDN > 0.1 in {:.0}%",
            100.0 * fused,
            100.0 * global
        ),
    )
}

fn c4_framebound() -> Outcome {
    let cfg = ExperimentConfig::defaults(ExperimentKind::FrameboundGrowth);
    let res = run_framebound_growth(&cfg).unwrap();
    let mut pass = cfg.ranks == [50, 20] && cfg.ambient_dim == 100 && cfg.trials == 300;
    let mut parts = Vec::new();
    for p in &res.presets {
        let target = p.rank as f64 / cfg.ambient_dim as f64;
        let ok = p.fit.r_squared >= 0.98 && p.fit.slope > 0.0 && (p.fit.slope / target - 1.0).abs() <= 0.25;
        pass &= ok;
        parts.push(format!("r={}: slope {:.3} vs r/N {:.2}, R^2 {:.4}", p.rank, p.fit.slope, target, p.fit.r_squared));
    }
    outcome(pass, parts.join("; "))
}

fn c5_noise() -> Outcome {
    let mut cfg = ExperimentConfig::defaults(ExperimentKind::NoiseRobustness);
    (cfg.trials, cfg.vectors, cfg.seed) = (2, 3, 5);
    let res = run_noise_robustness(&cfg).unwrap();
    let min = res.curve("fused_min").unwrap();
    let double = res.curve("fused_double").unwrap();
    let dominated = min
        .summaries
        .iter()
        .zip(&double.summaries)
        .all(|(a, b)| b.mean <= a.mean);
    let linear = min.fit.r_squared >= 0.95;
    outcome(
        linear && dominated,
        format!(
            "N=500 m=300 s=80, {} trials: fused_min R^2 {:.4}, doubled <= minimal at every theta: {dominated}",
            res.trials.len(),
            min.fit.r_squared
        ),
    )
}

fn c6_bounds() -> Outcome {
    // Least-squares pipeline against the squared-error bound.
    let (n, m, r, count) = (60, 30, 20, 15);
    let mut lsq_ok = 0;
    let mut trials = 0;
    let mut attempt = 0u64;
    let mut worst_ratio = 0.0f64;
    while trials < 200 {
        attempt += 1;
        let seed = derive_seed(600, attempt);
        let frame = build_family(&ProjectionFamilySpec::new(
            FamilyKind::RandomFixedRank {
                rank: r,
                count,
                seed: derive_seed(seed, 0),
            },
            n,
        ))
        .unwrap();
        if !frame.is_valid() {
            continue;
        }
        trials += 1;
        let a = SensingMatrix::gaussian(m, n, derive_seed(seed, 1), true).unwrap();
        let x = gaussian_vector(n, &mut rng_from(derive_seed(seed, 2)));
        let eta = 0.01 + 0.5 * rng_from(derive_seed(seed, 3)).random::<f64>();
        let syn = synthesize_measurements(&x, &a, &frame, &NoiseSpec::ExactNorm(vec![eta]), derive_seed(seed, 4)).unwrap();
        let cfg = PipelineConfig {
            solver_policy: SolverPolicy::ForceLsq,
            ..PipelineConfig::default()
        };
        let report = fused_recover(&a, &frame, &syn.measurements, &cfg).unwrap();
        let err2 = (&report.fused_estimate - &x).norm_squared();
        let bound = bound_prop2(&frame, &a, NoiseInput::Vectors(&syn.noise)).unwrap();
        worst_ratio = worst_ratio.max(err2 / bound);
        if err2 <= bound {
            lsq_ok += 1;
        }
    }

    // Tiny BPDN instances: two blocks of 6, one spike per block, exhaustive delta_2.
    let (n, m) = (12, 10);
    let frame = build_family(&ProjectionFamilySpec::new(FamilyKind::Partition { sizes: vec![6, 6] }, n)).unwrap();
    let pattern = SparsityPattern::uniform(2, 1);
    let (mut applicable, mut dominated, mut tried) = (0, 0, 0u64);
    let mut worst_bpdn = 0.0f64;
    while applicable < 40 && tried < 5000 {
        tried += 1;
        let seed = derive_seed(606, tried);
        let a = SensingMatrix::gaussian(m, n, derive_seed(seed, 0), true).unwrap().with_unit_columns().unwrap();
        let delta = frame
            .projections()
            .iter()
            .map(|p| rip_exhaustive(&a, 2, Some(p)).unwrap().delta)
            .fold(0.0, f64::max);
        if delta >= RIP_TO_NSP_LIMIT {
            continue;
        }
        applicable += 1;
        let constants = rip_to_nsp(delta).unwrap().l1_from_l2(1);
        let mut rng = rng_from(derive_seed(seed, 1));
        let mut x = gaussian_vector(n, &mut rng) * 0.01;
        x[rng.random_range(0..6)] += 1.0 + rng.random::<f64>();
        x[rng.random_range(6..12)] -= 1.0 + rng.random::<f64>();
        let syn = synthesize_measurements(&x, &a, &frame, &NoiseSpec::ExactNorm(vec![0.05]), derive_seed(seed, 2)).unwrap();
        let cfg = PipelineConfig {
            solver_policy: SolverPolicy::ForceBpdn,
            ..PipelineConfig::default()
        };
        let report = fused_recover(&a, &frame, &syn.measurements, &cfg).unwrap();
        for (est, p) in report.local_estimates.iter().zip(frame.projections()) {
            record_outside_mass(mass_outside(est, p.indices()));
        }
        let err1 = (&report.fused_estimate - &x).lp_norm(1);
        let best = best_term_errors(&x, &frame, &pattern).unwrap();
        let bound = bound_rdnsp(&frame, &[constants; 2], &best, syn.measurements.noise_bounds()).unwrap();
        worst_bpdn = worst_bpdn.max(err1 / bound);
        if err1 <= bound {
            dominated += 1;
        }
    }
    outcome(
        lsq_ok == 200 && applicable >= 20 && dominated == applicable,
        format!(
            "squared-error bound held in {lsq_ok}/200 lsq trials (max error/bound {worst_ratio:.3}); \
             l1 bound held in {dominated}/{applicable} applicable BPDN instances (max ratio {worst_bpdn:.3})"
        ),
    )
}

fn support(v: &DVector<f64>, rel: f64) -> Vec<usize> {
    let scale = v.amax();
    (0..v.len()).filter(|&k| scale > 0.0 && v[k].abs() > rel * scale).collect()
}

fn c7_oracle() -> Outcome {
    let (n, s, m) = (12usize, 2usize, 10usize);
    assert!(m as f64 >= 2.0 * s as f64 * (n as f64).ln());
    let mut agree = 0;
    for t in 0..100u64 {
        let seed = derive_seed(707, t);
        let a = SensingMatrix::gaussian(m, n, derive_seed(seed, 0), true).unwrap();
        let x = sparse_gaussian(n, s, &mut rng_from(derive_seed(seed, 1)));
        let y = a.matrix() * &x;
        let sol = bpdn(&ColumnOperator::dense(a.matrix().clone()), &y, 0.0, &SolverOptions::default()).unwrap();
        let oracle = l0_oracle(&a, &y, 0.0, 4).unwrap();
        if support(&sol.x, 1e-6) == support(&oracle, 1e-9) {
            agree += 1;
        }
    }
    outcome(agree >= 95, format!("BPDN support equals l0-oracle support in {agree}/100 instances"))
}

fn c8_support() -> Outcome {
    let (worst, count) = *OUTSIDE_MASS.lock().unwrap();
    outcome(
        count > 0 && worst <= 1e-8,
        format!("max relative l1 mass outside Omega_i over {count} local BPDN solves: {worst:.2e}"),
    )
}

fn c9_doppler() -> Outcome {
    let mut cfg = ExperimentConfig::defaults(ExperimentKind::DopplerDemo);
    cfg.trials = 20;
    cfg.seed = 9;
    let res = run_doppler_demo(&cfg).unwrap();
    let rate = res.fused_better_rate();
    let mean = |f: fn(&fusecs::experiments::DopplerTrial) -> f64| {
        res.trials.iter().map(f).sum::<f64>() / res.trials.len() as f64
    };
    outcome(
        rate >= 0.8,
        format!(
            "fused < global in {:.0}% of 20 draws (mean errors {:.3} vs {:.3})",
            100.0 * rate,
            mean(|t| t.fused_error),
            mean(|t| t.global_error)
        ),
    )
}

fn brute_force_delta2(a: &DMatrix<f64>) -> f64 {
    let n = a.ncols();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            let sub = a.select_columns(&[i, j]);
            let eig = SymmetricEigen::new(sub.tr_mul(&sub));
            for &l in eig.eigenvalues.iter() {
                worst = worst.max((l - 1.0).abs());
            }
        }
    }
    worst
}

fn c10_rip() -> Outcome {
    let a = SensingMatrix::gaussian(20, 40, 1010, true).unwrap();
    let est = rip_exhaustive(&a, 2, None).unwrap().delta;
    let oracle = brute_force_delta2(a.matrix());
    let zero = rip_to_nsp(0.0).unwrap();
    let limit = 4.0 / 41f64.sqrt();
    let rejects = rip_to_nsp(limit).is_err() && rip_to_nsp(0.7).is_err() && rip_to_nsp(0.62).is_ok();
    let matches = (est - oracle).abs() <= 1e-12;
    outcome(
        matches && zero.rho == 0.0 && zero.tau == 1.0 && rejects,
        format!(
            "delta_2 = {est:.15} vs brute force {oracle:.15} (diff {:.1e}); rip_to_nsp(0) = ({}, {}); rejects >= 4/sqrt(41): {rejects}",
            (est - oracle).abs(),
            zero.rho,
            zero.tau
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Duration); 10] = [
        ("1 coverage count", c1_coverage, Duration::from_secs(10)),
        ("2 frame algorithm", c2_frame_algorithm, Duration::from_secs(10)),
        ("3 dense-signal recovery", c3_dense_recovery, Duration::from_secs(300)),
        ("4 lower frame bound growth", c4_framebound, Duration::from_secs(60)),
        ("5 noise robustness", c5_noise, Duration::from_secs(600)),
        ("6 error-bound domination", c6_bounds, Duration::from_secs(600)),
        ("7 oracle equivalence", c7_oracle, Duration::from_secs(600)),
        ("8 local support", c8_support, Duration::from_secs(600)),
        ("9 Doppler ordering", c9_doppler, Duration::from_secs(300)),
        ("10 RIP machinery", c10_rip, Duration::from_secs(600)),
    ];
    let mut failures = 0;
    for (name, run, limit) in criteria {
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let pass = out.pass && elapsed <= limit;
        if !pass {
            failures += 1;
        }
        println!(
            "{} criterion {name}: {} [{:.1}s, limit {}s]",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    println!("{} of 10 criteria passed", 10 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
