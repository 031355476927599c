//! Flat `key = value` experiment configuration.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::frames::{FamilyKind, FrameAlgorithmOptions, ProjectionFamilySpec};
use crate::pipeline::{Execution, FusionMode, SolverPolicy};
use crate::solvers::SolverOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    RecoveryExamples,
    ProjectionsSweep,
    FrameboundGrowth,
    NoiseRobustness,
    DopplerDemo,
    CoverageCheck,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::RecoveryExamples,
        ExperimentKind::ProjectionsSweep,
        ExperimentKind::FrameboundGrowth,
        ExperimentKind::NoiseRobustness,
        ExperimentKind::DopplerDemo,
        ExperimentKind::CoverageCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::RecoveryExamples => "recovery_examples",
            ExperimentKind::ProjectionsSweep => "projections_sweep",
            ExperimentKind::FrameboundGrowth => "framebound_growth",
            ExperimentKind::NoiseRobustness => "noise_robustness",
            ExperimentKind::DopplerDemo => "doppler_demo",
            ExperimentKind::CoverageCheck => "coverage_check",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }
}

/// All knobs of every experiment; each experiment reads the ones it needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Recovery-example preset (1..=3), `None` for a custom setup.
    pub preset: Option<u8>,
    /// Ambient dimension `N`.
    pub ambient_dim: usize,
    /// Measurements per sensor `m`.
    pub rows: usize,
    pub sparsity: usize,
    /// Projection rank `r`.
    pub rank: usize,
    /// Number of projections; `None` means `min_projection_count(N, r, eps)`.
    pub count: Option<usize>,
    pub eps: f64,
    /// Trials, or sensing matrices for the sweep and noise experiments.
    pub trials: usize,
    /// Signals per sensing matrix (sweep and noise experiments).
    pub vectors: usize,
    pub seed: u64,
    pub noise_levels: Vec<f64>,
    /// Multiples of the minimal projection count (sweep).
    pub multiples: Vec<f64>,
    /// Explicit projection counts (coverage check).
    pub n_values: Vec<usize>,
    /// Ranks compared by the frame-bound experiment.
    pub ranks: Vec<usize>,
    /// Oversampling grid `zeta = r n / N` (frame-bound experiment).
    pub oversampling: Vec<f64>,
    pub sigma: f64,
    pub levels: usize,
    /// Explicit projection family for custom recovery examples.
    pub family: Option<ProjectionFamilySpec>,
    pub policy: SolverPolicy,
    pub fusion: FusionMode,
    pub execution: Execution,
    pub solver: SolverOptions,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    /// Desk-scale defaults for `kind`.
    pub fn defaults(kind: ExperimentKind) -> Self {
        let mut cfg = ExperimentConfig {
            experiment: kind,
            preset: None,
            ambient_dim: 600,
            rows: 250,
            sparsity: 200,
            rank: 300,
            count: None,
            eps: 0.01,
            trials: 10,
            vectors: 1,
            seed: 0,
            noise_levels: Vec::new(),
            multiples: Vec::new(),
            n_values: Vec::new(),
            ranks: Vec::new(),
            oversampling: Vec::new(),
            sigma: 0.05,
            levels: 8,
            family: None,
            policy: SolverPolicy::Auto,
            fusion: FusionMode::ExactDiagonal,
            execution: Execution::SequentialOnline,
            solver: SolverOptions::default(),
            out_dir: PathBuf::from("out"),
        };
        match kind {
            ExperimentKind::RecoveryExamples => {
                cfg.apply_preset(1).expect("preset 1 exists");
                cfg.trials = 20;
            }
            ExperimentKind::ProjectionsSweep => {
                (cfg.ambient_dim, cfg.rows, cfg.sparsity, cfg.rank) = (1000, 300, 200, 500);
                cfg.multiples = vec![0.6, 0.8, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0];
                cfg.trials = 1;
                cfg.vectors = 10;
            }
            ExperimentKind::FrameboundGrowth => {
                cfg.ambient_dim = 100;
                cfg.ranks = vec![50, 20];
                cfg.oversampling = (0..=10).map(|i| 20.0 + 10.0 * i as f64).collect();
                cfg.trials = 300;
            }
            ExperimentKind::NoiseRobustness => {
                (cfg.ambient_dim, cfg.rows, cfg.sparsity, cfg.rank) = (500, 300, 80, 250);
                cfg.noise_levels = vec![0.05, 0.1, 0.2, 0.3, 0.4, 0.5];
                cfg.trials = 1;
                cfg.vectors = 5;
            }
            ExperimentKind::DopplerDemo => {
                (cfg.ambient_dim, cfg.rows) = (1024, 174);
                cfg.levels = 8;
                cfg.sigma = 0.05;
                cfg.trials = 20;
            }
            ExperimentKind::CoverageCheck => {
                (cfg.ambient_dim, cfg.rank) = (1000, 500);
                cfg.n_values = (5..=35).collect();
                cfg.trials = 10_000;
            }
        }
        cfg
    }

    /// Full-scale trial counts.
    pub fn apply_full(&mut self) {
        match self.experiment {
            ExperimentKind::ProjectionsSweep => (self.trials, self.vectors) = (10, 10),
            ExperimentKind::NoiseRobustness => (self.trials, self.vectors) = (10, 5),
            _ => {}
        }
    }

    /// The three fixed setups of the recovery examples (`N = 600`, `m = 250`).
    pub fn apply_preset(&mut self, preset: u8) -> Result<()> {
        let (s, r, n, policy) = match preset {
            1 => (200, 300, 13, SolverPolicy::ForceBpdn),
            2 => (200, 200, 22, SolverPolicy::ForceLsq),
            3 => (500, 200, 22, SolverPolicy::ForceLsq),
            _ => return Err(Error::Config(format!("unknown preset {preset} (expected 1, 2 or 3)"))),
        };
        self.preset = Some(preset);
        (self.ambient_dim, self.rows) = (600, 250);
        (self.sparsity, self.rank, self.count, self.policy) = (s, r, Some(n), policy);
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_path(text, Path::new("<config>"))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_with_path(&text, path)
    }

    fn parse_with_path(text: &str, path: &Path) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: format!("expected 'key = value', got '{line}'"),
            })?;
            pairs.push((lineno + 1, key.trim().to_string(), value.trim().to_string()));
        }
        let mut seen = BTreeSet::new();
        for (line, key, _) in &pairs {
            if !seen.insert(key.clone()) {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: *line,
                    message: format!("duplicate key '{key}'"),
                });
            }
        }
        let find = |k: &str| pairs.iter().find(|(_, key, _)| key == k).map(|(_, _, v)| v.as_str());
        let kind: ExperimentKind = find("experiment")
            .ok_or_else(|| Error::Config("missing required key 'experiment'".into()))?
            .parse()?;
        let mut cfg = ExperimentConfig::defaults(kind);
        if let Some(p) = find("preset") {
            if p == "custom" {
                cfg.preset = None;
            } else {
                cfg.apply_preset(parse_value(p, "preset")?)?;
            }
        }
        let mut family_name = None;
        let mut family_seed = None;
        let mut sizes = None;
        for (line, key, value) in &pairs {
            let v = value.as_str();
            let wrap = |e: Error| Error::Parse {
                path: path.to_path_buf(),
                line: *line,
                message: e.to_string(),
            };
            match key.as_str() {
                "experiment" | "preset" | "fusion_tol" | "fusion_kmax" => {}
                "N" => cfg.ambient_dim = parse_value(v, key).map_err(wrap)?,
                "m" => cfg.rows = parse_value(v, key).map_err(wrap)?,
                "s" => cfg.sparsity = parse_value(v, key).map_err(wrap)?,
                "r" => cfg.rank = parse_value(v, key).map_err(wrap)?,
                "n" => {
                    cfg.count = if v == "auto" {
                        None
                    } else {
                        Some(parse_value(v, key).map_err(wrap)?)
                    }
                }
                "eps" => cfg.eps = parse_value(v, key).map_err(wrap)?,
                "trials" => cfg.trials = parse_value(v, key).map_err(wrap)?,
                "vectors" => cfg.vectors = parse_value(v, key).map_err(wrap)?,
                "seed" => cfg.seed = parse_value(v, key).map_err(wrap)?,
                "noise_levels" => cfg.noise_levels = parse_list(v, key).map_err(wrap)?,
                "multiples" => cfg.multiples = parse_list(v, key).map_err(wrap)?,
                "n_values" => cfg.n_values = parse_list(v, key).map_err(wrap)?,
                "ranks" => cfg.ranks = parse_list(v, key).map_err(wrap)?,
                "oversampling" => cfg.oversampling = parse_list(v, key).map_err(wrap)?,
                "sigma" => cfg.sigma = parse_value(v, key).map_err(wrap)?,
                "levels" => cfg.levels = parse_value(v, key).map_err(wrap)?,
                "family" => family_name = Some(v.to_string()),
                "family_seed" => family_seed = Some(parse_value::<u64>(v, key).map_err(wrap)?),
                "sizes" => sizes = Some(parse_list::<usize>(v, key).map_err(wrap)?),
                "policy" => cfg.policy = parse_policy(v).map_err(wrap)?,
                "fusion" => {
                    cfg.fusion = match v {
                        "exact_diagonal" => FusionMode::ExactDiagonal,
                        "frame_algorithm" => FusionMode::FrameAlgorithm(FrameAlgorithmOptions::default()),
                        _ => return Err(wrap(Error::Config(format!("unknown fusion mode '{v}'")))),
                    }
                }
                "execution" => {
                    cfg.execution = match v {
                        "sequential_online" => Execution::SequentialOnline,
                        "parallel_batch" => Execution::ParallelBatch,
                        _ => return Err(wrap(Error::Config(format!("unknown execution mode '{v}'")))),
                    }
                }
                "max_iter" => cfg.solver.max_iter = parse_value(v, key).map_err(wrap)?,
                "tol_abs" => cfg.solver.tol_abs = parse_value(v, key).map_err(wrap)?,
                "tol_rel" => cfg.solver.tol_rel = parse_value(v, key).map_err(wrap)?,
                "penalty" => cfg.solver.penalty = parse_value(v, key).map_err(wrap)?,
                "out" => cfg.out_dir = PathBuf::from(v),
                _ => return Err(wrap(Error::Config(format!("unknown key '{key}'")))),
            }
        }
        if let FusionMode::FrameAlgorithm(ref mut opts) = cfg.fusion {
            if let Some(v) = find("fusion_tol") {
                opts.tol = parse_value(v, "fusion_tol")?;
            }
            if let Some(v) = find("fusion_kmax") {
                opts.k_max = Some(parse_value(v, "fusion_kmax")?);
            }
        }
        if let Some(name) = family_name {
            let kind = match name.as_str() {
                "partition" => FamilyKind::Partition {
                    sizes: sizes.ok_or_else(|| Error::Config("family = partition needs 'sizes'".into()))?,
                },
                "random_fixed_rank" => FamilyKind::RandomFixedRank {
                    rank: cfg.rank,
                    count: cfg
                        .count
                        .ok_or_else(|| Error::Config("family = random_fixed_rank needs 'n'".into()))?,
                    seed: family_seed.unwrap_or(cfg.seed),
                },
                "singletons" => FamilyKind::Singletons,
                "haar_levels" => FamilyKind::HaarLevels { levels: cfg.levels },
                _ => return Err(Error::Config(format!("unknown family '{name}'"))),
            };
            cfg.family = Some(ProjectionFamilySpec::new(kind, cfg.ambient_dim));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.trials == 0 || self.vectors == 0 {
            return bad("trials and vectors must be >= 1".into());
        }
        if self.ambient_dim == 0 || self.rows == 0 {
            return bad("N and m must be >= 1".into());
        }
        self.solver.validate().map_err(|e| Error::Config(e.to_string()))?;
        match self.experiment {
            ExperimentKind::RecoveryExamples | ExperimentKind::ProjectionsSweep | ExperimentKind::NoiseRobustness => {
                if self.sparsity > self.ambient_dim {
                    return bad(format!("s = {} exceeds N = {}", self.sparsity, self.ambient_dim));
                }
                if self.rank == 0 || self.rank > self.ambient_dim {
                    return bad(format!("need 1 <= r <= N (r = {}, N = {})", self.rank, self.ambient_dim));
                }
                if let Some(spec) = &self.family {
                    if spec.ambient_dim != self.ambient_dim {
                        return bad("family dimension differs from N".into());
                    }
                    spec.check().map_err(|e| Error::Config(e.to_string()))?;
                }
                if !(self.eps > 0.0 && self.eps < 1.0) {
                    return bad(format!("eps = {} must lie in (0, 1)", self.eps));
                }
                if self.count == Some(0) {
                    return bad("n must be >= 1".into());
                }
                if self.experiment == ExperimentKind::ProjectionsSweep
                    && (self.multiples.is_empty() || self.multiples.iter().any(|&x| !(x > 0.0 && x.is_finite())))
                {
                    return bad("multiples must be a non-empty list of positive values".into());
                }
                if self.noise_levels.iter().any(|&t| !(t >= 0.0 && t.is_finite())) {
                    return bad("noise levels must be finite and >= 0".into());
                }
                if self.experiment == ExperimentKind::NoiseRobustness && self.noise_levels.is_empty() {
                    return bad("noise_levels must not be empty".into());
                }
            }
            ExperimentKind::FrameboundGrowth => {
                if self.ranks.is_empty() || self.ranks.iter().any(|&r| r == 0 || r > self.ambient_dim) {
                    return bad(format!("ranks must lie in 1..={}", self.ambient_dim));
                }
                if self.oversampling.len() < 2 || self.oversampling.iter().any(|&z| !(z > 0.0 && z.is_finite())) {
                    return bad("oversampling needs at least two positive values".into());
                }
            }
            ExperimentKind::DopplerDemo => {
                if !self.ambient_dim.is_power_of_two() {
                    return bad(format!("Doppler length N = {} must be a power of two", self.ambient_dim));
                }
                crate::frames::haar::check_levels(self.ambient_dim, self.levels)
                    .map_err(|e| Error::Config(e.to_string()))?;
                if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
                    return bad(format!("sigma = {} must be finite and >= 0", self.sigma));
                }
            }
            ExperimentKind::CoverageCheck => {
                if self.trials < 1000 {
                    return bad(format!("coverage check needs trials >= 1000, got {}", self.trials));
                }
                if self.rank == 0 || self.rank > self.ambient_dim {
                    return bad(format!("need 1 <= r <= N (r = {}, N = {})", self.rank, self.ambient_dim));
                }
                if self.n_values.is_empty() {
                    return bad("n_values must not be empty".into());
                }
            }
        }
        Ok(())
    }

    /// Canonical `key = value` rendering; parses back to an equal config.
    pub fn to_config_text(&self) -> String {
        let mut lines = vec![format!("experiment = {}", self.experiment)];
        lines.push(format!("preset = {}", self.preset.map_or("custom".to_string(), |p| p.to_string())));
        lines.push(format!("N = {}", self.ambient_dim));
        lines.push(format!("m = {}", self.rows));
        lines.push(format!("s = {}", self.sparsity));
        lines.push(format!("r = {}", self.rank));
        lines.push(format!("n = {}", self.count.map_or("auto".to_string(), |n| n.to_string())));
        lines.push(format!("eps = {:?}", self.eps));
        lines.push(format!("trials = {}", self.trials));
        lines.push(format!("vectors = {}", self.vectors));
        lines.push(format!("seed = {}", self.seed));
        let mut list = |name: &str, items: Vec<String>| {
            if !items.is_empty() {
                lines.push(format!("{name} = {}", items.join(", ")));
            }
        };
        list("noise_levels", self.noise_levels.iter().map(|v| format!("{v:?}")).collect());
        list("multiples", self.multiples.iter().map(|v| format!("{v:?}")).collect());
        list("n_values", self.n_values.iter().map(|v| v.to_string()).collect());
        list("ranks", self.ranks.iter().map(|v| v.to_string()).collect());
        list("oversampling", self.oversampling.iter().map(|v| format!("{v:?}")).collect());
        lines.push(format!("sigma = {:?}", self.sigma));
        lines.push(format!("levels = {}", self.levels));
        if let Some(spec) = &self.family {
            for line in spec.to_config_lines() {
                let key = line.split('=').next().unwrap_or("").trim();
                if !matches!(key, "N" | "r" | "n" | "levels") {
                    lines.push(line);
                }
            }
        }
        lines.push(format!("policy = {}", policy_name(self.policy)));
        match self.fusion {
            FusionMode::ExactDiagonal => lines.push("fusion = exact_diagonal".into()),
            FusionMode::FrameAlgorithm(opts) => {
                lines.push("fusion = frame_algorithm".into());
                lines.push(format!("fusion_tol = {:?}", opts.tol));
                if let Some(k) = opts.k_max {
                    lines.push(format!("fusion_kmax = {k}"));
                }
            }
        }
        lines.push(format!(
            "execution = {}",
            match self.execution {
                Execution::SequentialOnline => "sequential_online",
                Execution::ParallelBatch => "parallel_batch",
            }
        ));
        lines.push(format!("max_iter = {}", self.solver.max_iter));
        lines.push(format!("tol_abs = {:?}", self.solver.tol_abs));
        lines.push(format!("tol_rel = {:?}", self.solver.tol_rel));
        lines.push(format!("penalty = {:?}", self.solver.penalty));
        lines.push(format!("out = {}", self.out_dir.display()));
        let mut text = lines.join("\n");
        text.push('\n');
        text
    }
}

pub fn policy_name(policy: SolverPolicy) -> &'static str {
    match policy {
        SolverPolicy::Auto => "auto",
        SolverPolicy::ForceLsq => "force_lsq",
        SolverPolicy::ForceBpdn => "force_bpdn",
        SolverPolicy::ForceL1Analysis => "force_l1_analysis",
    }
}

fn parse_policy(v: &str) -> Result<SolverPolicy> {
    match v {
        "auto" => Ok(SolverPolicy::Auto),
        "force_lsq" => Ok(SolverPolicy::ForceLsq),
        "force_bpdn" => Ok(SolverPolicy::ForceBpdn),
        "force_l1_analysis" => Ok(SolverPolicy::ForceL1Analysis),
        _ => Err(Error::Config(format!("unknown solver policy '{v}'"))),
    }
}

fn parse_value<T: FromStr>(v: &str, key: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{v}' for '{key}'")))
}

fn parse_list<T: FromStr>(v: &str, key: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|item| !item.is_empty())
        .map(|item| parse_value(item, key))
        .collect()
}
