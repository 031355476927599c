//! Doppler test signal and the Haar-level fused recovery demo.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::dictionary::{
    build_local_dictionary, dict_fused_recover, DictConfig, DictMethod, LocalDictionary,
    SubspaceProjection, KERNEL_TOL,
};
use crate::error::{Error, Result};
use crate::frames::haar::{level_blocks, synthesis_matrix};
use crate::rng::{derive_seed, gaussian_vector, rng_from};
use crate::solvers::{l1_analysis, SolverOptions};
use crate::types::{MeasurementSet, SensingMatrix};

/// `sqrt(t (1 - t)) sin(2.1 pi / (t + 0.05))`.
pub fn doppler_value(t: f64) -> f64 {
    (t * (1.0 - t)).sqrt() * (2.1 * PI / (t + 0.05)).sin()
}

/// Samples at the midpoints `(k - 1/2) / N`, plus i.i.d. `N(0, noise_sigma^2)` noise.
pub fn doppler_signal(len: usize, noise_sigma: f64, seed: u64) -> Result<DVector<f64>> {
    if len == 0 || !len.is_power_of_two() {
        return Err(Error::InvalidInput(format!("Doppler length {len} is not a power of two")));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidInput(format!("noise sigma {noise_sigma} must be finite and >= 0")));
    }
    let clean = DVector::from_fn(len, |k, _| doppler_value((k as f64 + 0.5) / len as f64));
    if noise_sigma == 0.0 {
        return Ok(clean);
    }
    Ok(clean + gaussian_vector(len, &mut rng_from(seed)) * noise_sigma)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DopplerConfig {
    pub len: usize,
    pub rows: usize,
    /// Haar levels; the demo uses `levels + 1` subspaces.
    pub levels: usize,
    /// Standard deviation of both the signal noise and the measurement noise.
    pub sigma: f64,
    pub seed: u64,
    /// Local and global noise bound; defaults to `sigma (sqrt(m) + 3)`.
    pub eta: Option<f64>,
    pub solver: SolverOptions,
}

impl Default for DopplerConfig {
    fn default() -> Self {
        DopplerConfig {
            len: 1024,
            rows: 174,
            levels: 8,
            sigma: 0.05,
            seed: 0,
            eta: None,
            solver: SolverOptions::default(),
        }
    }
}

/// Haar synthesis matrix with its level subspaces and local dictionaries;
/// independent of the seed, so build once and reuse across draws.
#[derive(Debug, Clone)]
pub struct DopplerSetup {
    pub haar: DMatrix<f64>,
    pub subspaces: Vec<SubspaceProjection>,
    pub dictionaries: Vec<LocalDictionary>,
}

impl DopplerSetup {
    pub fn new(len: usize, levels: usize) -> Result<Self> {
        let haar = synthesis_matrix(len, levels)?;
        let mut subspaces = Vec::new();
        let mut dictionaries = Vec::new();
        for (i, block) in level_blocks(len, levels)?.into_iter().enumerate() {
            let cols: Vec<usize> = block.collect();
            let sub = SubspaceProjection::from_orthonormal(haar.select_columns(&cols))?;
            dictionaries.push(build_local_dictionary(&haar, i, &sub, KERNEL_TOL)?);
            subspaces.push(sub);
        }
        Ok(DopplerSetup {
            haar,
            subspaces,
            dictionaries,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DopplerOutcome {
    pub signal: DVector<f64>,
    pub fused: DVector<f64>,
    pub global: DVector<f64>,
    pub fused_error: f64,
    pub global_error: f64,
}

/// Fused Haar-level l1-analysis against one global l1-analysis, both with
/// the same Gaussian `A`. Each channel (and the global sensor) adds its own
/// measurement noise. The noise norm concentrates at `sigma sqrt(m)` with
/// spread about `sigma / sqrt(2)`, so the default bound sits well above it.
pub fn doppler_demo(setup: &DopplerSetup, cfg: &DopplerConfig) -> Result<DopplerOutcome> {
    if setup.haar.nrows() != cfg.len {
        return Err(Error::DimensionMismatch {
            expected: cfg.len,
            got: setup.haar.nrows(),
            context: "Doppler setup length",
        });
    }
    let signal = doppler_signal(cfg.len, cfg.sigma, derive_seed(cfg.seed, 0))?;
    let a = SensingMatrix::gaussian(cfg.rows, cfg.len, derive_seed(cfg.seed, 1), true)?;
    let a = a.matrix();
    let eta = cfg.eta.unwrap_or(cfg.sigma * ((cfg.rows as f64).sqrt() + 3.0));

    let noise = |stream: u64| gaussian_vector(cfg.rows, &mut rng_from(derive_seed(cfg.seed, stream))) * cfg.sigma;
    let count = setup.subspaces.len();
    let ys: Vec<DVector<f64>> = setup
        .subspaces
        .iter()
        .enumerate()
        .map(|(i, sub)| a * sub.apply(&signal) + noise(3 + i as u64))
        .collect();
    let ys = MeasurementSet::new(ys, vec![eta; count])?;
    let dict_cfg = DictConfig {
        method: DictMethod::Analysis,
        solver: cfg.solver.clone(),
        ..DictConfig::default()
    };
    let fused = dict_fused_recover(a, &setup.subspaces, &setup.dictionaries, &ys, &dict_cfg)?.fused_estimate;

    let y_global = a * &signal + noise(2);
    let global = l1_analysis(a, &setup.haar, &y_global, eta, &cfg.solver)?.signal;

    Ok(DopplerOutcome {
        fused_error: (&fused - &signal).norm(),
        global_error: (&global - &signal).norm(),
        signal,
        fused,
        global,
    })
}
