//! Fused compressed sensing.
//!
//! A signal `x` in `R^N` is observed through coordinate projections `P_i` by one
//! sensing matrix `A`: `y_i = A P_i x + e_i`. Each channel is recovered locally
//! (least squares, basis pursuit denoising or l1-analysis) and the pieces are
//! fused with the inverse fusion-frame operator `S^{-1} = (sum_i P_i)^{-1}`.
//!
//! Indices are 0-based in the API and 1-based in files, CLI arguments and
//! error messages.

pub mod analysis;
pub mod error;
pub mod experiments;
pub mod frames;
pub mod io;
pub mod pipeline;
pub mod rng;
pub mod solvers;
pub mod stats;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    Coverage, FusionFrame, IndexSetProjection, MeasurementSet, Provenance, RecoveryReport,
    SensingMatrix, SignalVector, SolverKind, SparsityPattern,
};
