//! Theoretical quantities: RIP and partial RIP constants, null space property
//! constants and falsifiers, measurement planning and error bounds.

mod bounds;
mod nsp;
mod rip;

pub use bounds::{
    best_term_errors, bound_constrained_recovery, bound_prop2, bound_rdnsp, bound_rdnsp_lp,
    bound_two_blocks, informal_bound, informal_constant, required_measurements,
    required_measurements_real, NoiseInput,
};
pub use nsp::{
    nsp_sample_check, nsp_sample_check_q, rip_to_nsp, NspConstants, NspReport, RIP_TO_NSP_LIMIT,
};
pub use rip::{
    count_supports, prip_check, rip_exhaustive, rip_montecarlo, support_deviation, PripReport,
    RipEstimate, RipMethod, EXHAUSTIVE_CAP,
};
