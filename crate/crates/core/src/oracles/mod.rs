//! Independent ground truth for the moment formulas: a seeded Monte Carlo
//! Wishart sampler, an exact Wick-theorem second-moment expander, and the
//! procedure that uses the latter to pin down the trace-term convention.

mod calibrate;
mod sampler;
mod wick;

pub use calibrate::{
    calibrate_trace_convention, calibration_report, CalibrationReport, CandidateOutcome,
    CALIBRATION_TOLERANCE,
};
pub use sampler::{
    mc_moment_estimate, mc_moment_estimate_chunked, sample_wishart, substream, McMoments,
    OracleEstimate, WishartSampler, DEFAULT_CHUNK_SIZE,
};
pub use wick::{wick_second_moment, wick_second_moment_with_budget, WickBudget};
