//! D2D-assisted multi-antenna coded caching.
//!
//! The delivery of a coded caching round is split in two orthogonal phases:
//! nearby users first exchange cached fragments over device-to-device (D2D)
//! links, then the base station multicasts the remaining XOR-coded messages
//! with beamformers designed for the max-min common rate.
//!
//! Module map:
//!
//! - [`combinatorics`]: cache placement, subfile identifiers and coded message
//!   construction for both phases.
//! - [`channel`]: scenario parameters, geometry and fading, point rate formulas.
//! - [`d2d`]: D2D schedules, their delivery time and the downlink message plan
//!   that remains after them.
//! - [`beamforming`]: MAC rate-region constraints and the SCA max-min solver.
//! - [`mode_select`]: exhaustive and heuristic selection of D2D groups.
//! - [`complexity`]: closed-form bounds on the downlink design complexity.
//! - [`simrunner`]: Monte Carlo driver, baselines, CSV output and self test.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beamforming;
pub mod channel;
pub mod combinatorics;
pub mod complexity;
pub mod d2d;
pub mod mode_select;
pub mod par;
pub mod simrunner;

pub use beamforming::{BeamformerSolution, MessagePlan, SolverOptions};
pub use channel::{ChannelRealization, Geometry, ScenarioConfig};
pub use combinatorics::{CodedMessage, FragmentLedger, Placement, SubfileId, UserSet};
pub use d2d::D2DSchedule;
pub use par::Execution;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("internal scheduling error: {0}")]
    Scheduling(String),
    #[error("zero rate on link: {0}")]
    ZeroRate(String),
    #[error("zero channel: {0}")]
    ZeroChannel(String),
    #[error("search space too large: {0}")]
    TooLarge(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
