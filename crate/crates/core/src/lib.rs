//! Joint uplink beamforming and binary task offloading for a three-tier
//! (terminal / edge / cloud) integrated sensing, communication and
//! computation system.
//!
//! The crate is organised bottom-up:
//!
//! * [`scenario`] draws and persists random system instances.
//! * [`metrics`] evaluates rates, echo SINR, latency and power.
//! * [`cvxcore`] holds the log-barrier interior-point solver and a dense LP
//!   solver.
//! * [`fp_beamforming`] implements the quadratic-transform / SCA beamforming
//!   loop.
//! * [`offloading`] solves the relaxed offloading LP and rounds it.
//! * [`driver`] alternates the two steps until the total latency settles.
//! * [`baselines`] contains the comparison schemes.
//! * [`harness`] runs parameter sweeps and writes CSV.

pub mod baselines;
pub mod cvxcore;
pub mod driver;
pub mod error;
pub mod fp_beamforming;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod offloading;
pub mod scenario;

pub use error::{IsccError, Result};
pub use linalg::{CMatrix, CVector, C64};
pub use metrics::{BeamformingSet, LatencyBreakdown, Mode, OffloadDecision};
pub use scenario::{Scenario, SystemConfig};
