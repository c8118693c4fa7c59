//! Trajectory and transmission planning for a UAV that powers ground users
//! over the downlink and collects their data over the uplink, maximizing the
//! common (minimum) uplink throughput.
//!
//! The crate is organized bottom-up:
//!
//! - [`model`]: channel, energy and rate accounting plus schedule validation.
//! - [`dual`]: the relaxed problem solved through its Lagrange dual.
//! - [`allocation`]: convex time/power allocation for a fixed trajectory.
//! - [`planner`]: tour planning, hover-and-fly trajectories and the static
//!   baseline.
//! - [`scp`]: successive convex refinement of a discretized trajectory.

// NaN must fail validity checks, so `!(x > 0.0)` is preferred over `x <= 0.0`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocation;
pub mod barrier;
pub mod dual;
pub mod error;
pub mod linalg;
pub mod model;
mod neldermead;
pub mod planner;
pub mod scp;
pub mod simplex;

pub use error::{Error, Result};
pub use model::{
    channel_gain, evaluate_schedule, evaluate_slots, harvested_power, instantaneous_rate,
    validate_plan, Position2D, Scenario, ScenarioParams, Schedule, Slot, ThroughputReport,
    Tolerances, Trajectory, Waypoint, TOLERANCES,
};
