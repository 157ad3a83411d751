//! Deterministic desk-scale simulator and autonomy stack for a bipedal rider
//! balancing on a pair of independently actuated self-balancing wheeled
//! platforms.
//!
//! The crate is organized around the closed simulation loop:
//!
//! - [`platform`] — closed-loop dynamics of a single platform and the
//!   contact-torque mapping from rider forces to platform inputs
//! - [`rider`] — reduced-order rider: inverted-pendulum COM, foot frames,
//!   and the torque-channel-to-platform mapping
//! - [`control`] — the decoupled controller hierarchy (foot x/y regulation,
//!   speed, turning with lean, torque integration)
//! - [`world`] — co-simulation of both platforms and the rider, obstacles,
//!   disturbances, the simulated range sensor, and the odometry estimator
//! - [`planner`] — occupancy grid, inflated costmap, Dijkstra global
//!   planner, and the timed-elastic-band local planner
//! - [`scenario`] / [`harness`] — scenario configs, the lockstep runner,
//!   metrics, and gain sweeps
//!
//! Everything is simulated-time and seeded: a scenario run with the same
//! seed produces bit-identical logs.

pub mod control;
pub mod geometry;
pub mod harness;
pub mod metrics;
pub mod planner;
pub mod platform;
pub mod rider;
pub mod scenario;
pub mod world;

/// Gravitational acceleration (m/s²). Fixed: the lean set-point formula and
/// the pendulum model both hardcode it.
pub const GRAVITY: f64 = 9.81;

pub use control::{ControlCommand, ControlStack, Gains, Setpoints};
pub use geometry::{ConvexPolygon, Pose};
pub use harness::{RunResult, Runner};
pub use metrics::MetricsReport;
pub use planner::{Costmap, OccupancyGrid, PlannerLimits, TimedTrajectory};
pub use platform::{ContactForce, PlatformInput, PlatformParams, PlatformState};
pub use rider::{FootChannel, RiderParams, RiderState};
pub use scenario::Scenario;
pub use world::{
    Disturbance, EstimatedOdometry, Estimator, Obstacle, RangeScan, SimFault, World,
};
