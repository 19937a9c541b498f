//! Perception-guided self-supervision for trajectory planning.
//!
//! The crate turns perception outputs (lane centerlines, predicted agent
//! motion) into supervision signals for an ego trajectory:
//!
//! * [`lanes`]: relevant-lane filter, target-lane label, lane-selection loss.
//! * [`stps`]: centerline-snapped spatial target and its L1 loss.
//! * [`ntps`]: future box sequences, SAT overlap events, hinge repulsion.
//! * [`losses`]: weighted combination, a direct trajectory optimizer and a
//!   finite-difference gradient check.
//! * [`simulate`]: a small closed-loop harness (kinematic ego, PID tracking,
//!   scripted agents) to watch the signals steer a planner.
//! * [`io`]: scenario/trace/metrics files, synthetic scenarios, SVG plots.
//!
//! The geometric and loss code is generic over [`Scalar`] (`f32` or `f64`);
//! the aliases below fix it to `f64`, which the simulator and file formats
//! use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod io;
pub mod lanes;
pub mod losses;
pub mod ntps;
pub mod scalar;
pub mod simulate;
pub mod stps;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Point2 = geometry::Point2<f64>;
pub type Pose2 = geometry::Pose2<f64>;
pub type Polyline = geometry::Polyline<f64>;
pub type Trajectory = geometry::Trajectory<f64>;
pub type OrientedBox = geometry::OrientedBox<f64>;
pub type Lane = lanes::Lane<f64>;
pub type LaneCandidate = lanes::LaneCandidate<f64>;
pub type RelevantLaneSet = lanes::RelevantLaneSet<f64>;
pub type TargetLaneLabel = lanes::TargetLaneLabel<f64>;
pub type ClassWeights = lanes::ClassWeights<f64>;
pub type SpatialTarget = stps::SpatialTarget<f64>;
pub type AgentTrack = ntps::AgentTrack<f64>;
pub type PredictionMode = ntps::PredictionMode<f64>;
pub type FutureBoxSequence = ntps::FutureBoxSequence<f64>;
pub type CollisionEvent = ntps::CollisionEvent<f64>;
pub type CollisionSet = ntps::CollisionSet<f64>;
pub type LossWeights = losses::LossWeights<f64>;
pub type LossBreakdown = losses::LossBreakdown<f64>;
pub type OptimizerConfig = losses::OptimizerConfig<f64>;
pub type OptimizeResult = losses::OptimizeResult<f64>;
pub type FiniteDiffReport = losses::FiniteDiffReport<f64>;

/// Single-precision variants of the core geometric types.
pub mod f32 {
    pub type Point2 = crate::geometry::Point2<f32>;
    pub type Polyline = crate::geometry::Polyline<f32>;
    pub type Trajectory = crate::geometry::Trajectory<f32>;
    pub type OrientedBox = crate::geometry::OrientedBox<f32>;
}
