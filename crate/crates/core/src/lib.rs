//! Geo-referencing of vehicle trajectories against an aerial-imagery landmark map.
//!
//! Pole and road-marking features detected along each trajectory are associated
//! with map landmarks by a RANSAC search inside overlapping windows, and all
//! trajectories are then aligned jointly by damped least squares, regularized by
//! their initial relative poses.

pub mod alignment;
pub mod class;
pub mod geometry;
pub mod matching;
pub mod model;
pub mod pipeline;
pub mod scalar;
pub mod solver;
pub mod synthbench;

pub use class::MarkingClass;
pub use scalar::Real;

/// Planar transform in `f64`.
pub type Se2 = geometry::Se2<f64>;
/// Spatial transform in `f64`.
pub type Se3 = geometry::Se3<f64>;
pub type Twist6 = geometry::Twist6<f64>;
pub type Point2 = geometry::Point2<f64>;
pub type SegmentChain = geometry::SegmentChain<f64>;
pub type Shape = geometry::Shape<f64>;
pub type SolverOptions = solver::SolverOptions<f64>;
