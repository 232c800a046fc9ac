//! Deterministic multi-sensor, multi-agent fusion simulator.
//!
//! The crate is organized bottom-up:
//!
//! - [`geometry`]: poses, reference-frame trees, boxes and pinhole projection.
//! - [`visibility`]: z-buffer depth rendering and depth-based occlusion labeling.
//! - [`scenario`]: scenario documents and kinematic world propagation.
//! - [`sensing`]: parametric noisy-detection model.
//! - [`tracking`]: constant-velocity Kalman tracker with track lifecycle.
//! - [`association`]: gated Mahalanobis costs and optimal assignment.
//! - [`fusion`]: local, fusion-at-tracking and covariance-intersection fusion.
//! - [`network`]: message routing over correlated infrastructure topologies.
//! - [`evaluation`]: ground-truth matching and average precision.
//! - [`harness`]: run loop, experiment matrix, label export and persistence.

pub mod association;
pub mod error;
pub mod evaluation;
pub mod fusion;
pub mod geometry;
pub mod harness;
pub mod network;
pub mod rng;
pub mod scenario;
pub mod sensing;
pub mod tracking;
pub mod visibility;

pub use error::{Error, Result};
