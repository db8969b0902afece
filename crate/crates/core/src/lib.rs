//! Numerical core for monocular 3D object localization.
//!
//! Everything here is `no_std` (with `alloc`): pinhole camera geometry,
//! the geometric-locality graph regularizer for the 3D-center head, the
//! per-cell training losses, a small deterministic trainer used to probe the
//! regularizer, and KITTI-protocol detection/localization metrics.
//!
//! File formats, the command line and anything touching the filesystem live
//! in the companion `mono3d` crate.

#![no_std]
// `!(x > 0.0)` is the NaN-rejecting domain check used throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod annotation;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod locality;
pub mod losses;
pub mod matrix;
pub mod trainer;

mod math;

pub use annotation::{assign_difficulty, CameraCalibration, Difficulty, ObjectAnnotation};
pub use error::{Error, Result};
pub use geometry::{BevPolygon, Box2D, Box3D, CornerSet, Point3};
pub use locality::{FeatureBatch, LinearHead, SimilarityGraph};
pub use losses::LossConfig;
pub use matrix::Matrix;

/// Default similarity bandwidth for depth differences, in square metres.
pub const DEFAULT_LAMBDA: f64 = 100.0;
/// Default weight of the 2D box term.
pub const DEFAULT_ALPHA: f64 = 10.0;
/// Default weight of the locality regularizer.
pub const DEFAULT_BETA: f64 = 10.0;
/// Default weight of the coarse depth term.
pub const DEFAULT_GAMMA: f64 = 10.0;
