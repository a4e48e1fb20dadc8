//! Geometry, detection, evaluation and tracking for monocular two-hand
//! global 3D pose estimation.
//!
//! The pipeline this crate supports takes, per hand, a 2D keypoint estimate
//! and a root-relative ("canonical") 3D estimate and lifts them into absolute
//! camera-space joint positions using one known bone length. Everything
//! around that step lives here as well: the canonical frame itself, heatmap
//! encoding and energy-map detection, the evaluation metrics, temporal
//! smoothing of the root distance, and a synthetic pose generator used to
//! drive end-to-end checks without rendered images.
//!
//! Conventions shared by every module:
//! - camera space in centimetres, `+x` right, `+y` down, `+z` forward;
//! - 2D keypoints are normalized `(row, col)` in `[0, 1]`, `(0, 0)` top-left;
//! - 21 joints, wrist first, then thumb, index, middle, ring and pinky, each
//!   finger listed MCP, PIP, DIP, TIP (see [`JointId`]).

// `!(x > 0.0)` style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod camera;
mod numfmt;
pub mod canonical;
pub mod dataset;
pub mod evaluate;
pub mod hand;
pub mod heatmap;
pub mod metrics;
pub mod recon;
pub mod synth;
pub mod tracking;

pub use camera::{CameraIntrinsics, ImagePoint, SphericalPoint};
pub use canonical::{canonicalize, cartesian_align, spherical_align, CanonicalizationResult};
pub use hand::{
    validate_pose, CanonicalPose, Finger, Handedness, HandPose3D, JointId, Pose2D, PoseDiagnostics,
    Skeleton, NUM_BONES, NUM_JOINTS,
};
pub use heatmap::{BBox, DetectionOutcome, Heatmap};
pub use metrics::{PckCurve, SphericalPck};
pub use recon::{reconstruct_global, KeyBoneChoice, ReconstructionResult};

/// Rotation type used for the centering rotation and its inverse.
pub type Rotation3 = nalgebra::Rotation3<f64>;
/// Camera-space point or direction, in centimetres unless stated otherwise.
pub type Vec3 = nalgebra::Vector3<f64>;
