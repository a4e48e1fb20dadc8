//! Absolute 3D hand pose from a 2D pose, a canonical 3D pose and one known
//! bone length.
//!
//! The root (mMCP) direction comes straight from its image position. Its
//! distance `r` comes from a single "key bone" running from the root to a
//! secondary joint (wrist or pinky MCP). After the centering rotation puts
//! the root on the optical axis, the secondary joint's viewing ray and the
//! key bone form two similar right triangles:
//!
//! ```text
//!   z_3d = z_2d * h_3d / h_2d
//!   h_3d = |(x_s, y_s)| * L           (canonical secondary joint)
//!   r    = z_3d - z_s * L
//! ```
//!
//! where `(z_2d, h_2d)` are the axial and radial components of the rotated
//! secondary ray. The canonical pose is then scaled by `L`, pushed out to
//! `(0, 0, r)` and rotated back with the inverse centering rotation. With
//! mutually consistent inputs the result is exact up to rounding.

use thiserror::Error;

use crate::camera::{CameraError, CameraIntrinsics, SphericalPoint};
use crate::canonical::place;
use crate::hand::{CanonicalPose, HandPose3D, JointId, Pose2D};

/// Key bones shorter than this in the image (px) cannot be resolved.
pub const MIN_KEY_BONE_PX: f64 = 2.0;
/// Radial component of the rotated secondary ray below which the key bone
/// is treated as parallel to the root ray.
pub const MIN_RADIAL_COMPONENT: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum ReconError {
    #[error("both key-bone candidates are shorter than {MIN_KEY_BONE_PX} px in the image (wrist {wrist_px:.3} px, pinky MCP {pinky_px:.3} px)")]
    DegenerateKeyBone { wrist_px: f64, pinky_px: f64 },
    #[error("key bone to {0} is parallel to the root viewing ray")]
    DegenerateGeometry(JointId),
    #[error("inputs are inconsistent: reconstructed root distance {0} cm is not positive")]
    Inconsistent(f64),
    #[error("{0} is not a key-bone candidate (must be wrist or pinky MCP)")]
    InvalidSecondary(JointId),
    #[error("key bone length must be positive, got {0}")]
    NonPositiveLength(f64),
    #[error("2D and canonical poses disagree on handedness")]
    SideMismatch,
    #[error("non-finite input")]
    NonFinite,
    #[error(transparent)]
    Camera(#[from] CameraError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KeyBoneChoice {
    /// Wrist or pinky MCP.
    pub secondary: JointId,
    /// Image distance from mMCP to `secondary`, px.
    pub h2d_px: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructionResult {
    pub pose: HandPose3D,
    /// `r` from the key bone, angles from the root's image position.
    pub root_spherical: SphericalPoint,
    pub key_bone: KeyBoneChoice,
}

fn pixel_distance(p: &Pose2D, cam: &CameraIntrinsics, a: JointId, b: JointId) -> f64 {
    let (ar, ac) = cam.to_pixels(p.joint(a));
    let (br, bc) = cam.to_pixels(p.joint(b));
    (ar - br).hypot(ac - bc)
}

/// Picks whichever of wrist / pinky MCP lies farther from the mMCP in the
/// image. Ties go to the wrist.
pub fn select_key_bone(p: &Pose2D, cam: &CameraIntrinsics) -> Result<KeyBoneChoice, ReconError> {
    if !p.is_finite() {
        return Err(ReconError::NonFinite);
    }
    let wrist_px = pixel_distance(p, cam, JointId::MIDDLE_MCP, JointId::WRIST);
    let pinky_px = pixel_distance(p, cam, JointId::MIDDLE_MCP, JointId::PINKY_MCP);
    if wrist_px < MIN_KEY_BONE_PX && pinky_px < MIN_KEY_BONE_PX {
        return Err(ReconError::DegenerateKeyBone { wrist_px, pinky_px });
    }
    Ok(if pinky_px > wrist_px {
        KeyBoneChoice {
            secondary: JointId::PINKY_MCP,
            h2d_px: pinky_px,
        }
    } else {
        KeyBoneChoice {
            secondary: JointId::WRIST,
            h2d_px: wrist_px,
        }
    })
}

/// Axial and radial components `(z_2d, h_2d)` of the secondary joint's
/// image-plane point after the root's centering rotation.
pub fn rotated_secondary(p: &Pose2D, cam: &CameraIntrinsics, secondary: JointId) -> (f64, f64) {
    let rotation = cam.centering_rotation(p.joint(JointId::MIDDLE_MCP));
    let v = rotation * cam.image_plane_point(p.joint(secondary));
    (v.z, v.x.hypot(v.y))
}

/// Distance from the camera centre to the root joint, cm.
pub fn root_radius(
    can: &CanonicalPose,
    p: &Pose2D,
    cam: &CameraIntrinsics,
    length: f64,
    secondary: JointId,
) -> Result<f64, ReconError> {
    if secondary != JointId::WRIST && secondary != JointId::PINKY_MCP {
        return Err(ReconError::InvalidSecondary(secondary));
    }
    if !(length > 0.0) || !length.is_finite() {
        return Err(ReconError::NonPositiveLength(length));
    }
    let (z2d, h2d) = rotated_secondary(p, cam, secondary);
    if !(h2d >= MIN_RADIAL_COMPONENT) {
        return Err(ReconError::DegenerateGeometry(secondary));
    }
    let s = can.joint(secondary);
    let h3d = s.x.hypot(s.y) * length;
    let z3d = z2d * h3d / h2d;
    let r = z3d - s.z * length;
    if !r.is_finite() {
        return Err(ReconError::NonFinite);
    }
    if r <= 0.0 {
        return Err(ReconError::Inconsistent(r));
    }
    Ok(r)
}

/// Global pose from a canonical pose, its 2D keypoints and the key-bone
/// length `length` (cm).
///
/// The selected key bone is tried first; if it turns out parallel to the
/// root ray the other candidate is used.
pub fn reconstruct_global(
    can: &CanonicalPose,
    p: &Pose2D,
    cam: &CameraIntrinsics,
    length: f64,
) -> Result<ReconstructionResult, ReconError> {
    if can.side != p.side {
        return Err(ReconError::SideMismatch);
    }
    if !can.joints.iter().all(|j| j.iter().all(|v| v.is_finite())) {
        return Err(ReconError::NonFinite);
    }
    let first = select_key_bone(p, cam)?;
    let other = if first.secondary == JointId::WRIST {
        JointId::PINKY_MCP
    } else {
        JointId::WRIST
    };

    let (r, key_bone) = match root_radius(can, p, cam, length, first.secondary) {
        Ok(r) => (r, first),
        Err(ReconError::DegenerateGeometry(_)) => {
            let r = root_radius(can, p, cam, length, other)?;
            let h2d_px = pixel_distance(p, cam, JointId::MIDDLE_MCP, other);
            (
                r,
                KeyBoneChoice {
                    secondary: other,
                    h2d_px,
                },
            )
        }
        Err(e) => return Err(e),
    };

    let root_px = p.joint(JointId::MIDDLE_MCP);
    let rotation = cam.centering_rotation(root_px);
    let (theta, phi) = cam.spherical_angles(root_px);
    Ok(ReconstructionResult {
        pose: place(can, length, r, &rotation),
        root_spherical: SphericalPoint { r, theta, phi },
        key_bone,
    })
}

/// Like [`reconstruct_global`] but for a hand that may be absent: a missing
/// 2D or canonical estimate yields `Ok(None)` rather than an error.
pub fn reconstruct_hand(
    can: Option<&CanonicalPose>,
    p: Option<&Pose2D>,
    cam: &CameraIntrinsics,
    length: f64,
) -> Result<Option<ReconstructionResult>, ReconError> {
    match (can, p) {
        (Some(can), Some(p)) => reconstruct_global(can, p, cam, length).map(Some),
        _ => Ok(None),
    }
}
