//! Canonical hand frame and the two ground-truth alignments used when
//! scoring canonical predictions in camera space.

use thiserror::Error;

use crate::camera::{CameraError, CameraIntrinsics};
use crate::hand::{CanonicalPose, HandPose3D, PoseError};
use crate::{Rotation3, Vec3};

/// Wrist-mMCP distances below this (cm) cannot be normalized.
pub const MIN_NORMALIZATION_LENGTH: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum CanonicalError {
    #[error(transparent)]
    Pose(#[from] PoseError),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error("wrist and mMCP coincide (distance {0} cm)")]
    Degenerate(f64),
    #[error("key bone length must be positive, got {0}")]
    NonPositiveLength(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CanonicalizationResult {
    pub canonical: CanonicalPose,
    /// Wrist-mMCP distance of the input pose, cm.
    pub d: f64,
    /// Centering rotation of the root's image position.
    pub rotation: Rotation3,
}

/// Rotates the pose so its root lies on the optical axis, moves the root to
/// the origin and divides by the wrist-mMCP distance.
pub fn canonicalize(
    pose: &HandPose3D,
    cam: &CameraIntrinsics,
) -> Result<CanonicalizationResult, CanonicalError> {
    pose.check_finite()?;
    let root = pose.root();
    let rotation = cam.centering_rotation(cam.project_point(&root)?);
    let d = pose.key_bone_length();
    if !(d >= MIN_NORMALIZATION_LENGTH) {
        return Err(CanonicalError::Degenerate(d));
    }
    let centered_root = rotation * root;
    let joints = pose.joints.map(|j| (rotation * j - centered_root) / d);
    Ok(CanonicalizationResult {
        canonical: CanonicalPose {
            joints,
            side: pose.side,
        },
        d,
        rotation,
    })
}

/// Places a canonical pose at a known root position: scale by `length`,
/// push out to the root's distance along `+z`, then undo the centering
/// rotation of the root's image position.
pub fn spherical_align(
    can: &CanonicalPose,
    length: f64,
    gt_root: &Vec3,
    cam: &CameraIntrinsics,
) -> Result<HandPose3D, CanonicalError> {
    if !(length > 0.0) {
        return Err(CanonicalError::NonPositiveLength(length));
    }
    let rotation = cam.centering_rotation(cam.project_point(gt_root)?);
    Ok(place(can, length, gt_root.norm(), &rotation))
}

/// `R^T (length * can + (0, 0, radius))` for every joint.
pub(crate) fn place(
    can: &CanonicalPose,
    length: f64,
    radius: f64,
    rotation: &Rotation3,
) -> HandPose3D {
    let offset = Vec3::new(0.0, 0.0, radius);
    let inverse = rotation.inverse();
    HandPose3D {
        joints: can.joints.map(|j| inverse * (j * length + offset)),
        side: can.side,
    }
}

/// Scales the canonical pose and translates its root onto `gt_root`, with no
/// rotation.
pub fn cartesian_align(can: &CanonicalPose, length: f64, gt_root: &Vec3) -> HandPose3D {
    HandPose3D {
        joints: can.joints.map(|j| j * length + gt_root),
        side: can.side,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hand::{Handedness, JointId, NUM_JOINTS};
    use approx::assert_abs_diff_eq;

    fn on_axis_pose() -> HandPose3D {
        let mut joints = [Vec3::new(0.0, 0.0, 50.0); NUM_JOINTS];
        for (i, j) in joints.iter_mut().enumerate() {
            *j += Vec3::new(0.3 * i as f64, -0.2 * i as f64, 0.1 * (i % 5) as f64);
        }
        joints[JointId::MIDDLE_MCP.index()] = Vec3::new(0.0, 0.0, 50.0);
        joints[JointId::WRIST.index()] = Vec3::new(0.0, -10.0, 50.0);
        HandPose3D::new(joints, Handedness::Left)
    }

    #[test]
    fn on_axis_canonicalization() {
        let res = canonicalize(&on_axis_pose(), &CameraIntrinsics::default()).unwrap();
        assert_eq!(res.d, 10.0);
        assert_abs_diff_eq!(res.canonical.joint(JointId::WRIST), Vec3::new(0.0, -1.0, 0.0), epsilon = 1e-15);
        assert_eq!(res.canonical.joint(JointId::MIDDLE_MCP), Vec3::zeros());
    }

    #[test]
    fn degenerate_pose() {
        let mut pose = on_axis_pose();
        pose.joints[0] = pose.joints[9];
        assert!(matches!(
            canonicalize(&pose, &CameraIntrinsics::default()),
            Err(CanonicalError::Degenerate(_))
        ));
        pose.joints[0].x = f64::NAN;
        assert!(matches!(
            canonicalize(&pose, &CameraIntrinsics::default()),
            Err(CanonicalError::Pose(_))
        ));
    }

    #[test]
    fn behind_camera_root() {
        let mut pose = on_axis_pose();
        pose.joints[9].z = -5.0;
        assert!(matches!(
            canonicalize(&pose, &CameraIntrinsics::default()),
            Err(CanonicalError::Camera(CameraError::BehindCamera(_)))
        ));
    }

    #[test]
    fn cartesian_alignment_arithmetic() {
        let mut joints = [Vec3::zeros(); NUM_JOINTS];
        joints[0] = Vec3::new(0.0, -1.0, 0.0);
        let can = CanonicalPose { joints, side: Handedness::Right };
        let out = cartesian_align(&can, 10.0, &Vec3::new(5.0, 0.0, 60.0));
        assert_eq!(out.joint(JointId::WRIST), Vec3::new(5.0, -10.0, 60.0));
        assert_eq!(out.root(), Vec3::new(5.0, 0.0, 60.0));
    }

    #[test]
    fn alignments_agree_on_axis() {
        let cam = CameraIntrinsics::default();
        let can = canonicalize(&on_axis_pose(), &cam).unwrap().canonical;
        let root = Vec3::new(0.0, 0.0, 50.0);
        let a = spherical_align(&can, 10.0, &root, &cam).unwrap();
        let b = cartesian_align(&can, 10.0, &root);
        for (x, y) in a.joints.iter().zip(b.joints.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
        assert!(spherical_align(&can, 0.0, &root, &cam).is_err());
        assert!(spherical_align(&can, 10.0, &Vec3::new(0.0, 0.0, -3.0), &cam).is_err());
    }
}
