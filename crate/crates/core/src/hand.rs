//! Joint indexing, skeleton topology and the pose containers.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

use crate::camera::ImagePoint;
use crate::Vec3;

pub const NUM_JOINTS: usize = 21;
pub const NUM_BONES: usize = 20;

/// Minimum area of the wrist / mMCP / pinky-MCP triangle, in cm².
pub const MIN_KEY_TRIANGLE_AREA: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum PoseError {
    #[error("pose has a non-finite coordinate at joint {joint}")]
    NonFinite { joint: usize },
    #[error("expected {NUM_JOINTS} joints, got {0}")]
    WrongJointCount(usize),
}

/// Index of one of the 21 hand joints.
///
/// Layout: wrist = 0, then thumb, index, middle, ring, pinky, each finger
/// contributing MCP, PIP, DIP, TIP consecutively.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct JointId(u8);

impl JointId {
    pub const WRIST: JointId = JointId(0);
    pub const THUMB_MCP: JointId = JointId(1);
    pub const INDEX_MCP: JointId = JointId(5);
    /// Middle-finger MCP: root of the canonical frame.
    pub const MIDDLE_MCP: JointId = JointId(9);
    pub const RING_MCP: JointId = JointId(13);
    pub const PINKY_MCP: JointId = JointId(17);

    pub fn new(index: usize) -> Option<JointId> {
        (index < NUM_JOINTS).then_some(JointId(index as u8))
    }

    /// Joint `segment` (0 = MCP .. 3 = TIP) of `finger`.
    pub fn of(finger: Finger, segment: usize) -> JointId {
        assert!(segment < 4, "finger segment out of range: {segment}");
        JointId((1 + 4 * finger as usize + segment) as u8)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn finger(self) -> Option<Finger> {
        if self.0 == 0 {
            None
        } else {
            Some(Finger::ALL[(self.0 as usize - 1) / 4])
        }
    }
}

impl fmt::Display for JointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SEG: [&str; 4] = ["mcp", "pip", "dip", "tip"];
        match self.finger() {
            None => write!(f, "wrist"),
            Some(finger) => write!(f, "{finger:?}-{}", SEG[(self.0 as usize - 1) % 4]),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Finger {
    Thumb = 0,
    Index = 1,
    Middle = 2,
    Ring = 3,
    Pinky = 4,
}

impl Finger {
    pub const ALL: [Finger; 5] = [
        Finger::Thumb,
        Finger::Index,
        Finger::Middle,
        Finger::Ring,
        Finger::Pinky,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Handedness {
    Left,
    Right,
}

impl Handedness {
    pub const BOTH: [Handedness; 2] = [Handedness::Left, Handedness::Right];

    pub fn name(self) -> &'static str {
        match self {
            Handedness::Left => "left",
            Handedness::Right => "right",
        }
    }
}

/// Global hand pose: 21 camera-space joints in centimetres.
#[derive(Clone, Debug, PartialEq)]
pub struct HandPose3D {
    pub joints: [Vec3; NUM_JOINTS],
    pub side: Handedness,
}

impl HandPose3D {
    pub fn new(joints: [Vec3; NUM_JOINTS], side: Handedness) -> Self {
        HandPose3D { joints, side }
    }

    pub fn from_slice(joints: &[Vec3], side: Handedness) -> Result<Self, PoseError> {
        let joints: [Vec3; NUM_JOINTS] = joints
            .try_into()
            .map_err(|_| PoseError::WrongJointCount(joints.len()))?;
        Ok(HandPose3D { joints, side })
    }

    pub fn joint(&self, id: JointId) -> Vec3 {
        self.joints[id.index()]
    }

    pub fn root(&self) -> Vec3 {
        self.joint(JointId::MIDDLE_MCP)
    }

    /// Wrist to mMCP distance (the normalization bone).
    pub fn key_bone_length(&self) -> f64 {
        (self.joint(JointId::WRIST) - self.root()).norm()
    }

    pub fn map(&self, f: impl Fn(&Vec3) -> Vec3) -> HandPose3D {
        HandPose3D {
            joints: self.joints.map(|j| f(&j)),
            side: self.side,
        }
    }

    pub fn check_finite(&self) -> Result<(), PoseError> {
        match self.joints.iter().position(|j| !j.iter().all(|v| v.is_finite())) {
            Some(joint) => Err(PoseError::NonFinite { joint }),
            None => Ok(()),
        }
    }
}

/// Dimensionless root-relative pose: mMCP at the origin, wrist at distance 1,
/// `+z` pointing away from the camera.
#[derive(Clone, Debug, PartialEq)]
pub struct CanonicalPose {
    pub joints: [Vec3; NUM_JOINTS],
    pub side: Handedness,
}

impl CanonicalPose {
    /// Re-centers on the mMCP and rescales so the wrist has unit norm.
    /// Returns `None` when the wrist coincides with the root.
    pub fn normalized(joints: [Vec3; NUM_JOINTS], side: Handedness) -> Option<Self> {
        let root = joints[JointId::MIDDLE_MCP.index()];
        let scale = (joints[JointId::WRIST.index()] - root).norm();
        if !(scale > 1e-12) || !scale.is_finite() {
            return None;
        }
        Some(CanonicalPose {
            joints: joints.map(|j| (j - root) / scale),
            side,
        })
    }

    pub fn joint(&self, id: JointId) -> Vec3 {
        self.joints[id.index()]
    }

    pub fn scaled(&self, factor: f64) -> CanonicalPose {
        CanonicalPose {
            joints: self.joints.map(|j| j * factor),
            side: self.side,
        }
    }
}

/// Normalized 2D keypoints.
#[derive(Clone, Debug, PartialEq)]
pub struct Pose2D {
    pub joints: [ImagePoint; NUM_JOINTS],
    pub side: Handedness,
}

impl Pose2D {
    pub fn joint(&self, id: JointId) -> ImagePoint {
        self.joints[id.index()]
    }

    pub fn is_finite(&self) -> bool {
        self.joints
            .iter()
            .all(|p| p.row.is_finite() && p.col.is_finite())
    }
}

/// Bone topology plus reference lengths.
#[derive(Clone, Debug, PartialEq)]
pub struct Skeleton {
    bones: [(JointId, JointId); NUM_BONES],
    reference_lengths: [f64; NUM_BONES],
    key_bone_length: f64,
}

/// Reference lengths in cm for a hand whose wrist-mMCP bone is 10 cm,
/// listed in [`Skeleton::bones`] order.
const REFERENCE_LENGTHS_10CM: [f64; NUM_BONES] = [
    // wrist -> thumb, index, middle, ring, pinky MCP
    4.1, 9.8, 10.0, 9.5, 9.1,
    // thumb
    3.9, 3.1, 2.7,
    // index
    4.5, 2.6, 2.2,
    // middle
    5.0, 3.0, 2.3,
    // ring
    4.6, 2.9, 2.3,
    // pinky
    3.6, 2.2, 2.1,
];

#[derive(Debug, Error, PartialEq)]
pub enum SkeletonError {
    #[error("key bone length must be positive and finite, got {0}")]
    InvalidKeyBoneLength(f64),
}

impl Skeleton {
    /// Default hand with the wrist-mMCP bone scaled to `key_bone_length` cm.
    pub fn with_key_bone_length(key_bone_length: f64) -> Result<Self, SkeletonError> {
        if !(key_bone_length > 0.0) || !key_bone_length.is_finite() {
            return Err(SkeletonError::InvalidKeyBoneLength(key_bone_length));
        }
        let scale = key_bone_length / 10.0;
        let mut bones = [(JointId::WRIST, JointId::WRIST); NUM_BONES];
        for (i, finger) in Finger::ALL.into_iter().enumerate() {
            bones[i] = (JointId::WRIST, JointId::of(finger, 0));
            for seg in 0..3 {
                bones[5 + 3 * i + seg] = (JointId::of(finger, seg), JointId::of(finger, seg + 1));
            }
        }
        let mut reference_lengths = REFERENCE_LENGTHS_10CM.map(|l| l * scale);
        // keep the key bone exact rather than 10 * (L / 10)
        reference_lengths[2] = key_bone_length;
        Ok(Skeleton {
            bones,
            reference_lengths,
            key_bone_length,
        })
    }

    /// The 20 parent -> child edges: wrist to each MCP, then along each finger.
    pub fn bones(&self) -> &[(JointId, JointId); NUM_BONES] {
        &self.bones
    }

    pub fn reference_lengths(&self) -> &[f64; NUM_BONES] {
        &self.reference_lengths
    }

    pub fn key_bone_length(&self) -> f64 {
        self.key_bone_length
    }

    /// Reference length of the bone ending at `child`.
    pub fn length_to(&self, child: JointId) -> Option<f64> {
        self.bones
            .iter()
            .position(|&(_, c)| c == child)
            .map(|i| self.reference_lengths[i])
    }

    pub fn bone_lengths_of(&self, pose: &HandPose3D) -> Result<[f64; NUM_BONES], PoseError> {
        pose.check_finite()?;
        Ok(self.bone_lengths_raw(&pose.joints))
    }

    /// Bone lengths of an arbitrary joint array; no validation.
    pub fn bone_lengths_raw(&self, joints: &[Vec3; NUM_JOINTS]) -> [f64; NUM_BONES] {
        self.bones
            .map(|(p, c)| (joints[c.index()] - joints[p.index()]).norm())
    }
}

impl Default for Skeleton {
    fn default() -> Self {
        Skeleton::with_key_bone_length(10.0).expect("10 cm is a valid key bone length")
    }
}

/// Result of [`validate_pose`]. A pose is usable when every flag is set.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseDiagnostics {
    pub finite: bool,
    pub positive_depth: bool,
    /// Area (cm²) of the wrist / mMCP / pinky-MCP triangle.
    pub key_triangle_area: f64,
    pub non_degenerate: bool,
}

impl PoseDiagnostics {
    pub fn is_valid(&self) -> bool {
        self.finite && self.positive_depth && self.non_degenerate
    }
}

pub fn validate_pose(pose: &HandPose3D) -> PoseDiagnostics {
    let finite = pose.check_finite().is_ok();
    let positive_depth = pose.joints.iter().all(|j| j.z > 0.0);
    let wrist = pose.joint(JointId::WRIST);
    let a = pose.root() - wrist;
    let b = pose.joint(JointId::PINKY_MCP) - wrist;
    let key_triangle_area = 0.5 * a.cross(&b).norm();
    PoseDiagnostics {
        finite,
        positive_depth,
        key_triangle_area,
        non_degenerate: key_triangle_area > MIN_KEY_TRIANGLE_AREA,
    }
}
