//! Synthetic hand poses by forward kinematics, smooth two-hand sequences and
//! a noisy-estimator oracle.
//!
//! Randomness comes from ChaCha8 (`rand_chacha` 0.9). Every frame, sequence
//! and noise realization draws from its own stream of a generator seeded with
//! the run's 64-bit seed, so outputs are a pure function of `(params, seed,
//! index)` and may be generated in any order.

use std::f64::consts::{FRAC_PI_2, PI};
use std::ops::RangeInclusive;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::camera::{CameraError, CameraIntrinsics, ImagePoint};
use crate::canonical::{canonicalize, CanonicalError};
use crate::hand::{CanonicalPose, Finger, Handedness, HandPose3D, Pose2D, Skeleton, NUM_JOINTS};
use crate::{Rotation3, Vec3};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synthesis parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
    #[error("noisy canonical pose collapsed (wrist on root)")]
    CollapsedCanonical,
}

/// Joint-angle ranges in radians.
#[derive(Clone, Debug, PartialEq)]
pub struct AngleRanges {
    pub abduction: RangeInclusive<f64>,
    pub mcp_flexion: RangeInclusive<f64>,
    pub pip_flexion: RangeInclusive<f64>,
    pub dip_flexion: RangeInclusive<f64>,
    pub thumb_abduction: RangeInclusive<f64>,
    pub thumb_flexion: RangeInclusive<f64>,
    /// Palm arch: rotation of the outer metacarpals out of the palm plane.
    pub cupping: RangeInclusive<f64>,
    /// Global orientation as rotations about the x, y and z axes.
    pub rot_x: RangeInclusive<f64>,
    pub rot_y: RangeInclusive<f64>,
    pub rot_z: RangeInclusive<f64>,
}

impl Default for AngleRanges {
    fn default() -> Self {
        let deg = |a: f64, b: f64| a.to_radians()..=b.to_radians();
        AngleRanges {
            abduction: deg(-20.0, 20.0),
            mcp_flexion: deg(0.0, 90.0),
            pip_flexion: deg(0.0, 110.0),
            dip_flexion: deg(0.0, 80.0),
            thumb_abduction: deg(-30.0, 30.0),
            thumb_flexion: deg(0.0, 60.0),
            cupping: deg(0.0, 20.0),
            rot_x: -PI..=PI,
            rot_y: -FRAC_PI_2..=FRAC_PI_2,
            rot_z: -PI..=PI,
        }
    }
}

impl AngleRanges {
    fn all(&self) -> [&RangeInclusive<f64>; 10] {
        [
            &self.abduction,
            &self.mcp_flexion,
            &self.pip_flexion,
            &self.dip_flexion,
            &self.thumb_abduction,
            &self.thumb_flexion,
            &self.cupping,
            &self.rot_x,
            &self.rot_y,
            &self.rot_z,
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthParams {
    pub seed: u64,
    pub camera: CameraIntrinsics,
    /// Root depth range, cm.
    pub depth: RangeInclusive<f64>,
    /// Fraction of the image kept free on every side when placing the root.
    pub image_margin: f64,
    pub angles: AngleRanges,
    /// Probability that a hand is absent.
    pub drop_rate: f64,
    pub skeleton: Skeleton,
    /// Frames between consecutive keyposes in a sequence.
    pub keypose_interval: usize,
    /// Upper bound on the root displacement between consecutive frames, cm.
    pub max_root_step_cm: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            seed: 0,
            camera: CameraIntrinsics::default(),
            depth: 25.0..=100.0,
            image_margin: 0.1,
            angles: AngleRanges::default(),
            drop_rate: 0.1,
            skeleton: Skeleton::default(),
            keypose_interval: 25,
            max_root_step_cm: 2.0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidParams(m.to_string()));
        self.camera.validate()?;
        let (lo, hi) = (*self.depth.start(), *self.depth.end());
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad("depth range must be positive and ordered");
        }
        if lo <= max_reach(&self.skeleton) {
            return bad("minimum depth must exceed the hand's reach from its root");
        }
        if !(0.0..0.5).contains(&self.image_margin) {
            return bad("image margin must be in [0, 0.5)");
        }
        if !(0.0..=1.0).contains(&self.drop_rate) {
            return bad("drop rate must be in [0, 1]");
        }
        if self
            .angles
            .all()
            .iter()
            .any(|r| !(r.start().is_finite() && r.end().is_finite() && r.start() <= r.end()))
        {
            return bad("angle ranges must be finite and ordered");
        }
        if self.keypose_interval == 0 {
            return bad("keypose interval must be at least 1");
        }
        if !(self.max_root_step_cm > 0.0) {
            return bad("max root step must be positive");
        }
        Ok(())
    }
}

/// Distance from the root to the farthest point any finger can reach. The
/// MCP-to-root distance does not depend on cupping (an arch rotation about
/// the root bone's axis).
fn max_reach(skeleton: &Skeleton) -> f64 {
    let l = skeleton.reference_lengths();
    let key = skeleton.key_bone_length();
    (0..5)
        .map(|f| {
            let a = PALM_SPREAD_DEG[f].to_radians();
            let mcp_to_root = (l[f] * l[f] + key * key - 2.0 * l[f] * key * a.cos()).max(0.0).sqrt();
            mcp_to_root + l[5 + 3 * f] + l[6 + 3 * f] + l[7 + 3 * f]
        })
        .fold(key, f64::max)
}

/// Standard deviations of the noisy-estimator oracle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    /// Per-axis noise on normalized image coordinates.
    pub sigma_2d: f64,
    /// Per-coordinate noise on canonical joints.
    pub sigma_can: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.sigma_2d >= 0.0 && self.sigma_can >= 0.0) || !self.sigma_2d.is_finite() || !self.sigma_can.is_finite() {
            return Err(SynthError::InvalidParams("noise sigmas must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Generator for the noise applied to frame `index`.
    pub fn rng(&self, index: u64) -> ChaCha8Rng {
        stream_rng(self.seed, index)
    }
}

/// Independent generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// All quantities that determine one hand's pose.
#[derive(Clone, Debug, PartialEq)]
pub struct HandParams {
    /// Per finger (thumb first): abduction and the three flexion angles.
    pub fingers: [[f64; 4]; 5],
    pub cupping: f64,
    /// Rotations about x, y and z.
    pub orientation: [f64; 3],
    /// mMCP position in camera space, cm.
    pub root: Vec3,
}

/// Direction of each metacarpal in the flat palm, degrees from `+y` toward
/// `+x` (right hand).
const PALM_SPREAD_DEG: [f64; 5] = [45.0, 15.0, 0.0, -12.0, -24.6];

impl HandParams {
    fn sample(params: &SynthParams, rng: &mut ChaCha8Rng) -> HandParams {
        let a = &params.angles;
        let mut fingers = [[0.0; 4]; 5];
        for (i, f) in fingers.iter_mut().enumerate() {
            if i == 0 {
                f[0] = rng.random_range(a.thumb_abduction.clone());
                for k in 1..4 {
                    f[k] = rng.random_range(a.thumb_flexion.clone());
                }
            } else {
                f[0] = rng.random_range(a.abduction.clone());
                f[1] = rng.random_range(a.mcp_flexion.clone());
                f[2] = rng.random_range(a.pip_flexion.clone());
                f[3] = rng.random_range(a.dip_flexion.clone());
            }
        }
        let cupping = rng.random_range(a.cupping.clone());
        let orientation = [
            rng.random_range(a.rot_x.clone()),
            rng.random_range(a.rot_y.clone()),
            rng.random_range(a.rot_z.clone()),
        ];
        let m = params.image_margin;
        let p = ImagePoint::new(rng.random_range(m..=1.0 - m), rng.random_range(m..=1.0 - m));
        let depth = rng.random_range(params.depth.clone());
        let root = params.camera.image_plane_point(p) * (depth / params.camera.foc_cm);
        HandParams {
            fingers,
            cupping,
            orientation,
            root,
        }
    }

    /// `self` at `t = 0`, `other` at `t = 1`, component-wise.
    fn lerp(&self, other: &HandParams, t: f64) -> HandParams {
        let mix = |a: f64, b: f64| a + (b - a) * t;
        let mut fingers = self.fingers;
        for (f, g) in fingers.iter_mut().zip(&other.fingers) {
            for (x, y) in f.iter_mut().zip(g) {
                *x = mix(*x, *y);
            }
        }
        let mut orientation = self.orientation;
        for (x, y) in orientation.iter_mut().zip(&other.orientation) {
            *x = mix(*x, *y);
        }
        HandParams {
            fingers,
            cupping: mix(self.cupping, other.cupping),
            orientation,
            root: self.root + (other.root - self.root) * t,
        }
    }
}

/// Builds the pose: fingers along `+y` in a local palm frame, flexion toward
/// `-z`, then the global rotation about the root and translation to
/// `params.root`. Left hands mirror the local `x` axis.
pub fn forward_kinematics(skeleton: &Skeleton, params: &HandParams, side: Handedness) -> HandPose3D {
    let lengths = skeleton.reference_lengths();
    let mut local = [Vec3::zeros(); NUM_JOINTS];
    for (i, finger) in Finger::ALL.into_iter().enumerate() {
        let spread = PALM_SPREAD_DEG[i].to_radians();
        let arch = params.cupping * spread / PALM_SPREAD_DEG[0].to_radians();
        let base = Rotation3::from_axis_angle(&Vec3::y_axis(), arch)
            * Rotation3::from_axis_angle(&Vec3::z_axis(), -spread);
        let mcp = base * Vec3::new(0.0, lengths[i], 0.0);
        local[crate::hand::JointId::of(finger, 0).index()] = mcp;

        let [abduction, f1, f2, f3] = params.fingers[i];
        let mut frame = base * Rotation3::from_axis_angle(&Vec3::z_axis(), abduction);
        let mut joint = mcp;
        for (seg, flex) in [f1, f2, f3].into_iter().enumerate() {
            frame *= Rotation3::from_axis_angle(&Vec3::x_axis(), -flex);
            joint += frame * Vec3::new(0.0, lengths[5 + 3 * i + seg], 0.0);
            local[crate::hand::JointId::of(finger, seg + 1).index()] = joint;
        }
    }
    if side == Handedness::Left {
        for j in &mut local {
            j.x = -j.x;
        }
    }
    let [rx, ry, rz] = params.orientation;
    let orientation = Rotation3::from_euler_angles(rx, ry, rz);
    let root_local = local[crate::hand::JointId::MIDDLE_MCP.index()];
    HandPose3D {
        joints: local.map(|j| orientation * (j - root_local) + params.root),
        side,
    }
}

/// One hand, or `None` with probability `drop_rate`.
pub fn sample_pose(params: &SynthParams, side: Handedness, rng: &mut ChaCha8Rng) -> Option<HandPose3D> {
    if rng.random::<f64>() < params.drop_rate {
        return None;
    }
    Some(forward_kinematics(&params.skeleton, &HandParams::sample(params, rng), side))
}

/// Both hands of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FramePoses {
    pub left: Option<HandPose3D>,
    pub right: Option<HandPose3D>,
}

impl FramePoses {
    pub fn hand(&self, side: Handedness) -> Option<&HandPose3D> {
        match side {
            Handedness::Left => self.left.as_ref(),
            Handedness::Right => self.right.as_ref(),
        }
    }
}

/// Independent frame `index` of the run seeded by `params.seed`.
pub fn sample_frame(params: &SynthParams, index: u64) -> Result<FramePoses, SynthError> {
    params.validate()?;
    let mut rng = stream_rng(params.seed, index);
    let left = sample_pose(params, Handedness::Left, &mut rng);
    let right = sample_pose(params, Handedness::Right, &mut rng);
    Ok(FramePoses { left, right })
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Sequence `index` of `n_frames` frames. Each present hand moves smoothly
/// between keyposes placed every `keypose_interval` frames; a hand is absent
/// for the whole sequence with probability `drop_rate`.
pub fn sample_sequence(params: &SynthParams, n_frames: usize, index: u64) -> Result<Vec<FramePoses>, SynthError> {
    params.validate()?;
    if n_frames == 0 {
        return Err(SynthError::InvalidParams("a sequence needs at least one frame".into()));
    }
    let mut rng = stream_rng(params.seed, index);
    let k = params.keypose_interval;
    // smoothstep's slope peaks at 1.5, so a key-to-key move of this size keeps
    // every frame-to-frame step under the bound
    let max_key_move = params.max_root_step_cm * k as f64 / 1.5;
    let n_keys = (n_frames - 1).div_ceil(k) + 1;

    let mut tracks = Vec::with_capacity(2);
    for side in Handedness::BOTH {
        if rng.random::<f64>() < params.drop_rate {
            tracks.push(None);
            continue;
        }
        let mut keys: Vec<HandParams> = Vec::with_capacity(n_keys);
        for _ in 0..n_keys {
            let mut key = HandParams::sample(params, &mut rng);
            if let Some(prev) = keys.last() {
                let delta = key.root - prev.root;
                let dist = delta.norm();
                if dist > max_key_move {
                    // stays in the (convex) frustum box: on the segment between two of its points
                    key.root = prev.root + delta * (max_key_move / dist);
                }
            }
            keys.push(key);
        }
        let poses: Vec<HandPose3D> = (0..n_frames)
            .map(|f| {
                let (seg, offset) = (f / k, f % k);
                let hp = if offset == 0 {
                    keys[seg].clone()
                } else {
                    keys[seg].lerp(&keys[seg + 1], smoothstep(offset as f64 / k as f64))
                };
                forward_kinematics(&params.skeleton, &hp, side)
            })
            .collect();
        tracks.push(Some(poses));
    }
    let right = tracks.pop().expect("two tracks");
    let left = tracks.pop().expect("two tracks");
    Ok((0..n_frames)
        .map(|f| FramePoses {
            left: left.as_ref().map(|t| t[f].clone()),
            right: right.as_ref().map(|t| t[f].clone()),
        })
        .collect())
}

/// Exact 2D keypoints and canonical pose of `gt`, plus independent Gaussian
/// noise; the noisy canonical pose is re-centred on its root and rescaled to
/// a unit wrist.
pub fn perturb(
    gt: &HandPose3D,
    cam: &CameraIntrinsics,
    noise: &NoiseModel,
    rng: &mut ChaCha8Rng,
) -> Result<(Pose2D, CanonicalPose), SynthError> {
    noise.validate()?;
    let mut joints = [ImagePoint::CENTER; NUM_JOINTS];
    for (p, w) in joints.iter_mut().zip(&gt.joints) {
        *p = cam.project_point(w)?;
    }
    let mut can = canonicalize(gt, cam)?.canonical;

    if noise.sigma_2d > 0.0 {
        let normal = Normal::new(0.0, noise.sigma_2d).expect("validated sigma");
        for p in &mut joints {
            p.row += normal.sample(rng);
            p.col += normal.sample(rng);
        }
    }
    if noise.sigma_can > 0.0 {
        let normal = Normal::new(0.0, noise.sigma_can).expect("validated sigma");
        for j in &mut can.joints {
            for c in j.iter_mut() {
                *c += normal.sample(rng);
            }
        }
        can = CanonicalPose::normalized(can.joints, can.side).ok_or(SynthError::CollapsedCanonical)?;
    }
    Ok((Pose2D { joints, side: gt.side }, can))
}
