//! Evaluation metrics and the canonical-pose training losses.

use std::io::{self, BufRead, Write};

use serde::Serialize;
use thiserror::Error;

use crate::camera::{cart_to_spherical, CameraError, CameraIntrinsics};
use crate::hand::{CanonicalPose, HandPose3D, JointId, Pose2D, Skeleton, NUM_JOINTS};
use crate::heatmap::BBox;
use crate::numfmt::format_sig;
use crate::recon::{root_radius, select_key_bone, ReconError};
use crate::Vec3;

/// IoU above which a predicted box counts as a hit.
pub const BBOX_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no samples to evaluate")]
    Empty,
    #[error("thresholds must be strictly ascending")]
    UnsortedThresholds,
    #[error("range [{lo}, {hi}] is not inside the curve's thresholds [{min}, {max}]")]
    RangeOutsideCurve { lo: f64, hi: f64, min: f64, max: f64 },
    #[error("poses belong to different hands")]
    SideMismatch,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("ground truth has no foreground class")]
    NoForegroundClass,
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error("malformed curve file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Fraction of samples whose error is within each threshold.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PckCurve {
    pub thresholds: Vec<f64>,
    pub fractions: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SphericalPck {
    /// Vertical-angle errors, degrees.
    pub theta: PckCurve,
    /// Horizontal-angle errors, degrees.
    pub phi: PckCurve,
    /// Radius errors, cm.
    pub radius: PckCurve,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Epe {
    pub mean_mm: f64,
    pub median_mm: f64,
}

/// Per-joint Euclidean error in millimetres.
pub fn joint_errors_mm(pred: &HandPose3D, gt: &HandPose3D) -> Result<[f64; NUM_JOINTS], MetricsError> {
    if pred.side != gt.side {
        return Err(MetricsError::SideMismatch);
    }
    let mut out = [0.0; NUM_JOINTS];
    for (o, (p, g)) in out.iter_mut().zip(pred.joints.iter().zip(&gt.joints)) {
        *o = (p - g).norm() * 10.0;
    }
    Ok(out)
}

pub fn epe(pred: &HandPose3D, gt: &HandPose3D) -> Result<Epe, MetricsError> {
    let errors = joint_errors_mm(pred, gt)?;
    Ok(Epe {
        mean_mm: mean(&errors),
        median_mm: median(&errors).expect("21 joints"),
    })
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Median; even counts average the two middle values.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Some(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    })
}

fn check_ascending(thresholds: &[f64]) -> Result<(), MetricsError> {
    if thresholds.is_empty() || thresholds.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(MetricsError::UnsortedThresholds);
    }
    Ok(())
}

/// Fraction of `errors` that are `<= t` for each threshold `t`.
pub fn pck_curve(errors: &[f64], thresholds: &[f64]) -> Result<PckCurve, MetricsError> {
    if errors.is_empty() {
        return Err(MetricsError::Empty);
    }
    check_ascending(thresholds)?;
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let fractions = thresholds
        .iter()
        .map(|&t| sorted.partition_point(|&e| e <= t) as f64 / n)
        .collect();
    Ok(PckCurve {
        thresholds: thresholds.to_vec(),
        fractions,
    })
}

impl PckCurve {
    /// Linear interpolation of the curve at `t` (inside its range).
    pub fn value_at(&self, t: f64) -> f64 {
        let i = self.thresholds.partition_point(|&x| x < t);
        if i < self.thresholds.len() && self.thresholds[i] == t {
            return self.fractions[i];
        }
        let (t0, t1) = (self.thresholds[i - 1], self.thresholds[i]);
        let (f0, f1) = (self.fractions[i - 1], self.fractions[i]);
        f0 + (f1 - f0) * (t - t0) / (t1 - t0)
    }

    /// Pointwise mean of curves sharing the same thresholds.
    pub fn average(curves: &[&PckCurve]) -> Option<PckCurve> {
        let first = curves.first()?;
        if curves.iter().any(|c| c.thresholds != first.thresholds) {
            return None;
        }
        let n = curves.len() as f64;
        let fractions = (0..first.thresholds.len())
            .map(|i| curves.iter().map(|c| c.fractions[i]).sum::<f64>() / n)
            .collect();
        Some(PckCurve {
            thresholds: first.thresholds.clone(),
            fractions,
        })
    }

    /// CSV with header `threshold,fraction`, 9 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "threshold,fraction")?;
        for (t, f) in self.thresholds.iter().zip(&self.fractions) {
            writeln!(w, "{},{}", format_sig(*t), format_sig(*f))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<PckCurve, MetricsError> {
        let mut lines = r.lines();
        match lines.next() {
            Some(Ok(h)) if h.trim() == "threshold,fraction" => {}
            _ => return Err(MetricsError::Format("missing header".into())),
        }
        let (mut thresholds, mut fractions) = (Vec::new(), Vec::new());
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed = line
                .split_once(',')
                .and_then(|(t, f)| Some((t.trim().parse().ok()?, f.trim().parse().ok()?)));
            let (t, f) = parsed.ok_or_else(|| MetricsError::Format(format!("line {}: {line:?}", i + 2)))?;
            thresholds.push(t);
            fractions.push(f);
        }
        check_ascending(&thresholds)?;
        Ok(PckCurve {
            thresholds,
            fractions,
        })
    }
}

/// Normalized area under `curve` between `lo` and `hi` (trapezoid rule,
/// endpoints linearly interpolated).
pub fn auc(curve: &PckCurve, lo: f64, hi: f64) -> Result<f64, MetricsError> {
    let (min, max) = (curve.thresholds[0], *curve.thresholds.last().unwrap());
    if !(lo < hi) || lo < min || hi > max {
        return Err(MetricsError::RangeOutsideCurve { lo, hi, min, max });
    }
    let mut points = vec![(lo, curve.value_at(lo))];
    points.extend(
        curve
            .thresholds
            .iter()
            .zip(&curve.fractions)
            .filter(|(&t, _)| t > lo && t < hi)
            .map(|(&t, &f)| (t, f)),
    );
    points.push((hi, curve.value_at(hi)));
    let area: f64 = points
        .windows(2)
        .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
        .sum();
    Ok(area / (hi - lo))
}

/// Absolute `(theta, phi)` errors in degrees and radius error in cm between
/// two root positions.
pub fn spherical_errors(pred: &Vec3, gt: &Vec3) -> Result<(f64, f64, f64), MetricsError> {
    let p = cart_to_spherical(pred)?;
    let g = cart_to_spherical(gt)?;
    Ok((
        (p.theta - g.theta).abs().to_degrees(),
        (p.phi - g.phi).abs().to_degrees(),
        (p.r - g.r).abs(),
    ))
}

/// Root-joint PCK in spherical coordinates.
pub fn spherical_pck(
    pred_roots: &[Vec3],
    gt_roots: &[Vec3],
    angle_thresholds_deg: &[f64],
    radius_thresholds_cm: &[f64],
) -> Result<SphericalPck, MetricsError> {
    if pred_roots.len() != gt_roots.len() {
        return Err(MetricsError::LengthMismatch(pred_roots.len(), gt_roots.len()));
    }
    let errors: Vec<_> = pred_roots
        .iter()
        .zip(gt_roots)
        .map(|(p, g)| spherical_errors(p, g))
        .collect::<Result<_, _>>()?;
    spherical_pck_from_errors(&errors, angle_thresholds_deg, radius_thresholds_cm)
}

/// Same as [`spherical_pck`] on precomputed `(d_theta, d_phi, d_r)` errors;
/// failed predictions can be entered as infinite errors.
pub fn spherical_pck_from_errors(
    errors: &[(f64, f64, f64)],
    angle_thresholds_deg: &[f64],
    radius_thresholds_cm: &[f64],
) -> Result<SphericalPck, MetricsError> {
    let theta: Vec<f64> = errors.iter().map(|e| e.0).collect();
    let phi: Vec<f64> = errors.iter().map(|e| e.1).collect();
    let radius: Vec<f64> = errors.iter().map(|e| e.2).collect();
    Ok(SphericalPck {
        theta: pck_curve(&theta, angle_thresholds_deg)?,
        phi: pck_curve(&phi, angle_thresholds_deg)?,
        radius: pck_curve(&radius, radius_thresholds_cm)?,
    })
}

/// Mask labels: 0 background, 1 left hand, 2 right hand.
pub const MASK_CLASSES: [u8; 2] = [1, 2];

/// Mean IoU over the hand classes present in `gt`.
pub fn mask_miou(pred: &[u8], gt: &[u8]) -> Result<f64, MetricsError> {
    if pred.len() != gt.len() {
        return Err(MetricsError::LengthMismatch(pred.len(), gt.len()));
    }
    let mut ious = Vec::new();
    for class in MASK_CLASSES {
        let (mut inter, mut union, mut in_gt) = (0u64, 0u64, 0u64);
        for (&p, &g) in pred.iter().zip(gt) {
            let (a, b) = (p == class, g == class);
            inter += (a && b) as u64;
            union += (a || b) as u64;
            in_gt += b as u64;
        }
        if in_gt > 0 {
            ious.push(inter as f64 / union as f64);
        }
    }
    if ious.is_empty() {
        return Err(MetricsError::NoForegroundClass);
    }
    Ok(mean(&ious))
}

pub fn bbox_iou(a: &BBox, b: &BBox) -> f64 {
    match a.intersection(b) {
        None => 0.0,
        Some(i) => {
            let inter = i.area() as f64;
            inter / (a.area() as f64 + b.area() as f64 - inter)
        }
    }
}

/// Presence flag plus optional box for one hand in one frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HandDetection {
    pub present: bool,
    pub bbox: Option<BBox>,
}

impl From<Option<BBox>> for HandDetection {
    fn from(bbox: Option<BBox>) -> Self {
        HandDetection {
            present: bbox.is_some(),
            bbox,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectionAccuracy {
    /// Fraction of frames whose presence/absence call is right.
    pub hand_acc: f64,
    /// Fraction of frames with both boxes where IoU exceeds 0.5; `None` when
    /// no frame has both.
    pub bbox_acc: Option<f64>,
}

pub fn detection_accuracy(
    preds: &[HandDetection],
    gts: &[HandDetection],
) -> Result<DetectionAccuracy, MetricsError> {
    if preds.len() != gts.len() {
        return Err(MetricsError::LengthMismatch(preds.len(), gts.len()));
    }
    if preds.is_empty() {
        return Err(MetricsError::Empty);
    }
    let correct = preds.iter().zip(gts).filter(|(p, g)| p.present == g.present).count();
    let (mut hits, mut scored) = (0usize, 0usize);
    for (p, g) in preds.iter().zip(gts) {
        if let (true, true, Some(pb), Some(gb)) = (p.present, g.present, p.bbox, g.bbox) {
            scored += 1;
            hits += (bbox_iou(&pb, &gb) > BBOX_IOU_THRESHOLD) as usize;
        }
    }
    Ok(DetectionAccuracy {
        hand_acc: correct as f64 / preds.len() as f64,
        bbox_acc: (scored > 0).then(|| hits as f64 / scored as f64),
    })
}

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("2D pose cannot be lifted into the canonical frame: {0}")]
    ProjectionUnavailable(String),
    #[error("poses belong to different hands")]
    SideMismatch,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub l_j: f64,
    pub l_bone: f64,
    pub l_proj: f64,
    pub l_3d: f64,
}

/// Lifts the 2D joints into the canonical frame of `reference`.
///
/// Each joint's viewing ray is rotated by the root's centering rotation and
/// cut at the depth `reference` assigns to that joint, with the root distance
/// recovered at unit length from the same key bone reconstruction would use.
/// For a 2D pose that is the exact projection of `reference` the lifted
/// `(x, y)` equal the reference's canonical `(x, y)`.
pub fn lift_2d_to_canonical(
    p: &Pose2D,
    reference: &CanonicalPose,
    cam: &CameraIntrinsics,
) -> Result<[(f64, f64); NUM_JOINTS], LossError> {
    let unavailable = |e: ReconError| LossError::ProjectionUnavailable(e.to_string());
    let key = select_key_bone(p, cam).map_err(unavailable)?;
    let r_unit = root_radius(reference, p, cam, 1.0, key.secondary)
        .or_else(|e| {
            // the chosen bone may be parallel to the root ray; try the other
            let other = if key.secondary == JointId::WRIST { JointId::PINKY_MCP } else { JointId::WRIST };
            root_radius(reference, p, cam, 1.0, other).map_err(|_| e)
        })
        .map_err(unavailable)?;
    let rotation = cam.centering_rotation(p.joint(JointId::MIDDLE_MCP));
    let mut out = [(0.0, 0.0); NUM_JOINTS];
    for (j, slot) in out.iter_mut().enumerate() {
        let q = rotation * cam.image_plane_point(p.joints[j]);
        if !(q.z > 0.0) {
            return Err(LossError::ProjectionUnavailable(format!("joint {j} ray points backwards")));
        }
        let t = (r_unit + reference.joints[j].z) / q.z;
        *slot = (q.x * t, q.y * t);
    }
    Ok(out)
}

/// Joint, bone-length and 2D-consistency MSE terms and their sum.
pub fn canonical_losses(
    pred: &CanonicalPose,
    gt: &CanonicalPose,
    p: &Pose2D,
    skeleton: &Skeleton,
    cam: &CameraIntrinsics,
) -> Result<LossBreakdown, LossError> {
    if pred.side != gt.side || p.side != gt.side {
        return Err(LossError::SideMismatch);
    }
    let l_j = pred
        .joints
        .iter()
        .zip(&gt.joints)
        .map(|(a, b)| (a - b).norm_squared())
        .sum::<f64>()
        / (3 * NUM_JOINTS) as f64;

    let pred_bones = skeleton.bone_lengths_raw(&pred.joints);
    let gt_bones = skeleton.bone_lengths_raw(&gt.joints);
    let l_bone = pred_bones
        .iter()
        .zip(&gt_bones)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / pred_bones.len() as f64;

    let lifted = lift_2d_to_canonical(p, gt, cam)?;
    let l_proj = pred
        .joints
        .iter()
        .zip(&lifted)
        .map(|(a, (x, y))| (a.x - x).powi(2) + (a.y - y).powi(2))
        .sum::<f64>()
        / (2 * NUM_JOINTS) as f64;

    Ok(LossBreakdown {
        l_j,
        l_bone,
        l_proj,
        l_3d: l_j + l_bone + l_proj,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hand::Handedness;
    use proptest::prelude::*;

    fn pose_at(offsets: impl Fn(usize) -> Vec3) -> HandPose3D {
        let mut joints = [Vec3::zeros(); NUM_JOINTS];
        for (i, j) in joints.iter_mut().enumerate() {
            *j = Vec3::new(i as f64, -(i as f64) * 0.5, 40.0 + i as f64 * 0.1) + offsets(i);
        }
        HandPose3D::new(joints, Handedness::Left)
    }

    #[test]
    fn epe_cases() {
        let gt = pose_at(|_| Vec3::zeros());
        assert_eq!(epe(&gt, &gt).unwrap(), Epe { mean_mm: 0.0, median_mm: 0.0 });

        // 2.1 cm = 21 mm on one joint
        let one_off = pose_at(|i| if i == 7 { Vec3::new(0.0, 2.1, 0.0) } else { Vec3::zeros() });
        let e = epe(&one_off, &gt).unwrap();
        assert!((e.mean_mm - 1.0).abs() < 1e-12);
        assert_eq!(e.median_mm, 0.0);

        let shifted = pose_at(|_| Vec3::new(0.3, 0.0, 0.4));
        let e = epe(&shifted, &gt).unwrap();
        assert!((e.mean_mm - 5.0).abs() < 1e-12 && (e.median_mm - 5.0).abs() < 1e-12);

        let mut other = gt.clone();
        other.side = Handedness::Right;
        assert!(matches!(epe(&other, &gt), Err(MetricsError::SideMismatch)));
    }

    #[test]
    fn median_even_count() {
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn pck_cases() {
        let c = pck_curve(&[0.0; 10], &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(c.fractions, vec![1.0, 1.0, 1.0]);
        let c = pck_curve(&[1.0, 3.0], &[2.0]).unwrap();
        assert_eq!(c.fractions, vec![0.5]);
        // inclusive comparison
        let c = pck_curve(&[2.0, 3.0], &[2.0]).unwrap();
        assert_eq!(c.fractions, vec![0.5]);
        assert!(matches!(pck_curve(&[], &[1.0]), Err(MetricsError::Empty)));
        assert!(matches!(pck_curve(&[1.0], &[2.0, 1.0]), Err(MetricsError::UnsortedThresholds)));
    }

    #[test]
    fn auc_cases() {
        let flat = PckCurve {
            thresholds: vec![0.0, 20.0, 50.0],
            fractions: vec![1.0, 1.0, 1.0],
        };
        assert_eq!(auc(&flat, 20.0, 50.0).unwrap(), 1.0);
        let ramp = PckCurve {
            thresholds: vec![20.0, 50.0],
            fractions: vec![0.0, 1.0],
        };
        assert!((auc(&ramp, 20.0, 50.0).unwrap() - 0.5).abs() < 1e-12);
        // interpolated endpoints: ramp over [20, 50] restricted to [35, 50]
        assert!((auc(&ramp, 35.0, 50.0).unwrap() - 0.75).abs() < 1e-12);
        assert!(auc(&ramp, 10.0, 50.0).is_err());
        assert!(auc(&ramp, 30.0, 30.0).is_err());
    }

    #[test]
    fn spherical_step_curves() {
        let gt: Vec<Vec3> = (0..50)
            .map(|i| Vec3::new(i as f64 - 25.0, (i % 7) as f64 - 3.0, 30.0 + i as f64))
            .collect();
        let radius_thr: Vec<f64> = (1..=20).map(|t| t as f64).collect();
        let angle_thr: Vec<f64> = (1..=20).map(|t| t as f64 * 0.5).collect();

        let same = spherical_pck(&gt, &gt, &angle_thr, &radius_thr).unwrap();
        for c in [&same.theta, &same.phi, &same.radius] {
            assert!(c.fractions.iter().all(|&f| f == 1.0));
        }

        // push every root 7 cm farther along its own ray
        let farther: Vec<Vec3> = gt.iter().map(|g| g * ((g.norm() + 7.0) / g.norm())).collect();
        let s = spherical_pck(&farther, &gt, &angle_thr, &radius_thr).unwrap();
        for (t, f) in s.radius.thresholds.iter().zip(&s.radius.fractions) {
            let expected = if *t < 6.999 { 0.0 } else { 1.0 };
            // the 7 cm point sits on floating-point noise either side
            if (*t - 7.0).abs() > 1e-9 {
                assert_eq!(*f, expected, "t = {t}");
            }
        }
        assert!(s.theta.fractions.iter().all(|&f| f == 1.0));
    }

    #[test]
    fn spherical_angle_step() {
        // rotate each point by 3 degrees of phi at constant theta and r
        let gt: Vec<Vec3> = (0..20)
            .map(|i| {
                let phi = (i as f64 * 2.0 - 20.0).to_radians();
                Vec3::new(phi.tan(), 0.0, 1.0).normalize() * 50.0
            })
            .collect();
        let pred: Vec<Vec3> = gt
            .iter()
            .map(|g| {
                let phi = g.x.atan2(g.z) + 3f64.to_radians();
                Vec3::new(phi.tan(), 0.0, 1.0).normalize() * 50.0
            })
            .collect();
        let s = spherical_pck(&pred, &gt, &[2.5, 2.99, 3.01, 4.0], &[1.0]).unwrap();
        assert_eq!(s.phi.fractions, vec![0.0, 0.0, 1.0, 1.0]);
        assert_eq!(s.theta.fractions, vec![1.0; 4]);
    }

    #[test]
    fn miou_cases() {
        let gt = [0, 1, 1, 1, 1, 2, 2, 0];
        assert_eq!(mask_miou(&gt, &gt).unwrap(), 1.0);
        let disjoint = [1, 0, 0, 0, 0, 1, 1, 2];
        assert_eq!(mask_miou(&disjoint, &gt).unwrap(), 0.0);
        // class 1: covers 2 of 4 and spills onto 2 other cells: 2 / 6
        let gt1 = [1, 1, 1, 1, 0, 0, 0, 0];
        let pred1 = [0, 0, 1, 1, 1, 1, 0, 0];
        assert!((mask_miou(&pred1, &gt1).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(mask_miou(&[0, 0], &[0, 0]), Err(MetricsError::NoForegroundClass)));
        assert!(mask_miou(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn iou_cases() {
        let a = BBox::new(0, 9, 0, 9).unwrap();
        assert_eq!(bbox_iou(&a, &a), 1.0);
        let far = BBox::new(20, 29, 20, 29).unwrap();
        assert_eq!(bbox_iou(&a, &far), 0.0);
        let strip = BBox::new(5, 14, 0, 9).unwrap();
        assert!((bbox_iou(&a, &strip) - 50.0 / 150.0).abs() < 1e-15);
    }

    #[test]
    fn detection_cases() {
        let b = BBox::new(0, 9, 0, 9);
        let perfect = detection_accuracy(&[b.into(), None.into()], &[b.into(), None.into()]).unwrap();
        assert_eq!(perfect.hand_acc, 1.0);
        assert_eq!(perfect.bbox_acc, Some(1.0));

        let gt = BBox::new(0, 9, 0, 9).unwrap();
        let shift_25 = BBox::new(0, 9, 2, 11).unwrap(); // 80 / 120 = 0.667
        let shift_45 = BBox::new(0, 9, 5, 14).unwrap(); // 50 / 150 = 0.333
        let acc = detection_accuracy(
            &[Some(shift_25).into(), Some(shift_45).into()],
            &[Some(gt).into(), Some(gt).into()],
        )
        .unwrap();
        assert_eq!(acc.bbox_acc, Some(0.5));

        let both_absent = detection_accuracy(&[None.into()], &[None.into()]).unwrap();
        assert_eq!(both_absent.hand_acc, 1.0);
        assert_eq!(both_absent.bbox_acc, None);
    }

    #[test]
    fn iou_threshold_is_strict() {
        // IoU 0.6 counts, IoU 0.4 does not
        let gt = BBox::new(0, 9, 0, 9).unwrap();
        let p06 = BBox::new(0, 9, 0, 15).unwrap(); // 100 / 160 = 0.625
        let p04 = BBox::new(0, 9, 0, 24).unwrap(); // 100 / 250 = 0.4
        assert!(bbox_iou(&gt, &p06) > 0.5 && bbox_iou(&gt, &p04) < 0.5);
        let acc = detection_accuracy(&[Some(p06).into(), Some(p04).into()], &[Some(gt).into(), Some(gt).into()]).unwrap();
        assert_eq!(acc.bbox_acc, Some(0.5));
    }

    #[test]
    fn csv_round_trip() {
        let c = PckCurve {
            thresholds: vec![0.0, 2.5, 5.0],
            fractions: vec![0.1, 1.0 / 3.0, 1.0],
        };
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text, "threshold,fraction\n0,0.1\n2.5,0.333333333\n5,1\n");
        let back = PckCurve::read_csv(&buf[..]).unwrap();
        assert!((auc(&back, 0.0, 5.0).unwrap() - auc(&c, 0.0, 5.0).unwrap()).abs() < 1e-9);
        assert!(PckCurve::read_csv(&b"t,f\n1,1\n"[..]).is_err());
    }

    proptest! {
        #[test]
        fn pck_fractions_bounded_and_monotone(errors in prop::collection::vec(0.0f64..100.0, 1..200)) {
            let thresholds: Vec<f64> = (0..=50).map(|t| t as f64 * 2.0).collect();
            let c = pck_curve(&errors, &thresholds).unwrap();
            for w in c.fractions.windows(2) {
                prop_assert!(w[0] <= w[1]);
            }
            prop_assert!(c.fractions.iter().all(|f| (0.0..=1.0).contains(f)));
            // direct count
            for (t, f) in thresholds.iter().zip(&c.fractions) {
                let n = errors.iter().filter(|&&e| e <= *t).count();
                prop_assert_eq!(*f, n as f64 / errors.len() as f64);
            }
        }

        #[test]
        fn auc_resampling_invariant(fr in prop::collection::vec(0.0f64..1.0, 2..12), k in 2usize..9) {
            let mut fractions = fr;
            fractions.sort_by(f64::total_cmp);
            let thresholds: Vec<f64> = (0..fractions.len()).map(|i| 20.0 + 30.0 * i as f64 / (fractions.len() - 1) as f64).collect();
            let curve = PckCurve { thresholds, fractions };
            // every segment split into k pieces, so the original knots stay on the grid
            let n_dense = (curve.thresholds.len() - 1) * k;
            let dense_t: Vec<f64> = (0..=n_dense).map(|i| 20.0 + 30.0 * i as f64 / n_dense as f64).collect();
            let dense = PckCurve {
                fractions: dense_t.iter().map(|&t| curve.value_at(t)).collect(),
                thresholds: dense_t,
            };
            prop_assert!((auc(&curve, 20.0, 50.0).unwrap() - auc(&dense, 20.0, 50.0).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn iou_symmetric(a in (0u32..50, 0u32..30, 0u32..50, 0u32..30), b in (0u32..50, 0u32..30, 0u32..50, 0u32..30)) {
            let a = BBox::new(a.0, a.0 + a.1, a.2, a.2 + a.3).unwrap();
            let b = BBox::new(b.0, b.0 + b.1, b.2, b.2 + b.3).unwrap();
            prop_assert_eq!(bbox_iou(&a, &b), bbox_iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&bbox_iou(&a, &b)));
        }
    }
}
