//! Dataset-level evaluation: per-hand metrics, the left/right average and
//! the PCK curves behind every AUC.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::canonical::spherical_align;
use crate::dataset::{FrameRecord, HandEntry};
use crate::hand::{Handedness, Pose2D, NUM_JOINTS};
use crate::metrics::{
    auc, detection_accuracy, joint_errors_mm, mean, median, pck_curve, spherical_errors,
    spherical_pck_from_errors, HandDetection, MetricsError, PckCurve,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("frame alignment: {0}")]
    Alignment(String),
    #[error("ground truth is empty")]
    Empty,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Thresholds and AUC ranges.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub thresholds_3d_mm: Vec<f64>,
    pub auc_3d_mm: (f64, f64),
    pub thresholds_2d_px: Vec<f64>,
    pub auc_2d_px: (f64, f64),
    pub angle_thresholds_deg: Vec<f64>,
    pub radius_thresholds_cm: Vec<f64>,
}

fn steps(lo: f64, step: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + step * i as f64).collect()
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            thresholds_3d_mm: steps(0.0, 1.0, 51),
            auc_3d_mm: (20.0, 50.0),
            thresholds_2d_px: steps(0.0, 1.0, 31),
            auc_2d_px: (0.0, 30.0),
            angle_thresholds_deg: steps(0.5, 0.5, 20),
            radius_thresholds_cm: steps(1.0, 1.0, 20),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct HandReport {
    /// Frames where the hand is present in both ground truth and prediction.
    pub scored: usize,
    /// Scored frames whose prediction lacked usable data, per metric family.
    pub failed: BTreeMap<String, usize>,
    pub metrics: BTreeMap<String, f64>,
    pub curves: BTreeMap<String, PckCurve>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub frames: usize,
    pub left: HandReport,
    pub right: HandReport,
    /// Mean of the left and right numbers; a metric only one hand has is
    /// taken as is.
    pub average: BTreeMap<String, f64>,
    pub average_curves: BTreeMap<String, PckCurve>,
}

/// Per-frame result of one metric family: `None` when the prediction could
/// not be scored.
type Scores = Vec<Option<Vec<f64>>>;

#[derive(Default)]
struct Collected {
    global: Scores,
    canonical: Scores,
    image: Scores,
    root: Vec<Option<(f64, f64, f64)>>,
    detections: (Vec<HandDetection>, Vec<HandDetection>),
}

fn gt_pose_2d(entry: &HandEntry, rec: &FrameRecord, side: Handedness) -> Option<Pose2D> {
    entry.pose_2d(side).or_else(|| {
        let pose = entry.global(side)?;
        let mut joints = [crate::ImagePoint::CENTER; NUM_JOINTS];
        for (p, w) in joints.iter_mut().zip(&pose.joints) {
            *p = rec.camera.project_point(w).ok()?;
        }
        Some(Pose2D { joints, side })
    })
}

fn collect(pairs: &[(&FrameRecord, &FrameRecord)], side: Handedness) -> Collected {
    let mut c = Collected::default();
    let any = |f: fn(&HandEntry) -> bool| pairs.iter().any(|(_, p)| f(p.hand(side)));
    let has_xyz = any(|e| e.xyz_cm.is_some());
    let has_can = any(|e| e.can.is_some());
    let has_rc = any(|e| e.rc.is_some());

    for (gt_rec, pred_rec) in pairs {
        let (g, p) = (gt_rec.hand(side), pred_rec.hand(side));
        c.detections.0.push(HandDetection {
            present: p.present,
            bbox: p.bbox(),
        });
        c.detections.1.push(HandDetection {
            present: g.present,
            bbox: g.bbox(),
        });
        if !(g.present && p.present) {
            continue;
        }
        let cam = &gt_rec.camera;
        if let Some(gt) = g.global(side) {
            if has_xyz {
                let pred = p.global(side);
                c.global.push(pred.as_ref().and_then(|q| joint_errors_mm(q, &gt).ok()).map(Vec::from));
                c.root.push(pred.and_then(|q| spherical_errors(&q.root(), &gt.root()).ok()));
            }
            if has_can {
                let aligned = p
                    .canonical(side)
                    .and_then(|can| spherical_align(&can, gt.key_bone_length(), &gt.root(), cam).ok());
                c.canonical
                    .push(aligned.and_then(|q| joint_errors_mm(&q, &gt).ok()).map(Vec::from));
            }
        }
        if has_rc {
            if let Some(gt2d) = gt_pose_2d(g, gt_rec, side) {
                let errors = p.pose_2d(side).map(|q| {
                    q.joints
                        .iter()
                        .zip(&gt2d.joints)
                        .map(|(a, b)| ((a.row - b.row) * cam.h()).hypot((a.col - b.col) * cam.w()))
                        .collect::<Vec<f64>>()
                });
                c.image.push(errors.filter(|e| e.iter().all(|v| v.is_finite())));
            }
        }
    }
    c
}

/// EPE over the scored frames and PCK with failures entered as infinite
/// errors.
fn summarize_joints(
    report: &mut HandReport,
    family: &str,
    unit: &str,
    scores: &Scores,
    thresholds: &[f64],
    range: (f64, f64),
) -> Result<(), EvalError> {
    if scores.is_empty() {
        return Ok(());
    }
    let failed = scores.iter().filter(|s| s.is_none()).count();
    report.failed.insert(family.to_string(), failed);
    let ok: Vec<f64> = scores.iter().flatten().flatten().copied().collect();
    if !ok.is_empty() {
        report.metrics.insert(format!("{family}.epe_mean_{unit}"), mean(&ok));
        report.metrics.insert(format!("{family}.epe_median_{unit}"), median(&ok).expect("non-empty"));
    }
    let mut all = ok;
    all.extend(std::iter::repeat_n(f64::INFINITY, failed * NUM_JOINTS));
    let curve = pck_curve(&all, thresholds)?;
    report.metrics.insert(format!("{family}.auc"), auc(&curve, range.0, range.1)?);
    report.curves.insert(format!("{family}.pck_{unit}"), curve);
    Ok(())
}

fn full_auc(curve: &PckCurve) -> Result<f64, MetricsError> {
    let (lo, hi) = (curve.thresholds[0], *curve.thresholds.last().expect("non-empty"));
    if lo == hi {
        return Ok(curve.fractions[0]);
    }
    auc(curve, lo, hi)
}

fn hand_report(pairs: &[(&FrameRecord, &FrameRecord)], side: Handedness, cfg: &EvalConfig) -> Result<HandReport, EvalError> {
    let c = collect(pairs, side);
    let mut report = HandReport {
        scored: pairs
            .iter()
            .filter(|(g, p)| g.hand(side).present && p.hand(side).present)
            .count(),
        ..HandReport::default()
    };
    summarize_joints(&mut report, "global", "mm", &c.global, &cfg.thresholds_3d_mm, cfg.auc_3d_mm)?;
    summarize_joints(&mut report, "canonical", "mm", &c.canonical, &cfg.thresholds_3d_mm, cfg.auc_3d_mm)?;
    summarize_joints(&mut report, "2d", "px", &c.image, &cfg.thresholds_2d_px, cfg.auc_2d_px)?;

    if !c.root.is_empty() {
        let inf = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let errors: Vec<_> = c.root.iter().map(|e| e.unwrap_or(inf)).collect();
        report
            .failed
            .insert("root".into(), c.root.iter().filter(|e| e.is_none()).count());
        let sph = spherical_pck_from_errors(&errors, &cfg.angle_thresholds_deg, &cfg.radius_thresholds_cm)?;
        for (name, curve) in [("theta_deg", sph.theta), ("phi_deg", sph.phi), ("radius_cm", sph.radius)] {
            let short = name.split('_').next().expect("non-empty");
            report.metrics.insert(format!("root.auc_{short}"), full_auc(&curve)?);
            report.curves.insert(format!("root.pck_{name}"), curve);
        }
    }

    let det = detection_accuracy(&c.detections.0, &c.detections.1)?;
    report.metrics.insert("detection.hand_acc".into(), det.hand_acc);
    if let Some(b) = det.bbox_acc {
        report.metrics.insert("detection.bbox_acc".into(), b);
    }
    Ok(report)
}

/// Matches records on `(sequence, frame)` and scores both hands.
pub fn evaluate_dataset(gt: &[FrameRecord], pred: &[FrameRecord], cfg: &EvalConfig) -> Result<EvaluationReport, EvalError> {
    if gt.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut by_key: HashMap<(Option<u64>, i64), &FrameRecord> = HashMap::with_capacity(pred.len());
    for rec in pred {
        if by_key.insert(rec.key(), rec).is_some() {
            return Err(EvalError::Alignment(format!("duplicate prediction for frame {:?}", rec.key())));
        }
    }
    let mut gt_sorted: Vec<&FrameRecord> = gt.iter().collect();
    gt_sorted.sort_by_key(|r| r.key());
    if gt_sorted.windows(2).any(|w| w[0].key() == w[1].key()) {
        return Err(EvalError::Alignment("duplicate ground-truth frame".into()));
    }
    if pred.len() != gt.len() {
        return Err(EvalError::Alignment(format!(
            "{} predicted frames for {} ground-truth frames",
            pred.len(),
            gt.len()
        )));
    }
    let pairs = gt_sorted
        .iter()
        .map(|g| {
            by_key
                .get(&g.key())
                .map(|p| (*g, *p))
                .ok_or_else(|| EvalError::Alignment(format!("no prediction for frame {:?}", g.key())))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let left = hand_report(&pairs, Handedness::Left, cfg)?;
    let right = hand_report(&pairs, Handedness::Right, cfg)?;

    let mut average = BTreeMap::new();
    for key in left.metrics.keys().chain(right.metrics.keys()) {
        let value = match (left.metrics.get(key), right.metrics.get(key)) {
            (Some(a), Some(b)) => 0.5 * (a + b),
            (Some(v), None) | (None, Some(v)) => *v,
            (None, None) => unreachable!(),
        };
        average.insert(key.clone(), value);
    }
    let mut average_curves = BTreeMap::new();
    for key in left.curves.keys().chain(right.curves.keys()) {
        let curves: Vec<&PckCurve> = [left.curves.get(key), right.curves.get(key)].into_iter().flatten().collect();
        if let Some(c) = PckCurve::average(&curves) {
            average_curves.insert(key.clone(), c);
        }
    }
    Ok(EvaluationReport {
        frames: pairs.len(),
        left,
        right,
        average,
        average_curves,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{sample_frame, SynthParams};

    fn gt_records(n: u64, drop_rate: f64) -> Vec<FrameRecord> {
        let params = SynthParams {
            seed: 5,
            drop_rate,
            ..SynthParams::default()
        };
        (0..n)
            .map(|i| FrameRecord::from_poses(i as i64, params.camera, &sample_frame(&params, i).unwrap()).unwrap())
            .collect()
    }

    #[test]
    fn identity_prediction() {
        let gt = gt_records(40, 0.1);
        let report = evaluate_dataset(&gt, &gt, &EvalConfig::default()).unwrap();
        for (k, v) in &report.average {
            if k.contains("auc") || k.contains("acc") {
                assert_eq!(*v, 1.0, "{k}");
            }
            if k.contains("epe") {
                // canonical alignment goes through a rotation round trip
                assert!(*v < 1e-9, "{k}: {v}");
            }
        }
        assert!(report.average.contains_key("canonical.auc"));
        assert!(report.average.contains_key("root.auc_radius"));
        assert!(report.average.contains_key("detection.bbox_acc"));
    }

    #[test]
    fn absence_mismatch_counts() {
        let gt = gt_records(50, 0.1);
        let mut pred = gt.clone();
        for rec in &mut pred {
            rec.right = HandEntry::absent();
        }
        let report = evaluate_dataset(&gt, &pred, &EvalConfig::default()).unwrap();
        let present = gt.iter().filter(|r| r.right.present).count();
        let expected = (gt.len() - present) as f64 / gt.len() as f64;
        assert_eq!(report.right.metrics["detection.hand_acc"], expected);
        assert_eq!(report.left.metrics["detection.hand_acc"], 1.0);
        assert_eq!(report.right.scored, 0);
        assert_eq!(report.average["detection.hand_acc"], 0.5 * (1.0 + expected));
    }

    #[test]
    fn permutation_invariant() {
        let gt = gt_records(30, 0.1);
        let mut pred = gt.clone();
        for (i, rec) in pred.iter_mut().enumerate() {
            if let Some(xyz) = rec.left.xyz_cm.as_mut() {
                for row in xyz.iter_mut() {
                    row[0] += 0.1 * (i % 7) as f64;
                }
            }
        }
        let a = evaluate_dataset(&gt, &pred, &EvalConfig::default()).unwrap();
        let mut gt_rev = gt.clone();
        gt_rev.reverse();
        pred.rotate_left(11);
        let b = evaluate_dataset(&gt_rev, &pred, &EvalConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn failures_count_against_pck() {
        let gt = gt_records(20, 0.0);
        let mut pred = gt.clone();
        pred[0].left.xyz_cm = None;
        let report = evaluate_dataset(&gt, &pred, &EvalConfig::default()).unwrap();
        assert_eq!(report.left.failed["global"], 1);
        assert_eq!(report.left.metrics["global.epe_mean_mm"], 0.0);
        assert!((report.left.metrics["global.auc"] - 19.0 / 20.0).abs() < 1e-12);
    }

    #[test]
    fn alignment_errors() {
        let gt = gt_records(5, 0.1);
        let mut pred = gt.clone();
        pred[2].frame = 99;
        assert!(matches!(evaluate_dataset(&gt, &pred, &EvalConfig::default()), Err(EvalError::Alignment(_))));
        assert!(matches!(evaluate_dataset(&gt, &gt[..4], &EvalConfig::default()), Err(EvalError::Alignment(_))));
        assert!(matches!(evaluate_dataset(&[], &[], &EvalConfig::default()), Err(EvalError::Empty)));
    }
}
