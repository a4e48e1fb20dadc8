//! JSON-lines dataset: one frame per line with camera intrinsics and, per
//! hand, presence plus optional global joints, 2D keypoints, canonical
//! joints and a bounding box.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{CameraIntrinsics, ImagePoint};
use crate::canonical::{canonicalize, CanonicalError};
use crate::hand::{CanonicalPose, Handedness, HandPose3D, Pose2D, NUM_JOINTS};
use crate::heatmap::BBox;
use crate::numfmt::round_sig;
use crate::synth::FramePoses;
use crate::Vec3;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One hand of one frame.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HandEntry {
    pub present: bool,
    /// Global joints, cm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xyz_cm: Option<Vec<[f64; 3]>>,
    /// Normalized `(row, col)` keypoints.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rc: Option<Vec<[f64; 2]>>,
    /// Canonical joints.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub can: Option<Vec<[f64; 3]>>,
    /// `[row_min, row_max, col_min, col_max]`, inclusive pixels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[u32; 4]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: i64,
    /// Sequence index for multi-sequence datasets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence: Option<u64>,
    pub camera: CameraIntrinsics,
    #[serde(default)]
    pub left: HandEntry,
    #[serde(default)]
    pub right: HandEntry,
}

fn vec3_rows(joints: &[Vec3; NUM_JOINTS]) -> Vec<[f64; 3]> {
    joints.iter().map(|j| [j.x, j.y, j.z]).collect()
}

fn rows_vec3(rows: &[[f64; 3]]) -> Option<[Vec3; NUM_JOINTS]> {
    let v: Vec<Vec3> = rows.iter().map(|r| Vec3::new(r[0], r[1], r[2])).collect();
    v.try_into().ok()
}

impl HandEntry {
    pub fn absent() -> Self {
        HandEntry::default()
    }

    pub fn present() -> Self {
        HandEntry {
            present: true,
            ..HandEntry::default()
        }
    }

    pub fn set_global(&mut self, pose: &HandPose3D) {
        self.xyz_cm = Some(vec3_rows(&pose.joints));
    }

    pub fn set_2d(&mut self, p: &Pose2D) {
        self.rc = Some(p.joints.iter().map(|q| [q.row, q.col]).collect());
    }

    pub fn set_canonical(&mut self, can: &CanonicalPose) {
        self.can = Some(vec3_rows(&can.joints));
    }

    pub fn set_bbox(&mut self, bbox: Option<BBox>) {
        self.bbox = bbox.map(|b| [b.row_min, b.row_max, b.col_min, b.col_max]);
    }

    pub fn global(&self, side: Handedness) -> Option<HandPose3D> {
        let joints = rows_vec3(self.xyz_cm.as_deref()?)?;
        Some(HandPose3D { joints, side })
    }

    pub fn pose_2d(&self, side: Handedness) -> Option<Pose2D> {
        let rows = self.rc.as_deref()?;
        let joints: Vec<ImagePoint> = rows.iter().map(|r| ImagePoint::new(r[0], r[1])).collect();
        Some(Pose2D {
            joints: joints.try_into().ok()?,
            side,
        })
    }

    /// Canonical joints as stored; no normalization is applied.
    pub fn canonical(&self, side: Handedness) -> Option<CanonicalPose> {
        let joints = rows_vec3(self.can.as_deref()?)?;
        Some(CanonicalPose { joints, side })
    }

    pub fn bbox(&self) -> Option<BBox> {
        let [r0, r1, c0, c1] = self.bbox?;
        BBox::new(r0, r1, c0, c1)
    }

    /// Ground-truth entry: global joints, their exact projection, the
    /// canonical pose and the tight box around the keypoints.
    pub fn from_ground_truth(pose: &HandPose3D, cam: &CameraIntrinsics) -> Result<Self, CanonicalError> {
        let mut entry = HandEntry::present();
        entry.set_global(pose);
        let mut joints = [ImagePoint::CENTER; NUM_JOINTS];
        for (p, w) in joints.iter_mut().zip(&pose.joints) {
            *p = cam.project_point(w)?;
        }
        entry.set_bbox(BBox::around_points(&joints, cam.height_px, cam.width_px));
        entry.set_2d(&Pose2D { joints, side: pose.side });
        entry.set_canonical(&canonicalize(pose, cam)?.canonical);
        Ok(entry)
    }

    fn check(&self) -> Result<(), String> {
        if !self.present {
            if self.xyz_cm.is_some() || self.rc.is_some() || self.can.is_some() || self.bbox.is_some() {
                return Err("absent hand carries data".into());
            }
            return Ok(());
        }
        for (name, len) in [
            ("xyz_cm", self.xyz_cm.as_ref().map(Vec::len)),
            ("rc", self.rc.as_ref().map(Vec::len)),
            ("can", self.can.as_ref().map(Vec::len)),
        ] {
            if let Some(n) = len {
                if n != NUM_JOINTS {
                    return Err(format!("{name} has {n} rows, expected {NUM_JOINTS}"));
                }
            }
        }
        if let Some([r0, r1, c0, c1]) = self.bbox {
            if r0 > r1 || c0 > c1 {
                return Err("bbox minimum exceeds maximum".into());
            }
        }
        Ok(())
    }

    fn rounded(&self) -> HandEntry {
        let r3 = |rows: &Vec<[f64; 3]>| rows.iter().map(|r| r.map(round_sig)).collect();
        HandEntry {
            present: self.present,
            xyz_cm: self.xyz_cm.as_ref().map(r3),
            rc: self.rc.as_ref().map(|rows| rows.iter().map(|r| r.map(round_sig)).collect()),
            can: self.can.as_ref().map(r3),
            bbox: self.bbox,
        }
    }
}

impl FrameRecord {
    pub fn new(frame: i64, camera: CameraIntrinsics) -> Self {
        FrameRecord {
            frame,
            sequence: None,
            camera,
            left: HandEntry::absent(),
            right: HandEntry::absent(),
        }
    }

    pub fn hand(&self, side: Handedness) -> &HandEntry {
        match side {
            Handedness::Left => &self.left,
            Handedness::Right => &self.right,
        }
    }

    pub fn hand_mut(&mut self, side: Handedness) -> &mut HandEntry {
        match side {
            Handedness::Left => &mut self.left,
            Handedness::Right => &mut self.right,
        }
    }

    pub fn from_poses(frame: i64, camera: CameraIntrinsics, poses: &FramePoses) -> Result<Self, CanonicalError> {
        let mut rec = FrameRecord::new(frame, camera);
        for side in Handedness::BOTH {
            if let Some(pose) = poses.hand(side) {
                *rec.hand_mut(side) = HandEntry::from_ground_truth(pose, &camera)?;
            }
        }
        Ok(rec)
    }

    /// `(sequence, frame)`, the key records are matched on.
    pub fn key(&self) -> (Option<u64>, i64) {
        (self.sequence, self.frame)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.camera.validate().map_err(|e| e.to_string())?;
        self.left.check().map_err(|m| format!("left: {m}"))?;
        self.right.check().map_err(|m| format!("right: {m}"))
    }
}

/// Parses one record per non-blank line.
pub fn read_records<R: BufRead>(reader: R) -> Result<Vec<FrameRecord>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: FrameRecord = serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        rec.validate().map_err(|message| DatasetError::Schema {
            line: line_no,
            message,
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Writes one record per line, reals rounded to 9 significant digits.
pub fn write_records<W: Write>(records: &[FrameRecord], mut writer: W) -> Result<(), DatasetError> {
    for rec in records {
        let rounded = FrameRecord {
            left: rec.left.rounded(),
            right: rec.right.rounded(),
            camera: CameraIntrinsics {
                foc_cm: round_sig(rec.camera.foc_cm),
                pxcm: round_sig(rec.camera.pxcm),
                ..rec.camera
            },
            ..rec.clone()
        };
        serde_json::to_writer(&mut writer, &rounded).map_err(io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<FrameRecord>, DatasetError> {
    read_records(BufReader::new(File::open(path)?))
}

pub fn write_dataset(records: &[FrameRecord], path: impl AsRef<Path>) -> Result<(), DatasetError> {
    write_records(records, BufWriter::new(File::create(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{sample_frame, SynthParams};

    fn records(n: u64) -> Vec<FrameRecord> {
        let params = SynthParams {
            seed: 21,
            ..SynthParams::default()
        };
        (0..n)
            .map(|i| FrameRecord::from_poses(i as i64, params.camera, &sample_frame(&params, i).unwrap()).unwrap())
            .collect()
    }

    fn to_bytes(recs: &[FrameRecord]) -> Vec<u8> {
        let mut buf = Vec::new();
        write_records(recs, &mut buf).unwrap();
        buf
    }

    #[test]
    fn empty_dataset() {
        assert!(to_bytes(&[]).is_empty());
        assert!(read_records(&b""[..]).unwrap().is_empty());
    }

    #[test]
    fn round_trip() {
        let recs = records(20);
        let bytes = to_bytes(&recs);
        assert_eq!(bytes, to_bytes(&recs));
        let back = read_records(&bytes[..]).unwrap();
        assert_eq!(back.len(), recs.len());
        for (a, b) in back.iter().zip(&recs) {
            assert_eq!(a.frame, b.frame);
            for side in Handedness::BOTH {
                let (ha, hb) = (a.hand(side), b.hand(side));
                assert_eq!(ha.present, hb.present);
                assert_eq!(ha.bbox, hb.bbox);
                if let (Some(x), Some(y)) = (&ha.xyz_cm, &hb.xyz_cm) {
                    for (p, q) in x.iter().flatten().zip(y.iter().flatten()) {
                        assert!((p - q).abs() <= 1e-8 * q.abs().max(1e-300));
                    }
                }
            }
        }
        // a second pass is exact: the values are already representable
        assert_eq!(to_bytes(&back), bytes);
        assert_eq!(read_records(&to_bytes(&back)[..]).unwrap(), back);
    }

    #[test]
    fn schema_errors() {
        let mut rec = records(1).remove(0);
        rec.left = HandEntry::present();
        rec.left.xyz_cm = Some(vec![[1.0, 2.0, 30.0]; 20]);
        let mut bytes = to_bytes(&records(2));
        bytes.extend(to_bytes(&[rec]));
        match read_records(&bytes[..]) {
            Err(DatasetError::Schema { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let bad = b"{\"frame\":0,\"camera\":{\"h\":270,\"w\":480,\"foc_cm\":3,\"pxcm\":120}}\nnot json\n";
        assert!(matches!(read_records(&bad[..]), Err(DatasetError::Parse { line: 2, .. })));
        let stray = br#"{"frame":0,"camera":{"h":270,"w":480,"foc_cm":3,"pxcm":120},"left":{"present":false,"rc":[]}}"#;
        assert!(matches!(read_records(&stray[..]), Err(DatasetError::Schema { line: 1, .. })));
    }

    #[test]
    fn absent_and_unknown_fields() {
        let line = br#"{"frame":4,"extra":1,"camera":{"h":270,"w":480,"foc_cm":3.0,"pxcm":120.0},"left":{"present":false},"right":{"present":false,"note":"x"}}"#;
        let recs = read_records(&line[..]).unwrap();
        assert_eq!(recs[0].frame, 4);
        assert!(!recs[0].left.present && recs[0].left.global(Handedness::Left).is_none());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let recs = records(3);
        write_dataset(&recs, &path).unwrap();
        let first = std::fs::read(&path).unwrap();
        write_dataset(&read_dataset(&path).unwrap(), &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
    }
}
