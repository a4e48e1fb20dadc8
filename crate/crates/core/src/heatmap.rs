//! z-heatmaps and energy-map hand detection.
//!
//! A z-heatmap is a Gaussian keypoint heatmap whose peak amplitude encodes
//! the joint's canonical depth: closer joints get stronger peaks. Detection
//! works on a per-hand energy map: low peak energy means the hand is absent,
//! otherwise an Otsu threshold selects the high-activation region and its
//! bounding box (plus a margin) becomes the crop.

use std::io::{self, BufRead, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::ImagePoint;
use crate::hand::{Handedness, Pose2D, NUM_JOINTS};

pub const OTSU_BINS: usize = 256;

#[derive(Debug, Error)]
pub enum HeatmapError {
    #[error("heatmap dimensions must be positive, got {rows}x{cols}")]
    EmptyDimensions { rows: usize, cols: usize },
    #[error("expected {expected} values, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("heatmap values must be finite and non-negative")]
    InvalidValue,
    #[error("energy map has no contrast (all values equal)")]
    NoContrast,
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Row-major grid of non-negative values.
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Heatmap {
    pub fn zeros(rows: usize, cols: usize) -> Result<Self, HeatmapError> {
        Heatmap::from_values(rows, cols, vec![0.0; rows * cols])
    }

    pub fn from_values(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, HeatmapError> {
        if rows == 0 || cols == 0 {
            return Err(HeatmapError::EmptyDimensions { rows, cols });
        }
        if values.len() != rows * cols {
            return Err(HeatmapError::SizeMismatch {
                expected: rows * cols,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(HeatmapError::InvalidValue);
        }
        Ok(Heatmap { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// First (row-major) cell holding the maximum value.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        (best / self.cols, best % self.cols)
    }

    /// Binary form: `rows`, `cols` as little-endian u32, then row-major
    /// little-endian f32 values.
    pub fn write_bin<W: Write>(&self, mut w: W) -> Result<(), HeatmapError> {
        w.write_all(&(self.rows as u32).to_le_bytes())?;
        w.write_all(&(self.cols as u32).to_le_bytes())?;
        for &v in &self.values {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_bin<R: Read>(mut r: R) -> Result<Self, HeatmapError> {
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let rows = u32::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let cols = u32::from_le_bytes(word) as usize;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != rows * cols * 4 {
            return Err(HeatmapError::SizeMismatch {
                expected: rows * cols,
                got: bytes.len() / 4,
            });
        }
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Heatmap::from_values(rows, cols, values)
    }

    /// Binary (P5, 8-bit) PGM; values are clamped to `[0, 1]` and scaled to
    /// 0..=255.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> Result<(), HeatmapError> {
        write!(w, "P5\n{} {}\n255\n", self.cols, self.rows)?;
        let bytes: Vec<u8> = self
            .values
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        w.write_all(&bytes)?;
        Ok(())
    }

    /// Reads P2 (ASCII) or P5 (binary) PGM, scaling samples by `1 / maxval`.
    pub fn read_pgm<R: BufRead>(mut r: R) -> Result<Self, HeatmapError> {
        let mut data = Vec::new();
        r.read_to_end(&mut data)?;
        let mut pos = 0;
        let mut header = Vec::with_capacity(4);
        while header.len() < 4 {
            // skip whitespace and comments
            while pos < data.len() {
                if data[pos] == b'#' {
                    while pos < data.len() && data[pos] != b'\n' {
                        pos += 1;
                    }
                } else if data[pos].is_ascii_whitespace() {
                    pos += 1;
                } else {
                    break;
                }
            }
            let start = pos;
            while pos < data.len() && !data[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(HeatmapError::Format("truncated PGM header".into()));
            }
            header.push(String::from_utf8_lossy(&data[start..pos]).into_owned());
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| HeatmapError::Format(format!("bad PGM header field {s:?}")))
        };
        let (cols, rows, maxval) = (parse(&header[1])?, parse(&header[2])?, parse(&header[3])?);
        if maxval == 0 || maxval > 65535 {
            return Err(HeatmapError::Format(format!("bad PGM maxval {maxval}")));
        }
        let n = rows * cols;
        let scale = 1.0 / maxval as f64;
        let values: Vec<f64> = match header[0].as_str() {
            "P2" => {
                let text = String::from_utf8_lossy(&data[pos..]);
                let samples: Result<Vec<f64>, _> = text
                    .split_ascii_whitespace()
                    .take(n)
                    .map(|t| parse(t).map(|v| v as f64 * scale))
                    .collect();
                samples?
            }
            "P5" => {
                // exactly one whitespace byte separates header and raster
                let body = data.get(pos + 1..).unwrap_or(&[]);
                if maxval < 256 {
                    body.iter().take(n).map(|&b| b as f64 * scale).collect()
                } else {
                    body.chunks_exact(2)
                        .take(n)
                        .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 * scale)
                        .collect()
                }
            }
            other => return Err(HeatmapError::Format(format!("unsupported PGM magic {other:?}"))),
        };
        if values.len() != n {
            return Err(HeatmapError::SizeMismatch {
                expected: n,
                got: values.len(),
            });
        }
        Heatmap::from_values(rows, cols, values)
    }
}

/// Parameters of the depth-to-amplitude law `A = clamp(1 - beta * z, lo, hi)`
/// and of the Gaussian footprint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZHeatmapConfig {
    pub resolution: usize,
    /// Gaussian standard deviation in cells.
    pub sigma: f64,
    pub beta: f64,
    pub amp_min: f64,
    pub amp_max: f64,
}

impl Default for ZHeatmapConfig {
    fn default() -> Self {
        ZHeatmapConfig {
            resolution: 32,
            sigma: 1.5,
            beta: 0.25,
            amp_min: 0.5,
            amp_max: 1.5,
        }
    }
}

impl ZHeatmapConfig {
    pub fn amplitude(&self, z_can: f64) -> f64 {
        (1.0 - self.beta * z_can).clamp(self.amp_min, self.amp_max)
    }

    /// Inverse of [`amplitude`](Self::amplitude); `None` when the amplitude
    /// sits on a clamp bound (depth not recoverable).
    pub fn depth_from_amplitude(&self, amplitude: f64) -> Option<f64> {
        (amplitude > self.amp_min && amplitude < self.amp_max)
            .then(|| (1.0 - amplitude) / self.beta)
    }
}

/// One Gaussian per joint, centred at `(row * res, col * res)` in cell
/// units. Joints outside the unit square give all-zero maps.
pub fn encode_z_heatmaps(p: &Pose2D, z_can: &[f64; NUM_JOINTS], cfg: &ZHeatmapConfig) -> Vec<Heatmap> {
    assert!(cfg.resolution >= 8, "heatmap resolution must be at least 8");
    assert!(cfg.sigma > 0.0, "heatmap sigma must be positive");
    let res = cfg.resolution;
    let inv_two_var = 1.0 / (2.0 * cfg.sigma * cfg.sigma);
    p.joints
        .iter()
        .zip(z_can)
        .map(|(pt, &z)| {
            let mut values = vec![0.0; res * res];
            let inside = (0.0..=1.0).contains(&pt.row) && (0.0..=1.0).contains(&pt.col);
            if inside {
                let amp = cfg.amplitude(z);
                let (cr, cc) = (pt.row * res as f64, pt.col * res as f64);
                for i in 0..res {
                    for j in 0..res {
                        let d2 = (i as f64 - cr).powi(2) + (j as f64 - cc).powi(2);
                        values[i * res + j] = amp * (-d2 * inv_two_var).exp();
                    }
                }
            }
            Heatmap {
                rows: res,
                cols: res,
                values,
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodedJoints {
    /// Argmax cell position per joint, `None` for all-zero maps.
    pub positions: Vec<Option<ImagePoint>>,
    /// Peak amplitude per joint (0 for missing joints).
    pub amplitudes: Vec<f64>,
}

impl DecodedJoints {
    /// All joints as a [`Pose2D`], or `None` if any joint is missing.
    pub fn pose(&self, side: Handedness) -> Option<Pose2D> {
        if self.positions.len() != NUM_JOINTS {
            return None;
        }
        let mut joints = [ImagePoint::default(); NUM_JOINTS];
        for (slot, p) in joints.iter_mut().zip(&self.positions) {
            *slot = (*p)?;
        }
        Some(Pose2D { joints, side })
    }

    pub fn missing(&self) -> Vec<bool> {
        self.positions.iter().map(Option::is_none).collect()
    }
}

/// Argmax decoding. Positions are the argmax cell (cell `i` maps to
/// `i / rows`). The amplitude is the peak of the Gaussian fitted through the
/// argmax and its neighbours (a log-parabola per axis), which recovers the
/// encoded amplitude independently of the sub-cell offset.
pub fn decode_heatmaps(maps: &[Heatmap]) -> DecodedJoints {
    let mut positions = Vec::with_capacity(maps.len());
    let mut amplitudes = Vec::with_capacity(maps.len());
    for map in maps {
        let (i, j) = map.argmax();
        let peak = map.get(i, j);
        if !(peak > 0.0) {
            positions.push(None);
            amplitudes.push(0.0);
            continue;
        }
        positions.push(Some(ImagePoint::new(
            i as f64 / map.rows as f64,
            j as f64 / map.cols as f64,
        )));
        amplitudes.push(gaussian_peak(map, i, j).unwrap_or(peak));
    }
    DecodedJoints {
        positions,
        amplitudes,
    }
}

/// Vertex of the parabola through three equally spaced log-samples.
fn log_parabola_vertex(a: f64, b: f64, c: f64) -> Option<f64> {
    if !(a > 0.0 && b > 0.0 && c > 0.0) {
        return None;
    }
    let (la, lb, lc) = (a.ln(), b.ln(), c.ln());
    let curvature = la - 2.0 * lb + lc;
    if !(curvature < 0.0) {
        return None;
    }
    Some(lb - (lc - la).powi(2) / (8.0 * curvature))
}

fn gaussian_peak(map: &Heatmap, i: usize, j: usize) -> Option<f64> {
    if map.rows < 3 || map.cols < 3 {
        return None;
    }
    let mi = i.clamp(1, map.rows - 2);
    let mj = j.clamp(1, map.cols - 2);
    // max over rows along column j, and over columns along row i
    let along_rows = log_parabola_vertex(map.get(mi - 1, j), map.get(mi, j), map.get(mi + 1, j))?;
    let along_cols = log_parabola_vertex(map.get(i, mj - 1), map.get(i, mj), map.get(i, mj + 1))?;
    let amp = (along_rows + along_cols - map.get(i, j).ln()).exp();
    amp.is_finite().then_some(amp)
}

/// Otsu split of a map: cells whose normalized value falls in a bin at or
/// above `bin` form the foreground.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OtsuThreshold {
    /// First foreground bin, in `1..OTSU_BINS`.
    pub bin: usize,
    /// Bin edge in normalized units, `bin / OTSU_BINS`.
    pub normalized: f64,
    /// Bin edge in the map's own units.
    pub value: f64,
    min: f64,
    max: f64,
}

impl OtsuThreshold {
    pub fn bin_of(&self, v: f64) -> usize {
        histogram_bin(v, self.min, self.max)
    }

    pub fn is_foreground(&self, v: f64) -> bool {
        self.bin_of(v) >= self.bin
    }
}

/// Histogram bin of `v` after normalizing `[min, max]` to `[0, 1]`.
pub fn histogram_bin(v: f64, min: f64, max: f64) -> usize {
    let x = (v - min) / (max - min);
    ((x * OTSU_BINS as f64) as usize).min(OTSU_BINS - 1)
}

/// `a / b > c / d` for positive denominators; exact unless the cross
/// products overflow (maps of several million cells), then in floating point.
fn fraction_greater(a: u128, b: u128, c: u128, d: u128) -> bool {
    match (a.checked_mul(d), c.checked_mul(b)) {
        (Some(x), Some(y)) => x > y,
        _ => a as f64 / b as f64 > c as f64 / d as f64,
    }
}

/// Otsu's threshold over a 256-bin histogram of the min-max normalized map.
/// Among equally good splits the lowest bin wins.
pub fn otsu_threshold(energy: &Heatmap) -> Result<OtsuThreshold, HeatmapError> {
    let (min, max) = energy
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(max > min) {
        return Err(HeatmapError::NoContrast);
    }
    let mut counts = [0u64; OTSU_BINS];
    for &v in &energy.values {
        counts[histogram_bin(v, min, max)] += 1;
    }
    let total = energy.values.len() as i128;
    let total_sum: i128 = counts.iter().enumerate().map(|(b, &c)| b as i128 * c as i128).sum();

    // between-class variance times N^2 is (s0 N - S n0)^2 / (n0 n1), kept as
    // an integer fraction so that ties are detected exactly
    let mut best: Option<(usize, u128, u128)> = None;
    let (mut n0, mut s0) = (0i128, 0i128);
    for k in 1..OTSU_BINS {
        n0 += counts[k - 1] as i128;
        s0 += (k - 1) as i128 * counts[k - 1] as i128;
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let diff = (s0 * total - total_sum * n0).unsigned_abs();
        let num = diff * diff;
        let den = (n0 * n1) as u128;
        let better = match best {
            None => true,
            Some((_, bn, bd)) => fraction_greater(num, den, bn, bd),
        };
        if better {
            best = Some((k, num, den));
        }
    }
    let (bin, _, _) = best.ok_or(HeatmapError::NoContrast)?;
    let normalized = bin as f64 / OTSU_BINS as f64;
    Ok(OtsuThreshold {
        bin,
        normalized,
        value: min + normalized * (max - min),
        min,
        max,
    })
}

/// Inclusive pixel box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BBox {
    pub row_min: u32,
    pub row_max: u32,
    pub col_min: u32,
    pub col_max: u32,
}

impl BBox {
    pub fn new(row_min: u32, row_max: u32, col_min: u32, col_max: u32) -> Option<BBox> {
        (row_min <= row_max && col_min <= col_max).then_some(BBox {
            row_min,
            row_max,
            col_min,
            col_max,
        })
    }

    pub fn height(&self) -> u64 {
        (self.row_max - self.row_min) as u64 + 1
    }

    pub fn width(&self) -> u64 {
        (self.col_max - self.col_min) as u64 + 1
    }

    pub fn area(&self) -> u64 {
        self.height() * self.width()
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        BBox::new(
            self.row_min.max(other.row_min),
            self.row_max.min(other.row_max),
            self.col_min.max(other.col_min),
            self.col_max.min(other.col_max),
        )
    }

    pub fn contains(&self, other: &BBox) -> bool {
        self.row_min <= other.row_min
            && self.row_max >= other.row_max
            && self.col_min <= other.col_min
            && self.col_max >= other.col_max
    }

    /// Tight box around normalized points, clamped to the image; `None` if
    /// every point lies outside the image.
    pub fn around_points(points: &[ImagePoint], img_h: u32, img_w: u32) -> Option<BBox> {
        let (h, w) = (img_h as f64, img_w as f64);
        let mut rows = points.iter().map(|p| p.row * h);
        let first = rows.next()?;
        let (rmin, rmax) = rows.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v)));
        let cols = points.iter().map(|p| p.col * w);
        let (cmin, cmax) = cols.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        if rmax < 0.0 || cmax < 0.0 || rmin > h - 1.0 || cmin > w - 1.0 {
            return None;
        }
        let clamp = |v: f64, hi: u32| v.floor().clamp(0.0, (hi - 1) as f64) as u32;
        BBox::new(clamp(rmin, img_h), clamp(rmax, img_h), clamp(cmin, img_w), clamp(cmax, img_w))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    /// Peak energy below which the hand is reported absent.
    pub presence_threshold: f64,
    /// Fractional box growth on each side.
    pub margin: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            presence_threshold: 0.1,
            margin: 0.15,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionOutcome {
    pub present: bool,
    pub bbox: Option<BBox>,
    pub peak_energy: f64,
}

/// Box around the `true` cells of a `rows x cols` mask, scaled to image
/// pixels, grown by `margin` of its size on each side and clamped.
pub fn bbox_from_support(
    support: &[bool],
    rows: usize,
    cols: usize,
    img_h: u32,
    img_w: u32,
    margin: f64,
) -> Option<BBox> {
    let mut extent: Option<(usize, usize, usize, usize)> = None;
    for (idx, _) in support.iter().enumerate().filter(|(_, &s)| s) {
        let (r, c) = (idx / cols, idx % cols);
        extent = Some(match extent {
            None => (r, r, c, c),
            Some((r0, r1, c0, c1)) => (r0.min(r), r1.max(r), c0.min(c), c1.max(c)),
        });
    }
    let (r0, r1, c0, c1) = extent?;
    let sy = img_h as f64 / rows as f64;
    let sx = img_w as f64 / cols as f64;
    let mut top = (r0 as f64 * sy).floor();
    let mut bottom = ((r1 + 1) as f64 * sy).ceil() - 1.0;
    let mut left = (c0 as f64 * sx).floor();
    let mut right = ((c1 + 1) as f64 * sx).ceil() - 1.0;
    let grow_r = (margin * (bottom - top + 1.0)).round();
    let grow_c = (margin * (right - left + 1.0)).round();
    top = (top - grow_r).max(0.0);
    left = (left - grow_c).max(0.0);
    bottom = (bottom + grow_r).min(img_h as f64 - 1.0);
    right = (right + grow_c).min(img_w as f64 - 1.0);
    BBox::new(top as u32, bottom as u32, left as u32, right as u32)
}

/// Presence classification and crop box from one hand's energy map.
pub fn energy_bbox(energy: &Heatmap, img_h: u32, img_w: u32, cfg: &DetectionConfig) -> DetectionOutcome {
    let peak_energy = energy.peak();
    if !(peak_energy >= cfg.presence_threshold) || peak_energy <= 0.0 {
        return DetectionOutcome {
            present: false,
            bbox: None,
            peak_energy,
        };
    }
    let support: Vec<bool> = match otsu_threshold(energy) {
        Ok(t) => energy.values.iter().map(|&v| t.is_foreground(v)).collect(),
        // uniformly lit map: all of it is hand
        Err(_) => vec![true; energy.values.len()],
    };
    let bbox = bbox_from_support(&support, energy.rows, energy.cols, img_h, img_w, cfg.margin);
    DetectionOutcome {
        present: bbox.is_some(),
        bbox,
        peak_energy,
    }
}

/// Maps a normalized point inside a crop back to full-image normalized
/// coordinates. The crop covers pixels `[min, max + 1)` on each axis.
pub fn crop_to_image(p_crop: ImagePoint, bbox: &BBox, img_h: u32, img_w: u32) -> ImagePoint {
    ImagePoint {
        row: (bbox.row_min as f64 + p_crop.row * bbox.height() as f64) / img_h as f64,
        col: (bbox.col_min as f64 + p_crop.col * bbox.width() as f64) / img_w as f64,
    }
}

/// Inverse of [`crop_to_image`].
pub fn image_to_crop(p: ImagePoint, bbox: &BBox, img_h: u32, img_w: u32) -> ImagePoint {
    ImagePoint {
        row: (p.row * img_h as f64 - bbox.row_min as f64) / bbox.height() as f64,
        col: (p.col * img_w as f64 - bbox.col_min as f64) / bbox.width() as f64,
    }
}
