//! Pinhole camera model.
//!
//! The image plane sits at `z = foc_cm` in front of the optical centre.
//! A normalized image point `(row, col)` maps to a metric offset on that
//! plane via the image size and the pixel-per-cm factor; the reported
//! spherical angles are the two-argument arctangents of those offsets
//! against the focal length.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{Rotation3, Vec3};

#[derive(Debug, Error, PartialEq)]
pub enum CameraError {
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("spherical radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(&'static str),
}

/// Normalized image coordinate: `(0, 0)` top-left, `(1, 1)` bottom-right.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct ImagePoint {
    pub row: f64,
    pub col: f64,
}

impl ImagePoint {
    pub const CENTER: ImagePoint = ImagePoint { row: 0.5, col: 0.5 };

    pub fn new(row: f64, col: f64) -> Self {
        ImagePoint { row, col }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    /// Image height in pixels.
    #[serde(rename = "h")]
    pub height_px: u32,
    /// Image width in pixels.
    #[serde(rename = "w")]
    pub width_px: u32,
    /// Focal length in cm.
    pub foc_cm: f64,
    /// Pixels per cm on the image plane.
    pub pxcm: f64,
}

impl Default for CameraIntrinsics {
    /// 270x480 image, 3 cm focal length, 120 px/cm (about 67 degrees of
    /// horizontal field of view).
    fn default() -> Self {
        CameraIntrinsics {
            height_px: 270,
            width_px: 480,
            foc_cm: 3.0,
            pxcm: 120.0,
        }
    }
}

/// Root position in spherical form. `theta` is the vertical angle and `phi`
/// the horizontal one, each measured against the optical axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphericalPoint {
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<(), CameraError> {
        if self.height_px == 0 || self.width_px == 0 {
            return Err(CameraError::InvalidIntrinsics("image size must be positive"));
        }
        if !(self.foc_cm > 0.0 && self.foc_cm.is_finite()) {
            return Err(CameraError::InvalidIntrinsics("foc_cm must be positive"));
        }
        if !(self.pxcm > 0.0 && self.pxcm.is_finite()) {
            return Err(CameraError::InvalidIntrinsics("pxcm must be positive"));
        }
        Ok(())
    }

    pub fn h(&self) -> f64 {
        self.height_px as f64
    }

    pub fn w(&self) -> f64 {
        self.width_px as f64
    }

    /// Metric offset `(u_cm, v_cm)` of `p` from the image centre on the
    /// image plane; `u` horizontal, `v` vertical (positive downward).
    pub fn pixel_offset_cm(&self, p: ImagePoint) -> (f64, f64) {
        let u = (p.col * self.w() - self.w() / 2.0) / self.pxcm;
        let v = (p.row * self.h() - self.h() / 2.0) / self.pxcm;
        (u, v)
    }

    /// `(theta, phi)` of the viewing ray through `p`.
    pub fn spherical_angles(&self, p: ImagePoint) -> (f64, f64) {
        let (u, v) = self.pixel_offset_cm(p);
        (v.atan2(self.foc_cm), u.atan2(self.foc_cm))
    }

    pub fn project_point(&self, w: &Vec3) -> Result<ImagePoint, CameraError> {
        if !(w.z > 0.0) {
            return Err(CameraError::BehindCamera(w.z));
        }
        let u = self.foc_cm * w.x / w.z;
        let v = self.foc_cm * w.y / w.z;
        Ok(ImagePoint {
            row: (v * self.pxcm + self.h() / 2.0) / self.h(),
            col: (u * self.pxcm + self.w() / 2.0) / self.w(),
        })
    }

    /// Un-normalized ray `(u_cm, v_cm, foc)` through `p`: the point where the
    /// ray pierces the image plane.
    pub fn image_plane_point(&self, p: ImagePoint) -> Vec3 {
        let (u, v) = self.pixel_offset_cm(p);
        Vec3::new(u, v, self.foc_cm)
    }

    /// Unit viewing ray through `p`.
    pub fn back_project_ray(&self, p: ImagePoint) -> Vec3 {
        self.image_plane_point(p).normalize()
    }

    /// Image position in pixels, `(row_px, col_px)`.
    pub fn to_pixels(&self, p: ImagePoint) -> (f64, f64) {
        (p.row * self.h(), p.col * self.w())
    }

    /// The no-roll rotation taking the ray through `p_root` onto `+z`.
    pub fn centering_rotation(&self, p_root: ImagePoint) -> Rotation3 {
        centering_rotation_for_ray(&self.image_plane_point(p_root))
    }
}

/// Rotation about `y` removing the azimuth of `dir`, followed by a rotation
/// about `x` removing its elevation, so that `R * dir` lies on `+z`.
/// `dir` need not be normalized but must have `z > 0`.
pub fn centering_rotation_for_ray(dir: &Vec3) -> Rotation3 {
    let d = dir.normalize();
    let rho = d.x.hypot(d.z);
    let (sa, ca) = (d.x / rho, d.z / rho);
    let norm = d.y.hypot(rho);
    let (sb, cb) = (d.y / norm, rho / norm);
    #[rustfmt::skip]
    let azimuth = Matrix3::new(
        ca,  0.0, -sa,
        0.0, 1.0, 0.0,
        sa,  0.0,  ca,
    );
    #[rustfmt::skip]
    let elevation = Matrix3::new(
        1.0, 0.0, 0.0,
        0.0,  cb, -sb,
        0.0,  sb,  cb,
    );
    Rotation3::from_matrix_unchecked(elevation * azimuth)
}

/// `r = |w|`, `theta = atan2(y, z)`, `phi = atan2(x, z)`; the angles match
/// [`CameraIntrinsics::spherical_angles`] of the projected point for any
/// camera.
pub fn cart_to_spherical(w: &Vec3) -> Result<SphericalPoint, CameraError> {
    if !(w.z > 0.0) {
        return Err(CameraError::BehindCamera(w.z));
    }
    Ok(SphericalPoint {
        r: w.norm(),
        theta: w.y.atan2(w.z),
        phi: w.x.atan2(w.z),
    })
}

pub fn spherical_to_cart(s: &SphericalPoint) -> Result<Vec3, CameraError> {
    if !(s.r > 0.0) {
        return Err(CameraError::NonPositiveRadius(s.r));
    }
    let dir = Vec3::new(s.phi.tan(), s.theta.tan(), 1.0);
    Ok(dir.normalize() * s.r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn cam() -> CameraIntrinsics {
        CameraIntrinsics::default()
    }

    #[test]
    fn pixel_offsets() {
        assert_eq!(cam().pixel_offset_cm(ImagePoint::CENTER), (0.0, 0.0));
        assert_eq!(cam().pixel_offset_cm(ImagePoint::new(0.5, 1.0)), (2.0, 0.0));
        assert_eq!(cam().pixel_offset_cm(ImagePoint::new(0.0, 0.5)), (0.0, -1.125));
    }

    #[test]
    fn angles() {
        assert_eq!(cam().spherical_angles(ImagePoint::CENTER), (0.0, 0.0));
        let (theta, phi) = cam().spherical_angles(ImagePoint::new(0.5, 1.0));
        assert_eq!(theta, 0.0);
        assert_abs_diff_eq!(phi, 0.588003, epsilon = 1e-6);
        let (theta, _) = cam().spherical_angles(ImagePoint::new(0.0, 0.5));
        assert_abs_diff_eq!(theta, -0.358771, epsilon = 1e-6);
    }

    #[test]
    fn projection() {
        let c = cam();
        assert_eq!(c.project_point(&Vec3::new(0.0, 0.0, 50.0)).unwrap(), ImagePoint::CENTER);
        let p = c.project_point(&Vec3::new(10.0, 0.0, 30.0)).unwrap();
        assert_abs_diff_eq!(p.col, 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(p.row, 0.5, epsilon = 1e-15);
        assert_eq!(
            c.project_point(&Vec3::new(0.0, 0.0, -1.0)),
            Err(CameraError::BehindCamera(-1.0))
        );
    }

    #[test]
    fn rays() {
        let c = cam();
        assert_eq!(c.back_project_ray(ImagePoint::CENTER), Vec3::z());
        let ray = c.back_project_ray(ImagePoint::new(0.5, 1.0));
        let expected = Vec3::new(2.0, 0.0, 3.0) / 13f64.sqrt();
        assert_abs_diff_eq!(ray, expected, epsilon = 1e-15);
    }

    #[test]
    fn centering_identity_at_center() {
        let r = cam().centering_rotation(ImagePoint::CENTER);
        assert_abs_diff_eq!(*r.matrix(), Matrix3::identity(), epsilon = 1e-15);
    }

    #[test]
    fn spherical_on_axis() {
        let s = cart_to_spherical(&Vec3::new(0.0, 0.0, 50.0)).unwrap();
        assert_eq!((s.r, s.theta, s.phi), (50.0, 0.0, 0.0));
        let s2 = cart_to_spherical(&Vec3::new(0.0, 0.0, 100.0)).unwrap();
        assert_eq!((s2.r, s2.theta, s2.phi), (100.0, 0.0, 0.0));
        assert!(cart_to_spherical(&Vec3::new(1.0, 1.0, 0.0)).is_err());
        assert!(spherical_to_cart(&SphericalPoint { r: 0.0, theta: 0.0, phi: 0.0 }).is_err());
    }

    #[test]
    fn intrinsics_validation() {
        assert!(cam().validate().is_ok());
        let mut bad = cam();
        bad.pxcm = 0.0;
        assert!(bad.validate().is_err());
        bad = cam();
        bad.width_px = 0;
        assert!(bad.validate().is_err());
    }

    fn frustum_point() -> impl Strategy<Value = Vec3> {
        (-1.5f64..2.5, -0.5f64..1.5, 1.0f64..200.0).prop_map(|(r, c, z)| {
            let (u, v) = cam().pixel_offset_cm(ImagePoint::new(r, c));
            Vec3::new(u, v, 3.0) * (z / 3.0)
        })
    }

    fn image_point() -> impl Strategy<Value = ImagePoint> {
        (-1.0f64..2.0, -1.0f64..2.0).prop_map(|(r, c)| ImagePoint::new(r, c))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn centering_maps_ray_to_axis(p in image_point()) {
            let c = cam();
            let rot = c.centering_rotation(p);
            let m = rot.matrix();
            prop_assert!((m.transpose() * m - Matrix3::identity()).abs().max() < 1e-12);
            prop_assert!((m.determinant() - 1.0).abs() < 1e-12);
            prop_assert!((rot * c.back_project_ray(p) - Vec3::z()).norm() < 1e-12);
            prop_assert!(c.back_project_ray(p).dot(&Vec3::z()) > 0.0);
        }

        #[test]
        fn centering_of_projected_point(w in frustum_point()) {
            let c = cam();
            let rot = c.centering_rotation(c.project_point(&w).unwrap());
            let v = rot * w;
            prop_assert!(v.x.abs() < 1e-9 * w.norm());
            prop_assert!(v.y.abs() < 1e-9 * w.norm());
        }

        #[test]
        fn projection_depth_invariant(w in frustum_point(), lambda in 0.01f64..100.0) {
            let c = cam();
            let a = c.project_point(&w).unwrap();
            let b = c.project_point(&(w * lambda)).unwrap();
            prop_assert!((a.row - b.row).abs() < 1e-12 && (a.col - b.col).abs() < 1e-12);
        }

        #[test]
        fn ray_reprojects(p in image_point(), lambda in 0.1f64..500.0) {
            let c = cam();
            let q = c.project_point(&(c.back_project_ray(p) * lambda)).unwrap();
            prop_assert!((q.row - p.row).abs() < 1e-12 && (q.col - p.col).abs() < 1e-12);
        }

        #[test]
        fn spherical_round_trip(w in frustum_point()) {
            let s = cart_to_spherical(&w).unwrap();
            let back = spherical_to_cart(&s).unwrap();
            prop_assert!((back - w).norm() < 1e-9);
            let (theta, phi) = cam().spherical_angles(cam().project_point(&w).unwrap());
            prop_assert!((theta - s.theta).abs() < 1e-12);
            prop_assert!((phi - s.phi).abs() < 1e-12);
        }
    }
}
