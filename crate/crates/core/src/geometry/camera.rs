use serde::{Deserialize, Serialize};

use super::{Ray, Vec3};
use crate::error::{Error, Result};

/// Default camera position: on the +Z axis, ten units from the origin.
pub const DEFAULT_CAMERA_DISTANCE: f64 = 10.0;
/// Default vertical field of view of the perspective camera, in degrees.
pub const DEFAULT_FOV_Y_DEG: f64 = 15.0;
/// Default half image height of the orthographic camera, in world units.
pub const DEFAULT_HALF_HEIGHT: f64 = 1.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Projection {
    /// Pinhole camera; `fov_y` is the full vertical field of view in radians.
    Perspective { fov_y: f64 },
    /// Parallel rays; `half_height` is half the image height in world units.
    Orthographic { half_height: f64 },
}

impl Projection {
    pub fn default_perspective() -> Self {
        Projection::Perspective {
            fov_y: DEFAULT_FOV_Y_DEG.to_radians(),
        }
    }

    pub fn default_orthographic() -> Self {
        Projection::Orthographic {
            half_height: DEFAULT_HALF_HEIGHT,
        }
    }
}

/// A pinhole or orthographic camera with an orthonormal right/up/forward
/// frame. Pixel `(0, 0)` is the top-left corner; rows grow along `-up`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    center: Vec3,
    right: Vec3,
    up: Vec3,
    forward: Vec3,
    projection: Projection,
    width: usize,
    height: usize,
}

impl Camera {
    pub fn new(
        center: Vec3,
        right: Vec3,
        up: Vec3,
        forward: Vec3,
        projection: Projection,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidCamera(format!(
                "image size must be at least 1x1, got {width}x{height}"
            )));
        }
        const TOL: f64 = 1e-9;
        for (name, v) in [("right", right), ("up", up), ("forward", forward)] {
            if (v.norm() - 1.0).abs() > TOL {
                return Err(Error::InvalidCamera(format!("{name} axis is not unit length")));
            }
        }
        if right.dot(&up).abs() > TOL
            || right.dot(&forward).abs() > TOL
            || up.dot(&forward).abs() > TOL
        {
            return Err(Error::InvalidCamera("basis is not orthogonal".into()));
        }
        let ok = match projection {
            Projection::Perspective { fov_y } => fov_y > 0.0 && fov_y < std::f64::consts::PI,
            Projection::Orthographic { half_height } => half_height > 0.0,
        };
        if !ok || !center.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidCamera(format!(
                "bad projection parameters {projection:?}"
            )));
        }
        Ok(Self {
            center,
            right,
            up,
            forward,
            projection,
            width,
            height,
        })
    }

    /// Camera at `(0, 0, 10)` with +Y up, looking down -Z at the origin.
    pub fn looking_down_z(width: usize, height: usize, projection: Projection) -> Result<Self> {
        Self::new(
            Vec3::new(0.0, 0.0, DEFAULT_CAMERA_DISTANCE),
            Vec3::x(),
            Vec3::y(),
            -Vec3::z(),
            projection,
            width,
            height,
        )
    }

    pub fn center(&self) -> Vec3 {
        self.center
    }
    pub fn right(&self) -> Vec3 {
        self.right
    }
    pub fn up(&self) -> Vec3 {
        self.up
    }
    pub fn forward(&self) -> Vec3 {
        self.forward
    }
    pub fn projection(&self) -> Projection {
        self.projection
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn with_resolution(&self, width: usize, height: usize) -> Result<Self> {
        Self::new(
            self.center,
            self.right,
            self.up,
            self.forward,
            self.projection,
            width,
            height,
        )
    }

    fn half_extents(&self) -> (f64, f64) {
        let aspect = self.width as f64 / self.height as f64;
        let h = match self.projection {
            Projection::Perspective { fov_y } => (0.5 * fov_y).tan(),
            Projection::Orthographic { half_height } => half_height,
        };
        (h * aspect, h)
    }

    /// Normalized device coordinates of a pixel center, in [-1, 1].
    fn ndc(&self, px: usize, py: usize) -> (f64, f64) {
        let x = 2.0 * (px as f64 + 0.5) / self.width as f64 - 1.0;
        let y = 1.0 - 2.0 * (py as f64 + 0.5) / self.height as f64;
        (x, y)
    }

    /// The ray through the center of pixel `(px, py)`.
    pub fn ray(&self, px: usize, py: usize) -> Ray {
        let (nx, ny) = self.ndc(px, py);
        let (hw, hh) = self.half_extents();
        match self.projection {
            Projection::Perspective { .. } => Ray::new(
                self.center,
                self.forward + self.right * (nx * hw) + self.up * (ny * hh),
            ),
            Projection::Orthographic { .. } => Ray::new(
                self.center + self.right * (nx * hw) + self.up * (ny * hh),
                self.forward,
            ),
        }
    }

    /// Continuous image coordinates `(x, y)` of a world point, in pixel units
    /// with pixel centers at half-integers. `None` behind a perspective camera.
    pub fn project(&self, p: Vec3) -> Option<(f64, f64)> {
        let rel = p - self.center;
        let (hw, hh) = self.half_extents();
        let (nx, ny) = match self.projection {
            Projection::Perspective { .. } => {
                let z = rel.dot(&self.forward);
                if z <= 0.0 {
                    return None;
                }
                (rel.dot(&self.right) / (z * hw), rel.dot(&self.up) / (z * hh))
            }
            Projection::Orthographic { .. } => {
                (rel.dot(&self.right) / hw, rel.dot(&self.up) / hh)
            }
        };
        Some((
            (nx + 1.0) * 0.5 * self.width as f64,
            (1.0 - ny) * 0.5 * self.height as f64,
        ))
    }

    /// Pixel containing the projection of `p`, if it falls inside the image.
    pub fn pixel_of(&self, p: Vec3) -> Option<(usize, usize)> {
        let (x, y) = self.project(p)?;
        if x < 0.0 || y < 0.0 {
            return None;
        }
        let (px, py) = (x.floor() as usize, y.floor() as usize);
        (px < self.width && py < self.height).then_some((px, py))
    }

    /// World-space width of one pixel at `distance` along the view axis.
    pub fn pixel_footprint(&self, distance: f64) -> f64 {
        let (_, hh) = self.half_extents();
        match self.projection {
            Projection::Perspective { .. } => 2.0 * distance * hh / self.height as f64,
            Projection::Orthographic { .. } => 2.0 * hh / self.height as f64,
        }
    }

    /// Unit direction of the viewing ray through world point `p`.
    pub fn view_direction(&self, p: Vec3) -> Vec3 {
        match self.projection {
            Projection::Perspective { .. } => (p - self.center).normalize(),
            Projection::Orthographic { .. } => self.forward,
        }
    }

    /// Expresses a world direction in camera coordinates (x right, y up,
    /// z toward the viewer).
    pub fn to_camera_frame(&self, v: Vec3) -> Vec3 {
        Vec3::new(v.dot(&self.right), v.dot(&self.up), -v.dot(&self.forward))
    }

    pub fn to_record(&self) -> CameraRecord {
        CameraRecord {
            center: self.center.into(),
            right: self.right.into(),
            up: self.up.into(),
            forward: self.forward.into(),
            projection: self.projection,
            width: self.width,
            height: self.height,
        }
    }

    pub fn from_record(r: &CameraRecord) -> Result<Self> {
        Self::new(
            r.center.into(),
            r.right.into(),
            r.up.into(),
            r.forward.into(),
            r.projection,
            r.width,
            r.height,
        )
    }
}

/// Plain serializable form of a [`Camera`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub center: [f64; 3],
    pub right: [f64; 3],
    pub up: [f64; 3],
    pub forward: [f64; 3],
    pub projection: Projection,
    pub width: usize,
    pub height: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_orthonormal_basis() {
        let err = Camera::new(
            Vec3::zeros(),
            Vec3::x(),
            Vec3::new(0.1, 1.0, 0.0).normalize(),
            -Vec3::z(),
            Projection::default_perspective(),
            4,
            4,
        );
        assert!(err.is_err());
        assert!(Camera::looking_down_z(0, 4, Projection::default_perspective()).is_err());
    }

    #[test]
    fn center_ray_points_down_z() {
        for proj in [
            Projection::default_perspective(),
            Projection::default_orthographic(),
        ] {
            let cam = Camera::looking_down_z(9, 9, proj).unwrap();
            let r = cam.ray(4, 4);
            assert!((r.origin - Vec3::new(0.0, 0.0, 10.0)).norm() < 1e-15);
            assert!((r.direction() + Vec3::z()).norm() < 1e-15);
        }
    }

    #[test]
    fn projection_inverts_ray() {
        for proj in [
            Projection::default_perspective(),
            Projection::default_orthographic(),
        ] {
            let cam = Camera::looking_down_z(64, 48, proj).unwrap();
            for (px, py) in [(0, 0), (63, 47), (10, 30), (31, 23)] {
                let r = cam.ray(px, py);
                let p = r.at(9.3);
                let (x, y) = cam.project(p).unwrap();
                assert!((x - (px as f64 + 0.5)).abs() < 1e-9);
                assert!((y - (py as f64 + 0.5)).abs() < 1e-9);
                assert_eq!(cam.pixel_of(p), Some((px, py)));
            }
        }
    }

    #[test]
    fn top_row_is_up() {
        let cam = Camera::looking_down_z(8, 8, Projection::default_orthographic()).unwrap();
        assert!(cam.ray(0, 0).origin.y > 0.0);
        assert!(cam.ray(0, 0).origin.x < 0.0);
    }
}
