use crate::error::{check_resolution, Error, Result};
use crate::geometry::Camera;
use crate::map::{Mask, Plane};

/// Half-width of the default depth normalization window around the
/// camera-to-origin distance.
pub const DEPTH_HALF_RANGE: f64 = 2.0;

/// Depth window `[near, far]` used to normalize depths (previews) and
/// residuals (clamping). Depth maps themselves always hold raw `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthRange {
    pub near: f64,
    pub far: f64,
}

impl DepthRange {
    pub fn new(near: f64, far: f64) -> Result<Self> {
        if !(near < far) {
            return Err(Error::InvertedRange { lo: near, hi: far });
        }
        Ok(Self { near, far })
    }

    /// `distance(camera, origin) ± DEPTH_HALF_RANGE`, clipped at zero.
    pub fn around_origin(camera: &Camera) -> Self {
        let d = camera.center().norm();
        Self {
            near: (d - DEPTH_HALF_RANGE).max(0.0),
            far: d + DEPTH_HALF_RANGE,
        }
    }

    pub fn span(&self) -> f64 {
        self.far - self.near
    }
}

/// `L` layers of depth (and optionally RGB) peel maps of one view.
///
/// Depth is the ray parameter `t` of the i-th surface crossing through the
/// pixel center, in world units; `0` marks "no hit". RGB is black where the
/// depth is empty.
#[derive(Debug, Clone, PartialEq)]
pub struct PeelStack {
    camera: Camera,
    range: DepthRange,
    depth: Vec<Plane<f32>>,
    rgb: Option<Vec<Plane<[f32; 3]>>>,
    overflow_pixels: usize,
}

impl PeelStack {
    /// All-empty stack.
    pub fn empty(camera: Camera, layers: usize, with_rgb: bool, range: DepthRange) -> Self {
        let (w, h) = (camera.width(), camera.height());
        Self {
            camera,
            range,
            depth: (0..layers).map(|_| Plane::filled(w, h, 0.0)).collect(),
            rgb: with_rgb.then(|| (0..layers).map(|_| Plane::filled(w, h, [0.0; 3])).collect()),
            overflow_pixels: 0,
        }
    }

    pub fn from_parts(
        camera: Camera,
        range: DepthRange,
        depth: Vec<Plane<f32>>,
        rgb: Option<Vec<Plane<[f32; 3]>>>,
    ) -> Result<Self> {
        if depth.is_empty() || depth.len() > crate::MAX_LAYERS {
            return Err(Error::InvalidLayerCount(depth.len()));
        }
        let dims = (camera.width(), camera.height());
        for d in &depth {
            check_resolution(dims, d.dims())?;
        }
        if let Some(rgb) = &rgb {
            if rgb.len() != depth.len() {
                return Err(Error::LayerMismatch {
                    left: depth.len(),
                    right: rgb.len(),
                });
            }
            for r in rgb {
                check_resolution(dims, r.dims())?;
            }
        }
        Ok(Self {
            camera,
            range,
            depth,
            rgb,
            overflow_pixels: 0,
        })
    }

    pub fn camera(&self) -> &Camera {
        &self.camera
    }
    pub fn range(&self) -> DepthRange {
        self.range
    }
    pub fn width(&self) -> usize {
        self.camera.width()
    }
    pub fn height(&self) -> usize {
        self.camera.height()
    }
    pub fn dims(&self) -> (usize, usize) {
        (self.width(), self.height())
    }
    pub fn layers(&self) -> usize {
        self.depth.len()
    }
    pub fn depth(&self, layer: usize) -> &Plane<f32> {
        &self.depth[layer]
    }
    pub fn depth_mut(&mut self, layer: usize) -> &mut Plane<f32> {
        &mut self.depth[layer]
    }
    pub fn depths(&self) -> &[Plane<f32>] {
        &self.depth
    }
    pub fn rgb(&self, layer: usize) -> Option<&Plane<[f32; 3]>> {
        self.rgb.as_ref().map(|r| &r[layer])
    }
    pub fn rgb_mut(&mut self, layer: usize) -> Option<&mut Plane<[f32; 3]>> {
        self.rgb.as_mut().map(|r| &mut r[layer])
    }
    pub fn has_rgb(&self) -> bool {
        self.rgb.is_some()
    }

    /// Pixels whose ray crossed the surface more often than there are layers.
    pub fn overflow_pixels(&self) -> usize {
        self.overflow_pixels
    }

    pub(crate) fn set_overflow_pixels(&mut self, n: usize) {
        self.overflow_pixels = n;
    }

    /// Drops the RGB channels.
    pub fn depth_only(mut self) -> Self {
        self.rgb = None;
        self
    }

    /// Support mask (`d > 0`) of one layer.
    pub fn support(&self, layer: usize) -> Mask {
        self.depth[layer].map(|&d| u8::from(d > 0.0))
    }

    /// Number of non-empty layers at each pixel.
    pub fn hit_counts(&self) -> Plane<u8> {
        let (w, h) = self.dims();
        let mut out = Plane::filled(w, h, 0u8);
        for d in &self.depth {
            for (o, &v) in out.data_mut().iter_mut().zip(d.data()) {
                *o += u8::from(v > 0.0);
            }
        }
        out
    }

    /// Checks layer monotonicity, support nesting and that color only
    /// appears where depth does.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let n = self.width() * self.height();
        for i in 0..n {
            for l in 1..self.layers() {
                let (prev, cur) = (self.depth[l - 1].data()[i], self.depth[l].data()[i]);
                if cur > 0.0 && !(prev > 0.0 && cur > prev) {
                    return Err(format!(
                        "pixel {i}: layer {l} depth {cur} after layer {} depth {prev}",
                        l - 1
                    ));
                }
            }
            if let Some(rgb) = &self.rgb {
                for l in 0..self.layers() {
                    if self.depth[l].data()[i] <= 0.0 && rgb[l].data()[i] != [0.0; 3] {
                        return Err(format!("pixel {i}: color on empty layer {l}"));
                    }
                }
            }
        }
        Ok(())
    }

    pub(crate) fn check_aligned(&self, other: &PeelStack) -> Result<()> {
        check_resolution(self.dims(), other.dims())?;
        if self.layers() != other.layers() {
            return Err(Error::LayerMismatch {
                left: self.layers(),
                right: other.layers(),
            });
        }
        Ok(())
    }
}
