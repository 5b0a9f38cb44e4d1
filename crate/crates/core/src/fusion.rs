//! Prior masks, residual/auxiliary decomposition and the layer-wise fusion
//! operator.
//!
//! With `Γᵢ = (priorᵢ > 0) ∧ F`:
//!
//! * fused `= Γᵢ · (priorᵢ + δᵢ) + (1 − Γᵢ) · auxᵢ`, clamped at 0 and zeroed
//!   outside `F`;
//! * ground truth splits into `δᵢ = gtᵢ − priorᵢ` on `Γᵢ` and `auxᵢ = gtᵢ` on
//!   `F ∖ Γᵢ`.
//!
//! Where the prior has a layer the ground truth lacks, `δ` is 0 and the pixel
//! is flagged in a per-layer conflict mask. Fusion writes 0 at flagged pixels,
//! so `fuse(decompose(gt))` reproduces `gt` on `F`.

use std::path::Path;

use crate::error::{check_resolution, Error, Result};
use crate::geometry::Camera;
use crate::map::{Mask, Plane};
use crate::peel::{DepthRange, PeelFile, PeelStack, Tag};

pub const DEFAULT_RESIDUAL_RANGE: (f64, f64) = (-1.0, 0.5);

/// Per-layer prior masks `Γᵢ` and the shared foreground mask `F`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskStack {
    gamma: Vec<Mask>,
    foreground: Mask,
}

impl MaskStack {
    pub fn new(gamma: Vec<Mask>, foreground: Mask) -> Result<Self> {
        for g in &gamma {
            check_resolution(foreground.dims(), g.dims())?;
        }
        if gamma.is_empty() {
            return Err(Error::InvalidLayerCount(0));
        }
        Ok(Self { gamma, foreground })
    }

    pub fn layers(&self) -> usize {
        self.gamma.len()
    }
    pub fn dims(&self) -> (usize, usize) {
        self.foreground.dims()
    }
    pub fn gamma(&self, layer: usize) -> &Mask {
        &self.gamma[layer]
    }
    pub fn gammas(&self) -> &[Mask] {
        &self.gamma
    }
    pub fn foreground(&self) -> &Mask {
        &self.foreground
    }

    /// `GAM` container with one plane per layer.
    pub fn gamma_file(&self, camera: &Camera, range: DepthRange) -> PeelFile {
        masks_to_file(Tag::Gamma, &self.gamma, camera, range)
    }
}

/// Signed depth offsets `δᵢ` from the prior, plus per-layer conflict masks.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualStack {
    camera: Camera,
    range: DepthRange,
    delta: Vec<Plane<f32>>,
    conflict: Vec<Mask>,
}

impl ResidualStack {
    /// Residuals without conflicts (e.g. a network prediction).
    pub fn new(camera: Camera, range: DepthRange, delta: Vec<Plane<f32>>) -> Result<Self> {
        let conflict = delta.iter().map(|d| Plane::filled(d.width(), d.height(), 0)).collect();
        Self::with_conflicts(camera, range, delta, conflict)
    }

    pub fn with_conflicts(
        camera: Camera,
        range: DepthRange,
        delta: Vec<Plane<f32>>,
        conflict: Vec<Mask>,
    ) -> Result<Self> {
        let dims = (camera.width(), camera.height());
        if delta.len() != conflict.len() {
            return Err(Error::LayerMismatch {
                left: delta.len(),
                right: conflict.len(),
            });
        }
        for (d, c) in delta.iter().zip(&conflict) {
            check_resolution(dims, d.dims())?;
            check_resolution(dims, c.dims())?;
        }
        Ok(Self {
            camera,
            range,
            delta,
            conflict,
        })
    }

    pub fn camera(&self) -> &Camera {
        &self.camera
    }
    pub fn range(&self) -> DepthRange {
        self.range
    }
    pub fn layers(&self) -> usize {
        self.delta.len()
    }
    pub fn dims(&self) -> (usize, usize) {
        (self.camera.width(), self.camera.height())
    }
    pub fn delta(&self, layer: usize) -> &Plane<f32> {
        &self.delta[layer]
    }
    pub fn delta_mut(&mut self, layer: usize) -> &mut Plane<f32> {
        &mut self.delta[layer]
    }
    pub fn deltas(&self) -> &[Plane<f32>] {
        &self.delta
    }
    pub fn conflict(&self, layer: usize) -> &Mask {
        &self.conflict[layer]
    }
    pub fn conflicts(&self) -> &[Mask] {
        &self.conflict
    }

    pub fn to_files(&self) -> (PeelFile, PeelFile) {
        (
            PeelFile {
                tag: Tag::Residual,
                camera: self.camera,
                range: self.range,
                planes: self.delta.clone(),
            },
            masks_to_file(Tag::Conflict, &self.conflict, &self.camera, self.range),
        )
    }

    pub fn from_files(rd: PeelFile, conflict: Option<PeelFile>) -> Result<Self> {
        let rd = rd.expect_tag(Tag::Residual)?;
        match conflict {
            Some(c) => {
                let c = c.expect_tag(Tag::Conflict)?;
                Self::with_conflicts(rd.camera, rd.range, rd.planes, file_to_masks(&c))
            }
            None => Self::new(rd.camera, rd.range, rd.planes),
        }
    }
}

/// Absolute depths for foreground pixels outside the prior masks.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryStack {
    camera: Camera,
    range: DepthRange,
    depth: Vec<Plane<f32>>,
}

impl AuxiliaryStack {
    pub fn new(camera: Camera, range: DepthRange, depth: Vec<Plane<f32>>) -> Result<Self> {
        for d in &depth {
            check_resolution((camera.width(), camera.height()), d.dims())?;
        }
        Ok(Self { camera, range, depth })
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

    pub fn to_file(&self) -> PeelFile {
        PeelFile {
            tag: Tag::Auxiliary,
            camera: self.camera,
            range: self.range,
            planes: self.depth.clone(),
        }
    }

    pub fn from_file(file: PeelFile) -> Result<Self> {
        let f = file.expect_tag(Tag::Auxiliary)?;
        Self::new(f.camera, f.range, f.planes)
    }
}

fn masks_to_file(tag: Tag, masks: &[Mask], camera: &Camera, range: DepthRange) -> PeelFile {
    PeelFile {
        tag,
        camera: *camera,
        range,
        planes: masks.iter().map(|m| m.map(|&v| f32::from(v))).collect(),
    }
}

fn file_to_masks(file: &PeelFile) -> Vec<Mask> {
    file.planes.iter().map(|p| p.map(|&v| u8::from(v != 0.0))).collect()
}

/// Reads a `GAM` container back into masks.
pub fn gamma_from_file(file: PeelFile) -> Result<Vec<Mask>> {
    Ok(file_to_masks(&file.expect_tag(Tag::Gamma)?))
}

/// `FG` container holding the foreground mask as a single plane.
pub fn foreground_file(foreground: &Mask, camera: &Camera, range: DepthRange) -> PeelFile {
    masks_to_file(Tag::Foreground, std::slice::from_ref(foreground), camera, range)
}

/// Loads a foreground mask from an 8-bit PNG (any non-zero luma is
/// foreground) or an `FG` PEEL container.
pub fn load_foreground(path: &Path) -> Result<Mask> {
    if path.extension().and_then(|e| e.to_str()) == Some("peel") {
        let f = PeelFile::load(path)?.expect_tag(Tag::Foreground)?;
        return file_to_masks(&f)
            .into_iter()
            .next()
            .ok_or_else(|| Error::format("PEEL", "FG container has no layers"));
    }
    let img = image::open(path)?.into_luma8();
    let (w, h) = img.dimensions();
    Ok(Plane::from_vec(
        w as usize,
        h as usize,
        img.into_raw().into_iter().map(|v| u8::from(v != 0)).collect(),
    ))
}

/// Writes a mask as an 8-bit PNG with values 0 / 255.
pub fn save_mask_png(mask: &Mask, path: &Path) -> Result<()> {
    let data = mask.data().iter().map(|&v| if v != 0 { 255 } else { 0 }).collect();
    let img = image::GrayImage::from_raw(mask.width() as u32, mask.height() as u32, data)
        .expect("buffer matches dimensions");
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// `Γᵢ[p] = prior.dᵢ[p] > 0 ∧ F[p]`.
pub fn compute_mask(prior: &PeelStack, foreground: &Mask) -> Result<MaskStack> {
    check_resolution(prior.dims(), foreground.dims())?;
    let gamma = (0..prior.layers())
        .map(|l| {
            let d = prior.depth(l).data();
            Plane::from_vec(
                foreground.width(),
                foreground.height(),
                d.iter()
                    .zip(foreground.data())
                    .map(|(&d, &f)| u8::from(d > 0.0 && f != 0))
                    .collect(),
            )
        })
        .collect();
    MaskStack::new(gamma, foreground.clone())
}

fn check_stack(stack_dims: (usize, usize), stack_layers: usize, masks: &MaskStack) -> Result<()> {
    check_resolution(masks.dims(), stack_dims)?;
    if stack_layers != masks.layers() {
        return Err(Error::LayerMismatch {
            left: masks.layers(),
            right: stack_layers,
        });
    }
    Ok(())
}

/// Splits a ground-truth stack into residuals on `Γ` and auxiliary depths on
/// `F ∖ Γ`.
pub fn decompose(gt: &PeelStack, prior: &PeelStack, masks: &MaskStack) -> Result<(ResidualStack, AuxiliaryStack)> {
    check_stack(gt.dims(), gt.layers(), masks)?;
    check_stack(prior.dims(), prior.layers(), masks)?;
    let (w, h) = gt.dims();
    let f = masks.foreground().data();
    let mut delta = Vec::with_capacity(gt.layers());
    let mut conflict = Vec::with_capacity(gt.layers());
    let mut aux = Vec::with_capacity(gt.layers());
    for l in 0..gt.layers() {
        let (g, p, gamma) = (gt.depth(l).data(), prior.depth(l).data(), masks.gamma(l).data());
        let mut d = vec![0.0f32; w * h];
        let mut c = vec![0u8; w * h];
        let mut a = vec![0.0f32; w * h];
        for i in 0..w * h {
            if gamma[i] != 0 {
                if g[i] > 0.0 {
                    d[i] = g[i] - p[i];
                } else {
                    c[i] = 1;
                }
            } else if f[i] != 0 {
                a[i] = g[i];
            }
        }
        delta.push(Plane::from_vec(w, h, d));
        conflict.push(Plane::from_vec(w, h, c));
        aux.push(Plane::from_vec(w, h, a));
    }
    Ok((
        ResidualStack::with_conflicts(*prior.camera(), prior.range(), delta, conflict)?,
        AuxiliaryStack::new(*prior.camera(), prior.range(), aux)?,
    ))
}

/// Layer-wise fusion of prior + residual and auxiliary depths. The result
/// carries the prior's camera and depth range.
pub fn fuse(prior: &PeelStack, rd: &ResidualStack, aux: &AuxiliaryStack, masks: &MaskStack) -> Result<PeelStack> {
    check_stack(prior.dims(), prior.layers(), masks)?;
    check_stack(rd.dims(), rd.layers(), masks)?;
    check_stack(prior.dims(), aux.layers(), masks)?;
    for d in aux.depths() {
        check_resolution(prior.dims(), d.dims())?;
    }
    let (w, h) = prior.dims();
    let f = masks.foreground().data();
    let depth = (0..prior.layers())
        .map(|l| {
            let (p, d, c, a, gamma) = (
                prior.depth(l).data(),
                rd.delta(l).data(),
                rd.conflict(l).data(),
                aux.depth(l).data(),
                masks.gamma(l).data(),
            );
            let out = (0..w * h)
                .map(|i| {
                    let v = if f[i] == 0 {
                        0.0
                    } else if gamma[i] != 0 {
                        if c[i] != 0 {
                            0.0
                        } else {
                            p[i] + d[i]
                        }
                    } else {
                        a[i]
                    };
                    v.max(0.0)
                })
                .collect();
            Plane::from_vec(w, h, out)
        })
        .collect();
    PeelStack::from_parts(*prior.camera(), prior.range(), depth, None)
}

/// Clamps `δ / (t_far − t_near)` to `[lo, hi]` and scales back. In-range
/// values are returned untouched.
pub fn clamp_residual(rd: &ResidualStack, lo: f64, hi: f64) -> Result<ResidualStack> {
    if !(lo < hi) {
        return Err(Error::InvertedRange { lo, hi });
    }
    let span = rd.range.span();
    let mut out = rd.clone();
    for d in &mut out.delta {
        for v in d.data_mut() {
            let n = *v as f64 / span;
            if n < lo {
                *v = (lo * span) as f32;
            } else if n > hi {
                *v = (hi * span) as f32;
            }
        }
    }
    Ok(out)
}
