//! `PEEL` map container.
//!
//! Little-endian throughout:
//!
//! | field                         | type    |
//! |-------------------------------|---------|
//! | magic `"PEEL"`                | 4 bytes |
//! | version (= 1)                 | u16     |
//! | channel tag                   | 4 bytes |
//! | width, height                 | u32 ×2  |
//! | layers                        | u8      |
//! | channels per layer            | u8      |
//! | t_near, t_far                 | f64 ×2  |
//! | camera center, right, up, fwd | f64 ×12 |
//! | projection kind (0 persp, 1 ortho), parameter (fov_y rad / half height) | f64 ×2 |
//! | planes                        | f32, layer-major, then channel, row-major |
//!
//! Tags: `DPTH` (1 channel), `DRGB` (depth, r, g, b), `RD\0\0`, `AUX\0`,
//! `GAM\0`, `FG\0\0`, `CNF\0` (1 channel each). Depth planes hold raw ray
//! parameters; `t_near`/`t_far` only record the normalization window.
//!
//! A sidecar `<file>.json` repeats the header.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::stack::{DepthRange, PeelStack};
use crate::error::{Error, Result};
use crate::geometry::{Camera, CameraRecord, Projection, Vec3};
use crate::map::Plane;

pub const MAGIC: &[u8; 4] = b"PEEL";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 8 + 2 + 16 + 14 * 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tag {
    Depth,
    DepthRgb,
    Residual,
    Auxiliary,
    Gamma,
    Foreground,
    Conflict,
}

impl Tag {
    pub fn bytes(self) -> [u8; 4] {
        *match self {
            Tag::Depth => b"DPTH",
            Tag::DepthRgb => b"DRGB",
            Tag::Residual => b"RD\0\0",
            Tag::Auxiliary => b"AUX\0",
            Tag::Gamma => b"GAM\0",
            Tag::Foreground => b"FG\0\0",
            Tag::Conflict => b"CNF\0",
        }
    }

    pub fn from_bytes(b: [u8; 4]) -> Option<Tag> {
        [
            Tag::Depth,
            Tag::DepthRgb,
            Tag::Residual,
            Tag::Auxiliary,
            Tag::Gamma,
            Tag::Foreground,
            Tag::Conflict,
        ]
        .into_iter()
        .find(|t| t.bytes() == b)
    }

    pub fn name(self) -> &'static str {
        match self {
            Tag::Depth => "DPTH",
            Tag::DepthRgb => "DRGB",
            Tag::Residual => "RD",
            Tag::Auxiliary => "AUX",
            Tag::Gamma => "GAM",
            Tag::Foreground => "FG",
            Tag::Conflict => "CNF",
        }
    }

    pub fn channels(self) -> usize {
        if self == Tag::DepthRgb {
            4
        } else {
            1
        }
    }
}

/// Decoded container contents.
#[derive(Debug, Clone, PartialEq)]
pub struct PeelFile {
    pub tag: Tag,
    pub camera: Camera,
    pub range: DepthRange,
    /// `layers × channels` planes, layer-major.
    pub planes: Vec<Plane<f32>>,
}

impl PeelFile {
    pub fn layers(&self) -> usize {
        self.planes.len() / self.tag.channels()
    }

    pub fn plane(&self, layer: usize, channel: usize) -> &Plane<f32> {
        &self.planes[layer * self.tag.channels() + channel]
    }

    pub fn expect_tag(self, tag: Tag) -> Result<Self> {
        if self.tag != tag {
            return Err(Error::format(
                "PEEL",
                format!("expected {} container, found {}", tag.name(), self.tag.name()),
            ));
        }
        Ok(self)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let cam = &self.camera;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&self.tag.bytes())?;
        w.write_all(&(cam.width() as u32).to_le_bytes())?;
        w.write_all(&(cam.height() as u32).to_le_bytes())?;
        w.write_all(&[self.layers() as u8, self.tag.channels() as u8])?;
        let (kind, param) = match cam.projection() {
            Projection::Perspective { fov_y } => (0.0, fov_y),
            Projection::Orthographic { half_height } => (1.0, half_height),
        };
        let mut header = vec![self.range.near, self.range.far];
        for v in [cam.center(), cam.right(), cam.up(), cam.forward()] {
            header.extend(v.iter());
        }
        header.extend([kind, param]);
        for x in header {
            w.write_all(&x.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(cam.width() * cam.height() * 4);
        for p in &self.planes {
            buf.clear();
            for x in p.data() {
                buf.extend_from_slice(&x.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to memory");
        out
    }

    pub fn parse(buf: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::format("PEEL", m.to_string());
        if buf.len() < HEADER_LEN {
            return Err(bad("file truncated in header"));
        }
        if &buf[0..4] != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u16::from_le_bytes([buf[4], buf[5]]);
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let tag = Tag::from_bytes(buf[6..10].try_into().unwrap()).ok_or_else(|| bad("unknown channel tag"))?;
        let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap()) as usize;
        let (width, height) = (u32_at(10), u32_at(14));
        let (layers, channels) = (buf[18] as usize, buf[19] as usize);
        if channels != tag.channels() {
            return Err(bad(&format!("{} containers carry {} channels, header says {channels}", tag.name(), tag.channels())));
        }
        let f: Vec<f64> = buf[20..HEADER_LEN]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let v = |i: usize| Vec3::new(f[i], f[i + 1], f[i + 2]);
        let projection = match f[14] {
            k if k == 0.0 => Projection::Perspective { fov_y: f[15] },
            k if k == 1.0 => Projection::Orthographic { half_height: f[15] },
            _ => return Err(bad("unknown projection kind")),
        };
        let camera = Camera::new(v(2), v(5), v(8), v(11), projection, width, height)?;
        let range = DepthRange::new(f[0], f[1])?;
        let n = width * height;
        let expected = HEADER_LEN + layers * channels * n * 4;
        if buf.len() != expected {
            return Err(bad(&format!("expected {expected} bytes, found {}", buf.len())));
        }
        let planes = buf[HEADER_LEN..]
            .chunks_exact(n * 4)
            .map(|c| {
                Plane::from_vec(
                    width,
                    height,
                    c.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect(),
                )
            })
            .collect();
        Ok(Self {
            tag,
            camera,
            range,
            planes,
        })
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            format: "PEEL".into(),
            version: VERSION,
            tag: self.tag.name().into(),
            width: self.camera.width(),
            height: self.camera.height(),
            layers: self.layers(),
            channels: self.tag.channels(),
            t_near: self.range.near,
            t_far: self.range.far,
            camera: self.camera.to_record(),
            nonzero_per_layer: (0..self.layers())
                .map(|l| self.plane(l, 0).data().iter().filter(|&&x| x != 0.0).count())
                .collect(),
        }
    }

    /// Writes the container and its JSON sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))?;
        let side = sidecar_path(path);
        let json = serde_json::to_string_pretty(&self.manifest())?;
        std::fs::write(&side, json + "\n").map_err(|e| Error::io(&side, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| Error::io(path, e))?;
        Self::parse(&buf)
    }
}

/// Human-readable copy of a container header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u16,
    pub tag: String,
    pub width: usize,
    pub height: usize,
    pub layers: usize,
    pub channels: usize,
    pub t_near: f64,
    pub t_far: f64,
    pub camera: CameraRecord,
    pub nonzero_per_layer: Vec<usize>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

impl PeelStack {
    /// `DRGB` when color is present, `DPTH` otherwise.
    pub fn to_file(&self) -> PeelFile {
        let mut planes = Vec::new();
        let tag = if self.has_rgb() { Tag::DepthRgb } else { Tag::Depth };
        for l in 0..self.layers() {
            planes.push(self.depth(l).clone());
            if let Some(rgb) = self.rgb(l) {
                for ch in 0..3 {
                    planes.push(rgb.map(|c| c[ch]));
                }
            }
        }
        PeelFile {
            tag,
            camera: *self.camera(),
            range: self.range(),
            planes,
        }
    }

    pub fn from_file(file: PeelFile) -> Result<Self> {
        let has_rgb = match file.tag {
            Tag::Depth => false,
            Tag::DepthRgb => true,
            other => {
                return Err(Error::format(
                    "PEEL",
                    format!("expected DPTH or DRGB container, found {}", other.name()),
                ))
            }
        };
        let layers = file.layers();
        let (w, h) = (file.camera.width(), file.camera.height());
        let depth = (0..layers).map(|l| file.plane(l, 0).clone()).collect();
        let rgb = has_rgb.then(|| {
            (0..layers)
                .map(|l| {
                    let (r, g, b) = (file.plane(l, 1), file.plane(l, 2), file.plane(l, 3));
                    Plane::from_vec(
                        w,
                        h,
                        (0..w * h).map(|i| [r.data()[i], g.data()[i], b.data()[i]]).collect(),
                    )
                })
                .collect()
        });
        PeelStack::from_parts(file.camera, file.range, depth, rgb)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_file().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_file(PeelFile::load(path)?)
    }
}

/// Saves a 16-bit grayscale preview of one depth layer. Hits map linearly
/// from `[near, far]` onto `[65535, 1]` (near is bright); background is 0.
pub fn save_depth_preview(depth: &Plane<f32>, range: DepthRange, path: &Path) -> Result<()> {
    let data: Vec<u16> = depth
        .data()
        .iter()
        .map(|&d| {
            if d > 0.0 {
                let u = ((range.far - d as f64) / range.span()).clamp(0.0, 1.0);
                (1.0 + u * 65534.0).round() as u16
            } else {
                0
            }
        })
        .collect();
    let img = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(depth.width() as u32, depth.height() as u32, data)
        .expect("buffer matches dimensions");
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stack(rgb: bool) -> PeelStack {
        let cam = Camera::looking_down_z(5, 3, Projection::default_perspective()).unwrap();
        let mut s = PeelStack::empty(cam, 2, rgb, DepthRange::around_origin(&cam));
        s.depth_mut(0).set(1, 2, 9.25);
        s.depth_mut(1).set(1, 2, 10.75);
        if rgb {
            s.rgb_mut(1).unwrap().set(1, 2, [0.1, 0.2, 0.3]);
        }
        s
    }

    #[test]
    fn round_trip_bytes() {
        for rgb in [false, true] {
            let s = stack(rgb);
            let bytes = s.to_file().to_bytes();
            let channels = if rgb { 4 } else { 1 };
            assert_eq!(bytes.len(), HEADER_LEN + 2 * channels * 15 * 4);
            let back = PeelStack::from_file(PeelFile::parse(&bytes).unwrap()).unwrap();
            assert_eq!(back, s);
        }
    }

    #[test]
    fn header_layout() {
        let bytes = stack(false).to_file().to_bytes();
        assert_eq!(&bytes[0..4], b"PEEL");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(&bytes[6..10], b"DPTH");
        assert_eq!(u32::from_le_bytes(bytes[10..14].try_into().unwrap()), 5);
        assert_eq!(u32::from_le_bytes(bytes[14..18].try_into().unwrap()), 3);
        assert_eq!((bytes[18], bytes[19]), (2, 1));
        assert_eq!(f64::from_le_bytes(bytes[20..28].try_into().unwrap()), 8.0);
    }

    #[test]
    fn rejects_truncation_and_tag_mismatch() {
        let bytes = stack(false).to_file().to_bytes();
        assert!(PeelFile::parse(&bytes[..bytes.len() - 1]).is_err());
        let mut f = stack(false).to_file();
        f.tag = Tag::Residual;
        assert!(PeelStack::from_file(f.clone()).is_err());
        assert!(f.expect_tag(Tag::Depth).is_err());
    }

    #[test]
    fn save_writes_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.peel");
        let s = stack(true);
        s.save(&p).unwrap();
        let m: Manifest = serde_json::from_str(&std::fs::read_to_string(sidecar_path(&p)).unwrap()).unwrap();
        assert_eq!((m.tag.as_str(), m.layers, m.channels), ("DRGB", 2, 4));
        assert_eq!(m.nonzero_per_layer, vec![1, 1]);
        assert_eq!(PeelStack::load(&p).unwrap(), s);
    }
}
