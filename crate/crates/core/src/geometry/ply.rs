//! PLY reading (binary little-endian and ASCII) and binary little-endian
//! writing.
//!
//! Parse rules for meshes:
//! - the `vertex` element must carry `x`, `y`, `z` (any scalar type);
//! - `red`, `green`, `blue` become vertex colors: `uchar` values are divided
//!   by 255, floating-point values are taken as-is;
//! - `nx`, `ny`, `nz` become vertex normals;
//! - the `face` element's `vertex_indices` (or `vertex_index`) list gives
//!   polygons, which are fan-triangulated;
//! - every other property and element is read past and ignored.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{TriangleMesh, Vec3};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }

    fn is_float(self) -> bool {
        matches!(self, Self::F32 | Self::F64)
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: ScalarType },
    List { name: String, count: ScalarType, item: ScalarType },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Encoding {
    Ascii,
    BinaryLe,
}

/// Decoded contents of a PLY file: the vertex element's scalar columns,
/// the face lists, and the header comments.
#[derive(Debug, Clone, Default)]
pub struct PlyData {
    pub vertex: BTreeMap<String, Vec<f64>>,
    pub vertex_types: BTreeMap<String, ScalarType>,
    pub vertex_count: usize,
    pub faces: Vec<Vec<u32>>,
    pub comments: Vec<String>,
}

impl PlyData {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.vertex.get(name).map(Vec::as_slice)
    }

    pub fn positions(&self) -> Result<Vec<Vec3>> {
        let (Some(x), Some(y), Some(z)) = (self.column("x"), self.column("y"), self.column("z"))
        else {
            return Err(Error::format("PLY", "vertex element lacks x/y/z"));
        };
        Ok((0..self.vertex_count)
            .map(|i| Vec3::new(x[i], y[i], z[i]))
            .collect())
    }

    pub fn colors(&self) -> Option<Vec<[f32; 3]>> {
        let (r, g, b) = (self.column("red")?, self.column("green")?, self.column("blue")?);
        let scale = if self.vertex_types["red"].is_float() {
            1.0
        } else {
            1.0 / 255.0
        };
        Some(
            (0..self.vertex_count)
                .map(|i| [(r[i] * scale) as f32, (g[i] * scale) as f32, (b[i] * scale) as f32])
                .collect(),
        )
    }

    pub fn normals(&self) -> Option<Vec<Vec3>> {
        let (x, y, z) = (self.column("nx")?, self.column("ny")?, self.column("nz")?);
        Some(
            (0..self.vertex_count)
                .map(|i| Vec3::new(x[i], y[i], z[i]))
                .collect(),
        )
    }
}

pub fn read_ply(path: &Path) -> Result<PlyData> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_ply(BufReader::new(file), path)
}

pub fn read_ply_mesh(path: &Path) -> Result<TriangleMesh> {
    mesh_from_ply(&read_ply(path)?)
}

pub fn mesh_from_ply(data: &PlyData) -> Result<TriangleMesh> {
    let mut triangles = Vec::new();
    for f in &data.faces {
        if f.len() < 3 {
            return Err(Error::format("PLY", format!("face with {} corners", f.len())));
        }
        for i in 1..f.len() - 1 {
            triangles.push([f[0], f[i], f[i + 1]]);
        }
    }
    TriangleMesh::new(data.positions()?, triangles, data.colors(), data.normals())
}

pub fn parse_ply<R: BufRead>(mut reader: R, path: &Path) -> Result<PlyData> {
    let mut lineno = 0;
    let mut next_line = |reader: &mut R| -> Result<(usize, String)> {
        let mut s = String::new();
        let n = reader.read_line(&mut s).map_err(|e| Error::io(path, e))?;
        lineno += 1;
        if n == 0 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno,
                message: "unexpected end of header".into(),
            });
        }
        Ok((lineno, s.trim_end_matches(['\r', '\n']).to_string()))
    };
    let perr = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let (l, magic) = next_line(&mut reader)?;
    if magic.trim() != "ply" {
        return Err(perr(l, "missing 'ply' magic".into()));
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut comments = Vec::new();
    loop {
        let (l, line) = next_line(&mut reader)?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            [] => {}
            ["end_header"] => break,
            ["format", fmt, _ver] => {
                encoding = Some(match *fmt {
                    "ascii" => Encoding::Ascii,
                    "binary_little_endian" => Encoding::BinaryLe,
                    other => return Err(perr(l, format!("unsupported format {other}"))),
                })
            }
            ["comment", ..] | ["obj_info", ..] => {
                comments.push(line.split_once(' ').map(|x| x.1).unwrap_or("").to_string())
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| perr(l, format!("bad element count {count:?}")))?,
                props: Vec::new(),
            }),
            ["property", "list", cty, ity, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| perr(l, "property before element".into()))?;
                let count = ScalarType::parse(cty).ok_or_else(|| perr(l, format!("bad type {cty}")))?;
                let item = ScalarType::parse(ity).ok_or_else(|| perr(l, format!("bad type {ity}")))?;
                el.props.push(Property::List {
                    name: name.to_string(),
                    count,
                    item,
                });
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| perr(l, "property before element".into()))?;
                let ty = ScalarType::parse(ty).ok_or_else(|| perr(l, format!("bad type {ty}")))?;
                el.props.push(Property::Scalar {
                    name: name.to_string(),
                    ty,
                });
            }
            _ => return Err(perr(l, format!("unrecognized header line {line:?}"))),
        }
    }
    let encoding = encoding.ok_or_else(|| perr(lineno, "missing format line".into()))?;

    let mut data = PlyData {
        comments,
        ..Default::default()
    };
    let mut body = Vec::new();
    reader
        .read_to_end(&mut body)
        .map_err(|e| Error::io(path, e))?;
    let mut src: Box<dyn ValueSource> = match encoding {
        Encoding::BinaryLe => Box::new(BinarySource { buf: &body, pos: 0 }),
        Encoding::Ascii => Box::new(AsciiSource {
            toks: std::str::from_utf8(&body)
                .map_err(|_| Error::format("PLY", "ASCII body is not UTF-8"))?
                .split_whitespace(),
        }),
    };

    for el in &elements {
        let is_vertex = el.name == "vertex";
        let is_face = el.name == "face";
        if is_vertex {
            data.vertex_count = el.count;
            for p in &el.props {
                if let Property::Scalar { name, ty } = p {
                    data.vertex.insert(name.clone(), Vec::with_capacity(el.count));
                    data.vertex_types.insert(name.clone(), *ty);
                }
            }
        }
        for _ in 0..el.count {
            for p in &el.props {
                match p {
                    Property::Scalar { name, ty } => {
                        let v = src.next(*ty)?;
                        if is_vertex {
                            data.vertex.get_mut(name).unwrap().push(v);
                        }
                    }
                    Property::List { name, count, item } => {
                        let n = src.next(*count)?;
                        if !(n >= 0.0) {
                            return Err(Error::format("PLY", "negative list length"));
                        }
                        let mut list = Vec::with_capacity(n as usize);
                        for _ in 0..n as usize {
                            list.push(src.next(*item)?);
                        }
                        if is_face && (name == "vertex_indices" || name == "vertex_index") {
                            let mut face = Vec::with_capacity(list.len());
                            for v in list {
                                if v < 0.0 || v > u32::MAX as f64 {
                                    return Err(Error::format("PLY", format!("bad index {v}")));
                                }
                                face.push(v as u32);
                            }
                            data.faces.push(face);
                        }
                    }
                }
            }
        }
    }
    Ok(data)
}

trait ValueSource {
    fn next(&mut self, ty: ScalarType) -> Result<f64>;
}

struct BinarySource<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl ValueSource for BinarySource<'_> {
    fn next(&mut self, ty: ScalarType) -> Result<f64> {
        let n = ty.size();
        let bytes = self
            .buf
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::format("PLY", "binary body truncated"))?;
        self.pos += n;
        Ok(ty.decode(bytes))
    }
}

struct AsciiSource<'a> {
    toks: std::str::SplitWhitespace<'a>,
}

impl ValueSource for AsciiSource<'_> {
    fn next(&mut self, _ty: ScalarType) -> Result<f64> {
        let t = self
            .toks
            .next()
            .ok_or_else(|| Error::format("PLY", "ASCII body truncated"))?;
        t.parse()
            .map_err(|_| Error::format("PLY", format!("bad number {t:?}")))
    }
}

/// Writes a mesh as binary little-endian PLY: float32 positions, optional
/// float32 normals and uchar colors, and an int32 face index list.
pub fn write_ply_mesh(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_ply_mesh_to(mesh, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_ply_mesh_to<W: Write>(mesh: &TriangleMesh, w: &mut W) -> std::io::Result<()> {
    writeln!(w, "ply\nformat binary_little_endian 1.0")?;
    writeln!(w, "element vertex {}", mesh.vertex_count())?;
    writeln!(w, "property float x\nproperty float y\nproperty float z")?;
    if mesh.normals().is_some() {
        writeln!(w, "property float nx\nproperty float ny\nproperty float nz")?;
    }
    if mesh.colors().is_some() {
        writeln!(w, "property uchar red\nproperty uchar green\nproperty uchar blue")?;
    }
    writeln!(w, "element face {}", mesh.triangle_count())?;
    writeln!(w, "property list uchar int vertex_indices\nend_header")?;
    for (i, p) in mesh.positions().iter().enumerate() {
        for c in p.iter() {
            w.write_all(&(*c as f32).to_le_bytes())?;
        }
        if let Some(ns) = mesh.normals() {
            for c in ns[i].iter() {
                w.write_all(&(*c as f32).to_le_bytes())?;
            }
        }
        if let Some(cs) = mesh.colors() {
            w.write_all(&cs[i].map(color_to_u8))?;
        }
    }
    for t in mesh.triangles() {
        w.write_all(&[3u8])?;
        for &i in t {
            w.write_all(&(i as i32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn color_to_u8(c: f32) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}
