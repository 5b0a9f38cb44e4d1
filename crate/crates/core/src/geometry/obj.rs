//! Wavefront OBJ reading and writing.
//!
//! Parse rules:
//! - `v x y z` or `v x y z r g b` (colors in [0, 1]). Either every vertex
//!   carries a color or none does.
//! - `vn x y z` normals; a vertex takes the normal referenced by the faces
//!   that use it (last reference wins). Normals are kept only if every vertex
//!   ends up with one.
//! - `f` with `v`, `v/vt`, `v//vn` or `v/vt/vn` corners, 1-based or negative
//!   (relative) indices. Polygons are fan-triangulated.
//! - Every other statement (`vt`, `o`, `g`, `s`, `usemtl`, `mtllib`, ...) and
//!   `#` comments are ignored.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{TriangleMesh, Vec3};
use crate::error::{Error, Result};

pub fn read_obj(path: &Path) -> Result<TriangleMesh> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_obj(BufReader::new(file), path)
}

pub fn parse_obj<R: BufRead>(reader: R, path: &Path) -> Result<TriangleMesh> {
    let mut positions = Vec::new();
    let mut colors: Vec<[f32; 3]> = Vec::new();
    let mut normals_table: Vec<Vec3> = Vec::new();
    let mut vertex_normal: Vec<Option<u32>> = Vec::new();
    let mut triangles = Vec::new();
    let mut colored: Option<bool> = None;

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message,
        };
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        let Some(tag) = tokens.next() else { continue };
        match tag {
            "v" => {
                let vals = tokens
                    .map(|t| t.parse::<f64>().map_err(|_| err(format!("bad number {t:?}"))))
                    .collect::<Result<Vec<f64>>>()?;
                let has_color = match vals.len() {
                    3 => false,
                    6 => true,
                    n => return Err(err(format!("vertex needs 3 or 6 values, got {n}"))),
                };
                if *colored.get_or_insert(has_color) != has_color {
                    return Err(err("vertex colors must be given for all vertices or none".into()));
                }
                positions.push(Vec3::new(vals[0], vals[1], vals[2]));
                vertex_normal.push(None);
                if has_color {
                    colors.push([vals[3] as f32, vals[4] as f32, vals[5] as f32]);
                }
            }
            "vn" => {
                let vals = tokens
                    .map(|t| t.parse::<f64>().map_err(|_| err(format!("bad number {t:?}"))))
                    .collect::<Result<Vec<f64>>>()?;
                if vals.len() != 3 {
                    return Err(err(format!("normal needs 3 values, got {}", vals.len())));
                }
                normals_table.push(Vec3::new(vals[0], vals[1], vals[2]));
            }
            "f" => {
                let mut corners = Vec::new();
                for tok in tokens {
                    let mut parts = tok.split('/');
                    let v = resolve_index(parts.next().unwrap_or(""), positions.len())
                        .ok_or_else(|| err(format!("bad vertex reference {tok:?}")))?;
                    let _vt = parts.next();
                    if let Some(n) = parts.next().filter(|s| !s.is_empty()) {
                        let n = resolve_index(n, normals_table.len())
                            .ok_or_else(|| err(format!("bad normal reference {tok:?}")))?;
                        vertex_normal[v as usize] = Some(n);
                    }
                    corners.push(v);
                }
                if corners.len() < 3 {
                    return Err(err(format!("face needs 3 corners, got {}", corners.len())));
                }
                for i in 1..corners.len() - 1 {
                    triangles.push([corners[0], corners[i], corners[i + 1]]);
                }
            }
            _ => {}
        }
    }

    let normals = if !positions.is_empty() && vertex_normal.iter().all(Option::is_some) {
        Some(
            vertex_normal
                .iter()
                .map(|n| normals_table[n.unwrap() as usize])
                .collect(),
        )
    } else {
        None
    };
    let colors = (colored == Some(true)).then_some(colors);
    TriangleMesh::new(positions, triangles, colors, normals)
}

/// Resolves a 1-based or negative OBJ index against `count` entries.
fn resolve_index(s: &str, count: usize) -> Option<u32> {
    let i: i64 = s.parse().ok()?;
    let idx = if i > 0 {
        i - 1
    } else if i < 0 {
        count as i64 + i
    } else {
        return None;
    };
    (0..count as i64).contains(&idx).then_some(idx as u32)
}

pub fn write_obj(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_obj_to(mesh, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_obj_to<W: Write>(mesh: &TriangleMesh, w: &mut W) -> std::io::Result<()> {
    let colors = mesh.colors();
    for (i, p) in mesh.positions().iter().enumerate() {
        match colors {
            Some(c) => writeln!(
                w,
                "v {} {} {} {} {} {}",
                p.x, p.y, p.z, c[i][0], c[i][1], c[i][2]
            )?,
            None => writeln!(w, "v {} {} {}", p.x, p.y, p.z)?,
        }
    }
    if let Some(ns) = mesh.normals() {
        for n in ns {
            writeln!(w, "vn {} {} {}", n.x, n.y, n.z)?;
        }
        for t in mesh.triangles() {
            let [a, b, c] = t.map(|i| i + 1);
            writeln!(w, "f {a}//{a} {b}//{b} {c}//{c}")?;
        }
    } else {
        for t in mesh.triangles() {
            writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<TriangleMesh> {
        parse_obj(s.as_bytes(), Path::new("test.obj"))
    }

    #[test]
    fn parses_quad_with_colors_and_normals() {
        let m = parse(
            "# quad\nv 0 0 0 1 0 0\nv 1 0 0 0 1 0\nv 1 1 0 0 0 1\nv 0 1 0 1 1 1\n\
             vn 0 0 2\nvt 0 0\nf 1/1/1 2/1/1 3/1/1 4/1/1\n",
        )
        .unwrap();
        assert_eq!(m.triangle_count(), 2);
        assert_eq!(m.triangles()[1], [0, 2, 3]);
        assert_eq!(m.colors().unwrap()[1], [0.0, 1.0, 0.0]);
        assert_eq!(m.normals().unwrap()[3], Vec3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn negative_indices() {
        let m = parse("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n").unwrap();
        assert_eq!(m.triangles(), &[[0, 1, 2]]);
        assert!(m.colors().is_none());
        assert!(m.normals().is_none());
    }

    #[test]
    fn reports_line_of_error() {
        let err = parse("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 4),
            e => panic!("unexpected {e}"),
        }
        let err = parse("v 0 0 0\nv 1 0 x\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn write_then_read() {
        let m = parse("v 0 0 0 0.5 0.5 0.5\nv 1 0 0 1 1 1\nv 0 1 0.25 0 0 0\nf 1 2 3\n").unwrap();
        let mut buf = Vec::new();
        write_obj_to(&m, &mut buf).unwrap();
        let back = parse(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
