//! `LBSM` body-model container.
//!
//! All values little-endian:
//!
//! | field            | type  | count         |
//! |------------------|-------|---------------|
//! | magic `"LBSM"`   | bytes | 4             |
//! | version (= 1)    | u32   | 1             |
//! | V, F, J, S, P    | u32   | 5             |
//! | template         | f32   | V·3           |
//! | faces            | u32   | F·3           |
//! | skinning weights | f32   | V·J           |
//! | shape blendshapes| f32   | V·3·S         |
//! | pose blendshapes | f32   | V·3·P         |
//! | joint regressor  | f32   | J·V           |
//! | parents          | i32   | J (−1 = root) |
//!
//! `P` must equal `9 (J − 1)`.
//!
//! SMPL-style dumps convert through [`from_smpl_json`], which expects a JSON
//! object with the keys of the common pickle layout: `v_template` (V×3),
//! `f` (F×3), `weights` (V×J), `shapedirs` (V×3×S), `posedirs` (V×3×P),
//! `J_regressor` (J×V, dense) and `kintree_table` (2×J, first row parents;
//! a parent of −1 or 4294967295 marks the root).

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::Deserialize;

use super::BodyModel;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"LBSM";
pub const VERSION: u32 = 1;

pub fn write_lbsm<W: Write>(model: &BodyModel, w: &mut W) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    let dims = [
        VERSION,
        model.vertex_count() as u32,
        model.faces.len() as u32,
        model.joint_count() as u32,
        model.num_shape as u32,
        model.pose_feature_count() as u32,
    ];
    for d in dims {
        w.write_all(&d.to_le_bytes())?;
    }
    let put = |w: &mut W, xs: &[f32]| -> std::io::Result<()> {
        for x in xs {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    };
    put(w, model.template.as_flattened())?;
    for i in model.faces.as_flattened() {
        w.write_all(&i.to_le_bytes())?;
    }
    put(w, &model.weights)?;
    put(w, &model.shape_dirs)?;
    put(w, &model.pose_dirs)?;
    put(w, &model.joint_regressor)?;
    for p in &model.parents {
        let v: i32 = p.map_or(-1, |p| p as i32);
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn save_lbsm(model: &BodyModel, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_lbsm(model, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_lbsm(path: &Path) -> Result<BodyModel> {
    let mut buf = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    parse_lbsm(&buf)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let s = self
            .buf
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::format("LBSM", "file truncated"))?;
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::format("LBSM", "size overflow"))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn parse_lbsm(buf: &[u8]) -> Result<BodyModel> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(Error::format("LBSM", "bad magic"));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::format("LBSM", format!("unsupported version {version}")));
    }
    let v = c.u32()? as usize;
    let f = c.u32()? as usize;
    let j = c.u32()? as usize;
    let s = c.u32()? as usize;
    let p = c.u32()? as usize;
    if j == 0 || p != 9 * (j - 1) {
        return Err(Error::format("LBSM", format!("P = {p} does not match J = {j}")));
    }
    let template = c
        .f32s(v * 3)?
        .chunks_exact(3)
        .map(|x| [x[0], x[1], x[2]])
        .collect();
    let faces = c
        .take(f * 12)?
        .chunks_exact(12)
        .map(|b| {
            [0, 4, 8].map(|o| u32::from_le_bytes(b[o..o + 4].try_into().unwrap()))
        })
        .collect();
    let weights = c.f32s(v * j)?;
    let shape_dirs = c.f32s(v * 3 * s)?;
    let pose_dirs = c.f32s(v * 3 * p)?;
    let regressor = c.f32s(j * v)?;
    let parents = c
        .take(j * 4)?
        .chunks_exact(4)
        .map(|b| {
            let x = i32::from_le_bytes(b.try_into().unwrap());
            (x >= 0).then_some(x as usize)
        })
        .collect();
    if c.pos != buf.len() {
        return Err(Error::format("LBSM", "trailing bytes after parents"));
    }
    BodyModel::new(template, faces, weights, shape_dirs, s, pose_dirs, regressor, parents)
}

#[derive(Deserialize)]
struct SmplDump {
    v_template: Vec<[f64; 3]>,
    f: Vec<[u32; 3]>,
    weights: Vec<Vec<f64>>,
    shapedirs: Vec<Vec<Vec<f64>>>,
    posedirs: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "J_regressor")]
    j_regressor: Vec<Vec<f64>>,
    kintree_table: Vec<Vec<i64>>,
}

/// Converts an SMPL-style JSON dump (see module docs) into a [`BodyModel`].
pub fn from_smpl_json(text: &str) -> Result<BodyModel> {
    let d: SmplDump = serde_json::from_str(text)?;
    let v = d.v_template.len();
    let j = d.weights.first().map_or(0, Vec::len);
    let s = d.shapedirs.first().and_then(|x| x.first()).map_or(0, Vec::len);
    let dim = |what, expected, found| {
        if expected == found {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                what,
                expected,
                found,
            })
        }
    };
    dim("weights rows", v, d.weights.len())?;
    dim("shapedirs rows", v, d.shapedirs.len())?;
    dim("posedirs rows", v, d.posedirs.len())?;
    dim("J_regressor rows", j, d.j_regressor.len())?;
    if d.kintree_table.is_empty() {
        return Err(Error::InvalidModel("empty kintree_table".into()));
    }
    dim("kintree_table columns", j, d.kintree_table[0].len())?;

    let flat3 = |rows: &[Vec<Vec<f64>>], inner: usize, what| -> Result<Vec<f32>> {
        let mut out = Vec::with_capacity(rows.len() * 3 * inner);
        for r in rows {
            dim(what, 3, r.len())?;
            for c in r {
                dim(what, inner, c.len())?;
                out.extend(c.iter().map(|&x| x as f32));
            }
        }
        Ok(out)
    };
    let shape_dirs = flat3(&d.shapedirs, s, "shapedirs")?;
    let pose_dirs = flat3(&d.posedirs, 9 * j.saturating_sub(1), "posedirs")?;
    let mut weights = Vec::with_capacity(v * j);
    for row in &d.weights {
        dim("weights columns", j, row.len())?;
        weights.extend(row.iter().map(|&x| x as f32));
    }
    let mut regressor = Vec::with_capacity(j * v);
    for row in &d.j_regressor {
        dim("J_regressor columns", v, row.len())?;
        regressor.extend(row.iter().map(|&x| x as f32));
    }
    let parents = d.kintree_table[0]
        .iter()
        .map(|&p| (p >= 0 && p < j as i64).then_some(p as usize))
        .collect();
    BodyModel::new(
        d.v_template.iter().map(|p| p.map(|x| x as f32)).collect(),
        d.f,
        weights,
        shape_dirs,
        s,
        pose_dirs,
        regressor,
        parents,
    )
}
