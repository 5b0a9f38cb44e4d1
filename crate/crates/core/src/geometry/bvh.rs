//! Bounding volume hierarchy over the triangles of a [`TriangleMesh`].
//!
//! Built top-down with a binned surface-area heuristic; leaves hold at most
//! [`MAX_LEAF_TRIANGLES`] triangles. Nodes live in one flat array, children
//! of an interior node are stored next to each other.

use super::distance::closest_point_on_triangle;
use super::ray::{merge_coincident, Hit, ShearedRay};
use super::{Ray, TriangleMesh, Vec3};
use crate::error::{Error, Result};

pub const MAX_LEAF_TRIANGLES: usize = 8;
const SAH_BINS: usize = 16;
const TRAVERSAL_COST: f64 = 1.0;
const INTERSECT_COST: f64 = 1.0;

/// Relative tolerance (times the scene diagonal) under which consecutive
/// hits along one ray are treated as the same surface crossing.
pub const HIT_MERGE_RELATIVE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Self {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x
    }

    pub fn grow(&mut self, p: Vec3) {
        self.min = self.min.inf(&p);
        self.max = self.max.sup(&p);
    }

    pub fn union(&self, o: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&o.min),
            max: self.max.sup(&o.max),
        }
    }

    pub fn extent(&self) -> Vec3 {
        if self.is_empty() {
            Vec3::zeros()
        } else {
            self.max - self.min
        }
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn surface_area(&self) -> f64 {
        let e = self.extent();
        2.0 * (e.x * e.y + e.y * e.z + e.z * e.x)
    }

    pub fn contains(&self, o: &Aabb, slack: f64) -> bool {
        (0..3).all(|k| o.min[k] >= self.min[k] - slack && o.max[k] <= self.max[k] + slack)
    }

    /// Slab test; conservative by a few ulps so that traversal never rejects
    /// a box whose triangles the exact test would hit.
    #[inline]
    fn hit_by(&self, origin: &Vec3, inv_dir: &Vec3, t_min: f64, t_max: f64) -> bool {
        let mut lo = t_min;
        let mut hi = t_max;
        for k in 0..3 {
            if inv_dir[k].is_infinite() {
                // ray parallel to this slab
                if origin[k] < self.min[k] || origin[k] > self.max[k] {
                    return false;
                }
                continue;
            }
            let t0 = (self.min[k] - origin[k]) * inv_dir[k];
            let t1 = (self.max[k] - origin[k]) * inv_dir[k];
            let (near, far) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
            lo = lo.max(near - near.abs() * 1e-12);
            hi = hi.min(far + far.abs() * 1e-12);
        }
        lo <= hi
    }

    /// Squared distance from `p` to the box (0 inside).
    #[inline]
    pub fn distance_squared(&self, p: &Vec3) -> f64 {
        let mut d = 0.0;
        for k in 0..3 {
            let g = (self.min[k] - p[k]).max(p[k] - self.max[k]).max(0.0);
            d += g * g;
        }
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BvhNode {
    pub bounds: Aabb,
    /// Leaf: offset into the triangle order. Interior: index of the left child
    /// (the right child follows it).
    first: u32,
    /// Number of triangles for a leaf, zero for an interior node.
    count: u32,
}

impl BvhNode {
    pub fn is_leaf(&self) -> bool {
        self.count > 0
    }

    /// `(left, right)` child indices of an interior node.
    pub fn children(&self) -> Option<(usize, usize)> {
        (!self.is_leaf()).then(|| (self.first as usize, self.first as usize + 1))
    }
}

#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<BvhNode>,
    order: Vec<u32>,
    merge_eps: f64,
}

struct BuildPrim {
    bounds: Aabb,
    centroid: Vec3,
}

impl Bvh {
    pub fn build(mesh: &TriangleMesh) -> Result<Self> {
        if mesh.is_empty() {
            return Err(Error::EmptyMesh);
        }
        let prims: Vec<BuildPrim> = (0..mesh.triangle_count())
            .map(|t| {
                let mut b = Aabb::empty();
                for p in mesh.corners(t) {
                    b.grow(p);
                }
                BuildPrim {
                    bounds: b,
                    centroid: b.center(),
                }
            })
            .collect();
        let mut order: Vec<u32> = (0..prims.len() as u32).collect();
        let mut nodes = vec![BvhNode {
            bounds: Aabb::empty(),
            first: 0,
            count: 0,
        }];
        build_node(&prims, &mut order, &mut nodes, 0, 0, prims.len());
        let merge_eps = HIT_MERGE_RELATIVE * nodes[0].bounds.diagonal();
        Ok(Self {
            nodes,
            order,
            merge_eps,
        })
    }

    pub fn nodes(&self) -> &[BvhNode] {
        &self.nodes
    }

    pub fn root_bounds(&self) -> Aabb {
        self.nodes[0].bounds
    }

    /// Distance below which consecutive hits are merged.
    pub fn merge_eps(&self) -> f64 {
        self.merge_eps
    }

    /// Triangle ids stored in a leaf node.
    pub fn leaf_triangles(&self, node: usize) -> &[u32] {
        let n = &self.nodes[node];
        if n.is_leaf() {
            &self.order[n.first as usize..(n.first + n.count) as usize]
        } else {
            &[]
        }
    }

    /// All triangle ids below `node`.
    pub fn subtree_triangles(&self, node: usize) -> Vec<u32> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(i) = stack.pop() {
            match self.nodes[i].children() {
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
                None => out.extend_from_slice(self.leaf_triangles(i)),
            }
        }
        out
    }

    /// Checks the structural invariants against `mesh`: every triangle in
    /// exactly one leaf, leaves not over-full, and child boxes nested inside
    /// their parents.
    pub fn validate(&self, mesh: &TriangleMesh) -> std::result::Result<(), String> {
        let mut seen = vec![0u32; mesh.triangle_count()];
        for (i, n) in self.nodes.iter().enumerate() {
            if let Some((l, r)) = n.children() {
                for c in [l, r] {
                    if !n.bounds.contains(&self.nodes[c].bounds, 1e-9) {
                        return Err(format!("child {c} escapes parent {i}"));
                    }
                }
            } else {
                if n.count as usize > MAX_LEAF_TRIANGLES {
                    return Err(format!("leaf {i} holds {} triangles", n.count));
                }
                for &t in self.leaf_triangles(i) {
                    seen[t as usize] += 1;
                    for p in mesh.corners(t as usize) {
                        let mut b = Aabb::empty();
                        b.grow(p);
                        if !n.bounds.contains(&b, 1e-9) {
                            return Err(format!("triangle {t} outside leaf {i}"));
                        }
                    }
                }
            }
        }
        if let Some(t) = seen.iter().position(|&c| c != 1) {
            return Err(format!("triangle {t} appears in {} leaves", seen[t]));
        }
        Ok(())
    }

    /// Every intersection of `ray` with the mesh beyond `ray.t_min`, sorted by
    /// distance, with coincident crossings merged.
    pub fn intersect_all(&self, mesh: &TriangleMesh, ray: &Ray) -> Vec<Hit> {
        let mut hits = Vec::new();
        self.intersect_all_into(mesh, ray, &mut hits);
        hits
    }

    /// Same as [`Bvh::intersect_all`], reusing `hits` as scratch space.
    pub fn intersect_all_into(&self, mesh: &TriangleMesh, ray: &Ray, hits: &mut Vec<Hit>) {
        hits.clear();
        let sheared = ShearedRay::new(ray);
        let d = ray.direction();
        let inv = Vec3::new(1.0 / d.x, 1.0 / d.y, 1.0 / d.z);
        let mut stack: Vec<usize> = Vec::with_capacity(64);
        stack.push(0);
        while let Some(i) = stack.pop() {
            let node = &self.nodes[i];
            if !node
                .bounds
                .hit_by(&ray.origin, &inv, ray.t_min, f64::INFINITY)
            {
                continue;
            }
            match node.children() {
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
                None => {
                    for &t in self.leaf_triangles(i) {
                        if let Some(h) = sheared.intersect(&mesh.corners(t as usize), t) {
                            hits.push(h);
                        }
                    }
                }
            }
        }
        merge_coincident(hits, self.merge_eps);
    }

    /// Nearest surface point to `p`: `(distance², triangle, point)`.
    pub fn closest_point(&self, mesh: &TriangleMesh, p: &Vec3) -> (f64, u32, Vec3) {
        let mut best = (f64::INFINITY, u32::MAX, Vec3::zeros());
        let mut stack: Vec<(usize, f64)> = Vec::with_capacity(64);
        stack.push((0, self.nodes[0].bounds.distance_squared(p)));
        while let Some((i, box_d2)) = stack.pop() {
            if box_d2 > best.0 * (1.0 + 1e-12) {
                continue;
            }
            match self.nodes[i].children() {
                Some((l, r)) => {
                    let dl = self.nodes[l].bounds.distance_squared(p);
                    let dr = self.nodes[r].bounds.distance_squared(p);
                    // pop the nearer child first
                    if dl <= dr {
                        stack.push((r, dr));
                        stack.push((l, dl));
                    } else {
                        stack.push((l, dl));
                        stack.push((r, dr));
                    }
                }
                None => {
                    for &t in self.leaf_triangles(i) {
                        let q = closest_point_on_triangle(p, &mesh.corners(t as usize));
                        let d2 = (q - p).norm_squared();
                        if d2 < best.0 || (d2 == best.0 && t < best.1) {
                            best = (d2, t, q);
                        }
                    }
                }
            }
        }
        best
    }
}

fn build_node(
    prims: &[BuildPrim],
    order: &mut [u32],
    nodes: &mut Vec<BvhNode>,
    node: usize,
    start: usize,
    end: usize,
) {
    let mut bounds = Aabb::empty();
    let mut cbounds = Aabb::empty();
    for &t in &order[start..end] {
        bounds = bounds.union(&prims[t as usize].bounds);
        cbounds.grow(prims[t as usize].centroid);
    }
    nodes[node].bounds = bounds;
    let count = end - start;
    let make_leaf = |nodes: &mut Vec<BvhNode>| {
        nodes[node].first = start as u32;
        nodes[node].count = count as u32;
    };
    if count == 1 {
        make_leaf(nodes);
        return;
    }

    let split = best_sah_split(prims, &order[start..end], &cbounds);
    let leaf_cost = INTERSECT_COST * count as f64;
    let mid = match split {
        Some((axis, bin, cost)) if count > MAX_LEAF_TRIANGLES || cost < leaf_cost => {
            let lo = cbounds.min[axis];
            let scale = SAH_BINS as f64 / (cbounds.max[axis] - lo);
            let slice = &mut order[start..end];
            let mut left = 0;
            for i in 0..slice.len() {
                let b = bin_index(prims[slice[i] as usize].centroid[axis], lo, scale);
                if b <= bin {
                    slice.swap(i, left);
                    left += 1;
                }
            }
            start + left
        }
        Some(_) => {
            make_leaf(nodes);
            return;
        }
        None if count <= MAX_LEAF_TRIANGLES => {
            make_leaf(nodes);
            return;
        }
        // all centroids coincide: split the list in half
        None => start + count / 2,
    };
    let mid = if mid == start || mid == end {
        start + count / 2
    } else {
        mid
    };

    let left = nodes.len();
    let empty = BvhNode {
        bounds: Aabb::empty(),
        first: 0,
        count: 0,
    };
    nodes.push(empty);
    nodes.push(empty);
    nodes[node].first = left as u32;
    nodes[node].count = 0;
    build_node(prims, order, nodes, left, start, mid);
    build_node(prims, order, nodes, left + 1, mid, end);
}

#[inline]
fn bin_index(c: f64, lo: f64, scale: f64) -> usize {
    (((c - lo) * scale) as usize).min(SAH_BINS - 1)
}

/// Returns `(axis, last bin of the left side, cost)` of the cheapest binned
/// split, or `None` when every centroid coincides.
fn best_sah_split(prims: &[BuildPrim], ids: &[u32], cbounds: &Aabb) -> Option<(usize, usize, f64)> {
    let ext = cbounds.extent();
    let mut best: Option<(usize, usize, f64)> = None;
    let parent_area = ids
        .iter()
        .fold(Aabb::empty(), |b, &t| b.union(&prims[t as usize].bounds))
        .surface_area()
        .max(f64::MIN_POSITIVE);
    for axis in 0..3 {
        if !(ext[axis] > 0.0) {
            continue;
        }
        let lo = cbounds.min[axis];
        let scale = SAH_BINS as f64 / ext[axis];
        let mut bins = [(Aabb::empty(), 0usize); SAH_BINS];
        for &t in ids {
            let p = &prims[t as usize];
            let b = bin_index(p.centroid[axis], lo, scale);
            bins[b].0 = bins[b].0.union(&p.bounds);
            bins[b].1 += 1;
        }
        let mut right_area = [0.0; SAH_BINS];
        let mut right_count = [0usize; SAH_BINS];
        let mut acc = (Aabb::empty(), 0usize);
        for i in (1..SAH_BINS).rev() {
            acc.0 = acc.0.union(&bins[i].0);
            acc.1 += bins[i].1;
            right_area[i] = acc.0.surface_area();
            right_count[i] = acc.1;
        }
        let mut left = (Aabb::empty(), 0usize);
        for i in 0..SAH_BINS - 1 {
            left.0 = left.0.union(&bins[i].0);
            left.1 += bins[i].1;
            let rc = right_count[i + 1];
            if left.1 == 0 || rc == 0 {
                continue;
            }
            let cost = TRAVERSAL_COST
                + INTERSECT_COST
                    * (left.0.surface_area() * left.1 as f64 + right_area[i + 1] * rc as f64)
                    / parent_area;
            if best.is_none_or(|b| cost < b.2) {
                best = Some((axis, i, cost));
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_triangle() -> TriangleMesh {
        TriangleMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(2.0, 0.0, 1.0),
                Vec3::new(0.0, 3.0, 0.0),
            ],
            vec![[0, 1, 2]],
            None,
            None,
        )
        .unwrap()
    }

    #[test]
    fn single_triangle_gives_one_leaf() {
        let mesh = single_triangle();
        let bvh = Bvh::build(&mesh).unwrap();
        assert_eq!(bvh.nodes().len(), 1);
        assert!(bvh.nodes()[0].is_leaf());
        let b = bvh.root_bounds();
        assert_eq!(b.min, Vec3::new(0.0, 0.0, 0.0));
        assert_eq!(b.max, Vec3::new(2.0, 3.0, 1.0));
        bvh.validate(&mesh).unwrap();
    }

    #[test]
    fn empty_mesh_is_an_error() {
        let mesh = TriangleMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0],
            vec![[0, 1, 2]],
            None,
            None,
        )
        .unwrap();
        assert!(matches!(Bvh::build(&mesh), Err(Error::EmptyMesh)));
    }

    #[test]
    fn closest_point_above_triangle() {
        let mesh = single_triangle();
        let bvh = Bvh::build(&mesh).unwrap();
        let (d2, t, _) = bvh.closest_point(&mesh, &Vec3::new(-1.0, -1.0, 0.0));
        assert_eq!(t, 0);
        assert!((d2 - 2.0).abs() < 1e-15);
    }
}
