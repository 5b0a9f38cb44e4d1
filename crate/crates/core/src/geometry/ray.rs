use super::Vec3;

/// A half-line `origin + t * direction` for `t > t_min`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    direction: Vec3,
    pub t_min: f64,
}

impl Ray {
    /// Builds a ray; `direction` is normalized and must be non-zero.
    pub fn new(origin: Vec3, direction: Vec3) -> Self {
        let len = direction.norm();
        assert!(len > 0.0 && len.is_finite(), "ray direction must be non-zero");
        Self {
            origin,
            direction: direction / len,
            t_min: 0.0,
        }
    }

    pub fn with_t_min(mut self, t_min: f64) -> Self {
        assert!(t_min >= 0.0, "t_min must be non-negative");
        self.t_min = t_min;
        self
    }

    #[inline]
    pub fn direction(&self) -> Vec3 {
        self.direction
    }

    #[inline]
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// One ray/triangle intersection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub triangle: u32,
    /// Weights of the triangle's three corners, in index order.
    pub bary: [f64; 3],
}

impl Hit {
    pub fn point(&self, corners: &[Vec3; 3]) -> Vec3 {
        corners[0] * self.bary[0] + corners[1] * self.bary[1] + corners[2] * self.bary[2]
    }
}

/// Per-ray constants of the watertight ray/triangle test (axis permutation and
/// shear that map the ray onto +z).
#[derive(Debug, Clone, Copy)]
pub struct ShearedRay {
    origin: Vec3,
    kx: usize,
    ky: usize,
    kz: usize,
    sx: f64,
    sy: f64,
    sz: f64,
    t_min: f64,
}

impl ShearedRay {
    pub fn new(ray: &Ray) -> Self {
        let d = ray.direction;
        let abs = d.abs();
        let kz = if abs.x >= abs.y && abs.x >= abs.z {
            0
        } else if abs.y >= abs.z {
            1
        } else {
            2
        };
        let mut kx = (kz + 1) % 3;
        let mut ky = (kx + 1) % 3;
        if d[kz] < 0.0 {
            std::mem::swap(&mut kx, &mut ky);
        }
        Self {
            origin: ray.origin,
            kx,
            ky,
            kz,
            sx: d[kx] / d[kz],
            sy: d[ky] / d[kz],
            sz: 1.0 / d[kz],
            t_min: ray.t_min,
        }
    }

    /// Watertight intersection (Woop, Benthin and Wald). Edge functions of an
    /// edge shared by two triangles are exact negations of each other, so a
    /// ray through a shared edge can never slip between the two faces.
    #[inline]
    pub fn intersect(&self, corners: &[Vec3; 3], triangle: u32) -> Option<Hit> {
        let a = corners[0] - self.origin;
        let b = corners[1] - self.origin;
        let c = corners[2] - self.origin;
        let (kx, ky, kz) = (self.kx, self.ky, self.kz);

        let ax = a[kx] - self.sx * a[kz];
        let ay = a[ky] - self.sy * a[kz];
        let bx = b[kx] - self.sx * b[kz];
        let by = b[ky] - self.sy * b[kz];
        let cx = c[kx] - self.sx * c[kz];
        let cy = c[ky] - self.sy * c[kz];

        let u = cx * by - cy * bx;
        let v = ax * cy - ay * cx;
        let w = bx * ay - by * ax;

        if (u < 0.0 || v < 0.0 || w < 0.0) && (u > 0.0 || v > 0.0 || w > 0.0) {
            return None;
        }
        let det = u + v + w;
        if det == 0.0 {
            return None;
        }
        let az = self.sz * a[kz];
        let bz = self.sz * b[kz];
        let cz = self.sz * c[kz];
        let t = (u * az + v * bz + w * cz) / det;
        if !(t > self.t_min) || !t.is_finite() {
            return None;
        }
        let inv = 1.0 / det;
        Some(Hit {
            t,
            triangle,
            bary: [u * inv, v * inv, w * inv],
        })
    }
}

/// Sorts hits by `(t, triangle)` and collapses runs of consecutive hits closer
/// than `eps` in `t` into the member with the lowest triangle id.
pub fn merge_coincident(hits: &mut Vec<Hit>, eps: f64) {
    hits.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.triangle.cmp(&b.triangle)));
    if hits.len() < 2 {
        return;
    }
    let mut out: Vec<Hit> = Vec::with_capacity(hits.len());
    let mut prev_t = f64::NEG_INFINITY;
    for h in hits.drain(..) {
        match out.last_mut() {
            Some(keep) if h.t - prev_t < eps => {
                if h.triangle < keep.triangle {
                    *keep = h;
                }
            }
            _ => out.push(h),
        }
        prev_t = h.t;
    }
    *hits = out;
}
