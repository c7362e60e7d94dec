//! Small geometric helpers shared by every stage.

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;
pub type Vec2 = Vector2<f64>;

/// An orthonormal frame on the plane `{x : n·x = offset}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneFrame {
    pub normal: Vec3,
    pub offset: f64,
    pub u: Vec3,
    pub v: Vec3,
}

impl PlaneFrame {
    pub fn new(normal: Vec3, offset: f64) -> Self {
        let n = normal.normalize();
        let u = if n.z.abs() < 0.9 {
            Vec3::z().cross(&n).normalize()
        } else {
            let x = Vec3::x();
            (x - n * n.dot(&x)).normalize()
        };
        let v = n.cross(&u);
        PlaneFrame {
            normal: n,
            offset,
            u,
            v,
        }
    }

    pub fn origin(&self) -> Vec3 {
        self.normal * self.offset
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.normal.dot(p) - self.offset
    }

    pub fn to_2d(&self, p: &Vec3) -> Vec2 {
        let d = p - self.origin();
        Vec2::new(d.dot(&self.u), d.dot(&self.v))
    }

    pub fn to_3d(&self, q: &Vec2) -> Vec3 {
        self.origin() + self.u * q.x + self.v * q.y
    }

    /// Ray parameter of the intersection, if the ray is not parallel.
    pub fn intersect_ray(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        let denom = self.normal.dot(dir);
        if denom.abs() < 1e-12 {
            return None;
        }
        Some((self.offset - self.normal.dot(origin)) / denom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: [f64::INFINITY; 3],
            max: [f64::NEG_INFINITY; 3],
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Self {
        let mut b = Aabb::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn grow(&mut self, p: &Vec3) {
        for k in 0..3 {
            self.min[k] = self.min[k].min(p[k]);
            self.max[k] = self.max[k].max(p[k]);
        }
    }

    pub fn union(&self, o: &Aabb) -> Aabb {
        let mut b = *self;
        for k in 0..3 {
            b.min[k] = b.min[k].min(o.min[k]);
            b.max[k] = b.max[k].max(o.max[k]);
        }
        b
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|k| self.min[k] > self.max[k])
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    pub fn expanded(&self, m: f64) -> Aabb {
        let mut b = *self;
        for k in 0..3 {
            b.min[k] -= m;
            b.max[k] += m;
        }
        b
    }

    pub fn volume(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        (0..3).map(|k| self.max[k] - self.min[k]).product()
    }

    pub fn center(&self) -> Vec3 {
        Vec3::new(
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
            0.5 * (self.min[2] + self.max[2]),
        )
    }

    pub fn diagonal(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        (0..3)
            .map(|k| (self.max[k] - self.min[k]).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Deterministic per-entity RNG stream.
pub fn rng_for(seed: u64, stream: u64, id: u64) -> ChaCha8Rng {
    let mut s = splitmix64(seed ^ 0x9e37_79b9_7f4a_7c15);
    s = splitmix64(s ^ stream.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    s = splitmix64(s ^ id);
    ChaCha8Rng::seed_from_u64(s)
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform direction on the unit sphere.
pub fn unit_sphere<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    let z: f64 = rng.random_range(-1.0..1.0);
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).max(0.0).sqrt();
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}

/// Uniform direction on the hemisphere around `n`.
pub fn unit_hemisphere<R: Rng + ?Sized>(rng: &mut R, n: &Vec3) -> Vec3 {
    let d = unit_sphere(rng);
    if d.dot(n) < 0.0 {
        -d
    } else {
        d
    }
}

pub fn polygon_area(poly: &[Vec2]) -> f64 {
    let n = poly.len();
    let mut a = 0.0;
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        a += p.x * q.y - q.x * p.y;
    }
    0.5 * a
}

pub fn polygon_diameter(poly: &[Vec2]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..poly.len() {
        for j in i + 1..poly.len() {
            d = d.max((poly[i] - poly[j]).norm());
        }
    }
    d
}

/// Uniform sample inside a convex polygon via an area-weighted fan.
pub struct ConvexSampler {
    tris: Vec<[Vec2; 3]>,
    cdf: Vec<f64>,
}

impl ConvexSampler {
    pub fn new(poly: &[Vec2]) -> Self {
        let mut tris = Vec::new();
        let mut cdf = Vec::new();
        let mut acc = 0.0;
        for i in 1..poly.len().saturating_sub(1) {
            let t = [poly[0], poly[i], poly[i + 1]];
            acc += polygon_area(&t).abs();
            tris.push(t);
            cdf.push(acc);
        }
        ConvexSampler { tris, cdf }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec2 {
        let total = *self.cdf.last().unwrap_or(&0.0);
        if self.tris.is_empty() {
            return Vec2::zeros();
        }
        let x = rng.random_range(0.0..1.0) * total;
        let k = self.cdf.partition_point(|&c| c < x).min(self.tris.len() - 1);
        let [a, b, c] = self.tris[k];
        let mut r1: f64 = rng.random_range(0.0..1.0);
        let mut r2: f64 = rng.random_range(0.0..1.0);
        if r1 + r2 > 1.0 {
            r1 = 1.0 - r1;
            r2 = 1.0 - r2;
        }
        a + (b - a) * r1 + (c - a) * r2
    }
}

/// Clip a convex polygon against the half-plane `n·p <= c`.
pub fn clip_halfplane(poly: &[Vec2], n: Vec2, c: f64) -> Vec<Vec2> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    let len = poly.len();
    for i in 0..len {
        let p = poly[i];
        let q = poly[(i + 1) % len];
        let sp = n.dot(&p) - c;
        let sq = n.dot(&q) - c;
        if sp <= 0.0 {
            out.push(p);
        }
        if (sp < 0.0 && sq > 0.0) || (sp > 0.0 && sq < 0.0) {
            let t = sp / (sp - sq);
            out.push(p + (q - p) * t);
        }
    }
    out
}

/// Intersection of a convex polygon with an axis-aligned rectangle.
pub fn clip_rect(poly: &[Vec2], min: Vec2, max: Vec2) -> Vec<Vec2> {
    let mut p = clip_halfplane(poly, Vec2::new(-1.0, 0.0), -min.x);
    p = clip_halfplane(&p, Vec2::new(1.0, 0.0), max.x);
    p = clip_halfplane(&p, Vec2::new(0.0, -1.0), -min.y);
    clip_halfplane(&p, Vec2::new(0.0, 1.0), max.y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn frame_round_trip() {
        for n in [
            Vec3::new(1.0, 2.0, 0.3),
            Vec3::new(0.0, 0.0, -1.0),
            Vec3::new(0.2, -0.1, 0.95),
        ] {
            let f = PlaneFrame::new(n, 1.7);
            assert_abs_diff_eq!(f.u.dot(&f.v), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(f.u.dot(&f.normal), 0.0, epsilon = 1e-12);
            let p = f.to_3d(&Vec2::new(0.4, -2.0));
            assert_abs_diff_eq!(f.signed_distance(&p), 0.0, epsilon = 1e-12);
            let q = f.to_2d(&p);
            assert_abs_diff_eq!(q.x, 0.4, epsilon = 1e-12);
            assert_abs_diff_eq!(q.y, -2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn vertical_frame_has_vertical_v() {
        let f = PlaneFrame::new(Vec3::new(0.6, 0.8, 0.0), 0.0);
        assert_abs_diff_eq!(f.v.z.abs(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.u.z, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rect_clip_area() {
        let tri = [Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0), Vec2::new(0.0, 2.0)];
        let c = clip_rect(&tri, Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0));
        assert_abs_diff_eq!(polygon_area(&c), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn convex_sampler_stays_inside() {
        let sq = [
            Vec2::new(0.0, 0.0),
            Vec2::new(2.0, 0.0),
            Vec2::new(2.0, 1.0),
            Vec2::new(0.0, 1.0),
        ];
        let s = ConvexSampler::new(&sq);
        let mut rng = rng_for(0, 0, 0);
        let mut left = 0;
        for _ in 0..4000 {
            let p = s.sample(&mut rng);
            assert!(p.x >= 0.0 && p.x <= 2.0 && p.y >= 0.0 && p.y <= 1.0);
            if p.x < 1.0 {
                left += 1;
            }
        }
        assert!((1800..2200).contains(&left));
    }
}
