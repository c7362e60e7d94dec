//! Synthetic indoor scenes with known ground truth.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{polygon_area, rng_for, unit_sphere, Aabb, ConvexSampler, Vec2, Vec3};
use crate::pointcloud::PointCloud;

/// A convex prism room. The polygon is counter-clockwise in plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub polygon: Vec<[f64; 2]>,
    pub z_lo: f64,
    pub z_hi: f64,
    /// Edges (index `i` runs from vertex `i` to `i + 1`) left unsampled.
    #[serde(default)]
    pub open_edges: Vec<usize>,
}

/// Axis-aligned furniture box standing inside a room.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClutterBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub rooms: Vec<RoomSpec>,
    #[serde(default)]
    pub clutter: Vec<ClutterBox>,
    /// Points per square meter of visible surface.
    pub density: f64,
    /// Standard deviation of the noise along the surface normal.
    pub noise: f64,
    pub outliers: usize,
    /// Outliers are uniform in the building box grown by `outer`, minus the
    /// box grown by `inner`.
    pub outlier_inner: f64,
    pub outlier_outer: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GtRoom {
    pub polygon: Vec<[f64; 2]>,
    pub z_lo: f64,
    pub z_hi: f64,
    pub volume: f64,
}

/// A wall between two rooms: the midline of two facing room edges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GtWall {
    pub rooms: (usize, usize),
    pub start: [f64; 2],
    pub end: [f64; 2],
    pub thickness: f64,
    pub z_lo: f64,
    pub z_hi: f64,
}

/// A slab separating two stacked rooms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GtSlab {
    pub rooms: (usize, usize),
    pub z_lo: f64,
    pub z_hi: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub rooms: Vec<GtRoom>,
    pub walls: Vec<GtWall>,
    pub slabs: Vec<GtSlab>,
    /// True room per point; `None` for outliers.
    pub labels: Vec<Option<u32>>,
    pub outlier: Vec<bool>,
}

impl GroundTruth {
    pub fn outlier_count(&self) -> usize {
        self.outlier.iter().filter(|&&o| o).count()
    }
}

fn v2(p: [f64; 2]) -> Vec2 {
    Vec2::new(p[0], p[1])
}

impl RoomSpec {
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64, z_lo: f64, z_hi: f64) -> Self {
        RoomSpec {
            polygon: vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]],
            z_lo,
            z_hi,
            open_edges: Vec::new(),
        }
    }

    fn poly(&self) -> Vec<Vec2> {
        self.polygon.iter().copied().map(v2).collect()
    }

    pub fn area(&self) -> f64 {
        polygon_area(&self.poly())
    }

    pub fn volume(&self) -> f64 {
        self.area() * (self.z_hi - self.z_lo)
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        if p.z <= self.z_lo || p.z >= self.z_hi {
            return false;
        }
        let poly = self.poly();
        let q = Vec2::new(p.x, p.y);
        (0..poly.len()).all(|i| {
            let a = poly[i];
            let b = poly[(i + 1) % poly.len()];
            (b - a).perp(&(q - a)) > 0.0
        })
    }

    fn is_convex_ccw(&self) -> bool {
        let poly = self.poly();
        let n = poly.len();
        n >= 3
            && (0..n).all(|i| {
                let a = poly[i];
                let b = poly[(i + 1) % n];
                let c = poly[(i + 2) % n];
                (b - a).perp(&(c - b)) > 0.0
            })
    }
}

/// Separating-axis test on the plan polygons plus z overlap.
fn rooms_overlap(a: &RoomSpec, b: &RoomSpec) -> bool {
    if a.z_hi <= b.z_lo || b.z_hi <= a.z_lo {
        return false;
    }
    let (pa, pb) = (a.poly(), b.poly());
    for poly in [&pa, &pb] {
        for i in 0..poly.len() {
            let e = poly[(i + 1) % poly.len()] - poly[i];
            let axis = Vec2::new(-e.y, e.x);
            let range = |p: &[Vec2]| {
                p.iter()
                    .map(|q| q.dot(&axis))
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)))
            };
            let (la, ha) = range(&pa);
            let (lb, hb) = range(&pb);
            if ha <= lb + 1e-12 || hb <= la + 1e-12 {
                return false;
            }
        }
    }
    true
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rooms.is_empty() {
            return Err(Error::Invalid("scene has no rooms".into()));
        }
        if self.density.is_nan() || self.density <= 0.0 || self.noise < 0.0 {
            return Err(Error::Invalid("density must be positive and noise non-negative".into()));
        }
        if self.outlier_inner < 0.0 || self.outlier_outer <= self.outlier_inner {
            return Err(Error::Invalid("outlier shell needs 0 <= inner < outer".into()));
        }
        for (i, r) in self.rooms.iter().enumerate() {
            if !r.is_convex_ccw() || r.z_hi <= r.z_lo {
                return Err(Error::Invalid(format!("room {i} is not a convex counter-clockwise prism")));
            }
        }
        for i in 0..self.rooms.len() {
            for j in i + 1..self.rooms.len() {
                if rooms_overlap(&self.rooms[i], &self.rooms[j]) {
                    return Err(Error::Invalid(format!("rooms {i} and {j} overlap")));
                }
            }
        }
        Ok(())
    }

    pub fn bounds(&self) -> Aabb {
        let mut b = Aabb::empty();
        for r in &self.rooms {
            for p in &r.polygon {
                b.grow(&Vec3::new(p[0], p[1], r.z_lo));
                b.grow(&Vec3::new(p[0], p[1], r.z_hi));
            }
        }
        b
    }

    /// Visible surface area that gets sampled.
    pub fn surface_area(&self) -> f64 {
        surfaces(self).iter().map(|s| s.area()).sum()
    }
}

/// A planar convex patch to sample, with its into-room normal.
struct Surface {
    origin: Vec3,
    u: Vec3,
    v: Vec3,
    poly: Vec<Vec2>,
    normal: Vec3,
    label: u32,
}

impl Surface {
    fn area(&self) -> f64 {
        polygon_area(&self.poly).abs()
    }

    fn rect(origin: Vec3, u: Vec3, v: Vec3, normal: Vec3, label: u32) -> Self {
        let (lu, lv) = (u.norm(), v.norm());
        Surface {
            origin,
            u: u / lu,
            v: v / lv,
            poly: vec![Vec2::zeros(), Vec2::new(lu, 0.0), Vec2::new(lu, lv), Vec2::new(0.0, lv)],
            normal,
            label,
        }
    }
}

fn surfaces(spec: &SceneSpec) -> Vec<Surface> {
    let mut out = Vec::new();
    for (k, r) in spec.rooms.iter().enumerate() {
        let label = k as u32;
        let poly = r.poly();
        out.push(Surface {
            origin: Vec3::new(0.0, 0.0, r.z_lo),
            u: Vec3::x(),
            v: Vec3::y(),
            poly: poly.clone(),
            normal: Vec3::z(),
            label,
        });
        out.push(Surface {
            origin: Vec3::new(0.0, 0.0, r.z_hi),
            u: Vec3::x(),
            v: Vec3::y(),
            poly: poly.clone(),
            normal: -Vec3::z(),
            label,
        });
        for i in 0..poly.len() {
            if r.open_edges.contains(&i) {
                continue;
            }
            let a = poly[i];
            let b = poly[(i + 1) % poly.len()];
            let e = b - a;
            let inward = Vec3::new(-e.y, e.x, 0.0).normalize();
            out.push(Surface::rect(
                Vec3::new(a.x, a.y, r.z_lo),
                Vec3::new(e.x, e.y, 0.0),
                Vec3::new(0.0, 0.0, r.z_hi - r.z_lo),
                inward,
                label,
            ));
        }
    }
    for c in &spec.clutter {
        let center = Vec3::new(
            0.5 * (c.min[0] + c.max[0]),
            0.5 * (c.min[1] + c.max[1]),
            0.5 * (c.min[2] + c.max[2]),
        );
        let Some(room) = spec.rooms.iter().position(|r| r.contains(&center)) else {
            continue;
        };
        let label = room as u32;
        let [x0, y0, z0] = c.min;
        let [x1, y1, z1] = c.max;
        let (dx, dy, dz) = (x1 - x0, y1 - y0, z1 - z0);
        out.push(Surface::rect(Vec3::new(x0, y0, z1), Vec3::new(dx, 0.0, 0.0), Vec3::new(0.0, dy, 0.0), Vec3::z(), label));
        out.push(Surface::rect(Vec3::new(x0, y0, z0), Vec3::new(0.0, dy, 0.0), Vec3::new(0.0, 0.0, dz), -Vec3::x(), label));
        out.push(Surface::rect(Vec3::new(x1, y0, z0), Vec3::new(0.0, dy, 0.0), Vec3::new(0.0, 0.0, dz), Vec3::x(), label));
        out.push(Surface::rect(Vec3::new(x0, y0, z0), Vec3::new(dx, 0.0, 0.0), Vec3::new(0.0, 0.0, dz), -Vec3::y(), label));
        out.push(Surface::rect(Vec3::new(x0, y1, z0), Vec3::new(dx, 0.0, 0.0), Vec3::new(0.0, 0.0, dz), Vec3::y(), label));
    }
    out
}

/// Pairs of facing room edges closer than 0.6 m become ground-truth walls.
fn find_walls(spec: &SceneSpec) -> Vec<GtWall> {
    let mut walls = Vec::new();
    for i in 0..spec.rooms.len() {
        for j in i + 1..spec.rooms.len() {
            let (ri, rj) = (&spec.rooms[i], &spec.rooms[j]);
            let z_lo = ri.z_lo.max(rj.z_lo);
            let z_hi = ri.z_hi.min(rj.z_hi);
            if z_hi <= z_lo {
                continue;
            }
            let (pi, pj) = (ri.poly(), rj.poly());
            for a in 0..pi.len() {
                let (a0, a1) = (pi[a], pi[(a + 1) % pi.len()]);
                let da = (a1 - a0).normalize();
                for b in 0..pj.len() {
                    let (b0, b1) = (pj[b], pj[(b + 1) % pj.len()]);
                    let db = (b1 - b0).normalize();
                    if da.dot(&db) > -0.9999 {
                        continue;
                    }
                    // room i lies to the left of its edge, so the wall extends to the right
                    let gap = -da.perp(&(b0 - a0));
                    if !(gap > 0.0 && gap <= 0.6) {
                        continue;
                    }
                    let (s0, s1) = (0.0f64, (a1 - a0).norm());
                    let t0 = (b1 - a0).dot(&da);
                    let t1 = (b0 - a0).dot(&da);
                    let lo = s0.max(t0.min(t1));
                    let hi = s1.min(t0.max(t1));
                    if hi - lo <= 1e-9 {
                        continue;
                    }
                    let right = Vec2::new(da.y, -da.x);
                    let p = a0 + right * (0.5 * gap);
                    let (s, e) = (p + da * lo, p + da * hi);
                    walls.push(GtWall {
                        rooms: (i, j),
                        start: [s.x, s.y],
                        end: [e.x, e.y],
                        thickness: gap,
                        z_lo,
                        z_hi,
                    });
                }
            }
        }
    }
    walls
}

fn find_slabs(spec: &SceneSpec) -> Vec<GtSlab> {
    let mut slabs = Vec::new();
    for (i, a) in spec.rooms.iter().enumerate() {
        for (j, b) in spec.rooms.iter().enumerate() {
            let gap = b.z_lo - a.z_hi;
            if i != j && gap > 0.0 && gap <= 0.6 {
                let flat = |r: &RoomSpec| RoomSpec { z_lo: 0.0, z_hi: 1.0, ..r.clone() };
                if rooms_overlap(&flat(a), &flat(b)) {
                    slabs.push(GtSlab {
                        rooms: (i, j),
                        z_lo: a.z_hi,
                        z_hi: b.z_lo,
                    });
                }
            }
        }
    }
    slabs
}

/// Sample the scene. Points carry their true into-room normals; outliers get
/// random normals.
pub fn generate(spec: &SceneSpec) -> Result<(PointCloud, GroundTruth)> {
    spec.validate()?;
    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::Invalid(e.to_string()))?;
    let mut positions = Vec::new();
    let mut normals = Vec::new();
    let mut labels = Vec::new();
    for (k, s) in surfaces(spec).iter().enumerate() {
        let mut rng = rng_for(spec.seed, 1, k as u64);
        let count = (s.area() * spec.density).round() as usize;
        let sampler = ConvexSampler::new(&s.poly);
        for _ in 0..count {
            let q = sampler.sample(&mut rng);
            let n: f64 = if spec.noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            positions.push(s.origin + s.u * q.x + s.v * q.y + s.normal * n);
            normals.push(s.normal);
            labels.push(Some(s.label));
        }
    }
    let b = spec.bounds();
    let outer = b.expanded(spec.outlier_outer);
    let inner = b.expanded(spec.outlier_inner);
    let mut rng = rng_for(spec.seed, 2, 0);
    let mut placed = 0;
    while placed < spec.outliers {
        let p = Vec3::new(
            rng.random_range(outer.min[0]..outer.max[0]),
            rng.random_range(outer.min[1]..outer.max[1]),
            rng.random_range(outer.min[2]..outer.max[2]),
        );
        if inner.contains(&p) {
            continue;
        }
        positions.push(p);
        normals.push(unit_sphere(&mut rng));
        labels.push(None);
        placed += 1;
    }
    let outlier = labels.iter().map(Option::is_none).collect();
    let gt = GroundTruth {
        rooms: spec
            .rooms
            .iter()
            .map(|r| GtRoom {
                polygon: r.polygon.clone(),
                z_lo: r.z_lo,
                z_hi: r.z_hi,
                volume: r.volume(),
            })
            .collect(),
        walls: find_walls(spec),
        slabs: find_slabs(spec),
        labels: labels.clone(),
        outlier,
    };
    let mut cloud = PointCloud::with_normals(positions, normals);
    cloud.labels = None;
    Ok((cloud, gt))
}

/// Named scenes used by tests and examples.
pub mod presets {
    use super::*;

    fn base(rooms: Vec<RoomSpec>, seed: u64) -> SceneSpec {
        SceneSpec {
            rooms,
            clutter: Vec::new(),
            density: 500.0,
            noise: 0.005,
            outliers: 500,
            outlier_inner: 3.0,
            outlier_outer: 8.0,
            seed,
        }
    }

    /// One 4 × 5 × 2.6 m room.
    pub fn single_room(seed: u64) -> SceneSpec {
        base(vec![RoomSpec::rect(0.0, 0.0, 4.0, 5.0, 0.0, 2.6)], seed)
    }

    /// Two rooms sharing a 0.24 m wall.
    pub fn two_rooms(seed: u64) -> SceneSpec {
        base(
            vec![
                RoomSpec::rect(0.0, 0.0, 4.0, 5.0, 0.0, 2.6),
                RoomSpec::rect(4.24, 0.0, 8.24, 5.0, 0.0, 2.6),
            ],
            seed,
        )
    }

    /// Two stories of the two-room plan separated by a 0.3 m slab.
    pub fn two_stories(seed: u64) -> SceneSpec {
        base(
            vec![
                RoomSpec::rect(0.0, 0.0, 4.0, 5.0, 0.0, 2.6),
                RoomSpec::rect(4.24, 0.0, 8.24, 5.0, 0.0, 2.6),
                RoomSpec::rect(0.0, 0.0, 4.0, 5.0, 2.9, 5.5),
                RoomSpec::rect(4.24, 0.0, 8.24, 5.0, 2.9, 5.5),
            ],
            seed,
        )
    }

    /// Three rooms; the third has a wall rotated 30° off the y axis.
    pub fn non_manhattan(seed: u64) -> SceneSpec {
        base(
            vec![
                RoomSpec::rect(0.0, 0.0, 4.0, 4.0, 0.0, 2.6),
                RoomSpec::rect(4.24, 0.0, 8.0, 4.0, 0.0, 2.6),
                RoomSpec {
                    polygon: vec![[0.0, 4.24], [6.0, 4.24], [ROTATED_TOP_X, 7.74], [0.0, 7.74]],
                    z_lo: 0.0,
                    z_hi: 2.6,
                    open_edges: Vec::new(),
                },
            ],
            seed,
        )
    }

    /// x coordinate where the rotated wall meets y = 7.74.
    pub const ROTATED_TOP_X: f64 = 8.020_725_942_163_69;

    /// Two rooms with large cabinets that produce spurious vertical planes.
    pub fn cluttered_two_rooms(seed: u64) -> SceneSpec {
        let mut s = two_rooms(seed);
        s.clutter = vec![
            ClutterBox { min: [0.8, 3.8, 0.0], max: [3.2, 4.4, 1.4] },
            ClutterBox { min: [5.0, 0.6, 0.0], max: [5.6, 3.6, 1.2] },
        ];
        s
    }

    /// Room with a corridor whose far end was never scanned.
    pub fn open_hallway(seed: u64) -> SceneSpec {
        base(
            vec![
                RoomSpec::rect(0.0, 0.0, 4.0, 5.0, 0.0, 2.6),
                RoomSpec {
                    open_edges: vec![1],
                    ..RoomSpec::rect(4.24, 2.0, 7.24, 3.5, 0.0, 2.6)
                },
            ],
            seed,
        )
    }

    pub fn by_name(name: &str, seed: u64) -> Option<SceneSpec> {
        Some(match name {
            "s1" | "single-room" => single_room(seed),
            "s2" | "two-rooms" => two_rooms(seed),
            "s3" | "two-stories" => two_stories(seed),
            "s4" | "non-manhattan" => non_manhattan(seed),
            "cluttered" => cluttered_two_rooms(seed),
            "hallway" => open_hallway(seed),
            _ => return None,
        })
    }

    pub const NAMES: &[&str] = &["s1", "s2", "s3", "s4", "cluttered", "hallway"];
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_points_lie_on_surfaces() {
        let mut spec = presets::single_room(0);
        spec.noise = 0.0;
        spec.outliers = 0;
        let (cloud, gt) = generate(&spec).unwrap();
        for p in &cloud.positions {
            let d = [p.x, p.x - 4.0, p.y, p.y - 5.0, p.z, p.z - 2.6]
                .iter()
                .map(|v| v.abs())
                .fold(f64::INFINITY, f64::min);
            assert!(d < 1e-12, "{p:?}");
        }
        assert!(gt.labels.iter().all(|l| *l == Some(0)));
    }

    #[test]
    fn point_count_tracks_density() {
        let spec = presets::two_rooms(0);
        let (cloud, gt) = generate(&spec).unwrap();
        let surface = cloud.len() - gt.outlier_count();
        let expected = spec.density * spec.surface_area();
        assert!((surface as f64 - expected).abs() / expected < 0.01);
        // floor, ceiling and four walls per room
        let oracle = 2.0 * (2.0 * 20.0 + 2.0 * (4.0 + 5.0) * 2.6);
        assert!((spec.surface_area() - oracle).abs() < 1e-9);
    }

    #[test]
    fn two_rooms_partition_labels() {
        let (_, gt) = generate(&presets::two_rooms(0)).unwrap();
        let a = gt.labels.iter().filter(|l| **l == Some(0)).count();
        let b = gt.labels.iter().filter(|l| **l == Some(1)).count();
        assert!(a > 0 && b > 0);
        assert_eq!(a + b + gt.outlier_count(), gt.labels.len());
        assert_eq!(gt.walls.len(), 1);
        assert!((gt.walls[0].thickness - 0.24).abs() < 1e-12);
        assert!((gt.walls[0].start[0] - 4.12).abs() < 1e-12 && gt.walls[0].start[1] == 0.0);
    }

    #[test]
    fn exact_outlier_count_outside_inner_shell() {
        let spec = presets::two_rooms(3);
        let (cloud, gt) = generate(&spec).unwrap();
        assert_eq!(gt.outlier_count(), 500);
        let inner = spec.bounds().expanded(spec.outlier_inner);
        for (p, o) in cloud.positions.iter().zip(&gt.outlier) {
            if *o {
                assert!(!inner.contains(p));
            }
        }
    }

    #[test]
    fn deterministic() {
        let a = generate(&presets::non_manhattan(7)).unwrap();
        let b = generate(&presets::non_manhattan(7)).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn overlapping_rooms_rejected() {
        let mut spec = presets::single_room(0);
        spec.rooms.push(RoomSpec::rect(3.0, 3.0, 6.0, 6.0, 1.0, 2.0));
        assert!(matches!(generate(&spec), Err(Error::Invalid(_))));
    }

    #[test]
    fn stories_produce_slabs() {
        let (_, gt) = generate(&presets::two_stories(0)).unwrap();
        assert_eq!(gt.slabs.len(), 2);
        assert_eq!(gt.walls.len(), 2);
    }

    #[test]
    fn rotated_wall_is_thirty_degrees() {
        let spec = presets::non_manhattan(0);
        let p = &spec.rooms[2].polygon;
        let d = Vec2::new(p[2][0] - p[1][0], p[2][1] - p[1][1]);
        let angle = d.x.atan2(d.y).to_degrees();
        assert!((angle - 30.0).abs() < 1e-6, "{angle}");
    }
}
