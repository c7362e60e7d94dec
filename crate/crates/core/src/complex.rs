//! Cell complex as a stack of 2D line arrangements. Vertical surfaces become
//! lines of an exact rational arrangement; horizontal surfaces cut z.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::candidates::{CandidateSet, SurfaceClass, WallKind};
use crate::error::{Error, Result};
use crate::geom::{clip_rect, polygon_area, polygon_diameter, Aabb, Vec2, Vec3};

pub type Q = BigRational;

/// Snapping scale: directions and offsets are rounded to multiples of 1e-9.
pub const SNAP: f64 = 1e9;

fn snap(v: f64) -> BigInt {
    BigInt::from((v * SNAP).round() as i64)
}

fn q(v: BigInt) -> Q {
    Q::from_integer(v)
}

pub fn to_f64(v: &Q) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

/// `a·x + b·y = c`; the positive side is where `a·x + b·y > c`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ExactLine {
    pub a: Q,
    pub b: Q,
    pub c: Q,
}

impl ExactLine {
    /// Line `n·p = offset` with direction and offset rounded to 1e-9.
    pub fn snapped(n: Vec2, offset: f64) -> Self {
        ExactLine {
            a: q(snap(n.x)),
            b: q(snap(n.y)),
            c: q(snap(offset)),
        }
    }

    pub fn eval(&self, p: &[Q; 2]) -> Q {
        &self.a * &p[0] + &self.b * &p[1] - &self.c
    }

    pub fn is_parallel(&self, o: &ExactLine) -> bool {
        (&self.a * &o.b - &self.b * &o.a).is_zero()
    }

    pub fn intersection(&self, o: &ExactLine) -> Option<[Q; 2]> {
        let det = &self.a * &o.b - &self.b * &o.a;
        if det.is_zero() {
            return None;
        }
        let x = (&self.c * &o.b - &self.b * &o.c) / &det;
        let y = (&self.a * &o.c - &self.c * &o.a) / &det;
        Some([x, y])
    }

    pub fn normal_f64(&self) -> Vec2 {
        Vec2::new(to_f64(&self.a), to_f64(&self.b)).normalize()
    }
}

#[derive(Clone, Debug)]
pub struct Edge2D {
    pub vertices: (usize, usize),
    pub faces: Vec<usize>,
    pub line: Option<usize>,
}

/// Bounded faces of a line arrangement clipped to a rectangle. Face
/// polygons are convex and counter-clockwise.
#[derive(Clone, Debug, Default)]
pub struct Arrangement2D {
    pub vertices: Vec<[Q; 2]>,
    pub faces: Vec<Vec<usize>>,
    pub edges: Vec<Edge2D>,
}

impl Arrangement2D {
    /// `V − E + F` counting the unbounded face.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edges.len() as i64 + self.faces.len() as i64 + 1
    }

    pub fn face_area_exact(&self, f: usize) -> Q {
        let poly = &self.faces[f];
        let mut acc = Q::zero();
        for i in 0..poly.len() {
            let p = &self.vertices[poly[i]];
            let r = &self.vertices[poly[(i + 1) % poly.len()]];
            acc += &p[0] * &r[1] - &r[0] * &p[1];
        }
        acc / q(BigInt::from(2))
    }

    pub fn face_centroid(&self, f: usize) -> [Q; 2] {
        let poly = &self.faces[f];
        let n = q(BigInt::from(poly.len()));
        let mut c = [Q::zero(), Q::zero()];
        for &v in poly {
            c[0] += &self.vertices[v][0];
            c[1] += &self.vertices[v][1];
        }
        [&c[0] / &n, &c[1] / &n]
    }

    pub fn vertex_f64(&self, v: usize) -> Vec2 {
        Vec2::new(to_f64(&self.vertices[v][0]), to_f64(&self.vertices[v][1]))
    }

    pub fn face_polygon(&self, f: usize) -> Vec<Vec2> {
        self.faces[f].iter().map(|&v| self.vertex_f64(v)).collect()
    }
}

struct VertexStore {
    vertices: Vec<[Q; 2]>,
    index: HashMap<[Q; 2], usize>,
}

impl VertexStore {
    fn id(&mut self, p: [Q; 2]) -> usize {
        if let Some(&i) = self.index.get(&p) {
            return i;
        }
        self.vertices.push(p.clone());
        self.index.insert(p, self.vertices.len() - 1);
        self.vertices.len() - 1
    }
}

/// Exact arrangement by incremental splitting of convex faces.
pub fn exact_arrangement_2d(lines: &[ExactLine], lo: [Q; 2], hi: [Q; 2]) -> Arrangement2D {
    let mut store = VertexStore {
        vertices: Vec::new(),
        index: HashMap::new(),
    };
    let corners = [
        [lo[0].clone(), lo[1].clone()],
        [hi[0].clone(), lo[1].clone()],
        [hi[0].clone(), hi[1].clone()],
        [lo[0].clone(), hi[1].clone()],
    ];
    let mut faces: Vec<Vec<usize>> = vec![corners.into_iter().map(|c| store.id(c)).collect()];
    for line in lines {
        let mut next = Vec::with_capacity(faces.len() + 8);
        for poly in faces {
            let s: Vec<Q> = poly.iter().map(|&v| line.eval(&store.vertices[v])).collect();
            let pos = s.iter().any(|v| v.is_positive());
            let neg = s.iter().any(|v| v.is_negative());
            if !(pos && neg) {
                next.push(poly);
                continue;
            }
            let (mut left, mut right) = (Vec::new(), Vec::new());
            for i in 0..poly.len() {
                let j = (i + 1) % poly.len();
                if !s[i].is_negative() {
                    left.push(poly[i]);
                }
                if !s[i].is_positive() {
                    right.push(poly[i]);
                }
                if (s[i].is_positive() && s[j].is_negative()) || (s[i].is_negative() && s[j].is_positive()) {
                    let (p, r) = (&store.vertices[poly[i]], &store.vertices[poly[j]]);
                    let t = &s[i] / (&s[i] - &s[j]);
                    let x = [&p[0] + (&r[0] - &p[0]) * &t, &p[1] + (&r[1] - &p[1]) * &t];
                    let v = store.id(x);
                    left.push(v);
                    right.push(v);
                }
            }
            next.push(left);
            next.push(right);
        }
        faces = next;
    }
    let vertices = store.vertices;
    let mut edge_index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut edges: Vec<Edge2D> = Vec::new();
    for (f, poly) in faces.iter().enumerate() {
        for i in 0..poly.len() {
            let (u, v) = (poly[i], poly[(i + 1) % poly.len()]);
            let key = (u.min(v), u.max(v));
            let e = *edge_index.entry(key).or_insert_with(|| {
                let line = lines
                    .iter()
                    .position(|l| l.eval(&vertices[u]).is_zero() && l.eval(&vertices[v]).is_zero());
                edges.push(Edge2D {
                    vertices: key,
                    faces: Vec::new(),
                    line,
                });
                edges.len() - 1
            });
            edges[e].faces.push(f);
        }
    }
    Arrangement2D {
        vertices,
        faces,
        edges,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexParams {
    pub merge_tolerance: f64,
    pub bbox_margin: f64,
    pub z_margin: f64,
    pub slab_footprint_margin: f64,
}

impl Default for ComplexParams {
    fn default() -> Self {
        ComplexParams {
            merge_tolerance: 0.005,
            bbox_margin: 1.0,
            z_margin: 0.3,
            slab_footprint_margin: 0.6,
        }
    }
}

/// A surface lying on an arrangement plane, with `sign = +1` when its
/// normal agrees with the plane's orientation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaneRef {
    pub surface: usize,
    pub sign: i8,
}

#[derive(Clone, Debug)]
pub struct ArrangementLine {
    pub line: ExactLine,
    pub normal: Vec2,
    pub offset: f64,
    pub surfaces: Vec<PlaneRef>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZCut {
    pub z: f64,
    /// Orientation: the primary surface faces up.
    pub up: bool,
    pub surfaces: Vec<PlaneRef>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlaneId {
    Line(usize),
    Cut(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub id: usize,
    pub face2d: usize,
    pub zi: usize,
    pub z: (f64, f64),
    pub volume: f64,
    pub diameter: f64,
    /// Wall candidates containing this cell, sorted.
    pub walls: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaceKind {
    Lateral { edge: usize, line: usize },
    Horizontal { cut: usize },
}

/// Face between `ca` and `cb`; `normal` points into `ca`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientedFace {
    pub id: usize,
    pub ca: usize,
    pub cb: usize,
    pub area: f64,
    pub diameter: f64,
    pub normal: Vec3,
    pub kind: FaceKind,
    pub polygon: Vec<Vec3>,
    /// Walls containing `cb` but not `ca`.
    pub boundary_walls: Vec<usize>,
    /// Walls containing both cells.
    pub inner_walls: Vec<usize>,
}

impl OrientedFace {
    pub fn plane(&self) -> PlaneId {
        match self.kind {
            FaceKind::Lateral { line, .. } => PlaneId::Line(line),
            FaceKind::Horizontal { cut } => PlaneId::Cut(cut),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CellComplex {
    pub arrangement: Arrangement2D,
    pub lines: Vec<ArrangementLine>,
    pub cuts: Vec<ZCut>,
    /// `bbox.min.z`, the cut heights, `bbox.max.z`.
    pub z_levels: Vec<f64>,
    pub bbox: Aabb,
    pub cells: Vec<Cell>,
    pub faces: Vec<OrientedFace>,
    /// Arrangement plane of every candidate surface.
    pub surface_plane: Vec<(PlaneId, i8)>,
    pub face_polygons: Vec<Vec<Vec2>>,
    pub face_sides: Vec<Vec<i8>>,
    pub cell_faces: Vec<Vec<usize>>,
}

impl CellComplex {
    pub fn nz(&self) -> usize {
        self.z_levels.len() - 1
    }

    pub fn cell_id(&self, face2d: usize, zi: usize) -> usize {
        face2d * self.nz() + zi
    }

    pub fn cell_polygon(&self, c: usize) -> &[Vec2] {
        &self.face_polygons[self.cells[c].face2d]
    }

    pub fn cell_center(&self, c: usize) -> Vec3 {
        let poly = self.cell_polygon(c);
        let m = poly.iter().fold(Vec2::zeros(), |a, p| a + p) / poly.len() as f64;
        let (lo, hi) = self.cells[c].z;
        Vec3::new(m.x, m.y, 0.5 * (lo + hi))
    }

    /// Cell whose prism contains `p`, if any.
    pub fn locate(&self, p: &Vec3) -> Option<usize> {
        let zi = self.z_levels.windows(2).position(|w| p.z >= w[0] && p.z < w[1])?;
        let q = Vec2::new(p.x, p.y);
        let f = self.face_polygons.iter().position(|poly| {
            (0..poly.len()).all(|i| (poly[(i + 1) % poly.len()] - poly[i]).perp(&(q - poly[i])) >= 0.0)
        })?;
        Some(self.cell_id(f, zi))
    }

    pub fn total_volume(&self) -> f64 {
        self.cells.iter().map(|c| c.volume).sum()
    }

    /// Wall cell sets `C_w`.
    pub fn wall_cells(&self, n_walls: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); n_walls];
        for c in &self.cells {
            for &w in &c.walls {
                out[w].push(c.id);
            }
        }
        out
    }

    /// Inner faces of a wall that are not a boundary face of any other wall.
    pub fn inner_face_diagnostics(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for f in &self.faces {
            if f.boundary_walls.is_empty() {
                out.extend(f.inner_walls.iter().map(|&w| (f.id, w)));
            }
        }
        out
    }

    pub fn debug_dump(&self) -> ComplexDump {
        ComplexDump {
            bbox: self.bbox,
            z_levels: self.z_levels.clone(),
            cells: self
                .cells
                .iter()
                .map(|c| CellDump {
                    id: c.id,
                    footprint: self.cell_polygon(c.id).iter().map(|p| [p.x, p.y]).collect(),
                    z: [c.z.0, c.z.1],
                    volume: c.volume,
                    walls: c.walls.clone(),
                })
                .collect(),
            faces: self
                .faces
                .iter()
                .map(|f| FaceDump {
                    id: f.id,
                    cells: [f.ca, f.cb],
                    area: f.area,
                    boundary_walls: f.boundary_walls.clone(),
                    inner_walls: f.inner_walls.clone(),
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellDump {
    pub id: usize,
    pub footprint: Vec<[f64; 2]>,
    pub z: [f64; 2],
    pub volume: f64,
    pub walls: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FaceDump {
    pub id: usize,
    pub cells: [usize; 2],
    pub area: f64,
    pub boundary_walls: Vec<usize>,
    pub inner_walls: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComplexDump {
    pub bbox: Aabb,
    pub z_levels: Vec<f64>,
    pub cells: Vec<CellDump>,
    pub faces: Vec<FaceDump>,
}

/// Surfaces ordered by decreasing support so the best-observed surface of a
/// merged group fixes its orientation.
fn by_support(set: &CandidateSet, class: SurfaceClass) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..set.surfaces.len()).filter(|&i| set.surfaces[i].class == class).collect();
    idx.sort_by(|&a, &b| {
        let (sa, sb) = (&set.surfaces[a], &set.surfaces[b]);
        sb.occupancy.count().cmp(&sa.occupancy.count()).then(a.cmp(&b))
    });
    idx
}

fn exact(v: f64) -> Q {
    Q::new(snap(v), snap(1.0))
}

pub fn build_complex(set: &CandidateSet, params: &ComplexParams) -> Result<CellComplex> {
    let mut surface_plane = vec![(PlaneId::Line(usize::MAX), 0i8); set.surfaces.len()];

    let mut lines: Vec<ArrangementLine> = Vec::new();
    for s in by_support(set, SurfaceClass::Wall) {
        let surf = &set.surfaces[s];
        let n = Vec2::new(surf.normal().x, surf.normal().y);
        let candidate = ExactLine::snapped(n, surf.offset());
        let found = lines.iter().position(|l| {
            if !l.line.is_parallel(&candidate) {
                return false;
            }
            let sign = if l.normal.dot(&n) >= 0.0 { 1.0 } else { -1.0 };
            (sign * surf.offset() - l.offset).abs() <= params.merge_tolerance
        });
        match found {
            Some(k) => {
                let sign = if lines[k].normal.dot(&n) >= 0.0 { 1 } else { -1 };
                lines[k].surfaces.push(PlaneRef { surface: s, sign });
                surface_plane[s] = (PlaneId::Line(k), sign);
            }
            None => {
                lines.push(ArrangementLine {
                    normal: candidate.normal_f64(),
                    line: candidate,
                    offset: surf.offset(),
                    surfaces: vec![PlaneRef { surface: s, sign: 1 }],
                });
                surface_plane[s] = (PlaneId::Line(lines.len() - 1), 1);
            }
        }
    }

    let mut cuts: Vec<ZCut> = Vec::new();
    for s in by_support(set, SurfaceClass::Slab) {
        let surf = &set.surfaces[s];
        let up = surf.normal().z > 0.0;
        let z = surf.offset() * surf.normal().z.signum();
        match cuts.iter().position(|c| (c.z - z).abs() <= params.merge_tolerance) {
            Some(k) => {
                let sign = if cuts[k].up == up { 1 } else { -1 };
                cuts[k].surfaces.push(PlaneRef { surface: s, sign });
                surface_plane[s] = (PlaneId::Cut(k), sign);
            }
            None => {
                cuts.push(ZCut {
                    z,
                    up,
                    surfaces: vec![PlaneRef { surface: s, sign: 1 }],
                });
                surface_plane[s] = (PlaneId::Cut(cuts.len() - 1), 1);
            }
        }
    }
    if cuts.len() < 2 {
        return Err(Error::Config("cannot bound interior vertically: fewer than 2 horizontal planes".into()));
    }
    if lines.is_empty() {
        return Err(Error::Config("no vertical wall candidates".into()));
    }

    let mut footprint = Aabb::empty();
    for s in &set.surfaces {
        if !s.bounds.is_empty() {
            footprint = footprint.union(&s.bounds);
        }
    }
    if footprint.is_empty() {
        return Err(Error::Config("candidate surfaces have no extent".into()));
    }
    let zmin = cuts.iter().map(|c| c.z).fold(f64::INFINITY, f64::min) - params.z_margin;
    let zmax = cuts.iter().map(|c| c.z).fold(f64::NEG_INFINITY, f64::max) + params.z_margin;
    let m = params.bbox_margin;
    let bbox = Aabb {
        min: [footprint.min[0] - m, footprint.min[1] - m, zmin],
        max: [footprint.max[0] + m, footprint.max[1] + m, zmax],
    };
    let lo = [exact(bbox.min[0]), exact(bbox.min[1])];
    let hi = [exact(bbox.max[0]), exact(bbox.max[1])];
    let bbox = Aabb {
        min: [to_f64(&lo[0]), to_f64(&lo[1]), zmin],
        max: [to_f64(&hi[0]), to_f64(&hi[1]), zmax],
    };

    let exact_lines: Vec<ExactLine> = lines.iter().map(|l| l.line.clone()).collect();
    let arrangement = exact_arrangement_2d(&exact_lines, lo, hi);

    let mut order: Vec<usize> = (0..cuts.len()).collect();
    order.sort_by(|&a, &b| cuts[a].z.total_cmp(&cuts[b].z));
    let mut remap = vec![0; cuts.len()];
    for (new, &old) in order.iter().enumerate() {
        remap[old] = new;
    }
    let cuts: Vec<ZCut> = order.iter().map(|&i| cuts[i].clone()).collect();
    for sp in surface_plane.iter_mut() {
        if let (PlaneId::Cut(k), _) = sp {
            *k = remap[*k];
        }
    }
    let mut z_levels = vec![zmin];
    z_levels.extend(cuts.iter().map(|c| c.z));
    z_levels.push(zmax);
    let nz = z_levels.len() - 1;

    let face_polygons: Vec<Vec<Vec2>> = (0..arrangement.faces.len()).map(|f| arrangement.face_polygon(f)).collect();
    let face_areas: Vec<f64> = (0..arrangement.faces.len())
        .map(|f| to_f64(&arrangement.face_area_exact(f)))
        .collect();
    let face_sides: Vec<Vec<i8>> = (0..arrangement.faces.len())
        .map(|f| {
            let c = arrangement.face_centroid(f);
            exact_lines
                .iter()
                .map(|l| {
                    let v = l.eval(&c);
                    if v.is_positive() {
                        1
                    } else if v.is_negative() {
                        -1
                    } else {
                        0
                    }
                })
                .collect()
        })
        .collect();

    let mut cells = Vec::with_capacity(face_polygons.len() * nz);
    for (f, poly) in face_polygons.iter().enumerate() {
        let d2 = polygon_diameter(poly);
        for zi in 0..nz {
            let (z0, z1) = (z_levels[zi], z_levels[zi + 1]);
            let h = z1 - z0;
            cells.push(Cell {
                id: f * nz + zi,
                face2d: f,
                zi,
                z: (z0, z1),
                volume: face_areas[f] * h,
                diameter: (d2 * d2 + h * h).sqrt(),
                walls: Vec::new(),
            });
        }
    }

    let cut_side = |k: usize, zi: usize| -> i8 {
        let mid = 0.5 * (z_levels[zi] + z_levels[zi + 1]);
        let above = if mid > cuts[k].z { 1 } else { -1 };
        if cuts[k].up {
            above
        } else {
            -above
        }
    };
    for w in &set.walls {
        let (sa, sb) = (&set.surfaces[w.surface_a], &set.surfaces[w.surface_b]);
        let (pa, pb) = (surface_plane[w.surface_a], surface_plane[w.surface_b]);
        let bounds = sa.bounds.union(&sb.bounds);
        match w.kind {
            WallKind::Vertical => {
                let (PlaneId::Line(la), PlaneId::Line(lb)) = (pa.0, pb.0) else {
                    continue;
                };
                let hit: Vec<usize> = (0..nz)
                    .filter(|&k| z_levels[k] < bounds.max[2] && z_levels[k + 1] > bounds.min[2])
                    .collect();
                let (Some(&k0), Some(&k1)) = (hit.first(), hit.last()) else {
                    continue;
                };
                let (k0, k1) = (k0.saturating_sub(1), (k1 + 1).min(nz - 1));
                for (f, sides) in face_sides.iter().enumerate() {
                    if pa.1 * sides[la] < 0 && pb.1 * sides[lb] < 0 {
                        for zi in k0..=k1 {
                            cells[f * nz + zi].walls.push(w.id);
                        }
                    }
                }
            }
            WallKind::Horizontal => {
                let (PlaneId::Cut(ka), PlaneId::Cut(kb)) = (pa.0, pb.0) else {
                    continue;
                };
                let e = params.slab_footprint_margin;
                let fmin = Vec2::new(bounds.min[0] - e, bounds.min[1] - e);
                let fmax = Vec2::new(bounds.max[0] + e, bounds.max[1] + e);
                for (f, poly) in face_polygons.iter().enumerate() {
                    if polygon_area(&clip_rect(poly, fmin, fmax)).abs() <= 1e-12 {
                        continue;
                    }
                    for zi in 0..nz {
                        if pa.1 * cut_side(ka, zi) < 0 && pb.1 * cut_side(kb, zi) < 0 {
                            cells[f * nz + zi].walls.push(w.id);
                        }
                    }
                }
            }
        }
    }
    for c in &mut cells {
        c.walls.sort_unstable();
        c.walls.dedup();
    }

    let wall_sets = |ca: usize, cb: usize, cells: &[Cell]| {
        let (wa, wb) = (&cells[ca].walls, &cells[cb].walls);
        let boundary: Vec<usize> = wb.iter().copied().filter(|w| wa.binary_search(w).is_err()).collect();
        let inner: Vec<usize> = wb.iter().copied().filter(|w| wa.binary_search(w).is_ok()).collect();
        (boundary, inner)
    };
    let mut faces = Vec::new();
    for (e, edge) in arrangement.edges.iter().enumerate() {
        let (Some(line), [f1, f2]) = (edge.line, edge.faces.as_slice()) else {
            continue;
        };
        let (fa, fb) = if face_sides[*f1][line] > 0 { (*f1, *f2) } else { (*f2, *f1) };
        let p0 = arrangement.vertex_f64(edge.vertices.0);
        let p1 = arrangement.vertex_f64(edge.vertices.1);
        let len = (p1 - p0).norm();
        let n2 = lines[line].normal;
        for zi in 0..nz {
            let (z0, z1) = (z_levels[zi], z_levels[zi + 1]);
            let (ca, cb) = (fa * nz + zi, fb * nz + zi);
            let (boundary_walls, inner_walls) = wall_sets(ca, cb, &cells);
            faces.push(OrientedFace {
                id: faces.len(),
                ca,
                cb,
                area: len * (z1 - z0),
                diameter: (len * len + (z1 - z0).powi(2)).sqrt(),
                normal: Vec3::new(n2.x, n2.y, 0.0),
                kind: FaceKind::Lateral { edge: e, line },
                polygon: vec![
                    Vec3::new(p0.x, p0.y, z0),
                    Vec3::new(p1.x, p1.y, z0),
                    Vec3::new(p1.x, p1.y, z1),
                    Vec3::new(p0.x, p0.y, z1),
                ],
                boundary_walls,
                inner_walls,
            });
        }
    }
    for (f, poly) in face_polygons.iter().enumerate() {
        let d2 = polygon_diameter(poly);
        for (k, cut) in cuts.iter().enumerate() {
            let (lower, upper) = (f * nz + k, f * nz + k + 1);
            let (ca, cb) = if cut.up { (upper, lower) } else { (lower, upper) };
            let (boundary_walls, inner_walls) = wall_sets(ca, cb, &cells);
            faces.push(OrientedFace {
                id: faces.len(),
                ca,
                cb,
                area: face_areas[f],
                diameter: d2,
                normal: if cut.up { Vec3::z() } else { -Vec3::z() },
                kind: FaceKind::Horizontal { cut: k },
                polygon: poly.iter().map(|p| Vec3::new(p.x, p.y, cut.z)).collect(),
                boundary_walls,
                inner_walls,
            });
        }
    }
    let mut cell_faces = vec![Vec::new(); cells.len()];
    for f in &faces {
        cell_faces[f.ca].push(f.id);
        cell_faces[f.cb].push(f.id);
    }

    let complex = CellComplex {
        arrangement,
        lines,
        cuts,
        z_levels,
        bbox,
        cells,
        faces,
        surface_plane,
        face_polygons,
        face_sides,
        cell_faces,
    };
    let diag = complex.inner_face_diagnostics();
    if !diag.is_empty() {
        log::debug!("{} inner faces are not the boundary of another wall", diag.len());
    }
    Ok(complex)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidates::{pair_walls, CandidateParams, SurfaceCandidate};
    use crate::fixtures::box_room;
    use proptest::prelude::*;

    fn surface(class: SurfaceClass, normal: Vec3, offset: f64, min: [f64; 3], max: [f64; 3]) -> SurfaceCandidate {
        crate::fixtures::box_surface(class, normal, offset, min, max, Some(0), 1)
    }

    fn qi(v: i64) -> Q {
        Q::from_integer(BigInt::from(v))
    }

    fn line(a: i64, b: i64, c: i64) -> ExactLine {
        ExactLine { a: qi(a), b: qi(b), c: qi(c) }
    }

    fn unit_box(n: i64) -> ([Q; 2], [Q; 2]) {
        ([qi(0), qi(0)], [qi(n), qi(n)])
    }

    #[test]
    fn two_crossing_lines() {
        let (lo, hi) = unit_box(10);
        let arr = exact_arrangement_2d(&[line(1, 0, 5), line(0, 1, 5)], lo, hi);
        assert_eq!(arr.faces.len(), 4);
        assert_eq!(arr.euler_characteristic(), 2);
        let interior = arr
            .vertices
            .iter()
            .filter(|v| v.iter().all(|c| c > &qi(0) && c < &qi(10)))
            .count();
        assert_eq!(interior, 1);
    }

    #[test]
    fn parallel_lines() {
        let (lo, hi) = unit_box(10);
        let lines: Vec<ExactLine> = (1..=6).map(|k| line(1, 0, k)).collect();
        let arr = exact_arrangement_2d(&lines, lo, hi);
        assert_eq!(arr.faces.len(), 7);
        assert_eq!(arr.euler_characteristic(), 2);
    }

    /// Faces added by each line: one more than its distinct crossings with
    /// earlier lines strictly inside the box, or none if it misses the box.
    fn face_count_oracle(lines: &[ExactLine], lo: &[Q; 2], hi: &[Q; 2]) -> usize {
        let inside = |p: &[Q; 2]| p[0] > lo[0] && p[0] < hi[0] && p[1] > lo[1] && p[1] < hi[1];
        let crosses_box = |l: &ExactLine| {
            let corners = [
                [lo[0].clone(), lo[1].clone()],
                [hi[0].clone(), lo[1].clone()],
                [hi[0].clone(), hi[1].clone()],
                [lo[0].clone(), hi[1].clone()],
            ];
            let s: Vec<Q> = corners.iter().map(|c| l.eval(c)).collect();
            s.iter().any(|v| v.is_positive()) && s.iter().any(|v| v.is_negative())
        };
        let mut faces = 1;
        let mut seen: Vec<&ExactLine> = Vec::new();
        for l in lines {
            let dup = seen.iter().any(|o| o.is_parallel(l) && {
                let p = if !l.a.is_zero() { [&l.c / &l.a, Q::zero()] } else { [Q::zero(), &l.c / &l.b] };
                o.eval(&p).is_zero()
            });
            if crosses_box(l) && !dup {
                let mut pts: Vec<[Q; 2]> = seen.iter().filter_map(|o| o.intersection(l)).filter(|p| inside(p)).collect();
                pts.sort();
                pts.dedup();
                faces += pts.len() + 1;
            }
            seen.push(l);
        }
        faces
    }

    #[test]
    fn random_lines_match_incremental_oracle() {
        use rand::Rng;
        let (lo, hi) = unit_box(100);
        for seed in 0..100u64 {
            let mut rng = crate::geom::rng_for(seed, 5, 0);
            let n = rng.random_range(1..=10);
            let lines: Vec<ExactLine> = (0..n)
                .map(|_| {
                    let (a, b) = loop {
                        let a: i64 = rng.random_range(-5..=5);
                        let b: i64 = rng.random_range(-5..=5);
                        if a != 0 || b != 0 {
                            break (a, b);
                        }
                    };
                    line(a, b, rng.random_range(-300..=600))
                })
                .collect();
            let arr = exact_arrangement_2d(&lines, lo.clone(), hi.clone());
            assert_eq!(arr.euler_characteristic(), 2, "seed {seed}");
            assert_eq!(arr.faces.len(), face_count_oracle(&lines, &lo, &hi), "seed {seed}");
            let total: Q = (0..arr.faces.len()).map(|f| arr.face_area_exact(f)).sum();
            assert_eq!(total, qi(100 * 100));
            for f in 0..arr.faces.len() {
                assert!(arr.face_area_exact(f).is_positive());
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn faces_are_convex_and_ccw(coeffs in prop::collection::vec((-7i64..=7, -7i64..=7, -50i64..=80), 1..8)) {
            let lines: Vec<ExactLine> = coeffs.iter().filter(|(a, b, _)| *a != 0 || *b != 0).map(|&(a, b, c)| line(a, b, c)).collect();
            let (lo, hi) = unit_box(10);
            let arr = exact_arrangement_2d(&lines, lo, hi);
            prop_assert_eq!(arr.euler_characteristic(), 2);
            for poly in &arr.faces {
                for i in 0..poly.len() {
                    let p = &arr.vertices[poly[i]];
                    let r = &arr.vertices[poly[(i + 1) % poly.len()]];
                    let s = &arr.vertices[poly[(i + 2) % poly.len()]];
                    let cross = (&r[0] - &p[0]) * (&s[1] - &r[1]) - (&r[1] - &p[1]) * (&s[0] - &r[0]);
                    prop_assert!(!cross.is_negative());
                }
            }
        }
    }

    #[test]
    fn box_room_grid_counts() {
        let set = pair_walls(box_room(4.0, 5.0, 2.6), 1, &CandidateParams::default());
        let cx = build_complex(&set, &ComplexParams::default()).unwrap();
        // 4 lines per axis (surfaces plus virtual partners), 4 z cuts
        let nx = 4;
        let ny = 4;
        assert_eq!(cx.lines.len(), nx + ny);
        assert_eq!(cx.arrangement.faces.len(), (nx + 1) * (ny + 1));
        assert_eq!(cx.cuts.len(), 4);
        assert_eq!(cx.cells.len(), (nx + 1) * (ny + 1) * 5);
        assert_eq!(cx.arrangement.euler_characteristic(), 2);
        let b = cx.bbox;
        assert!((cx.total_volume() - b.volume()).abs() <= 1e-6 * b.volume());
    }

    #[test]
    fn box_room_faces_tile_planes() {
        let set = pair_walls(box_room(4.0, 5.0, 2.6), 1, &CandidateParams::default());
        let cx = build_complex(&set, &ComplexParams::default()).unwrap();
        let b = cx.bbox;
        let (w, d, h) = (b.max[0] - b.min[0], b.max[1] - b.min[1], b.max[2] - b.min[2]);
        for (k, l) in cx.lines.iter().enumerate() {
            let total: f64 = cx
                .faces
                .iter()
                .filter(|f| matches!(f.kind, FaceKind::Lateral { line, .. } if line == k))
                .map(|f| f.area)
                .sum();
            let span = if l.normal.x.abs() > 0.5 { d } else { w };
            assert!((total - span * h).abs() <= 1e-9 * span * h);
        }
        for k in 0..cx.cuts.len() {
            let total: f64 = cx
                .faces
                .iter()
                .filter(|f| f.kind == FaceKind::Horizontal { cut: k })
                .map(|f| f.area)
                .sum();
            assert!((total - w * d).abs() <= 1e-9 * w * d);
        }
    }

    #[test]
    fn faces_point_into_ca() {
        let set = pair_walls(box_room(4.0, 5.0, 2.6), 1, &CandidateParams::default());
        let cx = build_complex(&set, &ComplexParams::default()).unwrap();
        for f in &cx.faces {
            let d = cx.cell_center(f.ca) - cx.cell_center(f.cb);
            assert!(d.dot(&f.normal) > 0.0);
            let (wa, wb) = (&cx.cells[f.ca].walls, &cx.cells[f.cb].walls);
            for w in &f.boundary_walls {
                assert!(wb.contains(w) && !wa.contains(w));
            }
            for w in &f.inner_walls {
                assert!(wb.contains(w) && wa.contains(w));
            }
        }
        let interior = cx.locate(&Vec3::new(2.0, 2.5, 1.3)).unwrap();
        assert!(cx.cells[interior].walls.is_empty());
        let wall = cx.locate(&Vec3::new(-0.15, 2.5, 1.3)).unwrap();
        assert_eq!(cx.cells[wall].walls.len(), 1);
    }

    #[test]
    fn single_line_two_faces_per_slab() {
        use SurfaceClass::*;
        let set = CandidateSet {
            surfaces: vec![
                surface(Wall, Vec3::x(), 1.0, [1.0, 0.0, 0.0], [1.0, 2.0, 2.0]),
                surface(Slab, Vec3::z(), 0.0, [0.0, 0.0, 0.0], [2.0, 2.0, 0.0]),
                surface(Slab, -Vec3::z(), -2.0, [0.0, 0.0, 2.0], [2.0, 2.0, 2.0]),
            ],
            walls: Vec::new(),
            n_labels: 1,
        };
        let cx = build_complex(&set, &ComplexParams::default()).unwrap();
        assert_eq!(cx.arrangement.faces.len(), 2);
        assert!(cx.faces.iter().all(|f| f.boundary_walls.is_empty() && f.inner_walls.is_empty()));
    }

    #[test]
    fn too_few_slabs_is_a_config_error() {
        use SurfaceClass::*;
        let set = CandidateSet {
            surfaces: vec![
                surface(Wall, Vec3::x(), 1.0, [1.0, 0.0, 0.0], [1.0, 2.0, 2.0]),
                surface(Slab, Vec3::z(), 0.0, [0.0, 0.0, 0.0], [2.0, 2.0, 0.0]),
            ],
            walls: Vec::new(),
            n_labels: 1,
        };
        assert!(matches!(build_complex(&set, &ComplexParams::default()), Err(Error::Config(_))));
    }

    #[test]
    fn crossing_walls_inner_and_boundary() {
        use SurfaceClass::*;
        let surfaces = vec![
            surface(Wall, -Vec3::x(), 0.0, [0.0, -2.0, 0.0], [0.0, 2.0, 2.0]),
            surface(Wall, Vec3::x(), 0.2, [0.2, -2.0, 0.0], [0.2, 2.0, 2.0]),
            surface(Wall, -Vec3::y(), 0.0, [-2.0, 0.0, 0.0], [2.0, 0.0, 2.0]),
            surface(Wall, Vec3::y(), 0.2, [-2.0, 0.2, 0.0], [2.0, 0.2, 2.0]),
            surface(Slab, Vec3::z(), 0.0, [-2.0, -2.0, 0.0], [2.0, 2.0, 0.0]),
            surface(Slab, -Vec3::z(), -2.0, [-2.0, -2.0, 2.0], [2.0, 2.0, 2.0]),
        ];
        let set = pair_walls(surfaces, 1, &CandidateParams::default());
        let w1 = set.walls.iter().find(|w| w.surface_a == 0 && w.surface_b == 1).unwrap().id;
        let w2 = set.walls.iter().find(|w| w.surface_a == 2 && w.surface_b == 3).unwrap().id;
        let cx = build_complex(&set, &ComplexParams::default()).unwrap();
        let cross = cx.locate(&Vec3::new(0.1, 0.1, 1.0)).unwrap();
        let arm = cx.locate(&Vec3::new(0.1, 1.0, 1.0)).unwrap();
        assert!(cx.cells[cross].walls.contains(&w1) && cx.cells[cross].walls.contains(&w2));
        let f = cx.faces.iter().find(|f| (f.ca == arm && f.cb == cross) || (f.ca == cross && f.cb == arm)).unwrap();
        assert_eq!((f.ca, f.cb), (arm, cross));
        assert!(f.inner_walls.contains(&w1));
        assert!(f.boundary_walls.contains(&w2));
    }
}
