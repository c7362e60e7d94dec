//! Wall and slab candidates: rectified surfaces with label support, paired
//! into volumetric elements.

use serde::{Deserialize, Serialize};

use crate::bitmap::{MultiLabelBitmap, OccupancyBitmap};
use crate::geom::{Aabb, PlaneFrame, Vec2, Vec3};
use crate::planes::DetectedPlane;
use crate::pointcloud::PointCloud;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateParams {
    pub min_wall_area: f64,
    pub min_slab_area: f64,
    pub tilt_tolerance_deg: f64,
    /// Wall directions closer than this share one exact direction.
    pub azimuth_tolerance_deg: f64,
    pub occupancy_pixel: f64,
    pub support_pixel: f64,
    pub dilation: usize,
    pub max_thickness: f64,
    pub max_angle_deg: f64,
    pub virtual_thickness: f64,
}

impl Default for CandidateParams {
    fn default() -> Self {
        CandidateParams {
            min_wall_area: 2.0,
            min_slab_area: 5.0,
            tilt_tolerance_deg: 10.0,
            azimuth_tolerance_deg: 1.0,
            occupancy_pixel: 0.2,
            support_pixel: 0.1,
            dilation: 2,
            max_thickness: 0.6,
            max_angle_deg: 5.0,
            virtual_thickness: 0.3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceClass {
    Wall,
    Slab,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceCandidate {
    pub class: SurfaceClass,
    pub frame: PlaneFrame,
    /// Occupancy, dilated to the same metric radius as `support`.
    pub occupancy: OccupancyBitmap,
    /// Dilated multi-label support.
    pub support: MultiLabelBitmap,
    /// Box around the undilated occupied pixels.
    pub bounds: Aabb,
    pub is_virtual: bool,
    pub source_plane: Option<usize>,
    pub inliers: Vec<usize>,
}

impl SurfaceCandidate {
    pub fn normal(&self) -> Vec3 {
        self.frame.normal
    }

    pub fn offset(&self) -> f64 {
        self.frame.offset
    }

    /// Same plane, opposite orientation, nothing observed on it.
    pub fn virtual_partner(&self, thickness: f64) -> SurfaceCandidate {
        let n = -self.frame.normal;
        let frame = PlaneFrame::new(n, -self.frame.offset + thickness);
        let shift = n * thickness;
        let bounds = Aabb {
            min: [
                self.bounds.min[0] + shift.x.min(0.0),
                self.bounds.min[1] + shift.y.min(0.0),
                self.bounds.min[2] + shift.z.min(0.0),
            ],
            max: [
                self.bounds.max[0] + shift.x.max(0.0),
                self.bounds.max[1] + shift.y.max(0.0),
                self.bounds.max[2] + shift.z.max(0.0),
            ],
        };
        SurfaceCandidate {
            class: self.class,
            occupancy: OccupancyBitmap::empty(self.occupancy.pixel_size),
            support: empty_support(self.support.pixel_size, self.support.n_labels),
            frame,
            bounds,
            is_virtual: true,
            source_plane: None,
            inliers: Vec::new(),
        }
    }

    /// In-plane box of `other`'s bounds expressed in this surface's frame.
    fn footprint_in_frame(&self, b: &Aabb) -> (Vec2, Vec2) {
        let mut lo = Vec2::repeat(f64::INFINITY);
        let mut hi = Vec2::repeat(f64::NEG_INFINITY);
        for i in 0..8 {
            let c = Vec3::new(
                if i & 1 == 0 { b.min[0] } else { b.max[0] },
                if i & 2 == 0 { b.min[1] } else { b.max[1] },
                if i & 4 == 0 { b.min[2] } else { b.max[2] },
            );
            let q = self.frame.to_2d(&c);
            lo = lo.inf(&q);
            hi = hi.sup(&q);
        }
        (lo, hi)
    }
}

fn empty_support(pixel_size: f64, n_labels: usize) -> MultiLabelBitmap {
    MultiLabelBitmap {
        origin: [0.0, 0.0],
        pixel_size,
        width: 0,
        height: 0,
        n_labels,
        data: Vec::new(),
    }
}

fn bitmap_bounds(frame: &PlaneFrame, occ: &OccupancyBitmap) -> Aabb {
    let mut b = Aabb::empty();
    if let Some((lo, hi)) = occ.set_bounds() {
        for q in [lo, hi, Vec2::new(lo.x, hi.y), Vec2::new(hi.x, lo.y)] {
            b.grow(&frame.to_3d(&q));
        }
    }
    b
}

pub fn classify(normal: &Vec3, tol_deg: f64) -> Option<SurfaceClass> {
    let tol = tol_deg.to_radians();
    let nz = normal.normalize().z.abs();
    if nz <= tol.sin() {
        Some(SurfaceClass::Wall)
    } else if nz >= tol.cos() {
        Some(SurfaceClass::Slab)
    } else {
        None
    }
}

/// Snap the normal to the class and refit the offset to the inliers.
pub fn rectify(normal: &Vec3, class: SurfaceClass, inliers: &[Vec3]) -> (Vec3, f64) {
    let n = match class {
        SurfaceClass::Wall => Vec3::new(normal.x, normal.y, 0.0).normalize(),
        SurfaceClass::Slab => Vec3::new(0.0, 0.0, normal.z.signum()),
    };
    let offset = if inliers.is_empty() {
        0.0
    } else {
        inliers.iter().map(|p| n.dot(p)).sum::<f64>() / inliers.len() as f64
    };
    (n, offset)
}

/// Group wall normals whose directions agree up to sign within `tol_deg`;
/// each group takes the direction of its best-supported member.
pub fn cluster_azimuths(normals: &[Vec3], weights: &[f64], tol_deg: f64) -> Vec<Vec3> {
    let mut order: Vec<usize> = (0..normals.len()).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    let sin_tol = tol_deg.to_radians().sin();
    let mut reps: Vec<Vec3> = Vec::new();
    let mut out = normals.to_vec();
    for i in order {
        let n = normals[i];
        match reps.iter().find(|r| r.cross(&n).norm() <= sin_tol) {
            Some(r) => out[i] = if r.dot(&n) < 0.0 { -r } else { *r },
            None => reps.push(n),
        }
    }
    out
}

/// Prune, classify and rectify detected planes and build their bitmaps.
/// `n_labels` is the number of room labels carried by `cloud.labels`.
pub fn classify_rectify(
    planes: &[DetectedPlane],
    cloud: &PointCloud,
    n_labels: usize,
    params: &CandidateParams,
) -> Vec<SurfaceCandidate> {
    let mut kept = Vec::new();
    for (k, plane) in planes.iter().enumerate() {
        let Some(class) = classify(&plane.normal, params.tilt_tolerance_deg) else {
            continue;
        };
        let min_area = match class {
            SurfaceClass::Wall => params.min_wall_area,
            SurfaceClass::Slab => params.min_slab_area,
        };
        if plane.support_area() >= min_area {
            let pts: Vec<Vec3> = plane.inliers.iter().map(|&i| cloud.positions[i]).collect();
            let (n, _) = rectify(&plane.normal, class, &pts);
            kept.push((k, class, n, pts));
        }
    }
    let walls: Vec<usize> = (0..kept.len()).filter(|&i| kept[i].1 == SurfaceClass::Wall).collect();
    let normals: Vec<Vec3> = walls.iter().map(|&i| kept[i].2).collect();
    let weights: Vec<f64> = walls.iter().map(|&i| planes[kept[i].0].support_area()).collect();
    for (&i, n) in walls.iter().zip(cluster_azimuths(&normals, &weights, params.azimuth_tolerance_deg)) {
        kept[i].2 = n;
    }
    kept.into_iter()
        .map(|(k, class, n, pts)| {
            let (n, offset) = rectify(&n, class, &pts);
            build_surface(class, n, offset, Some(k), planes[k].inliers.clone(), cloud, n_labels, params)
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn build_surface(
    class: SurfaceClass,
    normal: Vec3,
    offset: f64,
    source_plane: Option<usize>,
    inliers: Vec<usize>,
    cloud: &PointCloud,
    n_labels: usize,
    params: &CandidateParams,
) -> SurfaceCandidate {
    let frame = PlaneFrame::new(normal, offset);
    let proj: Vec<Vec2> = inliers.iter().map(|&i| frame.to_2d(&cloud.positions[i])).collect();
    let occ = OccupancyBitmap::from_points(&proj, params.occupancy_pixel);
    let bounds = bitmap_bounds(&frame, &occ);
    let labels: Vec<Option<u32>> = inliers.iter().map(|&i| cloud.label(i)).collect();
    let support = MultiLabelBitmap::from_labeled_points(&proj, &labels, n_labels, params.support_pixel);
    let metric = params.dilation as f64 * params.support_pixel;
    let occ_radius = (metric / params.occupancy_pixel).round() as usize;
    SurfaceCandidate {
        class,
        occupancy: occ.dilate(occ_radius),
        support: support.dilate(params.dilation),
        frame,
        bounds,
        is_virtual: false,
        source_plane,
        inliers,
    }
}

pub fn build_support(surface: &SurfaceCandidate, cloud: &PointCloud, n_labels: usize, pixel: f64) -> MultiLabelBitmap {
    let proj: Vec<Vec2> = surface.inliers.iter().map(|&i| surface.frame.to_2d(&cloud.positions[i])).collect();
    let labels: Vec<Option<u32>> = surface.inliers.iter().map(|&i| cloud.label(i)).collect();
    MultiLabelBitmap::from_labeled_points(&proj, &labels, n_labels, pixel)
}

pub fn dilate_support(bitmap: &MultiLabelBitmap, radius: usize) -> MultiLabelBitmap {
    bitmap.dilate(radius)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WallKind {
    Vertical,
    Horizontal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WallCandidate {
    pub id: usize,
    pub surface_a: usize,
    pub surface_b: usize,
    pub thickness: f64,
    pub kind: WallKind,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub surfaces: Vec<SurfaceCandidate>,
    pub walls: Vec<WallCandidate>,
    pub n_labels: usize,
}

/// Gap between `s` and `t` measured behind `s`, if they face away from each
/// other within `max_angle` and their footprints overlap.
pub fn pair_gap(s: &SurfaceCandidate, t: &SurfaceCandidate, max_angle_deg: f64) -> Option<f64> {
    if s.class != t.class || s.normal().dot(&t.normal()) > -max_angle_deg.to_radians().cos() {
        return None;
    }
    let gap_s = s.offset() - s.normal().dot(&t.frame.origin());
    let gap_t = t.offset() - t.normal().dot(&s.frame.origin());
    if gap_s <= 0.0 || gap_t <= 0.0 {
        return None;
    }
    let (slo, shi) = s.footprint_in_frame(&s.bounds);
    let (tlo, thi) = s.footprint_in_frame(&t.bounds);
    let overlap = (0..2).all(|k| slo[k].max(tlo[k]) < shi[k].min(thi[k]));
    overlap.then_some(0.5 * (gap_s + gap_t))
}

/// Pair every surface with each opposing partner in range. Surfaces left
/// alone get a virtual partner `virtual_thickness` behind them.
pub fn pair_walls(surfaces: Vec<SurfaceCandidate>, n_labels: usize, params: &CandidateParams) -> CandidateSet {
    let mut surfaces = surfaces;
    let n = surfaces.len();
    let mut walls = Vec::new();
    let mut paired = vec![false; n];
    for i in 0..n {
        for j in i + 1..n {
            if surfaces[i].is_virtual || surfaces[j].is_virtual {
                continue;
            }
            if let Some(gap) = pair_gap(&surfaces[i], &surfaces[j], params.max_angle_deg) {
                if gap <= params.max_thickness {
                    paired[i] = true;
                    paired[j] = true;
                    walls.push((i, j, gap));
                }
            }
        }
    }
    for i in 0..n {
        if !paired[i] && !surfaces[i].is_virtual {
            let partner = surfaces[i].virtual_partner(params.virtual_thickness);
            surfaces.push(partner);
            walls.push((i, surfaces.len() - 1, params.virtual_thickness));
        }
    }
    let walls = walls
        .into_iter()
        .enumerate()
        .map(|(id, (a, b, thickness))| WallCandidate {
            id,
            surface_a: a,
            surface_b: b,
            thickness,
            kind: match surfaces[a].class {
                SurfaceClass::Wall => WallKind::Vertical,
                SurfaceClass::Slab => WallKind::Horizontal,
            },
        })
        .collect();
    CandidateSet {
        surfaces,
        walls,
        n_labels,
    }
}

/// Two virtual wall surfaces centered on the plan segment `p0 → p1`.
pub fn manual_wall_surfaces(
    p0: Vec2,
    p1: Vec2,
    z_lo: f64,
    z_hi: f64,
    thickness: f64,
    n_labels: usize,
    params: &CandidateParams,
) -> Option<(SurfaceCandidate, SurfaceCandidate)> {
    let d = p1 - p0;
    if d.norm() < 1e-6 || z_hi <= z_lo || thickness <= 0.0 {
        return None;
    }
    let m = Vec2::new(-d.y, d.x).normalize();
    let n = Vec3::new(m.x, m.y, 0.0);
    let c = m.dot(&p0);
    let h = 0.5 * thickness;
    let make = |normal: Vec3, offset: f64, shift: f64| {
        let mut b = Aabb::empty();
        for p in [p0, p1] {
            let q = p + m * shift;
            b.grow(&Vec3::new(q.x, q.y, z_lo));
            b.grow(&Vec3::new(q.x, q.y, z_hi));
        }
        SurfaceCandidate {
            class: SurfaceClass::Wall,
            frame: PlaneFrame::new(normal, offset),
            occupancy: OccupancyBitmap::empty(params.occupancy_pixel),
            support: empty_support(params.support_pixel, n_labels),
            bounds: b,
            is_virtual: true,
            source_plane: None,
            inliers: Vec::new(),
        }
    };
    Some((make(n, c + h, h), make(-n, -(c - h), -h)))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub surfaces: usize,
    pub virtual_surfaces: usize,
    pub walls: usize,
    pub slabs: usize,
}

impl CandidateSet {
    pub fn summary(&self) -> CandidateSummary {
        CandidateSummary {
            surfaces: self.surfaces.len(),
            virtual_surfaces: self.surfaces.iter().filter(|s| s.is_virtual).count(),
            walls: self.walls.iter().filter(|w| w.kind == WallKind::Vertical).count(),
            slabs: self.walls.iter().filter(|w| w.kind == WallKind::Horizontal).count(),
        }
    }

    /// Append a manual wall, or return the id of an existing wall whose two
    /// surfaces coincide with it within `tol`.
    pub fn add_manual_wall(&mut self, a: SurfaceCandidate, b: SurfaceCandidate, tol: f64) -> usize {
        let same = |s: &SurfaceCandidate, t: &SurfaceCandidate| {
            s.normal().dot(&t.normal()) > 1.0 - 1e-9 && (s.offset() - t.offset()).abs() <= tol
        };
        for w in &self.walls {
            let (sa, sb) = (&self.surfaces[w.surface_a], &self.surfaces[w.surface_b]);
            if (same(sa, &a) && same(sb, &b)) || (same(sa, &b) && same(sb, &a)) {
                return w.id;
            }
        }
        let thickness = a.offset() + b.offset();
        self.surfaces.push(a);
        self.surfaces.push(b);
        let id = self.walls.len();
        self.walls.push(WallCandidate {
            id,
            surface_a: self.surfaces.len() - 2,
            surface_b: self.surfaces.len() - 1,
            thickness: thickness.abs(),
            kind: WallKind::Vertical,
        });
        id
    }
}

/// Classify, rectify, build support and pair.
pub fn build_candidates(
    planes: &[DetectedPlane],
    cloud: &PointCloud,
    n_labels: usize,
    params: &CandidateParams,
) -> CandidateSet {
    let surfaces = classify_rectify(planes, cloud, n_labels, params);
    pair_walls(surfaces, n_labels, params)
}
