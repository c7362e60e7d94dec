//! Greedy RANSAC plane detection with occupancy bitmaps.

use std::collections::HashMap;

use nalgebra::{Matrix3, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bitmap::OccupancyBitmap;
use crate::error::{Error, Result};
use crate::geom::{rng_for, PlaneFrame, Vec2, Vec3};
use crate::pointcloud::PointCloud;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RansacParams {
    pub distance: f64,
    pub cluster_eps: f64,
    pub normal_threshold_deg: f64,
    pub min_points: usize,
    pub miss_probability: f64,
    pub pixel_size: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        RansacParams {
            distance: 0.01,
            cluster_eps: 0.20,
            normal_threshold_deg: 6.0,
            min_points: 1000,
            miss_probability: 0.001,
            pixel_size: 0.20,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectedPlane {
    pub normal: Vec3,
    pub offset: f64,
    pub inliers: Vec<usize>,
    pub frame: PlaneFrame,
    pub occupancy: OccupancyBitmap,
}

impl DetectedPlane {
    pub fn new(normal: Vec3, offset: f64, inliers: Vec<usize>, cloud: &PointCloud, pixel: f64) -> Self {
        let frame = PlaneFrame::new(normal, offset);
        let mut plane = DetectedPlane {
            normal: frame.normal,
            offset,
            inliers,
            frame,
            occupancy: OccupancyBitmap::empty(pixel),
        };
        plane.occupancy = build_occupancy(&plane, cloud, pixel);
        plane
    }

    pub fn support_area(&self) -> f64 {
        self.occupancy.support_area()
    }

    pub fn project(&self, cloud: &PointCloud) -> Vec<Vec2> {
        self.inliers
            .iter()
            .map(|&i| self.frame.to_2d(&cloud.positions[i]))
            .collect()
    }
}

/// Occupancy of the plane's inliers over their 2D bounding box.
pub fn build_occupancy(plane: &DetectedPlane, cloud: &PointCloud, pixel: f64) -> OccupancyBitmap {
    OccupancyBitmap::from_points(&plane.project(cloud), pixel)
}

/// Drop `removed` from the inliers and rebuild the bitmap from the survivors.
pub fn remove_inliers(
    plane: &DetectedPlane,
    cloud: &PointCloud,
    removed: &std::collections::HashSet<usize>,
) -> DetectedPlane {
    let inliers: Vec<usize> = plane
        .inliers
        .iter()
        .copied()
        .filter(|i| !removed.contains(i))
        .collect();
    let mut out = plane.clone();
    out.inliers = inliers;
    out.occupancy = build_occupancy(&out, cloud, plane.occupancy.pixel_size);
    out
}

/// JSON debug record for a plane.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlaneDump {
    pub normal: [f64; 3],
    pub offset: f64,
    pub inlier_count: usize,
    pub bitmap_width: usize,
    pub bitmap_height: usize,
    pub bits: String,
}

pub fn dump_planes(planes: &[DetectedPlane]) -> Vec<PlaneDump> {
    planes
        .iter()
        .map(|p| PlaneDump {
            normal: [p.normal.x, p.normal.y, p.normal.z],
            offset: p.offset,
            inlier_count: p.inliers.len(),
            bitmap_width: p.occupancy.width,
            bitmap_height: p.occupancy.height,
            bits: p
                .occupancy
                .bits
                .iter()
                .map(|&b| if b { '1' } else { '0' })
                .collect(),
        })
        .collect()
}

const LOCALITY_CELL: f64 = 0.5;
const SCORE_SUBSET: usize = 4000;
const BATCH: usize = 128;
const EXACT_TOP: usize = 3;
const MAX_CANDIDATES_PER_ROUND: usize = 200_000;

#[derive(Clone, Debug)]
struct Candidate {
    normal: Vec3,
    offset: f64,
    estimate: usize,
}

struct Fit {
    normal: Vec3,
    offset: f64,
    inliers: Vec<usize>,
    area: f64,
}

fn cell_of(p: &Vec3) -> (i64, i64, i64) {
    (
        (p.x / LOCALITY_CELL).floor() as i64,
        (p.y / LOCALITY_CELL).floor() as i64,
        (p.z / LOCALITY_CELL).floor() as i64,
    )
}

fn candidates_needed(size: f64, total: usize, miss: f64) -> usize {
    let p = (size / (4.0 * total as f64)).min(1.0);
    if p >= 1.0 {
        return 1;
    }
    (miss.ln() / (1.0 - p).ln()).ceil().max(1.0) as usize
}

struct Detector<'a> {
    pos: &'a [Vec3],
    nrm: &'a [Vec3],
    params: &'a RansacParams,
    cos_thr: f64,
}

impl Detector<'_> {
    fn is_inlier(&self, i: usize, n: &Vec3, d: f64) -> bool {
        (n.dot(&self.pos[i]) - d).abs() <= self.params.distance && self.nrm[i].dot(n) >= self.cos_thr
    }

    fn plane_through(&self, a: usize, b: usize, c: usize) -> Option<(Vec3, f64)> {
        let (pa, pb, pc) = (self.pos[a], self.pos[b], self.pos[c]);
        let cr = (pb - pa).cross(&(pc - pa));
        if cr.norm() < 1e-12 {
            return None;
        }
        let mut n = cr.normalize();
        if n.dot(&self.nrm[a]) < 0.0 {
            n = -n;
        }
        if [a, b, c].iter().any(|&i| self.nrm[i].dot(&n) < self.cos_thr) {
            return None;
        }
        Some((n, n.dot(&pa)))
    }

    /// Largest 8-connected component of the points on a grid of `cluster_eps`.
    fn largest_component(&self, n: &Vec3, d: f64, pts: &[usize]) -> Vec<usize> {
        if pts.is_empty() {
            return Vec::new();
        }
        let frame = PlaneFrame::new(*n, d);
        let eps = self.params.cluster_eps;
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for &i in pts {
            let q = frame.to_2d(&self.pos[i]);
            cells
                .entry(((q.x / eps).floor() as i64, (q.y / eps).floor() as i64))
                .or_default()
                .push(i);
        }
        let mut keys: Vec<(i64, i64)> = cells.keys().copied().collect();
        keys.sort_unstable();
        let mut comp: HashMap<(i64, i64), usize> = HashMap::new();
        let mut sizes: Vec<usize> = Vec::new();
        for &k in &keys {
            if comp.contains_key(&k) {
                continue;
            }
            let id = sizes.len();
            let mut size = 0;
            let mut stack = vec![k];
            comp.insert(k, id);
            while let Some(c) = stack.pop() {
                size += cells[&c].len();
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        let nb = (c.0 + dx, c.1 + dy);
                        if cells.contains_key(&nb) && !comp.contains_key(&nb) {
                            comp.insert(nb, id);
                            stack.push(nb);
                        }
                    }
                }
            }
            sizes.push(size);
        }
        let best = (0..sizes.len()).max_by_key(|&i| (sizes[i], usize::MAX - i)).unwrap();
        let mut out: Vec<usize> = keys
            .iter()
            .filter(|k| comp[k] == best)
            .flat_map(|k| cells[k].iter().copied())
            .collect();
        out.sort_unstable();
        out
    }

    fn refit(&self, n: &Vec3, pts: &[usize]) -> (Vec3, f64) {
        let c = pts.iter().fold(Vec3::zeros(), |a, &i| a + self.pos[i]) / pts.len() as f64;
        let mut cov = Matrix3::zeros();
        for &i in pts {
            let d = self.pos[i] - c;
            cov += d * d.transpose();
        }
        let eig = SymmetricEigen::new(cov);
        let (k, _) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        let mut m = eig.eigenvectors.column(k).into_owned().normalize();
        if m.dot(n) < 0.0 {
            m = -m;
        }
        (m, m.dot(&c))
    }

    fn exact(&self, cand: &Candidate, remaining: &[usize]) -> Fit {
        let (mut n, mut d) = (cand.normal, cand.offset);
        let collect = |n: &Vec3, d: f64| -> Vec<usize> {
            let inl: Vec<usize> = remaining
                .par_iter()
                .copied()
                .filter(|&i| self.is_inlier(i, n, d))
                .collect();
            self.largest_component(n, d, &inl)
        };
        let mut inliers = collect(&n, d);
        for _ in 0..3 {
            if inliers.len() < 3 {
                break;
            }
            let (m, e) = self.refit(&n, &inliers);
            let next = collect(&m, e);
            if next.len() < inliers.len() {
                break;
            }
            let converged = (m - n).norm() < 1e-9 && (e - d).abs() < 1e-9;
            n = m;
            d = e;
            inliers = next;
            if converged {
                break;
            }
        }
        let frame = PlaneFrame::new(n, d);
        let pts: Vec<Vec2> = inliers.iter().map(|&i| frame.to_2d(&self.pos[i])).collect();
        let area = OccupancyBitmap::from_points(&pts, self.params.pixel_size).support_area();
        Fit {
            normal: n,
            offset: d,
            inliers,
            area,
        }
    }
}

fn better(a: &Fit, b: &Fit) -> bool {
    if a.inliers.len() != b.inliers.len() {
        return a.inliers.len() > b.inliers.len();
    }
    if a.area != b.area {
        return a.area > b.area;
    }
    let ka = [a.normal.x, a.normal.y, a.normal.z];
    let kb = [b.normal.x, b.normal.y, b.normal.z];
    ka.partial_cmp(&kb) == Some(std::cmp::Ordering::Less)
}

/// Greedy locality-sampled RANSAC. Planes are extracted largest first until
/// a plane of `min_points` would have been found with probability at least
/// `1 - miss_probability`.
pub fn detect_planes(cloud: &PointCloud, params: &RansacParams) -> Result<Vec<DetectedPlane>> {
    let normals = cloud
        .normals
        .as_ref()
        .ok_or_else(|| Error::Precondition("plane detection needs point normals".into()))?;
    let det = Detector {
        pos: &cloud.positions,
        nrm: normals,
        params,
        cos_thr: params.normal_threshold_deg.to_radians().cos(),
    };
    let n = cloud.len();
    let mut active = vec![true; n];
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in cloud.positions.iter().enumerate() {
        grid.entry(cell_of(p)).or_default().push(i);
    }
    let mut rng = rng_for(params.seed, 0x5a5a, 0);
    let mut planes = Vec::new();

    loop {
        let remaining: Vec<usize> = (0..n).filter(|&i| active[i]).collect();
        let total = remaining.len();
        if total < params.min_points.max(3) {
            break;
        }
        let subset: Vec<usize> = if total <= SCORE_SUBSET {
            remaining.clone()
        } else {
            rand::seq::index::sample(&mut rng, total, SCORE_SUBSET)
                .into_iter()
                .map(|k| remaining[k])
                .collect()
        };
        let scale = total as f64 / subset.len() as f64;
        let mut pool: Vec<Candidate> = Vec::new();
        let mut generated = 0usize;
        let mut extracted = None;
        loop {
            let mut batch = Vec::with_capacity(BATCH);
            let mut attempts = 0;
            while batch.len() < BATCH && attempts < BATCH * 20 {
                attempts += 1;
                let a = remaining[rng.random_range(0..total)];
                let (cx, cy, cz) = cell_of(&cloud.positions[a]);
                let mut pick = || -> Option<usize> {
                    for _ in 0..8 {
                        let key = (
                            cx + rng.random_range(-1..=1),
                            cy + rng.random_range(-1..=1),
                            cz + rng.random_range(-1..=1),
                        );
                        if let Some(members) = grid.get(&key) {
                            let j = members[rng.random_range(0..members.len())];
                            if active[j] && j != a {
                                return Some(j);
                            }
                        }
                    }
                    None
                };
                let (Some(b), Some(c)) = (pick(), pick()) else { continue };
                if b == c {
                    continue;
                }
                if let Some((nn, d)) = det.plane_through(a, b, c) {
                    batch.push((nn, d));
                }
            }
            generated += BATCH;
            let scored: Vec<Candidate> = batch
                .par_iter()
                .map(|&(nn, d)| Candidate {
                    normal: nn,
                    offset: d,
                    estimate: subset.iter().filter(|&&i| det.is_inlier(i, &nn, d)).count(),
                })
                .collect();
            pool.extend(scored);
            pool.sort_by(|x, y| {
                y.estimate
                    .cmp(&x.estimate)
                    .then_with(|| {
                        [x.normal.x, x.normal.y, x.normal.z]
                            .partial_cmp(&[y.normal.x, y.normal.y, y.normal.z])
                            .unwrap_or(std::cmp::Ordering::Equal)
                    })
            });
            pool.truncate(64);

            let best_est = pool.first().map_or(0.0, |c| c.estimate as f64 * scale);
            let target = best_est.max(params.min_points as f64);
            let enough = generated >= candidates_needed(target, total, params.miss_probability);
            if enough || generated >= MAX_CANDIDATES_PER_ROUND {
                let top: Vec<Candidate> = pool.drain(..pool.len().min(EXACT_TOP)).collect();
                let mut best: Option<Fit> = None;
                for c in &top {
                    let f = det.exact(c, &remaining);
                    if best.as_ref().is_none_or(|b| better(&f, b)) {
                        best = Some(f);
                    }
                }
                if let Some(b) = best.filter(|b| b.inliers.len() >= params.min_points) {
                    extracted = Some(b);
                    break;
                }
                let exhausted = target <= params.min_points as f64 || pool.is_empty();
                if exhausted || generated >= MAX_CANDIDATES_PER_ROUND {
                    break;
                }
            }
        }
        match extracted {
            Some(fit) => {
                for &i in &fit.inliers {
                    active[i] = false;
                }
                log::debug!(
                    "plane {} n={:?} d={:.4} support={}",
                    planes.len(),
                    fit.normal,
                    fit.offset,
                    fit.inliers.len()
                );
                planes.push(DetectedPlane::new(
                    fit.normal,
                    fit.offset,
                    fit.inliers,
                    cloud,
                    params.pixel_size,
                ));
            }
            None => break,
        }
    }
    Ok(planes)
}
