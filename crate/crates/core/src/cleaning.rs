//! Outlier removal by hemisphere ray casting against plane occupancy.

use std::collections::HashSet;
use std::hash::{DefaultHasher, Hash, Hasher};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{rng_for, unit_hemisphere, Vec3};
use crate::planes::{remove_inliers, DetectedPlane};
use crate::pointcloud::PointCloud;
use crate::raycast::{RayScene, SceneSurface};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CleanParams {
    pub threshold: f64,
    pub iterations: usize,
    pub rays: usize,
    pub self_eps: f64,
    pub seed: u64,
}

impl Default for CleanParams {
    fn default() -> Self {
        CleanParams {
            threshold: 0.5,
            iterations: 3,
            rays: 64,
            self_eps: 0.01,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InsideScore {
    pub point_index: usize,
    pub score: f64,
}

pub fn scene_from_planes(planes: &[DetectedPlane]) -> RayScene {
    RayScene::new(
        planes
            .iter()
            .map(|p| SceneSurface {
                frame: p.frame.clone(),
                occupancy: p.occupancy.clone(),
            })
            .collect(),
    )
}

/// Stream id derived from the position, so scores do not depend on point order.
fn position_key(p: &Vec3) -> u64 {
    let mut h = DefaultHasher::new();
    for v in p.iter() {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

/// Planes the point itself lies on: within `self_eps` and facing the same way.
const SELF_ALIGN_COS: f64 = 0.9;

/// Fraction of `n_rays` uniform hemisphere rays around `normal` that hit an
/// occupied pixel. Hits closer than `self_eps` on the point's own plane are
/// ignored.
pub fn inside_score(
    position: &Vec3,
    normal: &Vec3,
    scene: &RayScene,
    n_rays: usize,
    self_eps: f64,
    seed: u64,
    stream: u64,
) -> f64 {
    let mut rng = rng_for(seed, stream, position_key(position));
    let own: Vec<usize> = (0..scene.surfaces.len())
        .filter(|&k| {
            let f = &scene.surfaces[k].frame;
            f.signed_distance(position).abs() <= self_eps && f.normal.dot(normal).abs() >= SELF_ALIGN_COS
        })
        .collect();
    let hits = (0..n_rays)
        .filter(|_| {
            let d = unit_hemisphere(&mut rng, normal);
            scene.any_hit(position, &d, -1e-12, f64::INFINITY, |h| {
                h.t <= self_eps && own.contains(&h.surface)
            })
        })
        .count();
    hits as f64 / n_rays as f64
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CleanReport {
    /// Original indices of the surviving points.
    pub kept: Vec<usize>,
    /// Points removed per iteration.
    pub removed_per_iteration: Vec<usize>,
}

/// Iteratively drop points with `in(p) < threshold`, shrinking the plane
/// bitmaps between iterations.
pub fn clean(
    cloud: &PointCloud,
    planes: &[DetectedPlane],
    params: &CleanParams,
) -> Result<(PointCloud, Vec<DetectedPlane>, CleanReport)> {
    let normals = cloud
        .normals
        .as_ref()
        .ok_or_else(|| Error::Precondition("cleaning needs point normals".into()))?;
    let mut alive = vec![true; cloud.len()];
    let mut planes: Vec<DetectedPlane> = planes.to_vec();
    let mut report = CleanReport::default();
    for it in 0..params.iterations {
        let scene = scene_from_planes(&planes);
        let idx: Vec<usize> = (0..cloud.len()).filter(|&i| alive[i]).collect();
        let dropped: Vec<usize> = idx
            .par_iter()
            .copied()
            .filter(|&i| {
                let s = inside_score(
                    &cloud.positions[i],
                    &normals[i],
                    &scene,
                    params.rays,
                    params.self_eps,
                    params.seed,
                    it as u64,
                );
                s < params.threshold
            })
            .collect();
        report.removed_per_iteration.push(dropped.len());
        if dropped.is_empty() {
            continue;
        }
        for &i in &dropped {
            alive[i] = false;
        }
        let set: HashSet<usize> = dropped.into_iter().collect();
        planes = planes
            .par_iter()
            .map(|p| remove_inliers(p, cloud, &set))
            .collect();
    }
    let kept: Vec<usize> = (0..cloud.len()).filter(|&i| alive[i]).collect();
    let mut remap = vec![usize::MAX; cloud.len()];
    for (k, &i) in kept.iter().enumerate() {
        remap[i] = k;
    }
    let out = cloud.select(&kept);
    let planes = planes
        .into_iter()
        .filter(|p| !p.inliers.is_empty())
        .map(|mut p| {
            p.inliers = p.inliers.iter().map(|&i| remap[i]).collect();
            p
        })
        .collect();
    report.kept = kept;
    Ok((out, planes, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitmap::OccupancyBitmap;
    use crate::geom::{PlaneFrame, Vec2};
    use rand::Rng;

    fn face(normal: Vec3, offset: f64, half: f64) -> SceneSurface {
        let frame = PlaneFrame::new(normal, offset);
        let steps = (2.0 * half / 0.1).round() as i32;
        let pts: Vec<Vec2> = (0..=steps)
            .flat_map(|i| (0..=steps).map(move |j| Vec2::new(-half + 0.1 * i as f64, -half + 0.1 * j as f64)))
            .collect();
        SceneSurface {
            occupancy: OccupancyBitmap::from_points(&pts, 0.2),
            frame,
        }
    }

    fn cube() -> RayScene {
        let mut s = Vec::new();
        for ax in [Vec3::x(), Vec3::y(), Vec3::z()] {
            s.push(face(ax, -1.0, 1.2));
            s.push(face(-ax, -1.0, 1.2));
        }
        RayScene::new(s)
    }

    #[test]
    fn enclosed_point_scores_one() {
        let s = inside_score(&Vec3::zeros(), &Vec3::z(), &cube(), 256, 0.01, 0, 0);
        assert_eq!(s, 1.0);
    }

    #[test]
    fn empty_space_scores_zero() {
        let s = inside_score(&Vec3::zeros(), &Vec3::z(), &RayScene::default(), 64, 0.01, 0, 0);
        assert_eq!(s, 0.0);
    }

    #[test]
    fn under_large_ceiling_matches_monte_carlo_oracle() {
        // Horizontal normal: roughly half of the hemisphere points upward.
        let ceiling = face(-Vec3::z(), -1.0, 40.0);
        let scene = RayScene::new(vec![ceiling.clone()]);
        let n = Vec3::x();
        let score = inside_score(&Vec3::zeros(), &n, &scene, 4096, 0.01, 0, 0);
        let mut rng = rng_for(99, 0, 0);
        let trials = 1_000_000;
        let mut hits = 0usize;
        for _ in 0..trials {
            let d = unit_hemisphere(&mut rng, &n);
            if d.z > 0.0 && (d.x / d.z).abs() <= 40.0 && (d.y / d.z).abs() <= 40.0 {
                hits += 1;
            }
        }
        let oracle = hits as f64 / trials as f64;
        assert!((score - oracle).abs() < 0.04, "score {score} oracle {oracle}");
        assert!((score - 0.5).abs() < 0.1);
    }

    fn box_room(rng: &mut impl Rng, per_face: usize) -> (Vec<Vec3>, Vec<Vec3>) {
        let (mut p, mut n) = (Vec::new(), Vec::new());
        let size = [4.0, 5.0, 2.6];
        for ax in 0..3 {
            for side in [0.0, 1.0] {
                for _ in 0..per_face {
                    let mut q = Vec3::new(
                        rng.random_range(0.0..size[0]),
                        rng.random_range(0.0..size[1]),
                        rng.random_range(0.0..size[2]),
                    );
                    q[ax] = side * size[ax];
                    let mut nn = Vec3::zeros();
                    nn[ax] = if side == 0.0 { 1.0 } else { -1.0 };
                    p.push(q);
                    n.push(nn);
                }
            }
        }
        (p, n)
    }

    fn planes_for(cloud: &PointCloud, per_face: usize) -> Vec<DetectedPlane> {
        let size = [4.0, 5.0, 2.6];
        let mut out = Vec::new();
        for ax in 0..3 {
            for (s, side) in [0.0, 1.0].iter().enumerate() {
                let start = (ax * 2 + s) * per_face;
                let mut nn = Vec3::zeros();
                nn[ax] = if *side == 0.0 { 1.0 } else { -1.0 };
                let offset = nn[ax] * side * size[ax];
                out.push(DetectedPlane::new(nn, offset, (start..start + per_face).collect(), cloud, 0.2));
            }
        }
        out
    }

    /// Regular samples reaching every edge, so the room is closed.
    fn grid_room(step: f64) -> (Vec<Vec3>, Vec<Vec3>, usize) {
        let size = [4.0, 5.0, 2.6];
        let (mut p, mut n) = (Vec::new(), Vec::new());
        let mut per_face = 0;
        for ax in 0..3 {
            let (a, b) = ((ax + 1) % 3, (ax + 2) % 3);
            let na = (size[a] / step).round() as usize;
            let nb = (size[b] / step).round() as usize;
            per_face = (na + 1) * (nb + 1);
            for side in [0.0, 1.0] {
                for i in 0..=na {
                    for j in 0..=nb {
                        let mut q = Vec3::zeros();
                        q[ax] = side * size[ax];
                        q[a] = (i as f64 * step).min(size[a]);
                        q[b] = (j as f64 * step).min(size[b]);
                        let mut nn = Vec3::zeros();
                        nn[ax] = if side == 0.0 { 1.0 } else { -1.0 };
                        p.push(q);
                        n.push(nn);
                    }
                }
            }
        }
        let _ = per_face;
        (p, n, 0)
    }

    #[test]
    fn enclosed_room_keeps_everything() {
        let (p, n, _) = grid_room(0.1);
        let cloud = PointCloud::with_normals(p, n);
        let size = [4.0, 5.0, 2.6];
        let mut planes = Vec::new();
        let mut start = 0;
        for ax in 0..3 {
            let (a, b) = ((ax + 1) % 3, (ax + 2) % 3);
            let count = ((size[a] / 0.1f64).round() as usize + 1) * ((size[b] / 0.1f64).round() as usize + 1);
            for side in [0.0, 1.0] {
                let mut nn = Vec3::zeros();
                nn[ax] = if side == 0.0 { 1.0 } else { -1.0 };
                planes.push(DetectedPlane::new(nn, nn[ax] * side * size[ax], (start..start + count).collect(), &cloud, 0.2));
                start += count;
            }
        }
        let (out, _, rep) = clean(&cloud, &planes, &CleanParams::default()).unwrap();
        assert_eq!(out.len(), cloud.len(), "{:?}", rep.removed_per_iteration);
    }

    #[test]
    fn floating_outliers_are_removed() {
        let mut rng = rng_for(8, 0, 0);
        let (mut p, mut n) = box_room(&mut rng, 3000);
        let interior = p.len();
        for _ in 0..500 {
            let side = rng.random_range(0..4);
            let q = match side {
                0 => Vec3::new(-5.0 - rng.random_range(0.0..3.0), rng.random_range(-3.0..8.0), rng.random_range(0.0..2.6)),
                1 => Vec3::new(9.0 + rng.random_range(0.0..3.0), rng.random_range(-3.0..8.0), rng.random_range(0.0..2.6)),
                2 => Vec3::new(rng.random_range(-3.0..7.0), -5.0 - rng.random_range(0.0..3.0), rng.random_range(0.0..2.6)),
                _ => Vec3::new(rng.random_range(-3.0..7.0), 10.0 + rng.random_range(0.0..3.0), rng.random_range(0.0..2.6)),
            };
            p.push(q);
            n.push(crate::geom::unit_sphere(&mut rng));
        }
        let cloud = PointCloud::with_normals(p, n);
        let planes = planes_for(&cloud, 3000);
        let (_, new_planes, report) = clean(&cloud, &planes, &CleanParams::default()).unwrap();
        let kept_outliers = report.kept.iter().filter(|&&i| i >= interior).count();
        let kept_interior = report.kept.iter().filter(|&&i| i < interior).count();
        assert!(kept_outliers as f64 <= 0.05 * 500.0, "kept {kept_outliers} outliers");
        assert!(kept_interior as f64 >= 0.99 * interior as f64);
        for (a, b) in planes.iter().zip(&new_planes) {
            assert!(b.support_area() <= a.support_area());
        }
    }

    #[test]
    fn zero_threshold_keeps_all() {
        let mut rng = rng_for(9, 0, 0);
        let p: Vec<Vec3> = (0..200).map(|_| crate::geom::unit_sphere(&mut rng) * 10.0).collect();
        let n: Vec<Vec3> = (0..200).map(|_| crate::geom::unit_sphere(&mut rng)).collect();
        let cloud = PointCloud::with_normals(p, n);
        let params = CleanParams {
            threshold: 0.0,
            ..Default::default()
        };
        let (out, _, _) = clean(&cloud, &[], &params).unwrap();
        assert_eq!(out.len(), 200);
    }

    #[test]
    fn order_does_not_matter() {
        let mut rng = rng_for(10, 0, 0);
        let (mut p, mut n) = box_room(&mut rng, 1500);
        for _ in 0..100 {
            p.push(Vec3::new(-6.0, rng.random_range(0.0..5.0), rng.random_range(0.0..2.6)));
            n.push(crate::geom::unit_sphere(&mut rng));
        }
        let cloud = PointCloud::with_normals(p.clone(), n.clone());
        let planes = planes_for(&cloud, 1500);
        let (a, _, _) = clean(&cloud, &planes, &CleanParams::default()).unwrap();
        let perm: Vec<usize> = (0..p.len()).rev().collect();
        let cloud_r = cloud.select(&perm);
        let planes_r: Vec<DetectedPlane> = planes
            .iter()
            .map(|pl| {
                let inl = pl.inliers.iter().map(|&i| p.len() - 1 - i).collect();
                DetectedPlane::new(pl.normal, pl.offset, inl, &cloud_r, 0.2)
            })
            .collect();
        let (b, _, _) = clean(&cloud_r, &planes_r, &CleanParams::default()).unwrap();
        let mut sa: Vec<[u64; 3]> = a.positions.iter().map(|v| [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()]).collect();
        let mut sb: Vec<[u64; 3]> = b.positions.iter().map(|v| [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()]).collect();
        sa.sort();
        sb.sort();
        assert_eq!(sa, sb);
    }
}
