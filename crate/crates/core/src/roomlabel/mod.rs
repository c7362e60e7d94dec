//! Room segmentation: patches on detected planes, a mutual visibility graph
//! between them, and Markov clustering of that graph.

pub mod mcl;

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bitmap::OccupancyBitmap;
use crate::geom::{Vec2, Vec3};
use crate::planes::DetectedPlane;
use crate::pointcloud::PointCloud;
use crate::raycast::RayScene;

pub use mcl::{markov_cluster, MclParams, MclResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoomLabelParams {
    pub patch_size: f64,
    pub eps: f64,
    pub mcl: MclParams,
}

impl Default for RoomLabelParams {
    fn default() -> Self {
        RoomLabelParams {
            patch_size: 0.4,
            eps: 0.1,
            mcl: MclParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub plane_index: usize,
    pub pixel: (usize, usize),
    pub center: Vec3,
    pub normal: Vec3,
}

/// Patches together with the coarse bitmaps they were read from.
#[derive(Clone, Debug, Default)]
pub struct PatchSet {
    pub patches: Vec<Patch>,
    pub coarse: Vec<OccupancyBitmap>,
    lookup: HashMap<(usize, usize, usize), usize>,
}

impl PatchSet {
    /// Patch owning the coarse pixel under `q` on plane `plane`.
    pub fn patch_at(&self, plane: usize, q: &Vec2) -> Option<usize> {
        let bm = &self.coarse[plane];
        let i = bm.index_of(q)?;
        self.lookup.get(&(plane, i % bm.width, i / bm.width)).copied()
    }
}

/// One patch per occupied coarse pixel. The center is the mean of the
/// inliers in the pixel, which keeps it inside the observed surface.
pub fn build_patches(planes: &[DetectedPlane], cloud: &PointCloud, patch_size: f64) -> PatchSet {
    let mut set = PatchSet::default();
    for (k, plane) in planes.iter().enumerate() {
        let pts = plane.project(cloud);
        let bm = OccupancyBitmap::from_points(&pts, patch_size);
        let mut sums: Vec<(Vec2, usize)> = vec![(Vec2::zeros(), 0); bm.width * bm.height];
        for q in &pts {
            if let Some(i) = bm.index_of(q) {
                sums[i].0 += q;
                sums[i].1 += 1;
            }
        }
        for (x, y) in bm.set_pixels() {
            let (s, c) = sums[y * bm.width + x];
            set.lookup.insert((k, x, y), set.patches.len());
            set.patches.push(Patch {
                plane_index: k,
                pixel: (x, y),
                center: plane.frame.to_3d(&(s / c as f64)),
                normal: plane.frame.normal,
            });
        }
        set.coarse.push(bm);
    }
    set
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VisibilityGraph {
    pub n: usize,
    pub adjacency: Vec<Vec<usize>>,
}

impl VisibilityGraph {
    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i].binary_search(&j).is_ok()
    }
}

/// Whether the segment between the offset patch centers is unobstructed.
pub fn mutually_visible(a: &Patch, b: &Patch, scene: &RayScene, eps: f64) -> bool {
    let p = a.center + a.normal * eps;
    let q = b.center + b.normal * eps;
    let d = q - p;
    let len = d.norm();
    if len == 0.0 {
        return true;
    }
    let dir = d / len;
    !scene.any_hit(&p, &dir, 0.0, len, |h| {
        (h.surface == a.plane_index && h.t < eps) || (h.surface == b.plane_index && len - h.t < eps)
    })
}

pub fn visibility_graph(patches: &[Patch], scene: &RayScene, eps: f64) -> VisibilityGraph {
    let n = patches.len();
    let upper: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .filter(|&j| mutually_visible(&patches[i], &patches[j], scene, eps))
                .collect()
        })
        .collect();
    let mut adjacency = vec![Vec::new(); n];
    for (i, js) in upper.iter().enumerate() {
        for &j in js {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
    }
    for a in &mut adjacency {
        a.sort_unstable();
    }
    VisibilityGraph { n, adjacency }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RoomLabelSet {
    pub n: usize,
    pub assignment: Vec<Option<u32>>,
}

/// Each inlier takes the label of the patch under it; other points stay
/// unlabeled.
pub fn label_points(
    cloud: &PointCloud,
    planes: &[DetectedPlane],
    patches: &PatchSet,
    patch_labels: &[usize],
    n_labels: usize,
) -> RoomLabelSet {
    let mut assignment = vec![None; cloud.len()];
    for (k, plane) in planes.iter().enumerate() {
        for &i in &plane.inliers {
            let q = plane.frame.to_2d(&cloud.positions[i]);
            if let Some(p) = patches.patch_at(k, &q) {
                assignment[i] = Some(patch_labels[p] as u32);
            }
        }
    }
    RoomLabelSet {
        n: n_labels,
        assignment,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelReport {
    pub patches: usize,
    pub edges: usize,
    pub clusters: usize,
    pub mcl_iterations: usize,
}

/// Full labeling: patches, visibility, clustering, per-point labels.
pub fn label_rooms(
    cloud: &PointCloud,
    planes: &[DetectedPlane],
    params: &RoomLabelParams,
) -> (RoomLabelSet, LabelReport) {
    let patches = build_patches(planes, cloud, params.patch_size);
    let scene = crate::cleaning::scene_from_planes(planes);
    let graph = visibility_graph(&patches.patches, &scene, params.eps);
    let mcl = markov_cluster(&graph.adjacency, &params.mcl);
    log::info!(
        "room labeling: {} patches, {} edges, {} clusters",
        patches.patches.len(),
        graph.edge_count(),
        mcl.n_clusters
    );
    let labels = label_points(cloud, planes, &patches, &mcl.labels, mcl.n_clusters);
    let report = LabelReport {
        patches: patches.patches.len(),
        edges: graph.edge_count(),
        clusters: mcl.n_clusters,
        mcl_iterations: mcl.iterations,
    };
    (labels, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raycast::SceneSurface;
    use rand::Rng;

    fn plane_from(cloud: &PointCloud, normal: Vec3, offset: f64, range: std::ops::Range<usize>) -> DetectedPlane {
        DetectedPlane::new(normal, offset, range.collect(), cloud, 0.2)
    }

    #[test]
    fn dense_square_patch_count_is_bounded_by_grid_cover() {
        let mut rng = crate::geom::rng_for(4, 0, 0);
        let pts: Vec<Vec3> = (0..5000)
            .map(|_| Vec3::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), 0.0))
            .collect();
        let cloud = PointCloud::from_positions(pts);
        let planes = vec![plane_from(&cloud, Vec3::z(), 0.0, 0..5000)];
        let set = build_patches(&planes, &cloud, 0.4);
        let cover = (1.0f64 / 0.4).ceil() as usize;
        assert!(set.patches.len() >= cover * cover && set.patches.len() <= (cover + 1) * (cover + 1));
        for p in &set.patches {
            assert!(planes[0].frame.signed_distance(&p.center).abs() < 1e-12);
            assert_eq!(p.normal, planes[0].normal);
        }
    }

    #[test]
    fn single_inlier_single_patch() {
        let cloud = PointCloud::from_positions(vec![Vec3::new(1.0, 2.0, 3.0)]);
        let planes = vec![plane_from(&cloud, Vec3::z(), 3.0, 0..1)];
        let set = build_patches(&planes, &cloud, 0.4);
        assert_eq!(set.patches.len(), 1);
        assert!((set.patches[0].center - Vec3::new(1.0, 2.0, 3.0)).norm() < 1e-12);
    }

    fn wall(x: f64, normal: Vec3) -> SceneSurface {
        let frame = crate::geom::PlaneFrame::new(normal, normal.x * x);
        let pts: Vec<Vec2> = [(0.0, -5.0), (10.0, 5.0), (0.0, 5.0), (10.0, -5.0)]
            .iter()
            .map(|&(a, b)| frame.to_2d(&Vec3::new(x, a, b)))
            .collect();
        let pts: Vec<Vec2> = {
            let (lo, hi) = pts.iter().fold((pts[0], pts[0]), |(l, h), p| (l.inf(p), h.sup(p)));
            (0..=50)
                .flat_map(|i| (0..=50).map(move |j| Vec2::new(lo.x + (hi.x - lo.x) * i as f64 / 50.0, lo.y + (hi.y - lo.y) * j as f64 / 50.0)))
                .collect()
        };
        SceneSurface {
            occupancy: OccupancyBitmap::from_points(&pts, 0.2),
            frame,
        }
    }

    fn patch(plane: usize, center: Vec3, normal: Vec3) -> Patch {
        Patch {
            plane_index: plane,
            pixel: (0, 0),
            center,
            normal,
        }
    }

    #[test]
    fn facing_walls_see_each_other_unless_divided() {
        let a = patch(0, Vec3::new(0.0, 5.0, 1.0), Vec3::x());
        let b = patch(1, Vec3::new(4.0, 5.0, 1.0), -Vec3::x());
        let open = RayScene::new(vec![wall(0.0, Vec3::x()), wall(4.0, -Vec3::x())]);
        assert!(mutually_visible(&a, &b, &open, 0.1));
        let divided = RayScene::new(vec![wall(0.0, Vec3::x()), wall(4.0, -Vec3::x()), wall(2.0, Vec3::x())]);
        assert!(!mutually_visible(&a, &b, &divided, 0.1));
    }

    #[test]
    fn patch_behind_own_plane_is_hidden() {
        let a = patch(0, Vec3::new(0.0, 5.0, 1.0), Vec3::x());
        let b = patch(1, Vec3::new(-0.3, 6.0, 1.0), -Vec3::x());
        let scene = RayScene::new(vec![wall(0.0, Vec3::x()), wall(-0.3, -Vec3::x())]);
        assert!(!mutually_visible(&a, &b, &scene, 0.1));
    }

    #[test]
    fn points_off_planes_stay_unlabeled() {
        let mut pts: Vec<Vec3> = (0..10).map(|i| Vec3::new(i as f64 * 0.1, 0.0, 0.0)).collect();
        pts.push(Vec3::new(0.5, 0.5, 0.5));
        let cloud = PointCloud::from_positions(pts);
        let planes = vec![plane_from(&cloud, Vec3::z(), 0.0, 0..10)];
        let set = build_patches(&planes, &cloud, 0.4);
        let labels = vec![0; set.patches.len()];
        let l = label_points(&cloud, &planes, &set, &labels, 1);
        assert!(l.assignment[..10].iter().all(|a| *a == Some(0)));
        assert_eq!(l.assignment[10], None);
    }
}
