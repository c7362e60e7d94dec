//! Point cloud container, voxel subsampling and file formats.

mod io;
mod normals;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use io::{load, load_ply, load_xyz, save_ply, save_xyz, Format};
pub use normals::estimate_normals;

use crate::geom::{Aabb, Vec3};

/// A single point as seen by the stages.
#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    pub position: Vec3,
    pub normal: Option<Vec3>,
    pub room_label: Option<u32>,
}

/// Structure-of-arrays point cloud. The up axis is always `+z`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub positions: Vec<Vec3>,
    #[serde(default)]
    pub normals: Option<Vec<Vec3>>,
    #[serde(default)]
    pub labels: Option<Vec<Option<u32>>>,
    /// Points whose normal could not be estimated.
    #[serde(default)]
    pub degenerate: Vec<usize>,
}

impl PointCloud {
    pub fn from_positions(positions: Vec<Vec3>) -> Self {
        PointCloud {
            positions,
            ..Default::default()
        }
    }

    pub fn with_normals(positions: Vec<Vec3>, normals: Vec<Vec3>) -> Self {
        assert_eq!(positions.len(), normals.len());
        PointCloud {
            positions,
            normals: Some(normals),
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn has_normals(&self) -> bool {
        self.normals.is_some()
    }

    pub fn normal(&self, i: usize) -> Option<Vec3> {
        self.normals.as_ref().map(|n| n[i])
    }

    pub fn label(&self, i: usize) -> Option<u32> {
        self.labels.as_ref().and_then(|l| l[i])
    }

    pub fn point(&self, i: usize) -> Point {
        Point {
            position: self.positions[i],
            normal: self.normal(i),
            room_label: self.label(i),
        }
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(&self.positions)
    }

    /// Keep the points at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        let remap: HashMap<usize, usize> =
            indices.iter().enumerate().map(|(k, &i)| (i, k)).collect();
        PointCloud {
            positions: indices.iter().map(|&i| self.positions[i]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|n| indices.iter().map(|&i| n[i]).collect()),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            degenerate: self
                .degenerate
                .iter()
                .filter_map(|i| remap.get(i).copied())
                .collect(),
        }
    }
}

fn voxel_key(p: &Vec3, d: f64) -> (i64, i64, i64) {
    (
        (p.x / d).floor() as i64,
        (p.y / d).floor() as i64,
        (p.z / d).floor() as i64,
    )
}

/// Voxel-grid thinning: one point per occupied voxel of edge `min_dist`,
/// the one closest to the voxel's point centroid. Input order is kept.
pub fn subsample(cloud: &PointCloud, min_dist: f64) -> PointCloud {
    cloud.select(&subsample_indices(cloud, min_dist))
}

/// Indices of the points `subsample` keeps, ascending.
pub fn subsample_indices(cloud: &PointCloud, min_dist: f64) -> Vec<usize> {
    assert!(min_dist > 0.0, "min_dist must be positive");
    let mut voxels: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in cloud.positions.iter().enumerate() {
        voxels.entry(voxel_key(p, min_dist)).or_default().push(i);
    }
    let mut keep: Vec<usize> = voxels
        .values()
        .map(|members| {
            let c = members
                .iter()
                .fold(Vec3::zeros(), |a, &i| a + cloud.positions[i])
                / members.len() as f64;
            *members
                .iter()
                .min_by(|&&a, &&b| {
                    let da = (cloud.positions[a] - c).norm_squared();
                    let db = (cloud.positions[b] - c).norm_squared();
                    da.total_cmp(&db).then(a.cmp(&b))
                })
                .unwrap()
        })
        .collect();
    keep.sort_unstable();
    keep
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use std::collections::HashSet;

    #[test]
    fn close_points_merge() {
        let c = PointCloud::from_positions(vec![Vec3::new(0.001, 0.001, 0.001), Vec3::new(0.011, 0.001, 0.001)]);
        assert_eq!(subsample(&c, 0.02).len(), 1);
        let c = PointCloud::from_positions(vec![Vec3::new(0.001, 0.001, 0.001), Vec3::new(0.051, 0.001, 0.001)]);
        assert_eq!(subsample(&c, 0.02).len(), 2);
    }

    #[test]
    fn cube_matches_voxel_hash_oracle() {
        let mut rng = crate::geom::rng_for(3, 0, 0);
        let pts: Vec<Vec3> = (0..10_000)
            .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let oracle: HashSet<(i64, i64, i64)> = pts
            .iter()
            .map(|p| {
                (
                    (p.x / 0.02).floor() as i64,
                    (p.y / 0.02).floor() as i64,
                    (p.z / 0.02).floor() as i64,
                )
            })
            .collect();
        let s = subsample(&PointCloud::from_positions(pts), 0.02);
        assert_eq!(s.len(), oracle.len());
        let again = subsample(&s, 0.02);
        assert_eq!(again.len(), s.len());
    }
}
