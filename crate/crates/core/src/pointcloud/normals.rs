use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::num::NonZero;

use kiddo::{ImmutableKdTree, SquaredEuclidean};
use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::Vec3;

use super::PointCloud;

/// k nearest neighbours of every point (the point itself included).
pub(crate) fn knn(positions: &[Vec3], k: usize) -> Vec<Vec<usize>> {
    let entries: Vec<[f64; 3]> = positions.iter().map(|p| [p.x, p.y, p.z]).collect();
    let tree = ImmutableKdTree::new_from_slice(&entries).expect("kd-tree construction");
    let k = NonZero::new(k.min(entries.len()).max(1)).unwrap();
    entries
        .par_iter()
        .map(|q| {
            tree.query(q)
                .nearest_n::<SquaredEuclidean<f64>>(k)
                .execute()
                .into_iter()
                .map(|r| r.item as usize)
                .collect()
        })
        .collect()
}

fn pca_normal(positions: &[Vec3], nbrs: &[usize]) -> Option<Vec3> {
    let c = nbrs.iter().fold(Vec3::zeros(), |a, &j| a + positions[j]) / nbrs.len() as f64;
    let mut cov = Matrix3::zeros();
    for &j in nbrs {
        let d = positions[j] - c;
        cov += d * d.transpose();
    }
    if cov.trace() < 1e-24 {
        return None;
    }
    let eig = SymmetricEigen::new(cov);
    let (imin, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    Some(eig.eigenvectors.column(imin).into_owned().normalize())
}

#[derive(PartialEq)]
struct Edge(f64, usize, usize);

impl Eq for Edge {}

impl PartialOrd for Edge {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Edge {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| other.2.cmp(&self.2))
    }
}

/// PCA normals over `k` neighbours, oriented by propagation along a minimum
/// spanning tree of the k-NN graph, then flipped per connected component so
/// that most floor normals point up.
pub fn estimate_normals(cloud: &PointCloud, k: usize) -> Result<PointCloud> {
    if k < 3 {
        return Err(Error::Precondition("k must be at least 3".into()));
    }
    if cloud.len() < k + 1 {
        return Err(Error::Precondition(format!(
            "need at least {} points for k = {k}, got {}",
            k + 1,
            cloud.len()
        )));
    }
    let pos = &cloud.positions;
    let nbrs = knn(pos, k);
    let raw: Vec<Option<Vec3>> = nbrs.par_iter().map(|n| pca_normal(pos, n)).collect();
    let degenerate: Vec<usize> = raw
        .iter()
        .enumerate()
        .filter_map(|(i, n)| n.is_none().then_some(i))
        .collect();
    let mut normals: Vec<Vec3> = raw.into_iter().map(|n| n.unwrap_or(Vec3::z())).collect();

    let mut adj: Vec<Vec<usize>> = nbrs.clone();
    for (i, ns) in nbrs.iter().enumerate() {
        for &j in ns {
            if j != i {
                adj[j].push(i);
            }
        }
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }

    let n = pos.len();
    let mut visited = vec![false; n];
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| pos[a].z.total_cmp(&pos[b].z).then(a.cmp(&b)));
    for &root in &order {
        if visited[root] {
            continue;
        }
        if normals[root].z < 0.0 {
            normals[root] = -normals[root];
        }
        let mut component = vec![root];
        visited[root] = true;
        let mut heap = BinaryHeap::new();
        let push = |heap: &mut BinaryHeap<Edge>, i: usize, normals: &[Vec3], visited: &[bool]| {
            for &j in &adj[i] {
                if !visited[j] {
                    heap.push(Edge(1.0 - normals[i].dot(&normals[j]).abs(), i, j));
                }
            }
        };
        push(&mut heap, root, &normals, &visited);
        while let Some(Edge(_, from, to)) = heap.pop() {
            if visited[to] {
                continue;
            }
            visited[to] = true;
            if normals[from].dot(&normals[to]) < 0.0 {
                normals[to] = -normals[to];
            }
            component.push(to);
            push(&mut heap, to, &normals, &visited);
        }
        let zmin = component.iter().map(|&i| pos[i].z).fold(f64::INFINITY, f64::min);
        let zmax = component.iter().map(|&i| pos[i].z).fold(f64::NEG_INFINITY, f64::max);
        let band = zmin + 0.1 * (zmax - zmin).max(1e-9);
        let (mut up, mut down) = (0usize, 0usize);
        for &i in &component {
            if pos[i].z <= band && normals[i].z.abs() > 0.9 {
                if normals[i].z > 0.0 {
                    up += 1;
                } else {
                    down += 1;
                }
            }
        }
        if down > up {
            for &i in &component {
                normals[i] = -normals[i];
            }
        }
    }

    Ok(PointCloud {
        positions: cloud.positions.clone(),
        normals: Some(normals),
        labels: cloud.labels.clone(),
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn plane_z0() {
        let mut rng = crate::geom::rng_for(0, 0, 0);
        let pts: Vec<Vec3> = (0..100)
            .map(|_| Vec3::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), 0.0))
            .collect();
        let c = estimate_normals(&PointCloud::from_positions(pts), 10).unwrap();
        for n in c.normals.unwrap() {
            assert!((n.z.abs() - 1.0).abs() < 1e-6);
            assert!((n.norm() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn plane_x2() {
        let mut rng = crate::geom::rng_for(0, 1, 0);
        let pts: Vec<Vec3> = (0..100)
            .map(|_| Vec3::new(2.0, rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)))
            .collect();
        let c = estimate_normals(&PointCloud::from_positions(pts), 10).unwrap();
        for n in c.normals.unwrap() {
            assert!((n.x.abs() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn sphere_normals_are_radial() {
        let mut rng = crate::geom::rng_for(0, 2, 0);
        let pts: Vec<Vec3> = (0..2000).map(|_| crate::geom::unit_sphere(&mut rng)).collect();
        let c = estimate_normals(&PointCloud::from_positions(pts.clone()), 20).unwrap();
        let cos5 = 5f64.to_radians().cos();
        for (p, n) in pts.iter().zip(c.normals.unwrap()) {
            assert!(n.dot(p).abs() >= cos5, "normal {n:?} at {p:?}");
        }
    }

    #[test]
    fn coincident_points_flagged() {
        let pts = vec![Vec3::new(1.0, 1.0, 1.0); 8];
        let c = estimate_normals(&PointCloud::from_positions(pts), 4).unwrap();
        assert_eq!(c.degenerate.len(), 8);
        assert_eq!(c.normals.unwrap()[0], Vec3::z());
    }

    #[test]
    fn orientation_is_consistent_on_a_floor() {
        let mut rng = crate::geom::rng_for(0, 3, 0);
        let pts: Vec<Vec3> = (0..400)
            .map(|_| Vec3::new(rng.random_range(0.0..2.0), rng.random_range(0.0..2.0), 0.0))
            .collect();
        let c = estimate_normals(&PointCloud::from_positions(pts), 16).unwrap();
        assert!(c.normals.unwrap().iter().all(|n| n.z > 0.999));
    }
}
