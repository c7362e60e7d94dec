//! Scores of a reconstruction against synthetic ground truth.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geom::Vec3;
use crate::model::BuildingModel;
use crate::pipeline::Reconstruction;
use crate::synthgen::GroundTruth;

/// Share of labeled points whose predicted cluster's majority true room is
/// their own true room. Unlabeled and outlier points are ignored.
pub fn label_purity(pred: &[Option<u32>], truth: &[Option<u32>]) -> f64 {
    let mut counts: BTreeMap<u32, BTreeMap<u32, usize>> = BTreeMap::new();
    for (p, t) in pred.iter().zip(truth) {
        if let (Some(p), Some(t)) = (p, t) {
            *counts.entry(*p).or_default().entry(*t).or_default() += 1;
        }
    }
    let total: usize = counts.values().flat_map(|m| m.values()).sum();
    if total == 0 {
        return 0.0;
    }
    let majority: usize = counts.values().map(|m| m.values().copied().max().unwrap_or(0)).sum();
    majority as f64 / total as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CleaningScore {
    /// Injected outliers present before cleaning that were removed.
    pub outliers_removed: f64,
    /// Surface points present before cleaning that were removed.
    pub interior_loss: f64,
}

/// `before` and `after` are input indices of the points entering and
/// leaving the cleaning stage.
pub fn cleaning_score(before: &[usize], after: &[usize], gt: &GroundTruth) -> CleaningScore {
    let kept: std::collections::HashSet<usize> = after.iter().copied().collect();
    let (mut out_total, mut out_removed, mut in_total, mut in_removed) = (0usize, 0usize, 0usize, 0usize);
    for &i in before {
        let removed = !kept.contains(&i);
        if gt.outlier[i] {
            out_total += 1;
            out_removed += removed as usize;
        } else {
            in_total += 1;
            in_removed += removed as usize;
        }
    }
    CleaningScore {
        outliers_removed: if out_total == 0 { 1.0 } else { out_removed as f64 / out_total as f64 },
        interior_loss: if in_total == 0 { 0.0 } else { in_removed as f64 / in_total as f64 },
    }
}

/// Model room holding the centroid of each true room, if any.
pub fn match_rooms(rec: &Reconstruction, gt: &GroundTruth) -> Vec<Option<usize>> {
    gt.rooms
        .iter()
        .map(|r| {
            let n = r.polygon.len() as f64;
            let (sx, sy) = r.polygon.iter().fold((0.0, 0.0), |a, p| (a.0 + p[0], a.1 + p[1]));
            let c = Vec3::new(sx / n, sy / n, 0.5 * (r.z_lo + r.z_hi));
            rec.complex.locate(&c).and_then(|cell| rec.solved.labels.room(cell))
        })
        .collect()
}

/// Relative volume error per true room; `None` where no room matched.
pub fn volume_errors(rec: &Reconstruction, gt: &GroundTruth) -> Vec<Option<f64>> {
    match_rooms(rec, gt)
        .iter()
        .zip(&gt.rooms)
        .map(|(m, r)| {
            let room = rec.model.room((*m)?)?;
            Some((room.volume - r.volume).abs() / r.volume)
        })
        .collect()
}

/// Total area of wall faces the objective pays for, with and without the
/// support discount.
pub fn active_wall_area(rec: &Reconstruction) -> (f64, f64) {
    let labels = &rec.solved.labels;
    let (mut raw, mut weighted) = (0.0, 0.0);
    for f in &rec.complex.faces {
        let w = 1.0 - rec.priors.faces[f.id];
        for wall in &f.boundary_walls {
            if labels.walls[f.cb].contains(wall) {
                raw += f.area;
                weighted += w * f.area;
            }
        }
        for wall in &f.inner_walls {
            let d = labels.walls[f.cb].contains(wall) as i32 - labels.walls[f.ca].contains(wall) as i32;
            raw += d as f64 * f.area;
            weighted += d as f64 * w * f.area;
        }
    }
    (raw, weighted)
}

/// Angle in degrees between the in-plane axis of a vertical model wall and
/// a 2D direction, folded to `[0, 90]`.
pub fn axis_angle_deg(axis: [f64; 3], dir: [f64; 2]) -> f64 {
    let a = Vec3::new(axis[0], axis[1], 0.0).normalize();
    let d = Vec3::new(dir[0], dir[1], 0.0).normalize();
    a.dot(&d).abs().min(1.0).acos().to_degrees()
}

/// Vertical walls of the model ordered by angle to `dir`, closest first.
pub fn walls_by_direction(model: &BuildingModel, dir: [f64; 2]) -> Vec<(usize, f64)> {
    let mut v: Vec<(usize, f64)> = model
        .walls
        .iter()
        .filter(|w| w.kind == crate::candidates::WallKind::Vertical)
        .map(|w| (w.id, axis_angle_deg(w.axis, dir)))
        .collect();
    v.sort_by(|a, b| a.1.total_cmp(&b.1));
    v
}
