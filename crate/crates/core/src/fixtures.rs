//! Hand-built, fully observed candidate surfaces for tests and examples.

use crate::bitmap::{MultiLabelBitmap, OccupancyBitmap};
use crate::candidates::{SurfaceCandidate, SurfaceClass};
use crate::geom::{Aabb, PlaneFrame, Vec2, Vec3};

/// Fully observed rectangular surface spanning the box `min..max` on the
/// plane `normal·p = offset`, every pixel carrying `label`.
pub fn box_surface(
    class: SurfaceClass,
    normal: Vec3,
    offset: f64,
    min: [f64; 3],
    max: [f64; 3],
    label: Option<u32>,
    n_labels: usize,
) -> SurfaceCandidate {
    let frame = PlaneFrame::new(normal, offset);
    let mut lo = Vec2::repeat(f64::INFINITY);
    let mut hi = Vec2::repeat(f64::NEG_INFINITY);
    for i in 0..8 {
        let p = Vec3::new(
            if i & 1 == 0 { min[0] } else { max[0] },
            if i & 2 == 0 { min[1] } else { max[1] },
            if i & 4 == 0 { min[2] } else { max[2] },
        );
        let q = frame.to_2d(&p);
        lo = lo.inf(&q);
        hi = hi.sup(&q);
    }
    let step = 0.05;
    let nx = ((hi.x - lo.x) / step).ceil() as usize;
    let ny = ((hi.y - lo.y) / step).ceil() as usize;
    let pts: Vec<Vec2> = (0..=nx)
        .flat_map(|i| {
            (0..=ny).map(move |j| {
                Vec2::new((lo.x + i as f64 * step).min(hi.x), (lo.y + j as f64 * step).min(hi.y))
            })
        })
        .collect();
    let labels = vec![label; pts.len()];
    SurfaceCandidate {
        class,
        frame,
        occupancy: OccupancyBitmap::from_points(&pts, 0.2),
        support: MultiLabelBitmap::from_labeled_points(&pts, &labels, n_labels, 0.1),
        bounds: Aabb { min, max },
        is_virtual: false,
        source_plane: None,
        inliers: Vec::new(),
    }
}

/// Room `[x0,x1]×[y0,y1]×[z0,z1]` with inward-facing surfaces labeled `label`.
pub fn box_room_at(lo: [f64; 3], hi: [f64; 3], label: u32, n_labels: usize) -> Vec<SurfaceCandidate> {
    use SurfaceClass::*;
    let l = Some(label);
    vec![
        box_surface(Wall, Vec3::x(), lo[0], lo, [lo[0], hi[1], hi[2]], l, n_labels),
        box_surface(Wall, -Vec3::x(), -hi[0], [hi[0], lo[1], lo[2]], hi, l, n_labels),
        box_surface(Wall, Vec3::y(), lo[1], lo, [hi[0], lo[1], hi[2]], l, n_labels),
        box_surface(Wall, -Vec3::y(), -hi[1], [lo[0], hi[1], lo[2]], hi, l, n_labels),
        box_surface(Slab, Vec3::z(), lo[2], lo, [hi[0], hi[1], lo[2]], l, n_labels),
        box_surface(Slab, -Vec3::z(), -hi[2], [lo[0], lo[1], hi[2]], hi, l, n_labels),
    ]
}

pub fn box_room(w: f64, d: f64, h: f64) -> Vec<SurfaceCandidate> {
    box_room_at([0.0; 3], [w, d, h], 0, 1)
}
