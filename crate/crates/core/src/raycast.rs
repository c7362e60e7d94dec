//! Ray queries against planar surfaces whose extent is an occupancy bitmap.

use crate::bitmap::OccupancyBitmap;
use crate::geom::{PlaneFrame, Vec2, Vec3};

#[derive(Clone, Debug)]
pub struct SceneSurface {
    pub frame: PlaneFrame,
    pub occupancy: OccupancyBitmap,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub surface: usize,
    pub t: f64,
    pub local: Vec2,
    /// The ray arrived from the side the surface normal points to.
    pub front: bool,
}

#[derive(Clone, Debug, Default)]
pub struct RayScene {
    pub surfaces: Vec<SceneSurface>,
}

impl RayScene {
    pub fn new(surfaces: Vec<SceneSurface>) -> Self {
        RayScene { surfaces }
    }

    #[inline]
    fn test(&self, k: usize, o: &Vec3, d: &Vec3, tmin: f64, tmax: f64) -> Option<Hit> {
        let s = &self.surfaces[k];
        let t = s.frame.intersect_ray(o, d)?;
        if t <= tmin || t >= tmax {
            return None;
        }
        let local = s.frame.to_2d(&(o + d * t));
        s.occupancy.is_set(&local).then(|| Hit {
            surface: k,
            t,
            local,
            front: d.dot(&s.frame.normal) < 0.0,
        })
    }

    /// Nearest occupied hit with `tmin < t < tmax`.
    pub fn first_hit(&self, o: &Vec3, d: &Vec3, tmin: f64, tmax: f64) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        for k in 0..self.surfaces.len() {
            let limit = best.map_or(tmax, |b| b.t);
            if let Some(h) = self.test(k, o, d, tmin, limit) {
                best = Some(h);
            }
        }
        best
    }

    /// Whether any occupied hit exists, ignoring those rejected by `skip`.
    pub fn any_hit(
        &self,
        o: &Vec3,
        d: &Vec3,
        tmin: f64,
        tmax: f64,
        skip: impl Fn(&Hit) -> bool,
    ) -> bool {
        (0..self.surfaces.len()).any(|k| self.test(k, o, d, tmin, tmax).is_some_and(|h| !skip(&h)))
    }
}
