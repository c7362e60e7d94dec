//! Monte-Carlo priors: room-or-outside votes per cell from rays cast against
//! the candidate surfaces, and observed support per face.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::CandidateSet;
use crate::complex::{CellComplex, FaceKind, OrientedFace, PlaneId};
use crate::geom::{rng_for, unit_sphere, ConvexSampler, Vec2, Vec3};
use crate::raycast::{RayScene, SceneSurface};

const CELL_STREAM: u64 = 0x5043;
const FACE_STREAM: u64 = 0x5046;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorParams {
    pub k_base: f64,
    pub k_min: usize,
    pub rays: usize,
    pub seed: u64,
}

impl Default for PriorParams {
    fn default() -> Self {
        PriorParams {
            k_base: 100.0,
            k_min: 32,
            rays: 64,
            seed: 0,
        }
    }
}

impl PriorParams {
    pub fn samples(&self, size: f64) -> usize {
        ((self.k_base * size).ceil() as usize).max(self.k_min)
    }
}

/// `cells[c][0]` is the outside prior, `cells[c][r + 1]` the prior of room `r`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    pub n_labels: usize,
    pub cells: Vec<Vec<f64>>,
    pub faces: Vec<f64>,
}

impl Priors {
    pub fn outside(&self, c: usize) -> f64 {
        self.cells[c][0]
    }

    pub fn room(&self, c: usize, r: usize) -> f64 {
        self.cells[c][r + 1]
    }
}

/// Scene of all candidate surfaces, indexed like `set.surfaces`.
pub fn candidate_scene(set: &CandidateSet) -> RayScene {
    RayScene::new(
        set.surfaces
            .iter()
            .map(|s| SceneSurface {
                frame: s.frame.clone(),
                occupancy: s.occupancy.clone(),
            })
            .collect(),
    )
}

/// Vote of a single ray: the renormalized support vector of the first
/// front-side hit, otherwise outside.
pub fn ray_vote(scene: &RayScene, set: &CandidateSet, o: &Vec3, d: &Vec3, out: &mut [f64]) {
    if let Some(h) = scene.first_hit(o, d, 0.0, f64::INFINITY) {
        if h.front {
            let s = &set.surfaces[h.surface];
            if let Some(v) = s.support.at(&h.local) {
                let total: f64 = v.iter().sum();
                if total > 0.0 {
                    for (k, x) in v.iter().enumerate() {
                        out[k + 1] += x / total;
                    }
                    return;
                }
            }
        }
    }
    out[0] += 1.0;
}

pub fn cell_prior(
    complex: &CellComplex,
    c: usize,
    set: &CandidateSet,
    scene: &RayScene,
    params: &PriorParams,
) -> Vec<f64> {
    let cell = &complex.cells[c];
    let sampler = ConvexSampler::new(complex.cell_polygon(c));
    let k = params.samples(cell.volume.max(cell.diameter));
    let mut rng = rng_for(params.seed, CELL_STREAM, c as u64);
    let mut acc = vec![0.0; set.n_labels + 1];
    for _ in 0..k {
        let q = sampler.sample(&mut rng);
        let o = Vec3::new(q.x, q.y, rng.random_range(cell.z.0..cell.z.1));
        for _ in 0..params.rays {
            let d = unit_sphere(&mut rng);
            ray_vote(scene, set, &o, &d, &mut acc);
        }
    }
    let n = (k * params.rays) as f64;
    acc.iter_mut().for_each(|v| *v /= n);
    acc
}

/// Real surfaces lying on the face's arrangement plane.
fn face_sources(complex: &CellComplex, set: &CandidateSet, f: &OrientedFace) -> Vec<usize> {
    let refs = match f.plane() {
        PlaneId::Line(l) => &complex.lines[l].surfaces,
        PlaneId::Cut(k) => &complex.cuts[k].surfaces,
    };
    refs.iter()
        .map(|r| r.surface)
        .filter(|&s| !set.surfaces[s].is_virtual)
        .collect()
}

pub fn sample_face<R: Rng + ?Sized>(f: &OrientedFace, sampler: Option<&ConvexSampler>, rng: &mut R) -> Vec3 {
    match f.kind {
        FaceKind::Lateral { .. } => {
            let (p0, p1, p3) = (f.polygon[0], f.polygon[1], f.polygon[3]);
            p0 + (p1 - p0) * rng.random_range(0.0..1.0) + (p3 - p0) * rng.random_range(0.0..1.0)
        }
        FaceKind::Horizontal { .. } => {
            let q = sampler.expect("horizontal faces need a sampler").sample(rng);
            Vec3::new(q.x, q.y, f.polygon[0].z)
        }
    }
}

pub fn face_prior(complex: &CellComplex, f: &OrientedFace, set: &CandidateSet, params: &PriorParams) -> f64 {
    let sources = face_sources(complex, set, f);
    if sources.is_empty() {
        return 0.0;
    }
    let sampler = match f.kind {
        FaceKind::Horizontal { .. } => {
            let poly: Vec<Vec2> = f.polygon.iter().map(|p| Vec2::new(p.x, p.y)).collect();
            Some(ConvexSampler::new(&poly))
        }
        FaceKind::Lateral { .. } => None,
    };
    let k = params.samples(f.area.max(f.diameter));
    let mut rng = rng_for(params.seed, FACE_STREAM, f.id as u64);
    let hits = (0..k)
        .filter(|_| {
            let p = sample_face(f, sampler.as_ref(), &mut rng);
            sources.iter().any(|&s| {
                let surf = &set.surfaces[s];
                surf.occupancy.is_set(&surf.frame.to_2d(&p))
            })
        })
        .count();
    hits as f64 / k as f64
}

pub fn compute_priors(complex: &CellComplex, set: &CandidateSet, params: &PriorParams) -> Priors {
    let scene = candidate_scene(set);
    let cells = (0..complex.cells.len())
        .into_par_iter()
        .map(|c| cell_prior(complex, c, set, &scene, params))
        .collect();
    let faces = complex
        .faces
        .par_iter()
        .map(|f| face_prior(complex, f, set, params))
        .collect();
    Priors {
        n_labels: set.n_labels,
        cells,
        faces,
    }
}
