//! Flat `key = value` configuration carrying every tunable of the pipeline.

use std::fmt::Write;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::candidates::CandidateParams;
use crate::cleaning::CleanParams;
use crate::complex::ComplexParams;
use crate::error::{Error, Result};
use crate::ilp::{ModelOptions, SolveParams};
use crate::planes::RansacParams;
use crate::priors::PriorParams;
use crate::roomlabel::{MclParams, RoomLabelParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub subsample: f64,
    pub normal_neighbors: usize,
    pub ransac_distance: f64,
    pub ransac_cluster_eps: f64,
    pub ransac_normal_deg: f64,
    pub ransac_min_points: usize,
    pub ransac_miss_probability: f64,
    pub occupancy_pixel: f64,
    pub support_pixel: f64,
    pub clean_threshold: f64,
    pub clean_iterations: usize,
    pub clean_rays: usize,
    pub clean_self_eps: f64,
    pub patch_size: f64,
    pub visibility_eps: f64,
    pub mcl_inflation: f64,
    pub mcl_max_iters: usize,
    pub min_wall_area: f64,
    pub min_slab_area: f64,
    pub tilt_tolerance_deg: f64,
    pub azimuth_tolerance_deg: f64,
    pub dilation: usize,
    pub max_thickness: f64,
    pub pair_max_angle_deg: f64,
    pub virtual_thickness: f64,
    pub merge_tolerance: f64,
    pub bbox_margin: f64,
    pub z_margin: f64,
    pub slab_footprint_margin: f64,
    pub prior_k_base: f64,
    pub prior_k_min: usize,
    pub prior_rays: usize,
    pub alpha: f64,
    pub prune_rooms: bool,
    pub outside_side_rows: bool,
    pub mip_gap: f64,
    pub time_limit: f64,
    pub int_tol: f64,
}

impl Default for Config {
    fn default() -> Self {
        let r = RansacParams::default();
        let c = CleanParams::default();
        let l = RoomLabelParams::default();
        let k = CandidateParams::default();
        let x = ComplexParams::default();
        let p = PriorParams::default();
        let m = ModelOptions::default();
        let s = SolveParams::default();
        Config {
            seed: 0,
            subsample: 0.02,
            normal_neighbors: 16,
            ransac_distance: r.distance,
            ransac_cluster_eps: r.cluster_eps,
            ransac_normal_deg: r.normal_threshold_deg,
            ransac_min_points: r.min_points,
            ransac_miss_probability: r.miss_probability,
            occupancy_pixel: k.occupancy_pixel,
            support_pixel: k.support_pixel,
            clean_threshold: c.threshold,
            clean_iterations: c.iterations,
            clean_rays: c.rays,
            clean_self_eps: c.self_eps,
            patch_size: l.patch_size,
            visibility_eps: l.eps,
            mcl_inflation: l.mcl.inflation,
            mcl_max_iters: l.mcl.max_iters,
            min_wall_area: k.min_wall_area,
            min_slab_area: k.min_slab_area,
            tilt_tolerance_deg: k.tilt_tolerance_deg,
            azimuth_tolerance_deg: k.azimuth_tolerance_deg,
            dilation: k.dilation,
            max_thickness: k.max_thickness,
            pair_max_angle_deg: k.max_angle_deg,
            virtual_thickness: k.virtual_thickness,
            merge_tolerance: x.merge_tolerance,
            bbox_margin: x.bbox_margin,
            z_margin: x.z_margin,
            slab_footprint_margin: x.slab_footprint_margin,
            prior_k_base: p.k_base,
            prior_k_min: p.k_min,
            prior_rays: p.rays,
            alpha: m.alpha,
            prune_rooms: m.prune_rooms,
            outside_side_rows: m.outside_side_rows,
            mip_gap: s.gap,
            time_limit: s.time_limit.as_secs_f64(),
            int_tol: s.int_tol,
        }
    }
}

/// Key, description, and whether the default is taken from the method's
/// published settings (`true`) or chosen for this implementation.
pub const KEYS: &[(&str, &str, bool)] = &[
    ("seed", "master random seed", false),
    ("subsample", "minimum point spacing after thinning [m]", true),
    ("normal_neighbors", "neighbours for normal estimation", false),
    ("ransac_distance", "plane inlier distance [m]", true),
    ("ransac_cluster_eps", "connectivity radius of a plane's inliers [m]", true),
    ("ransac_normal_deg", "normal deviation for inliers [deg]", true),
    ("ransac_min_points", "minimum inliers per plane", true),
    ("ransac_miss_probability", "probability of missing the best plane", true),
    ("occupancy_pixel", "occupancy bitmap pixel [m]", true),
    ("support_pixel", "room support bitmap pixel [m]", true),
    ("clean_threshold", "minimum inside score to keep a point", true),
    ("clean_iterations", "cleaning iterations", true),
    ("clean_rays", "hemisphere rays per point", true),
    ("clean_self_eps", "ray start offset [m]", false),
    ("patch_size", "visibility patch edge [m]", true),
    ("visibility_eps", "visibility ray shortening [m]", true),
    ("mcl_inflation", "Markov clustering inflation", true),
    ("mcl_max_iters", "Markov clustering iteration cap", false),
    ("min_wall_area", "minimum wall surface area [m2]", true),
    ("min_slab_area", "minimum slab surface area [m2]", true),
    ("tilt_tolerance_deg", "tilt allowed before a plane is dropped [deg]", false),
    ("azimuth_tolerance_deg", "wall directions merged below this angle [deg]", false),
    ("dilation", "support bitmap dilation radius [pixels]", true),
    ("max_thickness", "maximum wall and slab thickness [m]", true),
    ("pair_max_angle_deg", "maximum angle between paired surfaces [deg]", false),
    ("virtual_thickness", "offset of synthesized opposing surfaces [m]", true),
    ("merge_tolerance", "coincident plane merge distance [m]", false),
    ("bbox_margin", "horizontal margin of the cell complex [m]", false),
    ("z_margin", "vertical margin of the cell complex [m]", false),
    ("slab_footprint_margin", "slab extent beyond its surfaces [m]", false),
    ("prior_k_base", "prior samples per unit size", false),
    ("prior_k_min", "minimum prior samples", false),
    ("prior_rays", "rays per cell prior sample", false),
    ("alpha", "wall face cost weight", true),
    ("prune_rooms", "omit room variables with zero prior", false),
    ("outside_side_rows", "emit the redundant outside-side rows", false),
    ("mip_gap", "relative optimality gap", false),
    ("time_limit", "solver time limit [s]", false),
    ("int_tol", "integrality tolerance", false),
];

fn parse_value(raw: &str) -> Value {
    if let Ok(b) = raw.parse::<bool>() {
        return Value::Bool(b);
    }
    if let Ok(u) = raw.parse::<u64>() {
        return Value::from(u);
    }
    if let Ok(f) = raw.parse::<f64>() {
        if let Some(n) = serde_json::Number::from_f64(f) {
            return Value::Number(n);
        }
    }
    Value::String(raw.to_string())
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let mut map = Map::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let k = k.trim();
            if !KEYS.iter().any(|e| e.0 == k) {
                return Err(Error::Config(format!("line {}: unknown key `{k}`", n + 1)));
            }
            if map.insert(k.to_string(), parse_value(v.trim())).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", n + 1)));
            }
        }
        let cfg: Config = serde_json::from_value(Value::Object(map)).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::parse(&text)
    }

    /// Set one key from its text form, as on the command line.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut map = serde_json::to_value(&*self).expect("config serializes");
        if !KEYS.iter().any(|e| e.0 == key) {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
        map[key] = parse_value(value);
        let cfg: Config = serde_json::from_value(map).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        *self = cfg;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("subsample", self.subsample),
            ("ransac_distance", self.ransac_distance),
            ("ransac_cluster_eps", self.ransac_cluster_eps),
            ("occupancy_pixel", self.occupancy_pixel),
            ("support_pixel", self.support_pixel),
            ("clean_self_eps", self.clean_self_eps),
            ("patch_size", self.patch_size),
            ("visibility_eps", self.visibility_eps),
            ("max_thickness", self.max_thickness),
            ("virtual_thickness", self.virtual_thickness),
            ("merge_tolerance", self.merge_tolerance),
            ("prior_k_base", self.prior_k_base),
            ("time_limit", self.time_limit),
            ("int_tol", self.int_tol),
        ];
        for (k, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{k} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("alpha", self.alpha),
            ("bbox_margin", self.bbox_margin),
            ("z_margin", self.z_margin),
            ("slab_footprint_margin", self.slab_footprint_margin),
            ("min_wall_area", self.min_wall_area),
            ("min_slab_area", self.min_slab_area),
            ("mip_gap", self.mip_gap),
        ];
        for (k, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{k} must be non-negative, got {v}")));
            }
        }
        let ranges = [
            ("clean_threshold", self.clean_threshold, 0.0, 1.0),
            ("ransac_miss_probability", self.ransac_miss_probability, 0.0, 1.0),
            ("ransac_normal_deg", self.ransac_normal_deg, 0.0, 90.0),
            ("tilt_tolerance_deg", self.tilt_tolerance_deg, 0.0, 45.0),
            ("azimuth_tolerance_deg", self.azimuth_tolerance_deg, 0.0, 45.0),
            ("pair_max_angle_deg", self.pair_max_angle_deg, 0.0, 90.0),
        ];
        for (k, v, lo, hi) in ranges {
            if !(v >= lo && v <= hi) {
                return Err(Error::Config(format!("{k} must lie in [{lo}, {hi}], got {v}")));
            }
        }
        if self.mcl_inflation <= 1.0 {
            return Err(Error::Config(format!("mcl_inflation must exceed 1, got {}", self.mcl_inflation)));
        }
        let counts = [
            ("normal_neighbors", self.normal_neighbors.saturating_sub(2)),
            ("ransac_min_points", self.ransac_min_points),
            ("clean_rays", self.clean_rays),
            ("prior_k_min", self.prior_k_min),
            ("prior_rays", self.prior_rays),
            ("mcl_max_iters", self.mcl_max_iters),
        ];
        for (k, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{k} is too small")));
            }
        }
        Ok(())
    }

    /// The file form, every key present, with a comment per key.
    pub fn render(&self) -> String {
        let map = serde_json::to_value(self).expect("config serializes");
        let mut out = String::new();
        for (k, doc, published) in KEYS {
            let tag = if *published { "" } else { " (implementation default)" };
            let _ = writeln!(out, "# {doc}{tag}");
            let _ = writeln!(out, "{k} = {}", map[*k]);
        }
        out
    }

    pub fn ransac(&self) -> RansacParams {
        RansacParams {
            distance: self.ransac_distance,
            cluster_eps: self.ransac_cluster_eps,
            normal_threshold_deg: self.ransac_normal_deg,
            min_points: self.ransac_min_points,
            miss_probability: self.ransac_miss_probability,
            pixel_size: self.occupancy_pixel,
            seed: self.seed,
        }
    }

    pub fn clean(&self) -> CleanParams {
        CleanParams {
            threshold: self.clean_threshold,
            iterations: self.clean_iterations,
            rays: self.clean_rays,
            self_eps: self.clean_self_eps,
            seed: self.seed,
        }
    }

    pub fn room_labels(&self) -> RoomLabelParams {
        RoomLabelParams {
            patch_size: self.patch_size,
            eps: self.visibility_eps,
            mcl: MclParams {
                inflation: self.mcl_inflation,
                max_iters: self.mcl_max_iters,
                ..MclParams::default()
            },
        }
    }

    pub fn candidates(&self) -> CandidateParams {
        CandidateParams {
            min_wall_area: self.min_wall_area,
            min_slab_area: self.min_slab_area,
            tilt_tolerance_deg: self.tilt_tolerance_deg,
            azimuth_tolerance_deg: self.azimuth_tolerance_deg,
            occupancy_pixel: self.occupancy_pixel,
            support_pixel: self.support_pixel,
            dilation: self.dilation,
            max_thickness: self.max_thickness,
            max_angle_deg: self.pair_max_angle_deg,
            virtual_thickness: self.virtual_thickness,
        }
    }

    pub fn complex(&self) -> ComplexParams {
        ComplexParams {
            merge_tolerance: self.merge_tolerance,
            bbox_margin: self.bbox_margin,
            z_margin: self.z_margin,
            slab_footprint_margin: self.slab_footprint_margin,
        }
    }

    pub fn priors(&self) -> PriorParams {
        PriorParams {
            k_base: self.prior_k_base,
            k_min: self.prior_k_min,
            rays: self.prior_rays,
            seed: self.seed,
        }
    }

    pub fn model_options(&self) -> ModelOptions {
        ModelOptions {
            alpha: self.alpha,
            prune_rooms: self.prune_rooms,
            outside_side_rows: self.outside_side_rows,
        }
    }

    pub fn solve_params(&self) -> SolveParams {
        SolveParams {
            gap: self.mip_gap,
            time_limit: Duration::from_secs_f64(self.time_limit),
            int_tol: self.int_tol,
            max_nodes: None,
        }
    }
}
