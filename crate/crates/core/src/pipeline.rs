//! Stage orchestration, stage dumps and run artifacts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::candidates::{build_candidates, CandidateSet};
use crate::cleaning::{clean, CleanReport};
use crate::complex::{build_complex, CellComplex};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::ilp::{
    build_model, export_lp, solution_json, solve, validate_labels, CellLabels, ForcedValue, IlpModel, Labeling,
    SolveStatus, Violation,
};
use crate::model::{export_binary, export_obj, extract, BuildingModel, MeshSelection};
use crate::planes::{detect_planes, DetectedPlane};
use crate::pointcloud::{estimate_normals, subsample_indices, PointCloud};
use crate::priors::{compute_priors, Priors};
use crate::roomlabel::{label_rooms, LabelReport};

pub const STAGES: &[&str] = &["load", "planes", "clean", "label", "candidates", "complex", "priors", "solve", "model"];

/// Seconds per pipeline phase.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub plane_detection: f64,
    pub cleaning: f64,
    pub auto_labeling: f64,
    pub arrangement_and_priors: f64,
    pub optimization: f64,
    pub total: f64,
}

impl Timings {
    pub fn report(&self) -> String {
        let mut out = String::new();
        let rows = [
            ("plane detection", self.plane_detection),
            ("cleaning", self.cleaning),
            ("auto labeling", self.auto_labeling),
            ("arrangement + priors", self.arrangement_and_priors),
            ("optimization", self.optimization),
            ("total", self.total),
        ];
        for (name, s) in rows {
            let _ = writeln!(out, "{name:<22}{s:>10.3} s");
        }
        out
    }
}

/// Thinned input with normals, and the input index of each kept point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Loaded {
    pub cloud: PointCloud,
    pub origin: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cleaned {
    pub cloud: PointCloud,
    pub origin: Vec<usize>,
    pub planes: Vec<DetectedPlane>,
    pub report: CleanReport,
}

/// Cleaned cloud with per-point room labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Labeled {
    pub cleaned: Cleaned,
    pub n_labels: usize,
    pub report: LabelReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solved {
    pub ilp: IlpModel,
    pub labeling: Labeling,
    pub labels: CellLabels,
    pub violations: Vec<Violation>,
}

pub fn load_stage(cloud: PointCloud, cfg: &Config) -> Result<Loaded> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let origin = subsample_indices(&cloud, cfg.subsample);
    let mut thin = cloud.select(&origin);
    if !thin.has_normals() {
        thin = estimate_normals(&thin, cfg.normal_neighbors)?;
    }
    Ok(Loaded { cloud: thin, origin })
}

pub fn planes_stage(loaded: &Loaded, cfg: &Config) -> Result<Vec<DetectedPlane>> {
    detect_planes(&loaded.cloud, &cfg.ransac())
}

pub fn clean_stage(cloud: &PointCloud, origin: &[usize], planes: &[DetectedPlane], cfg: &Config) -> Result<Cleaned> {
    let (cloud, planes, report) = clean(cloud, planes, &cfg.clean())?;
    let origin = report.kept.iter().map(|&i| origin[i]).collect();
    Ok(Cleaned {
        cloud,
        origin,
        planes,
        report,
    })
}

pub fn label_stage(cleaned: Cleaned, cfg: &Config) -> Labeled {
    let (labels, report) = label_rooms(&cleaned.cloud, &cleaned.planes, &cfg.room_labels());
    let mut cleaned = cleaned;
    cleaned.cloud.labels = Some(labels.assignment);
    Labeled {
        cleaned,
        n_labels: labels.n,
        report,
    }
}

pub fn candidates_stage(labeled: &Labeled, cfg: &Config) -> CandidateSet {
    build_candidates(&labeled.cleaned.planes, &labeled.cleaned.cloud, labeled.n_labels, &cfg.candidates())
}

pub fn complex_stage(set: &CandidateSet, cfg: &Config) -> Result<CellComplex> {
    build_complex(set, &cfg.complex())
}

pub fn priors_stage(complex: &CellComplex, set: &CandidateSet, cfg: &Config) -> Priors {
    compute_priors(complex, set, &cfg.priors())
}

pub fn solve_stage(
    complex: &CellComplex,
    priors: &Priors,
    set: &CandidateSet,
    cfg: &Config,
    forced: &[ForcedValue],
) -> Result<Solved> {
    let ilp = build_model(complex, priors, set.walls.len(), &cfg.model_options(), forced)?;
    let labeling = solve(&ilp, &cfg.solve_params())?;
    if labeling.status == SolveStatus::Infeasible {
        return Err(Error::Solver("the constraints admit no labeling".into()));
    }
    let labels = CellLabels::from_values(&ilp, &labeling.values);
    let violations = validate_labels(&labels, complex);
    if !violations.is_empty() {
        log::warn!("{} constraint violations in the solution", violations.len());
    }
    Ok(Solved {
        ilp,
        labeling,
        labels,
        violations,
    })
}

/// Everything a full run produces.
#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub config: Config,
    /// Input index of each point entering cleaning.
    pub loaded_origin: Vec<usize>,
    pub planes: Vec<DetectedPlane>,
    pub labeled: Labeled,
    pub candidates: CandidateSet,
    pub complex: CellComplex,
    pub priors: Priors,
    pub solved: Solved,
    pub model: BuildingModel,
    pub timings: Timings,
}

impl Reconstruction {
    /// Cleaned, labeled points.
    pub fn cloud(&self) -> &PointCloud {
        &self.labeled.cleaned.cloud
    }

    /// Input index of each cleaned point.
    pub fn origin(&self) -> &[usize] {
        &self.labeled.cleaned.origin
    }
}

fn timed<T>(acc: &mut f64, f: impl FnOnce() -> T) -> T {
    let t = Instant::now();
    let out = f();
    *acc += t.elapsed().as_secs_f64();
    out
}

pub fn run_cloud(cloud: PointCloud, cfg: &Config) -> Result<Reconstruction> {
    cfg.validate()?;
    let start = Instant::now();
    let mut t = Timings::default();
    let loaded = timed(&mut t.plane_detection, || load_stage(cloud, cfg)).map_err(|e| e.in_stage("load"))?;
    let planes = timed(&mut t.plane_detection, || planes_stage(&loaded, cfg)).map_err(|e| e.in_stage("planes"))?;
    log::info!("{} planes from {} points", planes.len(), loaded.cloud.len());
    let cleaned = timed(&mut t.cleaning, || clean_stage(&loaded.cloud, &loaded.origin, &planes, cfg))
        .map_err(|e| e.in_stage("clean"))?;
    let labeled = timed(&mut t.auto_labeling, || label_stage(cleaned, cfg));
    let candidates = timed(&mut t.arrangement_and_priors, || candidates_stage(&labeled, cfg));
    let complex = timed(&mut t.arrangement_and_priors, || complex_stage(&candidates, cfg))
        .map_err(|e| e.in_stage("complex"))?;
    log::info!("{} cells, {} faces", complex.cells.len(), complex.faces.len());
    let priors = timed(&mut t.arrangement_and_priors, || priors_stage(&complex, &candidates, cfg));
    let solved = timed(&mut t.optimization, || solve_stage(&complex, &priors, &candidates, cfg, &[]))
        .map_err(|e| e.in_stage("solve"))?;
    let model = extract(&solved.labels, &complex, &candidates);
    t.total = start.elapsed().as_secs_f64();
    Ok(Reconstruction {
        config: cfg.clone(),
        loaded_origin: loaded.origin,
        planes,
        labeled,
        candidates,
        complex,
        priors,
        solved,
        model,
        timings: t,
    })
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, serde_json::to_vec(value)?)
}

fn read_json<T: DeserializeOwned>(dir: &Path, name: &str) -> Result<T> {
    let path = dir.join(name);
    if !path.exists() {
        return Err(Error::NotFound(format!("missing prerequisite dump {}", path.display())));
    }
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
}

/// Model, meshes, solution, validation and timing files.
pub fn write_outputs(
    dir: &Path,
    model: &BuildingModel,
    solved: &Solved,
    timings: Option<&Timings>,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: &str, bytes: Vec<u8>| -> Result<()> {
        let p = dir.join(name);
        write_file(&p, bytes)?;
        written.push(p);
        Ok(())
    };
    put("model.json", model.to_json().into_bytes())?;
    for (name, sel) in [
        ("rooms.obj", MeshSelection::Rooms),
        ("walls.obj", MeshSelection::Walls),
        ("model.obj", MeshSelection::All),
    ] {
        put(name, export_obj(model, &sel).expect("group selections always resolve").into_bytes())?;
    }
    put("model.bin", export_binary(model, &MeshSelection::All).expect("group selection"))?;
    put("solution.json", serde_json::to_vec(&solution_json(&solved.ilp, &solved.labeling))?)?;
    put("validation.json", serde_json::to_vec_pretty(&solved.violations)?)?;
    if let Ok(lp) = export_lp(&solved.ilp) {
        put("model.lp", lp.into_bytes())?;
    }
    if let Some(t) = timings {
        put("timing.txt", t.report().into_bytes())?;
        put("timing.json", serde_json::to_vec_pretty(t)?)?;
    }
    Ok(written)
}

/// Stage dumps of a full run, so single stages can be rerun later.
pub fn write_dumps(dir: &Path, rec: &Reconstruction) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join("planes.json"), &rec.planes)?;
    write_json(&dir.join("clean.json"), &rec.labeled.cleaned)?;
    write_json(&dir.join("label.json"), &rec.labeled)?;
    write_json(&dir.join("candidates.json"), &rec.candidates)?;
    write_json(&dir.join("complex.json"), &rec.complex.debug_dump())?;
    write_json(&dir.join("priors.json"), &rec.priors)?;
    write_json(&dir.join("solve.json"), &rec.solved)?;
    write_file(&dir.join("config.txt"), rec.config.render())
}

pub fn run(input: &Path, cfg: &Config, out: &Path) -> Result<Reconstruction> {
    cfg.validate()?;
    let cloud = crate::pointcloud::load(input).map_err(|e| e.in_stage("load"))?;
    let rec = run_cloud(cloud, cfg)?;
    write_dumps(out, &rec)?;
    write_outputs(out, &rec.model, &rec.solved, Some(&rec.timings))?;
    Ok(rec)
}

/// Run one stage from the dumps of its predecessors in `dir`, writing its
/// own dump there. `input` is only read by `load`.
pub fn run_stage(name: &str, input: Option<&Path>, cfg: &Config, dir: &Path) -> Result<PathBuf> {
    cfg.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let out = |file: &str| dir.join(file);
    let result = (|| -> Result<PathBuf> {
        match name {
            "load" => {
                let input = input.ok_or_else(|| Error::Invalid("stage load needs an input point cloud".into()))?;
                let loaded = load_stage(crate::pointcloud::load(input)?, cfg)?;
                write_json(&out("load.json"), &loaded)?;
                Ok(out("load.json"))
            }
            "planes" => {
                let loaded: Loaded = read_json(dir, "load.json")?;
                write_json(&out("planes.json"), &planes_stage(&loaded, cfg)?)?;
                Ok(out("planes.json"))
            }
            "clean" => {
                let (cloud, origin, planes) = if out("clean.json").exists() {
                    let c: Cleaned = read_json(dir, "clean.json")?;
                    (c.cloud, c.origin, c.planes)
                } else {
                    let l: Loaded = read_json(dir, "load.json")?;
                    (l.cloud, l.origin, read_json(dir, "planes.json")?)
                };
                write_json(&out("clean.json"), &clean_stage(&cloud, &origin, &planes, cfg)?)?;
                Ok(out("clean.json"))
            }
            "label" => {
                let c: Cleaned = read_json(dir, "clean.json")?;
                write_json(&out("label.json"), &label_stage(c, cfg))?;
                Ok(out("label.json"))
            }
            "candidates" => {
                let l: Labeled = read_json(dir, "label.json")?;
                write_json(&out("candidates.json"), &candidates_stage(&l, cfg))?;
                Ok(out("candidates.json"))
            }
            "complex" => {
                let set: CandidateSet = read_json(dir, "candidates.json")?;
                write_json(&out("complex.json"), &complex_stage(&set, cfg)?.debug_dump())?;
                Ok(out("complex.json"))
            }
            "priors" => {
                let set: CandidateSet = read_json(dir, "candidates.json")?;
                let cx = complex_stage(&set, cfg)?;
                write_json(&out("priors.json"), &priors_stage(&cx, &set, cfg))?;
                Ok(out("priors.json"))
            }
            "solve" => {
                let set: CandidateSet = read_json(dir, "candidates.json")?;
                let priors: Priors = read_json(dir, "priors.json")?;
                let cx = complex_stage(&set, cfg)?;
                if priors.cells.len() != cx.cells.len() {
                    return Err(Error::Precondition("priors.json does not match the candidates".into()));
                }
                write_json(&out("solve.json"), &solve_stage(&cx, &priors, &set, cfg, &[])?)?;
                Ok(out("solve.json"))
            }
            "model" => {
                let set: CandidateSet = read_json(dir, "candidates.json")?;
                let mut solved: Solved = read_json(dir, "solve.json")?;
                solved.ilp.reindex();
                let cx = complex_stage(&set, cfg)?;
                if solved.labels.outside.len() != cx.cells.len() {
                    return Err(Error::Precondition("solve.json does not match the candidates".into()));
                }
                let model = extract(&solved.labels, &cx, &set);
                write_outputs(dir, &model, &solved, None)?;
                Ok(out("model.json"))
            }
            other => Err(Error::Invalid(format!(
                "unknown stage `{other}`; stages are {}",
                STAGES.join(", ")
            ))),
        }
    })();
    result.map_err(|e| match e {
        e @ Error::Invalid(_) => e,
        e => e.in_stage(name),
    })
}
