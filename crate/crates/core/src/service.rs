//! Interactive session over HTTP: inspect the model, add hard constraints
//! and virtual walls, change α, re-solve, fetch meshes.
//!
//! Routes:
//!
//! | method | path | body / query |
//! |---|---|---|
//! | GET | `/model` | |
//! | GET | `/cells` | `?bbox=x0,y0,z0,x1,y1,z1` |
//! | GET | `/constraints` | |
//! | POST | `/constraints` | one constraint or an array |
//! | DELETE | `/constraints/{id}` | |
//! | POST | `/walls/virtual` | `{"start":[x,y],"end":[x,y],"z":[lo,hi],"thickness":t}` |
//! | POST | `/alpha` | `{"alpha":a}` |
//! | POST | `/solve` | |
//! | GET | `/solve/status` | |
//! | GET | `/mesh/{entity}` | `?format=obj` (default) or `?format=bin` |
//!
//! Every JSON reply carries `api_version` and `model_version`. Edits are
//! refused with 409 while a solve runs.

use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::candidates::{manual_wall_surfaces, CandidateSet};
use crate::complex::CellComplex;
use crate::config::Config;
use crate::error::{Error, Result};
use crate::geom::{Vec2, Vec3};
use crate::ilp::{build_model, relaxation_feasible, solve, ForcedValue, Label, SolveStatus};
use crate::model::{export_binary, export_obj, extract, BuildingModel, MeshSelection};
use crate::pipeline::{complex_stage, priors_stage, Reconstruction, Solved};
use crate::priors::Priors;

pub const API_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintKind {
    ForceRoom {
        cell: usize,
        #[serde(default)]
        room: Option<usize>,
    },
    ForceOutside {
        cell: usize,
    },
    ForceWall {
        cell: usize,
        wall: usize,
    },
    ForbidWall {
        cell: usize,
        wall: usize,
    },
}

impl ConstraintKind {
    pub fn cell(&self) -> usize {
        match *self {
            ConstraintKind::ForceRoom { cell, .. }
            | ConstraintKind::ForceOutside { cell }
            | ConstraintKind::ForceWall { cell, .. }
            | ConstraintKind::ForbidWall { cell, .. } => cell,
        }
    }

    fn with_cell(&self, c: usize) -> Self {
        let mut k = self.clone();
        match &mut k {
            ConstraintKind::ForceRoom { cell, .. }
            | ConstraintKind::ForceOutside { cell }
            | ConstraintKind::ForceWall { cell, .. }
            | ConstraintKind::ForbidWall { cell, .. } => *cell = c,
        }
        k
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserConstraint {
    pub id: u64,
    #[serde(flatten)]
    pub kind: ConstraintKind,
    pub active: bool,
    /// Center of the cell when the constraint was made; used to find the
    /// cell again after the complex is rebuilt.
    pub anchor: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum JobState {
    Idle,
    Solving,
    Done {
        status: SolveStatus,
        objective: f64,
        gap: f64,
        seconds: f64,
    },
    Failed {
        message: String,
        /// Constraint ids that together make the root relaxation infeasible.
        hint: Vec<u64>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VirtualWallRequest {
    pub start: [f64; 2],
    pub end: [f64; 2],
    pub z: [f64; 2],
    #[serde(default)]
    pub thickness: Option<f64>,
}

/// The most recent completed solve.
#[derive(Clone, Debug)]
pub struct Latest {
    pub solved: Solved,
    pub model: BuildingModel,
    pub constraints: Vec<UserConstraint>,
    /// Complex generation the labels refer to.
    pub generation: u64,
}

pub struct Session {
    pub config: Config,
    pub candidates: Arc<CandidateSet>,
    pub complex: Arc<CellComplex>,
    pub priors: Arc<Priors>,
    pub constraints: Vec<UserConstraint>,
    pub latest: Option<Arc<Latest>>,
    pub job: JobState,
    /// Bumped whenever `latest` changes.
    pub version: u64,
    /// Bumped whenever the complex is rebuilt.
    pub generation: u64,
    next_id: u64,
}

/// Inputs of one solve, detached from the session.
pub struct SolveJob {
    config: Config,
    candidates: Arc<CandidateSet>,
    complex: Arc<CellComplex>,
    priors: Arc<Priors>,
    constraints: Vec<UserConstraint>,
    forced: Vec<(u64, ForcedValue)>,
    generation: u64,
}

pub enum JobOutcome {
    Solved(Box<Latest>, f64),
    Failed(String, Vec<u64>),
}

impl Session {
    pub fn new(config: Config, candidates: CandidateSet) -> Result<Session> {
        config.validate()?;
        let complex = complex_stage(&candidates, &config)?;
        let priors = priors_stage(&complex, &candidates, &config);
        Ok(Session {
            config,
            candidates: Arc::new(candidates),
            complex: Arc::new(complex),
            priors: Arc::new(priors),
            constraints: Vec::new(),
            latest: None,
            job: JobState::Idle,
            version: 0,
            generation: 0,
            next_id: 1,
        })
    }

    pub fn from_reconstruction(rec: Reconstruction) -> Session {
        let mut s = Session {
            config: rec.config,
            candidates: Arc::new(rec.candidates),
            complex: Arc::new(rec.complex),
            priors: Arc::new(rec.priors),
            constraints: Vec::new(),
            latest: None,
            job: JobState::Idle,
            version: 1,
            generation: 0,
            next_id: 1,
        };
        s.latest = Some(Arc::new(Latest {
            solved: rec.solved,
            model: rec.model,
            constraints: Vec::new(),
            generation: 0,
        }));
        s
    }

    /// Session from the stage dumps of a run directory.
    pub fn load_dir(dir: &Path, config: Config) -> Result<Session> {
        let path = dir.join("candidates.json");
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let set: CandidateSet = serde_json::from_slice(&bytes)?;
        Session::new(config, set)
    }

    fn ensure_idle(&self) -> Result<()> {
        if self.job == JobState::Solving {
            return Err(Error::Conflict("a solve is in progress".into()));
        }
        Ok(())
    }

    fn check(&self, kind: &ConstraintKind) -> Result<()> {
        let n = self.complex.cells.len();
        let c = kind.cell();
        if c >= n {
            return Err(Error::NotFound(format!("cell {c} does not exist ({n} cells)")));
        }
        match *kind {
            ConstraintKind::ForceRoom { room: Some(r), .. } if r >= self.candidates.n_labels => Err(Error::NotFound(
                format!("room {r} does not exist ({} room labels)", self.candidates.n_labels),
            )),
            ConstraintKind::ForceWall { cell, wall } | ConstraintKind::ForbidWall { cell, wall } => {
                if wall >= self.candidates.walls.len() {
                    Err(Error::NotFound(format!("wall {wall} does not exist")))
                } else if matches!(kind, ConstraintKind::ForceWall { .. })
                    && !self.complex.cells[cell].walls.contains(&wall)
                {
                    Err(Error::NotFound(format!("wall {wall} cannot occupy cell {cell}")))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn add_constraint(&mut self, kind: ConstraintKind) -> Result<u64> {
        self.ensure_idle()?;
        self.check(&kind)?;
        let id = self.next_id;
        self.next_id += 1;
        let a = self.complex.cell_center(kind.cell());
        self.constraints.push(UserConstraint {
            id,
            kind,
            active: true,
            anchor: [a.x, a.y, a.z],
        });
        Ok(id)
    }

    pub fn remove_constraint(&mut self, id: u64) -> Result<()> {
        self.ensure_idle()?;
        let before = self.constraints.len();
        self.constraints.retain(|c| c.id != id);
        if self.constraints.len() == before {
            return Err(Error::NotFound(format!("constraint {id} does not exist")));
        }
        Ok(())
    }

    pub fn set_alpha(&mut self, alpha: f64) -> Result<()> {
        self.ensure_idle()?;
        let mut cfg = self.config.clone();
        cfg.alpha = alpha;
        cfg.validate()?;
        self.config = cfg;
        Ok(())
    }

    /// Add two opposing virtual surfaces along a plan segment and rebuild
    /// the complex and priors. Constraints follow their anchors into the
    /// new complex; those whose anchor left it are deactivated.
    pub fn add_virtual_wall(&mut self, req: &VirtualWallRequest) -> Result<usize> {
        self.ensure_idle()?;
        let thickness = req.thickness.unwrap_or(self.config.virtual_thickness);
        let (p0, p1) = (Vec2::from(req.start), Vec2::from(req.end));
        let (a, b) = manual_wall_surfaces(
            p0,
            p1,
            req.z[0],
            req.z[1],
            thickness,
            self.candidates.n_labels,
            &self.config.candidates(),
        )
        .ok_or_else(|| Error::Invalid("wall segment needs positive length, height and thickness".into()))?;
        let bb = &self.complex.bbox;
        for p in [p0, p1] {
            if p.x < bb.min[0] || p.x > bb.max[0] || p.y < bb.min[1] || p.y > bb.max[1] {
                return Err(Error::Invalid(format!("segment end ({}, {}) lies outside the scene", p.x, p.y)));
            }
        }
        let mut set = (*self.candidates).clone();
        let id = set.add_manual_wall(a, b, self.config.merge_tolerance);
        if set.walls.len() == self.candidates.walls.len() {
            return Ok(id);
        }
        let complex = complex_stage(&set, &self.config)?;
        let priors = priors_stage(&complex, &set, &self.config);
        for c in &mut self.constraints {
            match complex.locate(&Vec3::from(c.anchor)) {
                Some(cell) => c.kind = c.kind.with_cell(cell),
                None => c.active = false,
            }
        }
        self.candidates = Arc::new(set);
        self.complex = Arc::new(complex);
        self.priors = Arc::new(priors);
        self.generation += 1;
        Ok(id)
    }

    /// Variable fixings of the active constraints, tagged with their ids.
    pub fn compile(&self) -> Result<Vec<(u64, ForcedValue)>> {
        let mut out = Vec::new();
        for c in self.constraints.iter().filter(|c| c.active) {
            self.check(&c.kind)?;
            let (cell, label, value) = match c.kind {
                ConstraintKind::ForceRoom { cell, room: Some(r) } => (cell, Label::Room(r), true),
                ConstraintKind::ForceRoom { cell, room: None } => (cell, Label::Outside, false),
                ConstraintKind::ForceOutside { cell } => (cell, Label::Outside, true),
                ConstraintKind::ForceWall { cell, wall } => (cell, Label::Wall(wall), true),
                ConstraintKind::ForbidWall { cell, wall } => {
                    if !self.complex.cells[cell].walls.contains(&wall) {
                        continue;
                    }
                    (cell, Label::Wall(wall), false)
                }
            };
            out.push((c.id, ForcedValue { cell, label, value }));
        }
        Ok(out)
    }

    pub fn start_solve(&mut self) -> Result<SolveJob> {
        self.ensure_idle()?;
        let forced = self.compile()?;
        self.job = JobState::Solving;
        Ok(SolveJob {
            config: self.config.clone(),
            candidates: self.candidates.clone(),
            complex: self.complex.clone(),
            priors: self.priors.clone(),
            constraints: self.constraints.clone(),
            forced,
            generation: self.generation,
        })
    }

    pub fn finish(&mut self, outcome: JobOutcome) {
        self.job = match outcome {
            JobOutcome::Solved(latest, seconds) => {
                let l = &latest.solved.labeling;
                let job = JobState::Done {
                    status: l.status,
                    objective: l.objective,
                    gap: l.gap,
                    seconds,
                };
                self.latest = Some(Arc::from(latest));
                self.version += 1;
                job
            }
            JobOutcome::Failed(message, hint) => JobState::Failed { message, hint },
        };
    }

    pub fn solve_blocking(&mut self) -> Result<&JobState> {
        let job = self.start_solve()?;
        let outcome = job.run();
        self.finish(outcome);
        Ok(&self.job)
    }

    /// Labels of the current complex's cells, if the latest solve used it.
    pub fn current_labels(&self) -> Option<&crate::ilp::CellLabels> {
        self.latest
            .as_ref()
            .filter(|l| l.generation == self.generation)
            .map(|l| &l.solved.labels)
    }
}

impl SolveJob {
    fn model_with(&self, forced: &[ForcedValue]) -> Result<crate::ilp::IlpModel> {
        build_model(
            &self.complex,
            &self.priors,
            self.candidates.walls.len(),
            &self.config.model_options(),
            forced,
        )
    }

    /// Deletion filter over constraints against the root relaxation.
    fn infeasibility_hint(&self) -> Vec<u64> {
        let mut keep: Vec<(u64, ForcedValue)> = self.forced.clone();
        let feasible = |set: &[(u64, ForcedValue)]| {
            let fv: Vec<ForcedValue> = set.iter().map(|x| x.1).collect();
            self.model_with(&fv).and_then(|m| relaxation_feasible(&m)).unwrap_or(true)
        };
        if feasible(&keep) {
            return keep.iter().map(|x| x.0).collect();
        }
        let mut i = 0;
        while i < keep.len() {
            let mut trial = keep.clone();
            trial.remove(i);
            if feasible(&trial) {
                i += 1;
            } else {
                keep = trial;
            }
        }
        keep.iter().map(|x| x.0).collect()
    }

    pub fn run(self) -> JobOutcome {
        let start = Instant::now();
        let forced: Vec<ForcedValue> = self.forced.iter().map(|x| x.1).collect();
        let result = self.model_with(&forced).and_then(|ilp| {
            let labeling = solve(&ilp, &self.config.solve_params())?;
            Ok((ilp, labeling))
        });
        match result {
            Err(e) => JobOutcome::Failed(e.to_string(), Vec::new()),
            Ok((_, labeling)) if labeling.status == SolveStatus::Infeasible => {
                let hint = self.infeasibility_hint();
                JobOutcome::Failed("the constraints admit no labeling".into(), hint)
            }
            Ok((ilp, labeling)) => {
                let labels = crate::ilp::CellLabels::from_values(&ilp, &labeling.values);
                let violations = crate::ilp::validate_labels(&labels, &self.complex);
                let model = extract(&labels, &self.complex, &self.candidates);
                let latest = Latest {
                    solved: Solved {
                        ilp,
                        labeling,
                        labels,
                        violations,
                    },
                    model,
                    constraints: self.constraints,
                    generation: self.generation,
                };
                JobOutcome::Solved(Box::new(latest), start.elapsed().as_secs_f64())
            }
        }
    }
}

pub type Shared = Arc<Mutex<Session>>;

fn lock(s: &Shared) -> MutexGuard<'_, Session> {
    s.lock().unwrap_or_else(|e| e.into_inner())
}

struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::Conflict(_) => StatusCode::CONFLICT,
            Error::Invalid(_) | Error::Config(_) | Error::Parse { .. } | Error::Json(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({ "api_version": API_VERSION, "error": self.0.to_string() }))).into_response()
    }
}

type ApiResult = std::result::Result<Response, ApiError>;

fn parse_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T> {
    serde_json::from_slice(body).map_err(|e| Error::Invalid(format!("bad request body: {e}")))
}

fn reply(session: &Session, status: StatusCode, mut body: Value) -> Response {
    if let Value::Object(m) = &mut body {
        m.insert("api_version".into(), json!(API_VERSION));
        m.insert("model_version".into(), json!(session.version));
    }
    (status, Json(body)).into_response()
}

async fn get_model(State(s): State<Shared>) -> ApiResult {
    let s = lock(&s);
    let model = s.latest.as_ref().map(|l| serde_json::to_value(&l.model)).transpose().map_err(Error::from)?;
    Ok(reply(&s, StatusCode::OK, json!({ "model": model, "job": s.job })))
}

#[derive(Deserialize)]
struct CellQuery {
    bbox: Option<String>,
}

async fn get_cells(State(s): State<Shared>, Query(q): Query<CellQuery>) -> ApiResult {
    let s = lock(&s);
    let bbox: Option<[f64; 6]> = match &q.bbox {
        None => None,
        Some(text) => {
            let v: Vec<f64> = text
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Invalid(format!("bad bbox `{text}`")))?;
            Some(v.try_into().map_err(|_| Error::Invalid("bbox needs six numbers".into()))?)
        }
    };
    let labels = s.current_labels();
    let cells: Vec<Value> = (0..s.complex.cells.len())
        .filter_map(|c| {
            let p = s.complex.cell_center(c);
            if let Some(b) = bbox {
                if p.x < b[0] || p.y < b[1] || p.z < b[2] || p.x > b[3] || p.y > b[4] || p.z > b[5] {
                    return None;
                }
            }
            let cell = &s.complex.cells[c];
            let poly: Vec<[f64; 2]> = s.complex.face_polygons[cell.face2d].iter().map(|q| [q.x, q.y]).collect();
            Some(json!({
                "id": c,
                "center": [p.x, p.y, p.z],
                "z": [cell.z.0, cell.z.1],
                "polygon": poly,
                "candidate_walls": cell.walls,
                "label": labels.map(|l| json!({
                    "outside": l.outside[c],
                    "room": l.room(c),
                    "walls": l.walls[c],
                })),
            }))
        })
        .collect();
    Ok(reply(&s, StatusCode::OK, json!({ "cells": cells })))
}

async fn list_constraints(State(s): State<Shared>) -> ApiResult {
    let s = lock(&s);
    Ok(reply(&s, StatusCode::OK, json!({ "constraints": s.constraints })))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    Many(Vec<ConstraintKind>),
    One(ConstraintKind),
}

async fn post_constraints(State(s): State<Shared>, body: Bytes) -> ApiResult {
    let body: OneOrMany = parse_body(&body)?;
    let mut s = lock(&s);
    s.ensure_idle()?;
    let kinds = match body {
        OneOrMany::One(k) => vec![k],
        OneOrMany::Many(v) => v,
    };
    for k in &kinds {
        s.check(k)?;
    }
    let ids: Vec<u64> = kinds.into_iter().map(|k| s.add_constraint(k)).collect::<Result<_>>()?;
    Ok(reply(&s, StatusCode::CREATED, json!({ "ids": ids })))
}

async fn delete_constraint(State(s): State<Shared>, UrlPath(id): UrlPath<u64>) -> ApiResult {
    let mut s = lock(&s);
    s.remove_constraint(id)?;
    Ok(reply(&s, StatusCode::OK, json!({ "deleted": id })))
}

async fn post_virtual_wall(State(s): State<Shared>, body: Bytes) -> ApiResult {
    let req: VirtualWallRequest = parse_body(&body)?;
    let worker = s.clone();
    let body = tokio::task::spawn_blocking(move || -> Result<Value> {
        let mut s = lock(&worker);
        let id = s.add_virtual_wall(&req)?;
        Ok(json!({ "wall": id, "walls": s.candidates.walls.len(), "cells": s.complex.cells.len() }))
    })
    .await
    .map_err(|e| Error::Solver(e.to_string()))??;
    let s = lock(&s);
    Ok(reply(&s, StatusCode::CREATED, body))
}

#[derive(Deserialize)]
struct AlphaBody {
    alpha: f64,
}

async fn post_alpha(State(s): State<Shared>, body: Bytes) -> ApiResult {
    let b: AlphaBody = parse_body(&body)?;
    let mut s = lock(&s);
    s.set_alpha(b.alpha)?;
    Ok(reply(&s, StatusCode::OK, json!({ "alpha": s.config.alpha })))
}

async fn post_solve(State(s): State<Shared>) -> ApiResult {
    let job = lock(&s).start_solve()?;
    let worker = s.clone();
    tokio::task::spawn_blocking(move || {
        let outcome = job.run();
        lock(&worker).finish(outcome);
    });
    let s = lock(&s);
    Ok(reply(&s, StatusCode::ACCEPTED, json!({ "job": s.job })))
}

async fn get_status(State(s): State<Shared>) -> ApiResult {
    let s = lock(&s);
    Ok(reply(&s, StatusCode::OK, json!({ "job": s.job })))
}

#[derive(Deserialize)]
struct MeshQuery {
    format: Option<String>,
}

async fn get_mesh(State(s): State<Shared>, UrlPath(entity): UrlPath<String>, Query(q): Query<MeshQuery>) -> ApiResult {
    let s = lock(&s);
    let latest = s.latest.as_ref().ok_or_else(|| Error::NotFound("no model has been solved yet".into()))?;
    let sel: MeshSelection = entity.parse().map_err(Error::NotFound)?;
    let missing = || Error::NotFound(format!("entity `{entity}` is not in the model"));
    let version = s.version.to_string();
    let headers = |ct: &'static str| {
        [
            (header::CONTENT_TYPE, ct.to_string()),
            (header::HeaderName::from_static("x-api-version"), API_VERSION.to_string()),
            (header::HeaderName::from_static("x-model-version"), version.clone()),
        ]
    };
    match q.format.as_deref().unwrap_or("obj") {
        "obj" => {
            let text = export_obj(&latest.model, &sel).ok_or_else(missing)?;
            Ok((headers("text/plain; charset=utf-8"), text).into_response())
        }
        "bin" => {
            let bytes = export_binary(&latest.model, &sel).ok_or_else(missing)?;
            Ok((headers("application/octet-stream"), bytes).into_response())
        }
        other => Err(Error::Invalid(format!("unknown mesh format `{other}`; use obj or bin")).into()),
    }
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/model", get(get_model))
        .route("/cells", get(get_cells))
        .route("/constraints", get(list_constraints).post(post_constraints))
        .route("/constraints/{id}", delete(delete_constraint))
        .route("/walls/virtual", post(post_virtual_wall))
        .route("/alpha", post(post_alpha))
        .route("/solve", post(post_solve))
        .route("/solve/status", get(get_status))
        .route("/mesh/{entity}", get(get_mesh))
        .with_state(state)
}

/// Serve until the process is stopped.
pub async fn serve(session: Session, addr: std::net::SocketAddr) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::io(addr.to_string(), e))?;
    log::info!("listening on {}", listener.local_addr().map_err(|e| Error::io(addr.to_string(), e))?);
    axum::serve(listener, router(Arc::new(Mutex::new(session))))
        .await
        .map_err(|e| Error::io(addr.to_string(), e))
}
