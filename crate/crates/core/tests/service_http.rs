use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde_json::{json, Value};

use bimrecon::candidates::{pair_walls, CandidateParams};
use bimrecon::config::Config;
use bimrecon::fixtures::box_room_at;
use bimrecon::geom::Vec3;
use bimrecon::model::{extract, read_binary};
use bimrecon::pipeline::{run_cloud, solve_stage};
use bimrecon::service::{router, Session, Shared, API_VERSION};
use bimrecon::synthgen::{generate, presets};

struct Server {
    base: String,
    http: reqwest::Client,
    state: Shared,
}

impl Server {
    async fn start(session: Session) -> Server {
        let state: Shared = Arc::new(Mutex::new(session));
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        let app = router(state.clone());
        tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
        Server {
            base: format!("http://{addr}"),
            http: reqwest::Client::new(),
            state,
        }
    }

    async fn get(&self, path: &str) -> (u16, Value) {
        let r = self.http.get(format!("{}{path}", self.base)).send().await.unwrap();
        (r.status().as_u16(), r.json().await.unwrap())
    }

    async fn post(&self, path: &str, body: Value) -> (u16, Value) {
        let r = self.http.post(format!("{}{path}", self.base)).json(&body).send().await.unwrap();
        (r.status().as_u16(), r.json().await.unwrap())
    }

    async fn delete(&self, path: &str) -> (u16, Value) {
        let r = self.http.delete(format!("{}{path}", self.base)).send().await.unwrap();
        (r.status().as_u16(), r.json().await.unwrap())
    }

    async fn solve(&self) -> Value {
        let (code, _) = self.post("/solve", json!({})).await;
        assert_eq!(code, 202);
        for _ in 0..1200 {
            let (_, v) = self.get("/solve/status").await;
            if v["job"]["state"] != "solving" {
                return v["job"].clone();
            }
            tokio::time::sleep(Duration::from_millis(50)).await;
        }
        panic!("solve did not finish");
    }

    fn cell_at(&self, x: f64, y: f64, z: f64) -> usize {
        self.state.lock().unwrap().complex.locate(&Vec3::new(x, y, z)).unwrap()
    }
}

fn two_room_session() -> Session {
    let mut surfaces = box_room_at([0.0, 0.0, 0.0], [4.0, 5.0, 2.6], 0, 2);
    surfaces.extend(box_room_at([4.24, 0.0, 0.0], [8.24, 5.0, 2.6], 1, 2));
    let set = pair_walls(surfaces, 2, &CandidateParams::default());
    let mut cfg = Config::default();
    cfg.prior_k_base = 4.0;
    cfg.prior_k_min = 8;
    cfg.prior_rays = 16;
    Session::new(cfg, set).unwrap()
}

#[tokio::test(flavor = "multi_thread")]
async fn endpoints_over_http() {
    let srv = Server::start(two_room_session()).await;

    let (code, v) = srv.get("/model").await;
    assert_eq!(code, 200);
    assert_eq!(v["api_version"], API_VERSION);
    assert_eq!(v["model_version"], 0);
    assert!(v["model"].is_null());
    let r = srv.http.get(format!("{}/mesh/rooms", srv.base)).send().await.unwrap();
    assert_eq!(r.status().as_u16(), 404);

    // an unconstrained interactive solve equals the batch solve
    let job = srv.solve().await;
    assert_eq!(job["state"], "done");
    let (_, v) = srv.get("/model").await;
    assert_eq!(v["model_version"], 1);
    let batch = {
        let s = srv.state.lock().unwrap();
        let solved = solve_stage(&s.complex, &s.priors, &s.candidates, &s.config, &[]).unwrap();
        extract(&solved.labels, &s.complex, &s.candidates)
    };
    let batch: Value = serde_json::from_str(&serde_json::to_string(&batch).unwrap()).unwrap();
    assert_eq!(v["model"], batch);
    assert_eq!(v["model"]["rooms"].as_array().unwrap().len(), 2);

    let (code, v) = srv.get("/cells?bbox=0,0,0,4,5,2.6").await;
    assert_eq!(code, 200);
    let cells = v["cells"].as_array().unwrap();
    assert!(!cells.is_empty());
    for c in cells {
        let p = &c["center"];
        assert!(p[0].as_f64().unwrap() <= 4.0 && p[1].as_f64().unwrap() <= 5.0);
    }
    assert_eq!(srv.get("/cells?bbox=1,2,3").await.0, 400);

    // single and batch constraints, listing, deletion
    let a = srv.cell_at(2.0, 2.5, 1.3);
    let b = srv.cell_at(6.0, 2.5, 1.3);
    let (code, v) = srv.post("/constraints", json!({"kind": "force_outside", "cell": a})).await;
    assert_eq!(code, 201);
    let first = v["ids"][0].as_u64().unwrap();
    let (code, v) = srv
        .post(
            "/constraints",
            json!([{"kind": "force_room", "cell": b, "room": 1}, {"kind": "forbid_wall", "cell": b, "wall": 0}]),
        )
        .await;
    assert_eq!(code, 201);
    assert_eq!(v["ids"].as_array().unwrap().len(), 2);
    let (_, v) = srv.get("/constraints").await;
    assert_eq!(v["constraints"].as_array().unwrap().len(), 3);
    assert_eq!(srv.delete(&format!("/constraints/{first}")).await.0, 200);
    let (code, v) = srv.delete(&format!("/constraints/{first}")).await;
    assert_eq!(code, 404);
    assert!(v["error"].as_str().unwrap().contains("does not exist"));

    let (code, v) = srv.post("/constraints", json!({"kind": "force_wall", "cell": a, "wall": 0})).await;
    assert_eq!(code, 404);
    assert_eq!(v["error"], format!("not found: wall 0 cannot occupy cell {a}"));
    let (code, v) = srv.post("/constraints", json!({"kind": "paint", "cell": a})).await;
    assert_eq!(code, 400);
    assert!(v["error"].as_str().unwrap().contains("bad request body"));

    assert_eq!(srv.post("/alpha", json!({"alpha": -1.0})).await.0, 400);
    let (code, v) = srv.post("/alpha", json!({"alpha": 0.05})).await;
    assert_eq!((code, v["alpha"].as_f64()), (200, Some(0.05)));

    assert_eq!(srv.post("/walls/virtual", json!({"start": [1, 1], "end": [1, 1], "z": [0, 2]})).await.0, 400);

    let job = srv.solve().await;
    assert_eq!(job["state"], "done");

    // meshes
    let r = srv.http.get(format!("{}/mesh/rooms?format=obj", srv.base)).send().await.unwrap();
    assert_eq!(r.status().as_u16(), 200);
    assert_eq!(r.headers()["x-api-version"], API_VERSION.to_string().as_str());
    assert_eq!(r.headers()["x-model-version"], "2");
    let obj = r.text().await.unwrap();
    assert!(obj.contains("o room_0") && obj.contains("o room_1"));
    let r = srv.http.get(format!("{}/mesh/all?format=bin", srv.base)).send().await.unwrap();
    let bytes = r.bytes().await.unwrap();
    let tris = read_binary(&bytes).unwrap();
    assert_eq!(bytes.len(), 4 + 36 * tris.len());
    assert!(!tris.is_empty());
    let r = srv.http.get(format!("{}/mesh/room_99", srv.base)).send().await.unwrap();
    assert_eq!(r.status().as_u16(), 404);
    let r = srv.http.get(format!("{}/mesh/rooms?format=ply", srv.base)).send().await.unwrap();
    assert_eq!(r.status().as_u16(), 400);
}

#[tokio::test(flavor = "multi_thread")]
async fn contradictions_report_their_constraints() {
    let srv = Server::start(two_room_session()).await;
    let c = srv.cell_at(2.0, 2.5, 1.3);
    let (_, v) = srv
        .post(
            "/constraints",
            json!([{"kind": "force_outside", "cell": c}, {"kind": "force_room", "cell": c}]),
        )
        .await;
    let ids: Vec<u64> = v["ids"].as_array().unwrap().iter().map(|i| i.as_u64().unwrap()).collect();
    let job = srv.solve().await;
    assert_eq!(job["state"], "failed");
    let hint: Vec<u64> = serde_json::from_value(job["hint"].clone()).unwrap();
    assert_eq!(hint, ids);
    let (_, v) = srv.get("/model").await;
    assert!(v["model"].is_null());
}

/// A scripted client on the partly scanned hallway: push two room cells
/// outside, then close the corridor with a virtual wall.
#[tokio::test(flavor = "multi_thread")]
async fn scripted_hallway_session() {
    let (cloud, _) = generate(&presets::open_hallway(0)).unwrap();
    let rec = tokio::task::spawn_blocking(move || run_cloud(cloud, &Config::default()).unwrap())
        .await
        .unwrap();
    let srv = Server::start(Session::from_reconstruction(rec)).await;
    let (_, v) = srv.get("/model").await;
    assert_eq!(v["model_version"], 1);
    let rooms_before = v["model"]["rooms"].as_array().unwrap().len();
    assert!(rooms_before >= 1);

    let cells = [srv.cell_at(1.0, 1.0, 1.3), srv.cell_at(3.0, 4.0, 1.3)];
    let (code, _) = srv
        .post(
            "/constraints",
            json!(cells.iter().map(|c| json!({"kind": "force_outside", "cell": c})).collect::<Vec<_>>()),
        )
        .await;
    assert_eq!(code, 201);

    // edits are refused while the solve runs
    let (code, _) = srv.post("/solve", json!({})).await;
    assert_eq!(code, 202);
    let (status, _) = srv.get("/solve/status").await;
    assert_eq!(status, 200);
    let (code, v) = srv.post("/alpha", json!({"alpha": 0.05})).await;
    let still_solving = srv.state.lock().unwrap().job == bimrecon::service::JobState::Solving;
    if still_solving || code == 409 {
        assert_eq!(code, 409, "{v}");
    }
    while srv.get("/solve/status").await.1["job"]["state"] == "solving" {
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    let (_, v) = srv.get("/cells").await;
    for c in cells {
        assert_eq!(v["cells"][c]["label"]["outside"], true, "cell {c}");
    }
    assert!(v["cells"][cells[0]]["label"]["room"].is_null());

    // close the corridor end
    let (code, v) = srv
        .post("/walls/virtual", json!({"start": [7.24, 1.8], "end": [7.24, 3.7], "z": [0.0, 2.6]}))
        .await;
    assert_eq!(code, 201, "{v}");
    let wall = v["wall"].as_u64().unwrap();
    let (_, again) = srv
        .post("/walls/virtual", json!({"start": [7.24, 1.8], "end": [7.24, 3.7], "z": [0.0, 2.6]}))
        .await;
    assert_eq!(again["wall"].as_u64(), Some(wall));
    let (_, v) = srv.get("/constraints").await;
    assert_eq!(v["constraints"].as_array().unwrap().len(), 2);

    let job = srv.solve().await;
    assert_eq!(job["state"], "done", "{job}");
    let s = srv.state.lock().unwrap();
    let latest = s.latest.clone().unwrap();
    assert_eq!(s.version, 3);
    assert!(latest.solved.violations.is_empty());
    let corridor = s.complex.locate(&Vec3::new(6.0, 2.75, 1.3)).unwrap();
    let room = latest.solved.labels.room(corridor).expect("corridor stays a room");
    let beyond = s.complex.locate(&Vec3::new(7.8, 2.75, 1.3)).unwrap();
    assert_ne!(latest.solved.labels.room(beyond), Some(room));
}
