//! Serve an interactive session and drive it over HTTP: force a cell
//! outside, re-solve and fetch the room meshes.

use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde_json::{json, Value};

use bimrecon::candidates::{pair_walls, CandidateParams};
use bimrecon::config::Config;
use bimrecon::fixtures::box_room_at;
use bimrecon::geom::Vec3;
use bimrecon::service::{router, Session};

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let mut surfaces = box_room_at([0.0, 0.0, 0.0], [4.0, 5.0, 2.6], 0, 2);
    surfaces.extend(box_room_at([4.24, 0.0, 0.0], [8.24, 5.0, 2.6], 1, 2));
    let set = pair_walls(surfaces, 2, &CandidateParams::default());
    let session = Session::new(Config::default(), set)?;
    let cell = session.complex.locate(&Vec3::new(2.0, 2.5, 1.3)).expect("inside");

    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let base = format!("http://{}", listener.local_addr()?);
    let app = router(Arc::new(Mutex::new(session)));
    tokio::spawn(async move { axum::serve(listener, app).await });
    let http = reqwest::Client::new();

    let solve = || async {
        http.post(format!("{base}/solve")).send().await?;
        loop {
            let v: Value = http.get(format!("{base}/solve/status")).send().await?.json().await?;
            if v["job"]["state"] != "solving" {
                return anyhow::Ok(v["job"].clone());
            }
            tokio::time::sleep(Duration::from_millis(100)).await;
        }
    };

    println!("first solve: {}", solve().await?);
    let r = http
        .post(format!("{base}/constraints"))
        .json(&json!({"kind": "force_outside", "cell": cell}))
        .send()
        .await?;
    println!("POST /constraints -> {} {}", r.status(), r.text().await?);
    println!("second solve: {}", solve().await?);
    let model: Value = http.get(format!("{base}/model")).send().await?.json().await?;
    println!("model version {}, {} rooms", model["model_version"], model["model"]["rooms"].as_array().map_or(0, |r| r.len()));
    let obj = http.get(format!("{base}/mesh/rooms")).send().await?.text().await?;
    println!("rooms mesh: {} triangles", obj.lines().filter(|l| l.starts_with("f ")).count());
    Ok(())
}
