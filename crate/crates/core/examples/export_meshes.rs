//! Extract the building model and write its meshes.
//!
//! `cargo run --example export_meshes -- out_dir`

use std::path::PathBuf;

use bimrecon::config::Config;
use bimrecon::model::{export_obj, read_binary, MeshSelection};
use bimrecon::pipeline::{run_cloud, write_outputs};
use bimrecon::synthgen::{generate, presets};

fn main() -> anyhow::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "meshes".into()));
    let (cloud, _) = generate(&presets::two_rooms(0))?;
    let rec = run_cloud(cloud, &Config::default())?;
    write_outputs(&out, &rec.model, &rec.solved, Some(&rec.timings))?;

    let m = &rec.model;
    for r in &m.rooms {
        println!("room {}: {:.3} m³ in {} cells, {} boundary polygons", r.id, r.volume, r.cells.len(), r.boundary.len());
    }
    for w in &m.walls {
        println!("wall {} {:?}: thickness {:.3}, {:.3} m³", w.id, w.kind, w.thickness, w.volume);
    }
    println!("room-wall adjacency {:?}", m.adjacency.room_wall);
    let obj = export_obj(m, &MeshSelection::Room(0)).expect("room 0");
    println!("room_0.obj: {} faces", obj.lines().filter(|l| l.starts_with("f ")).count());
    let bin = std::fs::read(out.join("model.bin"))?;
    println!("model.bin: {} triangles -> {}", read_binary(&bin).map_or(0, |t| t.len()), out.display());
    Ok(())
}
