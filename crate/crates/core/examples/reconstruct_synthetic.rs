//! Full reconstruction of a named synthetic scene, scored against its ground
//! truth. Usage: `reconstruct_synthetic [scene] [seed] [alpha]`.

use bimrecon::config::Config;
use bimrecon::eval::{cleaning_score, label_purity, volume_errors};
use bimrecon::pipeline::run_cloud;
use bimrecon::synthgen::{generate, presets};

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let name = args.first().map(String::as_str).unwrap_or("s2");
    let seed: u64 = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let spec = presets::by_name(name, seed).ok_or_else(|| anyhow::anyhow!("scenes: {:?}", presets::NAMES))?;
    let (cloud, gt) = generate(&spec)?;
    let mut cfg = Config { seed, ..Config::default() };
    if let Some(a) = args.get(2) {
        cfg.set("alpha", a)?;
    }
    let rec = run_cloud(cloud, &cfg)?;

    print!("{}", rec.timings.report());
    println!(
        "{} planes, {} surfaces, {} wall candidates, {} cells, {} faces, {} variables, {} rows",
        rec.planes.len(),
        rec.candidates.surfaces.len(),
        rec.candidates.walls.len(),
        rec.complex.cells.len(),
        rec.complex.faces.len(),
        rec.solved.ilp.vars.len(),
        rec.solved.ilp.rows.len()
    );
    println!(
        "solver: {:?}, objective {:.6}, {} nodes",
        rec.solved.labeling.status, rec.solved.labeling.objective, rec.solved.labeling.nodes
    );
    let cs = cleaning_score(&rec.loaded_origin, rec.origin(), &gt);
    let truth: Vec<Option<u32>> = rec.origin().iter().map(|&i| gt.labels[i]).collect();
    let purity = label_purity(rec.cloud().labels.as_deref().unwrap_or(&[]), &truth);
    println!(
        "outliers removed {:.3}, interior loss {:.4}, label purity {:.3}, {} labels",
        cs.outliers_removed, cs.interior_loss, purity, rec.labeled.n_labels
    );
    for r in &rec.model.rooms {
        println!("room {}: {} cells, {:.3} m3, {} parts", r.id, r.cells.len(), r.volume, r.components);
    }
    println!("volume errors {:?}", volume_errors(&rec, &gt));
    for w in &rec.model.walls {
        println!(
            "wall {} {:?}: thickness {:.3}, axis {:.3?}, {:.3} m3",
            w.id, w.kind, w.thickness, w.axis, w.volume
        );
    }
    println!("{} intersections, {} violations", rec.model.intersections.len(), rec.solved.violations.len());
    for w in &rec.model.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
