//! Priors, the 0-1 program and its solution on two hand-built rooms.

use bimrecon::candidates::{pair_walls, CandidateParams};
use bimrecon::complex::{build_complex, ComplexParams};
use bimrecon::fixtures::box_room_at;
use bimrecon::ilp::{build_model, export_lp, solve, validate, CellLabels, ModelOptions, SolveParams};
use bimrecon::priors::{compute_priors, PriorParams};

fn main() -> anyhow::Result<()> {
    let alpha: f64 = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(0.04);
    let mut surfaces = box_room_at([0.0, 0.0, 0.0], [4.0, 5.0, 2.6], 0, 2);
    surfaces.extend(box_room_at([4.24, 0.0, 0.0], [8.24, 5.0, 2.6], 1, 2));
    let set = pair_walls(surfaces, 2, &CandidateParams::default());
    let cx = build_complex(&set, &ComplexParams::default())?;
    let priors = compute_priors(&cx, &set, &PriorParams::default());

    let opts = ModelOptions { alpha, ..ModelOptions::default() };
    let model = build_model(&cx, &priors, set.walls.len(), &opts, &[])?;
    println!("{} variables, {} rows, {} nonzeros", model.vars.len(), model.rows.len(), model.nonzeros());
    let lp = export_lp(&model)?;
    println!("{} ({} bytes of LP text)", lp.lines().next().unwrap_or_default(), lp.len());

    let sol = solve(&model, &SolveParams::default())?;
    println!(
        "{:?}: objective {:.6}, bound {:.6}, {} nodes, {:.2} s",
        sol.status, sol.objective, sol.bound, sol.nodes, sol.seconds
    );
    println!("{} violated constraints", validate(&sol.values, &model, &cx).len());
    let labels = CellLabels::from_values(&model, &sol.values);
    let rooms = (0..cx.cells.len()).filter(|&c| labels.room(c).is_some()).count();
    let walls = (0..cx.cells.len()).filter(|&c| !labels.walls[c].is_empty()).count();
    println!("{rooms} room cells, {walls} wall cells of {}", cx.cells.len());
    Ok(())
}
