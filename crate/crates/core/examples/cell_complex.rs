//! Exact line arrangement and the cell complex of two hand-built rooms.

use bimrecon::candidates::{pair_walls, CandidateParams};
use bimrecon::complex::{build_complex, exact_arrangement_2d, to_f64, ComplexParams, ExactLine, Q};
use bimrecon::fixtures::box_room_at;
use bimrecon::geom::Vec2;

fn main() -> anyhow::Result<()> {
    // three lines in a 4 × 4 square, two of them crossing on the third
    let lines = [
        ExactLine::snapped(Vec2::new(1.0, 0.0), 1.0),
        ExactLine::snapped(Vec2::new(0.0, 1.0), 2.0),
        ExactLine::snapped(Vec2::new(1.0, -1.0).normalize(), -std::f64::consts::FRAC_1_SQRT_2),
    ];
    let arr = exact_arrangement_2d(&lines, [Q::from_integer(0.into()), Q::from_integer(0.into())], [
        Q::from_integer(4.into()),
        Q::from_integer(4.into()),
    ]);
    println!(
        "{} vertices, {} edges, {} faces, V - E + F = {}",
        arr.vertices.len(),
        arr.edges.len(),
        arr.faces.len() + 1,
        arr.euler_characteristic()
    );
    for f in 0..arr.faces.len() {
        println!("  face {f}: {} sides, area {:.6}", arr.faces[f].len(), to_f64(&arr.face_area_exact(f)));
    }

    let mut surfaces = box_room_at([0.0, 0.0, 0.0], [4.0, 5.0, 2.6], 0, 2);
    surfaces.extend(box_room_at([4.24, 0.0, 0.0], [8.24, 5.0, 2.6], 1, 2));
    let set = pair_walls(surfaces, 2, &CandidateParams::default());
    let cx = build_complex(&set, &ComplexParams::default())?;
    println!(
        "{} surfaces, {} walls -> {} lines, {} cuts, {} cells, {} faces",
        set.surfaces.len(),
        set.walls.len(),
        cx.lines.len(),
        cx.cuts.len(),
        cx.cells.len(),
        cx.faces.len()
    );
    println!("complex volume {:.4} m³, bbox volume {:.4} m³", cx.total_volume(), cx.bbox.volume());
    let c = cx.locate(&bimrecon::geom::Vec3::new(4.12, 2.5, 1.3)).expect("inside");
    println!("cell {c} in the shared wall lies in walls {:?}", cx.cells[c].walls);
    Ok(())
}
