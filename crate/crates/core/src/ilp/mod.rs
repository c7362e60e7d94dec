//! 0-1 program over the cell complex: one binary per (cell, label) with
//! labels outside, rooms and wall candidates.

mod export;
mod solve;
mod validate;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::complex::CellComplex;
use crate::error::{Error, Result};
use crate::priors::Priors;

pub use export::{export_lp, solution_json};
pub use solve::{relaxation_feasible, solve, Labeling, SolveParams, SolveStatus};
pub use validate::{objective_of, validate, validate_labels, CellLabels, Violation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Outside,
    Room(usize),
    Wall(usize),
}

impl Label {
    /// Numeric id: outside is 0, rooms follow, then walls.
    pub fn id(self, n_rooms: usize) -> usize {
        match self {
            Label::Outside => 0,
            Label::Room(r) => r + 1,
            Label::Wall(w) => n_rooms + 1 + w,
        }
    }

    pub fn from_id(id: usize, n_rooms: usize) -> Label {
        if id == 0 {
            Label::Outside
        } else if id <= n_rooms {
            Label::Room(id - 1)
        } else {
            Label::Wall(id - n_rooms - 1)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelOptions {
    pub alpha: f64,
    /// Create room variables only where the room prior is positive.
    pub prune_rooms: bool,
    /// Emit the redundant outside-side rows.
    pub outside_side_rows: bool,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions {
            alpha: 0.04,
            prune_rooms: true,
            outside_side_rows: true,
        }
    }
}

/// A user decision fixing one variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForcedValue {
    pub cell: usize,
    pub label: Label,
    pub value: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RowKind {
    OneLabel { cell: usize },
    RoomSide { face: usize, room: usize },
    WallOutside { cell: usize, wall: usize },
    BoundaryWall { face: usize },
    WallSide { face: usize, wall: usize },
    WallEnd { face: usize, wall: usize },
    OutsideSide { face: usize },
    Forced { index: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Eq,
    Ge,
    Le,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub kind: RowKind,
    pub terms: Vec<(usize, i32)>,
    pub sense: Sense,
    pub rhs: i32,
}

impl Row {
    pub fn lhs(&self, values: &[u8]) -> i64 {
        self.terms.iter().map(|&(v, a)| a as i64 * values[v] as i64).sum()
    }

    pub fn satisfied(&self, values: &[u8]) -> bool {
        let l = self.lhs(values);
        let r = self.rhs as i64;
        match self.sense {
            Sense::Eq => l == r,
            Sense::Ge => l >= r,
            Sense::Le => l <= r,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IlpModel {
    pub n_cells: usize,
    pub n_rooms: usize,
    pub n_walls: usize,
    pub alpha: f64,
    pub vars: Vec<(usize, Label)>,
    pub cost: Vec<f64>,
    pub rows: Vec<Row>,
    #[serde(skip)]
    index: HashMap<(usize, Label), usize>,
}

impl IlpModel {
    pub fn var(&self, cell: usize, label: Label) -> Option<usize> {
        self.index.get(&(cell, label)).copied()
    }

    pub fn name(&self, v: usize) -> String {
        let (c, l) = self.vars[v];
        format!("x_c{}_l{}", c, l.id(self.n_rooms))
    }

    pub fn objective(&self, values: &[u8]) -> f64 {
        self.cost.iter().zip(values).map(|(c, &x)| c * x as f64).sum()
    }

    /// Rows violated by an integer assignment.
    pub fn violated_rows(&self, values: &[u8]) -> Vec<usize> {
        (0..self.rows.len()).filter(|&i| !self.rows[i].satisfied(values)).collect()
    }

    /// Outside everywhere, no walls.
    pub fn all_outside(&self) -> Vec<u8> {
        self.vars.iter().map(|&(_, l)| (l == Label::Outside) as u8).collect()
    }

    pub fn nonzeros(&self) -> usize {
        self.rows.iter().map(|r| r.terms.len()).sum()
    }

    pub fn count_rows(&self, pred: impl Fn(&RowKind) -> bool) -> usize {
        self.rows.iter().filter(|r| pred(&r.kind)).count()
    }

    /// Rebuild the lookup after deserialization.
    pub fn reindex(&mut self) {
        self.index = self.vars.iter().enumerate().map(|(i, &k)| (k, i)).collect();
    }
}

pub fn build_model(
    complex: &CellComplex,
    priors: &Priors,
    n_walls: usize,
    options: &ModelOptions,
    forced: &[ForcedValue],
) -> Result<IlpModel> {
    let n_cells = complex.cells.len();
    let n_rooms = priors.n_labels;
    for f in forced {
        if f.cell >= n_cells {
            return Err(Error::Model(format!("cell {} does not exist", f.cell)));
        }
        if let Label::Room(r) = f.label {
            if r >= n_rooms {
                return Err(Error::Model(format!("room label {r} does not exist")));
            }
        }
    }

    let mut vars = Vec::new();
    let mut cost = Vec::new();
    let mut index = HashMap::new();
    let mut add = |c: usize, l: Label, k: f64, vars: &mut Vec<(usize, Label)>, cost: &mut Vec<f64>| {
        index.insert((c, l), vars.len());
        vars.push((c, l));
        cost.push(k);
    };
    for (c, cell) in complex.cells.iter().enumerate() {
        add(c, Label::Outside, -priors.outside(c) * cell.volume, &mut vars, &mut cost);
        for r in 0..n_rooms {
            let p = priors.room(c, r);
            let wanted = forced.iter().any(|f| f.cell == c && f.label == Label::Room(r));
            if !options.prune_rooms || p > 0.0 || wanted {
                add(c, Label::Room(r), -p * cell.volume, &mut vars, &mut cost);
            }
        }
        for &w in &cell.walls {
            add(c, Label::Wall(w), 0.0, &mut vars, &mut cost);
        }
    }
    let mut model = IlpModel {
        n_cells,
        n_rooms,
        n_walls,
        alpha: options.alpha,
        vars,
        cost,
        rows: Vec::new(),
        index,
    };
    let v = |m: &IlpModel, c: usize, l: Label| m.var(c, l);
    let ov = |m: &IlpModel, c: usize| m.var(c, Label::Outside).expect("outside variable");

    for f in &complex.faces {
        let k = options.alpha * (1.0 - priors.faces[f.id]) * f.area;
        for &w in &f.boundary_walls {
            let b = v(&model, f.cb, Label::Wall(w)).expect("boundary wall variable");
            model.cost[b] += k;
        }
        for &w in &f.inner_walls {
            let b = v(&model, f.cb, Label::Wall(w)).expect("inner wall variable");
            let a = v(&model, f.ca, Label::Wall(w)).expect("inner wall variable");
            model.cost[b] += k;
            model.cost[a] -= k;
        }
    }

    let mut rows = Vec::new();
    for c in 0..n_cells {
        let mut terms = vec![(ov(&model, c), 1)];
        terms.extend((0..n_rooms).filter_map(|r| v(&model, c, Label::Room(r)).map(|x| (x, 1))));
        rows.push(Row {
            kind: RowKind::OneLabel { cell: c },
            terms,
            sense: Sense::Eq,
            rhs: 1,
        });
    }
    for f in &complex.faces {
        for r in 0..n_rooms {
            let Some(b) = v(&model, f.cb, Label::Room(r)) else {
                continue;
            };
            let mut terms = Vec::with_capacity(2);
            if let Some(a) = v(&model, f.ca, Label::Room(r)) {
                terms.push((a, 1));
            }
            terms.push((b, -1));
            rows.push(Row {
                kind: RowKind::RoomSide { face: f.id, room: r },
                terms,
                sense: Sense::Ge,
                rhs: 0,
            });
        }
    }
    for (c, cell) in complex.cells.iter().enumerate() {
        for &w in &cell.walls {
            rows.push(Row {
                kind: RowKind::WallOutside { cell: c, wall: w },
                terms: vec![(v(&model, c, Label::Wall(w)).unwrap(), 1), (ov(&model, c), -1)],
                sense: Sense::Le,
                rhs: 0,
            });
        }
    }
    for f in &complex.faces {
        let mut terms: Vec<(usize, i32)> = f
            .boundary_walls
            .iter()
            .map(|&w| (v(&model, f.cb, Label::Wall(w)).unwrap(), 1))
            .collect();
        terms.push((ov(&model, f.cb), -1));
        terms.push((ov(&model, f.ca), 1));
        rows.push(Row {
            kind: RowKind::BoundaryWall { face: f.id },
            terms,
            sense: Sense::Ge,
            rhs: 0,
        });
    }
    for f in &complex.faces {
        for &w in &f.inner_walls {
            let b = v(&model, f.cb, Label::Wall(w)).unwrap();
            let a = v(&model, f.ca, Label::Wall(w)).unwrap();
            rows.push(Row {
                kind: RowKind::WallSide { face: f.id, wall: w },
                terms: vec![(b, 1), (a, -1)],
                sense: Sense::Ge,
                rhs: 0,
            });
            let mut terms: Vec<(usize, i32)> = f
                .boundary_walls
                .iter()
                .map(|&w2| (v(&model, f.cb, Label::Wall(w2)).unwrap(), 1))
                .collect();
            terms.push((b, -1));
            terms.push((a, 1));
            rows.push(Row {
                kind: RowKind::WallEnd { face: f.id, wall: w },
                terms,
                sense: Sense::Ge,
                rhs: 0,
            });
        }
    }
    if options.outside_side_rows {
        for f in &complex.faces {
            rows.push(Row {
                kind: RowKind::OutsideSide { face: f.id },
                terms: vec![(ov(&model, f.ca), 1), (ov(&model, f.cb), -1)],
                sense: Sense::Le,
                rhs: 0,
            });
        }
    }
    for (i, fv) in forced.iter().enumerate() {
        let x = v(&model, fv.cell, fv.label).ok_or_else(|| {
            Error::Model(format!(
                "no variable for (cell {}, label {})",
                fv.cell,
                fv.label.id(n_rooms)
            ))
        })?;
        rows.push(Row {
            kind: RowKind::Forced { index: i },
            terms: vec![(x, 1)],
            sense: Sense::Eq,
            rhs: fv.value as i32,
        });
    }
    model.rows = rows;
    Ok(model)
}

#[cfg(test)]
pub(crate) mod toy {
    use super::*;
    use crate::candidates::{CandidateSet, SurfaceClass, WallCandidate, WallKind};
    use crate::complex::{build_complex, ComplexParams};
    use crate::geom::Vec3;
    use crate::fixtures::box_surface;

    /// One vertical wall `x ∈ [0.8, 1]` with its room side facing +x, a
    /// floor slab `z ∈ [-0.2, 0]` and a ceiling slab `z ∈ [2, 2.2]`.
    /// Three 2D faces times five z-intervals.
    pub fn toy_complex() -> (CandidateSet, CellComplex) {
        use SurfaceClass::*;
        let s = |c, n, o, a, b| box_surface(c, n, o, a, b, Some(0), 1);
        let surfaces = vec![
            s(Wall, Vec3::x(), 1.0, [1.0, 0.0, 0.0], [1.0, 2.0, 2.0]),
            s(Wall, -Vec3::x(), -0.8, [0.8, 0.0, 0.0], [0.8, 2.0, 2.0]),
            s(Slab, Vec3::z(), 0.0, [1.0, 0.0, 0.0], [3.0, 2.0, 0.0]),
            s(Slab, -Vec3::z(), 0.2, [1.0, 0.0, -0.2], [3.0, 2.0, -0.2]),
            s(Slab, -Vec3::z(), -2.0, [1.0, 0.0, 2.0], [3.0, 2.0, 2.0]),
            s(Slab, Vec3::z(), 2.2, [1.0, 0.0, 2.2], [3.0, 2.0, 2.2]),
        ];
        let wall = |id, a, b, kind| WallCandidate {
            id,
            surface_a: a,
            surface_b: b,
            thickness: 0.2,
            kind,
        };
        let set = CandidateSet {
            surfaces,
            walls: vec![
                wall(0, 0, 1, WallKind::Vertical),
                wall(1, 2, 3, WallKind::Horizontal),
                wall(2, 4, 5, WallKind::Horizontal),
            ],
            n_labels: 1,
        };
        let cx = build_complex(&set, &ComplexParams::default()).unwrap();
        (set, cx)
    }

    /// Room prior `p` on the cells right of the wall between the slabs,
    /// outside elsewhere; faces unsupported.
    pub fn toy_priors(cx: &CellComplex, p: f64) -> Priors {
        let cells = cx
            .cells
            .iter()
            .map(|c| {
                let center = cx.cell_center(c.id);
                if center.x > 1.0 && c.z == (0.0, 2.0) {
                    vec![1.0 - p, p]
                } else {
                    vec![1.0, 0.0]
                }
            })
            .collect();
        Priors {
            n_labels: 1,
            cells,
            faces: vec![0.0; cx.faces.len()],
        }
    }
}
