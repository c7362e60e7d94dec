//! Constraint checks and objective evaluation straight from a labeling,
//! without going through the model rows.

use serde::{Deserialize, Serialize};

use super::{IlpModel, Label};
use crate::complex::CellComplex;
use crate::priors::Priors;

/// Per-cell labels decoded from a 0/1 assignment.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellLabels {
    pub outside: Vec<bool>,
    pub rooms: Vec<Vec<usize>>,
    pub walls: Vec<Vec<usize>>,
}

impl CellLabels {
    pub fn all_outside(n_cells: usize) -> Self {
        CellLabels {
            outside: vec![true; n_cells],
            rooms: vec![Vec::new(); n_cells],
            walls: vec![Vec::new(); n_cells],
        }
    }

    pub fn from_values(model: &IlpModel, values: &[u8]) -> Self {
        let mut l = CellLabels {
            outside: vec![false; model.n_cells],
            rooms: vec![Vec::new(); model.n_cells],
            walls: vec![Vec::new(); model.n_cells],
        };
        for (&(c, label), &x) in model.vars.iter().zip(values) {
            if x == 1 {
                match label {
                    Label::Outside => l.outside[c] = true,
                    Label::Room(r) => l.rooms[c].push(r),
                    Label::Wall(w) => l.walls[c].push(w),
                }
            }
        }
        l
    }

    /// The single room of a cell, `None` if outside or ill-formed.
    pub fn room(&self, c: usize) -> Option<usize> {
        match (self.outside[c], self.rooms[c].as_slice()) {
            (false, [r]) => Some(*r),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Number of the violated constraint family, 1 to 6.
    pub constraint: u8,
    pub cell: Option<usize>,
    pub face: Option<usize>,
    pub message: String,
}

impl Violation {
    fn at_cell(constraint: u8, cell: usize, message: String) -> Self {
        Violation {
            constraint,
            cell: Some(cell),
            face: None,
            message,
        }
    }

    fn at_face(constraint: u8, face: usize, message: String) -> Self {
        Violation {
            constraint,
            cell: None,
            face: Some(face),
            message,
        }
    }
}

pub fn validate_labels(labels: &CellLabels, complex: &CellComplex) -> Vec<Violation> {
    let mut out = Vec::new();
    for c in 0..complex.cells.len() {
        let n = labels.outside[c] as usize + labels.rooms[c].len();
        if n != 1 {
            out.push(Violation::at_cell(1, c, format!("cell {c} carries {n} room/outside labels")));
        }
        if !labels.walls[c].is_empty() && !labels.outside[c] {
            out.push(Violation::at_cell(3, c, format!("cell {c} has wall labels but is not outside")));
        }
        for w in &labels.walls[c] {
            if !complex.cells[c].walls.contains(w) {
                out.push(Violation::at_cell(3, c, format!("wall {w} assigned to cell {c} outside its extent")));
            }
        }
    }
    for f in &complex.faces {
        let (a, b) = (f.ca, f.cb);
        for r in &labels.rooms[b] {
            if !labels.rooms[a].contains(r) {
                let msg = match labels.rooms[a].first() {
                    Some(q) => format!("rooms {q} and {r} meet at face {}", f.id),
                    None => format!("room {r} lies on the negative side of face {}", f.id),
                };
                out.push(Violation::at_face(2, f.id, msg));
            }
        }
        let active_boundary = f.boundary_walls.iter().any(|w| labels.walls[b].contains(w));
        if labels.outside[b] && !labels.outside[a] && !active_boundary {
            out.push(Violation::at_face(4, f.id, format!("room boundary at face {} has no active wall", f.id)));
        }
        for w in &f.inner_walls {
            let (wa, wb) = (labels.walls[a].contains(w), labels.walls[b].contains(w));
            if wa && !wb {
                out.push(Violation::at_face(5, f.id, format!("wall {w} ends on the positive side of face {}", f.id)));
            }
            if wb && !wa && !active_boundary {
                out.push(Violation::at_face(6, f.id, format!("wall {w} ends at face {} without meeting another wall", f.id)));
            }
        }
    }
    out
}

pub fn validate(values: &[u8], model: &IlpModel, complex: &CellComplex) -> Vec<Violation> {
    validate_labels(&CellLabels::from_values(model, values), complex)
}

/// Room reward and wall face cost evaluated directly on the labels.
pub fn objective_of(labels: &CellLabels, complex: &CellComplex, priors: &Priors, alpha: f64) -> f64 {
    let mut reward = 0.0;
    for (c, cell) in complex.cells.iter().enumerate() {
        if labels.outside[c] {
            reward += priors.outside(c) * cell.volume;
        }
        for &r in &labels.rooms[c] {
            reward += priors.room(c, r) * cell.volume;
        }
    }
    let mut boundary = 0.0;
    let mut inner = 0.0;
    for f in &complex.faces {
        let weight = (1.0 - priors.faces[f.id]) * f.area;
        for w in &f.boundary_walls {
            if labels.walls[f.cb].contains(w) {
                boundary += weight;
            }
        }
        for w in &f.inner_walls {
            let d = labels.walls[f.cb].contains(w) as i32 - labels.walls[f.ca].contains(w) as i32;
            inner += d as f64 * weight;
        }
    }
    -reward + alpha * (boundary + inner)
}
