//! Text exports: LP format for external solvers and a JSON solution dump.

use std::fmt::Write;

use serde_json::{json, Map, Value};

use super::{IlpModel, Labeling, Sense};
use crate::error::{Error, Result};

fn term(out: &mut String, coeff: f64, name: &str, first: bool) {
    let sign = if coeff < 0.0 { "-" } else if first { "" } else { "+" };
    let _ = write!(out, " {sign} {} {name}", coeff.abs());
}

/// CPLEX LP text with one binary per variable.
pub fn export_lp(model: &IlpModel) -> Result<String> {
    if model.vars.is_empty() {
        return Err(Error::Model("no variables".into()));
    }
    let names: Vec<String> = (0..model.vars.len()).map(|v| model.name(v)).collect();
    let mut out = String::new();
    let _ = writeln!(out, "\\ {} cells, {} rooms, {} walls, alpha {}", model.n_cells, model.n_rooms, model.n_walls, model.alpha);
    out.push_str("Minimize\n obj:");
    let mut first = true;
    for (v, &c) in model.cost.iter().enumerate() {
        if c != 0.0 {
            term(&mut out, c, &names[v], first);
            first = false;
        }
    }
    if first {
        let _ = write!(out, " 0 {}", names[0]);
    }
    out.push_str("\nSubject To\n");
    for (i, row) in model.rows.iter().enumerate() {
        let _ = write!(out, " r{i}:");
        for (k, &(v, a)) in row.terms.iter().enumerate() {
            term(&mut out, a as f64, &names[v], k == 0);
        }
        let op = match row.sense {
            Sense::Eq => "=",
            Sense::Ge => ">=",
            Sense::Le => "<=",
        };
        let _ = writeln!(out, " {op} {}", row.rhs);
    }
    out.push_str("Binaries\n");
    for n in &names {
        let _ = writeln!(out, " {n}");
    }
    out.push_str("End\n");
    Ok(out)
}

/// Variable name to value, plus objective, status and gap.
pub fn solution_json(model: &IlpModel, labeling: &Labeling) -> Value {
    let mut values = Map::new();
    for (v, &x) in labeling.values.iter().enumerate() {
        values.insert(model.name(v), json!(x));
    }
    json!({
        "objective": labeling.objective,
        "status": labeling.status,
        "gap": labeling.gap,
        "values": values,
    })
}
