//! Best-first branch and bound over LP relaxations.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use microlp::{ComparisonOp, OptimizationDirection, Problem, SolveOutcome, Solution, Variable};
use serde::{Deserialize, Serialize};

use super::{IlpModel, Sense};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveParams {
    /// Relative gap at which the search stops.
    pub gap: f64,
    pub time_limit: Duration,
    pub int_tol: f64,
    pub max_nodes: Option<usize>,
}

impl Default for SolveParams {
    fn default() -> Self {
        SolveParams {
            gap: 1e-6,
            time_limit: Duration::from_secs(600),
            int_tol: 1e-6,
            max_nodes: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    /// Stopped on a time or node limit with an incumbent but an open gap.
    GapLimit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Labeling {
    /// One 0/1 value per model variable; empty when infeasible.
    pub values: Vec<u8>,
    pub objective: f64,
    pub bound: f64,
    pub gap: f64,
    pub status: SolveStatus,
    pub nodes: usize,
    pub seconds: f64,
}

impl Labeling {
    pub fn is_feasible(&self) -> bool {
        self.status != SolveStatus::Infeasible
    }
}

struct Node {
    bound: f64,
    depth: usize,
    seq: usize,
    fixings: Vec<(usize, u8)>,
    lp: Option<Solution>,
}

impl PartialEq for Node {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for Node {
    // max-heap: lowest bound first, then deepest, then oldest
    fn cmp(&self, o: &Self) -> Ordering {
        o.bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&o.depth))
            .then(o.seq.cmp(&self.seq))
    }
}

fn relaxation(model: &IlpModel) -> (Problem, Vec<Variable>) {
    let mut p = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<Variable> = model.cost.iter().map(|&c| p.add_var(c, (0.0, 1.0))).collect();
    for row in &model.rows {
        let op = match row.sense {
            Sense::Eq => ComparisonOp::Eq,
            Sense::Ge => ComparisonOp::Ge,
            Sense::Le => ComparisonOp::Le,
        };
        let expr: Vec<(Variable, f64)> = row.terms.iter().map(|&(v, a)| (vars[v], a as f64)).collect();
        p.add_constraint(expr, op, row.rhs as f64);
    }
    (p, vars)
}

fn lp_solution(outcome: std::result::Result<SolveOutcome, microlp::Error>) -> Result<Option<Solution>> {
    match outcome {
        Ok(SolveOutcome::Solution(s)) => Ok(Some(s)),
        Ok(SolveOutcome::Interrupted(_)) => Err(Error::Solver("LP relaxation interrupted".into())),
        Err(microlp::Error::Infeasible) => Ok(None),
        Err(e) => Err(Error::Solver(format!("LP relaxation failed: {e}"))),
    }
}

fn relative_gap(incumbent: f64, bound: f64) -> f64 {
    if incumbent <= bound {
        return 0.0;
    }
    (incumbent - bound) / incumbent.abs().max(1e-10)
}

/// Whether the LP relaxation has any feasible point.
pub fn relaxation_feasible(model: &IlpModel) -> Result<bool> {
    let (problem, _) = relaxation(model);
    Ok(lp_solution(problem.solve())?.is_some())
}

/// Solve the 0-1 program exactly up to `params.gap`.
pub fn solve(model: &IlpModel, params: &SolveParams) -> Result<Labeling> {
    let start = Instant::now();
    let n = model.vars.len();
    let (problem, vars) = relaxation(model);
    let Some(root) = lp_solution(problem.solve())? else {
        return Ok(Labeling {
            values: Vec::new(),
            objective: f64::NAN,
            bound: f64::NAN,
            gap: f64::NAN,
            status: SolveStatus::Infeasible,
            nodes: 1,
            seconds: start.elapsed().as_secs_f64(),
        });
    };

    let mut incumbent: Option<(Vec<u8>, f64)> = None;
    let offer = |values: Vec<u8>, incumbent: &mut Option<(Vec<u8>, f64)>| {
        if model.violated_rows(&values).is_empty() {
            let obj = model.objective(&values);
            if incumbent.as_ref().is_none_or(|(_, best)| obj < *best - 1e-12 * best.abs().max(1.0)) {
                *incumbent = Some((values, obj));
            }
        }
    };
    offer(model.all_outside(), &mut incumbent);

    let mut heap = BinaryHeap::new();
    let mut seq = 0;
    heap.push(Node {
        bound: root.objective(),
        depth: 0,
        seq,
        fixings: Vec::new(),
        lp: Some(root.clone()),
    });
    let mut nodes = 1;
    let mut global_bound = root.objective();
    let mut limited = false;
    let slack = |v: f64| 1e-9 * v.abs().max(1.0);

    while let Some(node) = heap.pop() {
        global_bound = node.bound;
        if let Some((_, best)) = &incumbent {
            if node.bound >= *best - slack(*best) || relative_gap(*best, node.bound) <= params.gap {
                break;
            }
        }
        if start.elapsed() >= params.time_limit || params.max_nodes.is_some_and(|m| nodes >= m) {
            heap.push(node);
            limited = true;
            break;
        }
        let lp = match node.lp {
            Some(lp) => lp,
            None => {
                let mut lp = Some(root.clone());
                for &(v, val) in &node.fixings {
                    lp = lp_solution(lp.take().unwrap().fix_var(vars[v], val as f64))?;
                    if lp.is_none() {
                        break;
                    }
                }
                match lp {
                    Some(lp) => lp,
                    None => continue,
                }
            }
        };
        let x: Vec<f64> = vars.iter().map(|&v| lp.var_value_raw(v)).collect();
        let rounded: Vec<u8> = x.iter().map(|&v| (v >= 0.5) as u8).collect();
        let branch = (0..n)
            .filter(|&i| (x[i] - x[i].round()).abs() > params.int_tol)
            .min_by(|&a, &b| {
                let fa = (x[a] - 0.5).abs();
                let fb = (x[b] - 0.5).abs();
                fa.total_cmp(&fb)
                    .then(model.cost[b].abs().total_cmp(&model.cost[a].abs()))
                    .then(a.cmp(&b))
            });
        offer(rounded, &mut incumbent);
        let Some(v) = branch else {
            continue;
        };
        for val in [1u8, 0u8] {
            let Some(child) = lp_solution(lp.clone().fix_var(vars[v], val as f64))? else {
                continue;
            };
            nodes += 1;
            let bound = child.objective().max(node.bound);
            if incumbent.as_ref().is_some_and(|(_, best)| bound >= *best - slack(*best)) {
                continue;
            }
            let mut fixings = node.fixings.clone();
            fixings.push((v, val));
            seq += 1;
            let keep = heap.len() < 64;
            heap.push(Node {
                bound,
                depth: node.depth + 1,
                seq,
                fixings,
                lp: keep.then_some(child),
            });
        }
    }
    if heap.is_empty() && !limited {
        if let Some((_, best)) = &incumbent {
            global_bound = global_bound.min(*best);
        }
    }
    let seconds = start.elapsed().as_secs_f64();
    let Some((values, objective)) = incumbent else {
        if limited {
            return Err(Error::Solver("limit reached without a feasible labeling".into()));
        }
        return Ok(Labeling {
            values: Vec::new(),
            objective: f64::NAN,
            bound: global_bound,
            gap: f64::NAN,
            status: SolveStatus::Infeasible,
            nodes,
            seconds,
        });
    };
    let bound = if heap.is_empty() && !limited { objective } else { global_bound.min(objective) };
    let gap = relative_gap(objective, bound);
    let violated = model.violated_rows(&values);
    if !violated.is_empty() {
        return Err(Error::Solver(format!("{} rows violated by the incumbent", violated.len())));
    }
    Ok(Labeling {
        values,
        objective,
        bound,
        gap,
        status: if limited && gap > params.gap { SolveStatus::GapLimit } else { SolveStatus::Optimal },
        nodes,
        seconds,
    })
}
