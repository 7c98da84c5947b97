use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;
use std::time::Instant;

use super::presolve::{presolve, ColMap, Presolved};
use super::simplex::{LpState, LpStatus};
use super::{MilpModel, Solution, SolveStatus};

const INT_TOL: f64 = 1e-6;
const SNAPSHOT_BUDGET_BYTES: usize = 256 << 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Relative optimality gap at which the search may stop.
    pub mip_gap: f64,
    /// Wall-clock limit in seconds.
    pub time_limit: f64,
    pub node_limit: Option<usize>,
    /// Run a rounding dive at the root to find an early incumbent.
    pub dive: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            mip_gap: 0.001,
            time_limit: 600.0,
            node_limit: None,
            dive: true,
        }
    }
}

impl SolveOptions {
    pub fn exact() -> Self {
        SolveOptions {
            mip_gap: 0.0,
            ..Self::default()
        }
    }

    pub fn with_gap(mip_gap: f64) -> Self {
        SolveOptions {
            mip_gap,
            ..Self::default()
        }
    }
}

struct Node {
    bound: f64,
    id: u64,
    fixes: Vec<(usize, f64, f64)>,
    start: Option<Arc<LpState>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // max-heap: the smallest bound, then the oldest node, comes out first
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

struct Incumbent {
    objective: f64,
    values: Vec<f64>,
}

struct Search<'a> {
    pre: &'a Presolved,
    int_cols: Vec<usize>,
    options: &'a SolveOptions,
    incumbent: Option<Incumbent>,
}

impl Search<'_> {
    fn full_objective(&self, state: &LpState) -> f64 {
        state.objective() + self.pre.obj_constant
    }

    /// Most fractional integer column, ties to the lowest index.
    fn branching_column(&self, values: &[f64]) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for &c in &self.int_cols {
            let v = values[c];
            let frac = v - v.floor();
            let dist = frac.min(1.0 - frac);
            if dist > INT_TOL && best.is_none_or(|(_, _, d)| dist > d) {
                best = Some((c, v, dist));
            }
        }
        best.map(|(c, v, _)| (c, v))
    }

    fn prunable(&self, bound: f64) -> bool {
        match &self.incumbent {
            None => false,
            Some(inc) => {
                let scale = inc.objective.abs().max(1.0);
                inc.objective - bound <= (self.options.mip_gap * inc.objective.abs()).max(1e-9 * scale)
            }
        }
    }

    fn offer(&mut self, state: &LpState) -> bool {
        let obj = self.full_objective(state);
        if self.incumbent.as_ref().is_none_or(|inc| obj < inc.objective - 1e-12) {
            self.incumbent = Some(Incumbent {
                objective: obj,
                values: state.structural_values().to_vec(),
            });
            true
        } else {
            false
        }
    }

    fn try_warm_start(&mut self, root: &LpState, model: &MilpModel) {
        let mut fixes = Vec::new();
        for (j, var) in model.vars.iter().enumerate() {
            let (Some(w), true, ColMap::Column(c)) = (var.warm_start, var.integer, self.pre.col_of[j])
            else {
                continue;
            };
            let w = w.round();
            let (lo, hi) = root.bounds(c);
            if w < lo || w > hi {
                return;
            }
            fixes.push((c, w));
        }
        if fixes.is_empty() {
            return;
        }
        let mut state = root.clone();
        for (c, w) in fixes {
            state.set_bounds(c, w, w);
        }
        if state.solve() == LpStatus::Optimal
            && self.branching_column(state.structural_values()).is_none()
        {
            self.offer(&state);
        }
    }

    /// Fix-and-resolve rounding dive from the root relaxation.
    fn dive(&mut self, root: &LpState, deadline: f64, clock: &Instant) {
        let mut state = root.clone();
        for _ in 0..=self.int_cols.len() {
            if clock.elapsed().as_secs_f64() > deadline {
                return;
            }
            let values = state.structural_values();
            let mut pick: Option<(usize, f64, f64)> = None;
            for &c in &self.int_cols {
                let v = values[c];
                let dist = (v - v.round()).abs();
                if dist > INT_TOL && pick.is_none_or(|(_, _, d)| dist < d) {
                    pick = Some((c, v, dist));
                }
            }
            let Some((c, v, _)) = pick else {
                self.offer(&state);
                return;
            };
            if self.prunable(self.full_objective(&state)) {
                return;
            }
            let first = v.round();
            let second = if first > v { v.floor() } else { v.ceil() };
            state.set_bounds(c, first, first);
            if state.solve() != LpStatus::Optimal {
                state.set_bounds(c, second, second);
                if state.solve() != LpStatus::Optimal {
                    return;
                }
            }
        }
    }
}

fn finish(pre: &Presolved, lp_values: &[f64], model: &MilpModel) -> Vec<f64> {
    let mut values = pre.expand(lp_values);
    for (v, var) in values.iter_mut().zip(&model.vars) {
        if var.integer {
            *v = v.round();
        }
    }
    values
}

/// Best-first branch-and-bound with most-fractional branching.
pub fn solve(model: &MilpModel, options: &SolveOptions) -> Solution {
    let clock = Instant::now();
    let elapsed = || clock.elapsed().as_secs_f64();
    let Ok(pre) = presolve(model, &[]) else {
        return Solution::without_solution(SolveStatus::Infeasible, elapsed(), 0);
    };
    let lp = Arc::new(pre.lp.clone());
    let mut root = LpState::new(lp.clone());
    match root.solve() {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Solution::without_solution(SolveStatus::Infeasible, elapsed(), 1)
        }
        LpStatus::Unbounded => {
            return Solution::without_solution(SolveStatus::Unbounded, elapsed(), 1)
        }
        LpStatus::IterationLimit => {
            return Solution::without_solution(SolveStatus::TimeLimit, elapsed(), 1)
        }
    }
    let mut search = Search {
        pre: &pre,
        int_cols: (0..lp.n).filter(|&j| lp.integer[j]).collect(),
        options,
        incumbent: None,
    };
    let root_bound = search.full_objective(&root);
    let mut nodes = 1usize;

    let snapshot_bytes = ((lp.m() + 1) * lp.n.max(1) + 4 * (lp.n + lp.m())) * 8;
    let snapshot_cap = (SNAPSHOT_BUDGET_BYTES / snapshot_bytes.max(1)).max(4);

    let mut heap = BinaryHeap::new();
    let mut next_id = 0u64;
    let mut floor_lb = f64::INFINITY;
    let mut timed_out = false;

    match search.branching_column(root.structural_values()) {
        None => {
            search.offer(&root);
        }
        Some(_) => {
            search.try_warm_start(&root, model);
            if options.dive {
                search.dive(&root, options.time_limit, &clock);
            }
            heap.push(Node {
                bound: root_bound,
                id: next_id,
                fixes: Vec::new(),
                start: Some(Arc::new(root.clone())),
            });
            next_id += 1;
        }
    }
    let root = Arc::new(root);

    // the root node is already solved; its entry in the heap is branched
    // without re-solving
    let mut first = true;
    while let Some(top) = heap.peek() {
        if search.prunable(top.bound) {
            break;
        }
        if elapsed() > options.time_limit || options.node_limit.is_some_and(|cap| nodes >= cap) {
            timed_out = true;
            break;
        }
        let node = heap.pop().expect("peeked");
        let mut state = match node.start {
            Some(arc) => Arc::try_unwrap(arc).unwrap_or_else(|a| (*a).clone()),
            None => (*root).clone(),
        };
        if !first {
            for &(c, lo, hi) in &node.fixes {
                state.set_bounds(c, lo, hi);
            }
            nodes += 1;
            match state.solve() {
                LpStatus::Optimal => {}
                LpStatus::Infeasible | LpStatus::Unbounded => continue,
                LpStatus::IterationLimit => {
                    floor_lb = floor_lb.min(node.bound);
                    continue;
                }
            }
        }
        first = false;
        let obj = search.full_objective(&state).max(node.bound);
        if search.prunable(obj) {
            floor_lb = floor_lb.min(obj);
            continue;
        }
        let Some((col, value)) = search.branching_column(state.structural_values()) else {
            search.offer(&state);
            continue;
        };
        let (lo, hi) = state.bounds(col);
        let down = (col, lo, value.floor());
        let up = (col, value.ceil(), hi);
        let shared = Arc::new(state);
        // the child on the rounding side gets explored first among ties
        let order = if value - value.floor() >= 0.5 { [up, down] } else { [down, up] };
        for fix in order {
            let mut fixes = node.fixes.clone();
            fixes.push(fix);
            heap.push(Node {
                bound: obj,
                id: next_id,
                fixes,
                start: Some(shared.clone()),
            });
            next_id += 1;
        }
        if heap.len() > snapshot_cap {
            let with_snapshot = heap.iter().filter(|n| n.start.is_some()).count();
            if with_snapshot > snapshot_cap {
                let mut all = std::mem::take(&mut heap).into_sorted_vec();
                // sorted ascending by Ord, i.e. worst bound first
                let mut excess = with_snapshot - snapshot_cap;
                for n in all.iter_mut() {
                    if excess == 0 {
                        break;
                    }
                    if n.start.take().is_some() {
                        excess -= 1;
                    }
                }
                heap = all.into();
            }
        }
    }

    let open_lb = heap.peek().map_or(f64::INFINITY, |n| n.bound);
    let solve_time = elapsed();
    match search.incumbent {
        None => {
            let status = if timed_out || floor_lb.is_finite() {
                SolveStatus::TimeLimit
            } else {
                SolveStatus::Infeasible
            };
            Solution::without_solution(status, solve_time, nodes)
        }
        Some(inc) => {
            let lb = open_lb.min(floor_lb).min(inc.objective);
            let final_gap = ((inc.objective - lb) / inc.objective.abs().max(1e-10)).max(0.0);
            let status = if timed_out {
                SolveStatus::TimeLimit
            } else if final_gap <= 1e-9 {
                SolveStatus::Optimal
            } else {
                SolveStatus::GapReached
            };
            Solution {
                status,
                objective: inc.objective,
                values: finish(&pre, &inc.values, model),
                solve_time,
                node_count: nodes,
                final_gap,
                best_bound: lb,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::Sense;

    #[test]
    fn knapsack_pair() {
        // min -5x1 - 4x2 s.t. 6x1 + 4x2 <= 10, binary
        let mut m = MilpModel::new();
        let a = m.add_binary("x1");
        let b = m.add_binary("x2");
        m.add_constraint("cap", vec![(a, 6.0), (b, 4.0)], Sense::Le, 10.0);
        m.add_objective_term(a, -5.0);
        m.add_objective_term(b, -4.0);
        let sol = solve(&m, &SolveOptions::exact());
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective + 9.0).abs() < 1e-9);
        assert_eq!(sol.values, vec![1.0, 1.0]);
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let mut m = MilpModel::new();
        let x = m.add_var("x", 0.0, 10.0, false);
        m.add_constraint("lo", vec![(x, 1.0)], Sense::Ge, 2.0);
        m.add_constraint("hi", vec![(x, 1.0)], Sense::Le, 1.0);
        assert_eq!(solve(&m, &SolveOptions::default()).status, SolveStatus::Infeasible);
    }

    #[test]
    fn pure_lp_solves_at_root() {
        let mut m = MilpModel::new();
        let x = m.add_var("x", 0.0, f64::INFINITY, false);
        let y = m.add_var("y", 0.0, f64::INFINITY, false);
        m.add_constraint("a", vec![(x, 1.0), (y, 2.0)], Sense::Ge, 4.0);
        m.add_constraint("b", vec![(x, 3.0), (y, 1.0)], Sense::Ge, 6.0);
        m.add_objective_term(x, 1.0);
        m.add_objective_term(y, 1.0);
        let sol = solve(&m, &SolveOptions::default());
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_eq!(sol.node_count, 1);
        assert!((sol.objective - 2.8).abs() < 1e-9);
    }

    #[test]
    fn general_integer_branching() {
        // max x + y s.t. 2x + 2y <= 7, x,y integer in [0,5]
        let mut m = MilpModel::new();
        let x = m.add_var("x", 0.0, 5.0, true);
        let y = m.add_var("y", 0.0, 5.0, true);
        m.add_constraint("c", vec![(x, 2.0), (y, 2.0)], Sense::Le, 7.0);
        m.add_objective_term(x, -1.0);
        m.add_objective_term(y, -1.0);
        let sol = solve(&m, &SolveOptions::exact());
        assert!((sol.objective + 3.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_warm_start_is_ignored() {
        let mut m = MilpModel::new();
        let a = m.add_binary("a");
        let b = m.add_binary("b");
        m.add_constraint("one", vec![(a, 1.0), (b, 1.0)], Sense::Eq, 1.0);
        m.add_objective_term(a, 1.0);
        m.add_objective_term(b, 2.0);
        m.set_warm_start(a, 1.0);
        m.set_warm_start(b, 1.0);
        let sol = solve(&m, &SolveOptions::exact());
        assert!((sol.objective - 1.0).abs() < 1e-9);
    }
}
