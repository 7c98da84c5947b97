//! Solver-agnostic MILP model plus a desk-scale branch-and-bound solver.
//!
//! [`MilpModel`] is produced by the SCUC builder and consumed by [`solve`],
//! [`brute_force_oracle`] and [`export_mps`]. The solver runs a dense bounded
//! simplex (primal and dual) underneath a best-first branch-and-bound.

mod bnb;
mod mps;
mod oracle;
mod presolve;
mod simplex;

pub use bnb::{solve, SolveOptions};
pub use mps::export_mps;
pub use oracle::{brute_force_oracle, OracleError, ORACLE_BINARY_CAP};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lb: f64,
    pub ub: f64,
    pub integer: bool,
    pub warm_start: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Variable families of the unit-commitment model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VarKind {
    /// commitment u
    U,
    /// start-up v
    V,
    /// generator output
    Pg,
    /// spinning reserve
    R,
    /// line flow
    Pk,
    /// bus angle
    Theta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarKey {
    pub kind: VarKind,
    pub index: usize,
    pub t: usize,
}

/// Constraint families of the unit-commitment model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConKind {
    MinOutput,
    MaxOutput,
    ReserveCap,
    ReserveReq,
    RampUp,
    RampDown,
    MinUp,
    MinDown,
    StartupDef,
    FlowBTheta,
    FlowPtdf,
    ThermalMax,
    ThermalMin,
    NodalBalance,
    SystemBalance,
    SlackAngle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConKey {
    pub kind: ConKind,
    pub index: usize,
    pub t: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelStats {
    pub n_binaries: usize,
    pub n_continuous: usize,
    pub n_constraints: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MilpModel {
    pub vars: Vec<Variable>,
    pub cons: Vec<Constraint>,
    pub objective: Vec<(VarId, f64)>,
    pub obj_constant: f64,
    var_index: BTreeMap<VarKey, VarId>,
    con_index: BTreeMap<ConKey, ConId>,
}

impl MilpModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lb: f64, ub: f64, integer: bool) -> VarId {
        assert!(lb <= ub, "variable bounds must satisfy lb <= ub");
        self.vars.push(Variable {
            name: name.into(),
            lb,
            ub,
            integer,
            warm_start: None,
        });
        VarId(self.vars.len() - 1)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name, 0.0, 1.0, true)
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: Vec<(VarId, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> ConId {
        self.cons.push(Constraint {
            name: name.into(),
            terms,
            sense,
            rhs,
        });
        ConId(self.cons.len() - 1)
    }

    pub fn add_objective_term(&mut self, var: VarId, coef: f64) {
        self.objective.push((var, coef));
    }

    pub fn register_var(&mut self, key: VarKey, id: VarId) {
        self.var_index.insert(key, id);
    }

    pub fn register_con(&mut self, key: ConKey, id: ConId) {
        self.con_index.insert(key, id);
    }

    pub fn var(&self, kind: VarKind, index: usize, t: usize) -> Option<VarId> {
        self.var_index.get(&VarKey { kind, index, t }).copied()
    }

    pub fn con(&self, kind: ConKind, index: usize, t: usize) -> Option<ConId> {
        self.con_index.get(&ConKey { kind, index, t }).copied()
    }

    pub fn var_registry(&self) -> &BTreeMap<VarKey, VarId> {
        &self.var_index
    }

    pub fn con_registry(&self) -> &BTreeMap<ConKey, ConId> {
        &self.con_index
    }

    pub fn set_bounds(&mut self, var: VarId, lb: f64, ub: f64) {
        assert!(lb <= ub, "variable bounds must satisfy lb <= ub");
        let v = &mut self.vars[var.0];
        v.lb = lb;
        v.ub = ub;
    }

    pub fn set_warm_start(&mut self, var: VarId, value: f64) {
        self.vars[var.0].warm_start = Some(value);
    }

    pub fn count_constraints(&self, kind: ConKind) -> usize {
        self.con_index.keys().filter(|k| k.kind == kind).count()
    }

    pub fn stats(&self) -> ModelStats {
        let n_binaries = self
            .vars
            .iter()
            .filter(|v| v.integer && v.lb >= 0.0 && v.ub <= 1.0)
            .count();
        ModelStats {
            n_binaries,
            n_continuous: self.vars.iter().filter(|v| !v.integer).count(),
            n_constraints: self.cons.len(),
        }
    }

    pub fn n_integer(&self) -> usize {
        self.vars.iter().filter(|v| v.integer).count()
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.obj_constant + self.objective.iter().map(|(v, c)| c * values[v.0]).sum::<f64>()
    }

    /// Largest violation of any bound, row or integrality requirement.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, x) in self.vars.iter().zip(values) {
            worst = worst.max(v.lb - x).max(x - v.ub);
            if v.integer {
                worst = worst.max((x - x.round()).abs());
            }
        }
        for c in &self.cons {
            let lhs: f64 = c.terms.iter().map(|(v, a)| a * values[v.0]).sum();
            let viol = match c.sense {
                Sense::Le => lhs - c.rhs,
                Sense::Ge => c.rhs - lhs,
                Sense::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }
}

/// Model stats as reported to callers.
pub fn model_stats(model: &MilpModel) -> ModelStats {
    model.stats()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    GapReached,
    Infeasible,
    Unbounded,
    /// Time limit reached; an incumbent may or may not exist.
    TimeLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub status: SolveStatus,
    pub objective: f64,
    pub values: Vec<f64>,
    /// wall-clock seconds spent inside the solve call
    pub solve_time: f64,
    pub node_count: usize,
    pub final_gap: f64,
    pub best_bound: f64,
}

impl Solution {
    pub fn has_solution(&self) -> bool {
        matches!(self.status, SolveStatus::Optimal | SolveStatus::GapReached)
            || (self.status == SolveStatus::TimeLimit && !self.values.is_empty())
    }

    pub fn value(&self, var: VarId) -> f64 {
        self.values[var.0]
    }

    pub(crate) fn without_solution(status: SolveStatus, elapsed: f64, nodes: usize) -> Self {
        Solution {
            status,
            objective: match status {
                SolveStatus::Unbounded => f64::NEG_INFINITY,
                _ => f64::INFINITY,
            },
            values: Vec::new(),
            solve_time: elapsed,
            node_count: nodes,
            final_gap: f64::INFINITY,
            best_bound: f64::NEG_INFINITY,
        }
    }
}
