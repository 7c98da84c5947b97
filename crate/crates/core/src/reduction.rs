//! Turning predicted probabilities into reduced SCUC models.
//!
//! Commitment probabilities either fix a binary (confident predictions) or
//! seed its warm start; line probabilities decide which thermal-limit rows
//! are dropped.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::is_critical;
use crate::milp::MilpModel;
use crate::power_model::{compute_ptdf, Network, NetworkError};
use crate::scuc::{build, BuildError, BuildOptions, CommitmentMap, Formulation};

#[derive(Debug, Error)]
pub enum ReductionError {
    #[error("probability {value} at ({row}, {t}) is outside [0, 1]")]
    OutOfRange { row: usize, t: usize, value: f64 },
    #[error("variant {0} needs a {1} plan")]
    MissingComponent(Variant, &'static str),
    #[error("invalid thresholds: {0}")]
    Thresholds(String),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// `P >= fix_on` fixes the unit on.
    pub fix_on: f64,
    /// `P <= fix_off` fixes the unit off.
    pub fix_off: f64,
    /// Between the fixing thresholds, `P >= warm_on` warm-starts on.
    pub warm_on: f64,
    /// A line keeps its limits when `P >= line_active` in any period.
    pub line_active: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            fix_on: 0.90,
            fix_off: 0.10,
            warm_on: 0.50,
            line_active: 0.50,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), ReductionError> {
        let ok = 0.0 < self.fix_off
            && self.fix_off <= 0.5
            && 0.5 <= self.warm_on
            && self.warm_on <= self.fix_on
            && self.fix_on < 1.0
            && (0.0..=1.0).contains(&self.line_active);
        if ok {
            Ok(())
        } else {
            Err(ReductionError::Thresholds(format!(
                "need 0 < fix_off <= 0.5 <= warm_on <= fix_on < 1, got {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Constraint reduction only.
    Cr,
    /// Variable reduction only.
    Vr,
    /// Both.
    Vcr,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Cr, Variant::Vr, Variant::Vcr];

    /// Lowercase name used in file names and on the command line.
    pub fn slug(self) -> &'static str {
        match self {
            Variant::Cr => "cr",
            Variant::Vr => "vr",
            Variant::Vcr => "vcr",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Cr => "C-R",
            Variant::Vr => "V-R",
            Variant::Vcr => "VC-R",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "").as_str() {
            "cr" => Ok(Variant::Cr),
            "vr" => Ok(Variant::Vr),
            "vcr" => Ok(Variant::Vcr),
            other => Err(format!("unknown variant {other:?} (expected cr, vr or vcr)")),
        }
    }
}

/// Serialises `(g, t) -> bool` maps as `[[g, t, 0|1], ...]`.
mod commitment_list {
    use super::CommitmentMap;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(map: &CommitmentMap, s: S) -> Result<S::Ok, S::Error> {
        let list: Vec<[usize; 3]> = map.iter().map(|(&(g, t), &on)| [g, t, usize::from(on)]).collect();
        list.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CommitmentMap, D::Error> {
        let list: Vec<[usize; 3]> = Vec::deserialize(d)?;
        Ok(list.into_iter().map(|[g, t, v]| ((g, t), v != 0)).collect())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VariablePlan {
    #[serde(with = "commitment_list")]
    pub fixed: CommitmentMap,
    #[serde(with = "commitment_list")]
    pub warm: CommitmentMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionPlan {
    pub variables: Option<VariablePlan>,
    pub inactive_lines: Option<BTreeSet<usize>>,
    pub thresholds: Thresholds,
}

impl ReductionPlan {
    /// A plan with both components present and nothing reduced.
    pub fn empty() -> Self {
        ReductionPlan {
            variables: Some(VariablePlan::default()),
            inactive_lines: Some(BTreeSet::new()),
            thresholds: Thresholds::default(),
        }
    }
}

fn check_probs(probs: &[Vec<f64>]) -> Result<(), ReductionError> {
    for (row, r) in probs.iter().enumerate() {
        for (t, &value) in r.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(ReductionError::OutOfRange { row, t, value });
            }
        }
    }
    Ok(())
}

/// Splits every `(g, t)` into a fixing or a warm start.
pub fn plan_variable_reduction(probs: &[Vec<f64>], th: &Thresholds) -> Result<VariablePlan, ReductionError> {
    check_probs(probs)?;
    let mut plan = VariablePlan::default();
    for (g, row) in probs.iter().enumerate() {
        for (t, &p) in row.iter().enumerate() {
            if p >= th.fix_on {
                plan.fixed.insert((g, t), true);
            } else if p <= th.fix_off {
                plan.fixed.insert((g, t), false);
            } else {
                plan.warm.insert((g, t), p >= th.warm_on);
            }
        }
    }
    Ok(plan)
}

/// Lines whose predicted probability stays below `line_active` in every period.
pub fn plan_constraint_reduction(probs: &[Vec<f64>], th: &Thresholds) -> Result<BTreeSet<usize>, ReductionError> {
    check_probs(probs)?;
    Ok(probs
        .iter()
        .enumerate()
        .filter(|(_, row)| row.iter().all(|&p| p < th.line_active))
        .map(|(k, _)| k)
        .collect())
}

/// Plan built from a known solution: every commitment fixed to its solved
/// value, and every line that never exceeds critical loading screened out.
pub fn oracle_plan(network: &Network, commitment: &[Vec<u8>], flows: &[Vec<f64>]) -> ReductionPlan {
    let fixed = commitment
        .iter()
        .enumerate()
        .flat_map(|(g, row)| row.iter().enumerate().map(move |(t, &u)| ((g, t), u == 1)))
        .collect();
    let inactive = flows
        .iter()
        .zip(&network.lines)
        .enumerate()
        .filter(|(_, (row, line))| row.iter().all(|&f| !is_critical(f, line.limit)))
        .map(|(k, _)| k)
        .collect();
    ReductionPlan {
        variables: Some(VariablePlan {
            fixed,
            warm: CommitmentMap::new(),
        }),
        inactive_lines: Some(inactive),
        thresholds: Thresholds::default(),
    }
}

/// Build options for `variant` from `plan`.
pub fn build_options(variant: Variant, plan: &ReductionPlan, formulation: Formulation) -> Result<BuildOptions, ReductionError> {
    let mut opts = BuildOptions::new(formulation);
    if matches!(variant, Variant::Vr | Variant::Vcr) {
        let vars = plan
            .variables
            .as_ref()
            .ok_or(ReductionError::MissingComponent(variant, "variable"))?;
        opts.fixed_commitments = vars.fixed.clone();
        opts.warm_starts = vars.warm.clone();
    }
    if matches!(variant, Variant::Cr | Variant::Vcr) {
        opts.inactive_thermal = plan
            .inactive_lines
            .clone()
            .ok_or(ReductionError::MissingComponent(variant, "constraint"))?;
    }
    Ok(opts)
}

pub fn assemble(
    variant: Variant,
    plan: &ReductionPlan,
    network: &Network,
    demand: &[Vec<f64>],
    formulation: Formulation,
) -> Result<MilpModel, ReductionError> {
    let opts = build_options(variant, plan, formulation)?;
    Ok(build(network, demand, &opts)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub line: usize,
    pub t: usize,
    pub flow: f64,
    pub limit: f64,
    /// `|flow| - limit` in MW
    pub overload: f64,
}

/// Recomputes flows on the screened-out lines from a dispatch and lists
/// every period where such a line exceeds its limit.
pub fn verify_reduced_solution(
    dispatch: &[Vec<f64>],
    network: &Network,
    demand: &[Vec<f64>],
    removed: &BTreeSet<usize>,
) -> Result<Vec<Violation>, ReductionError> {
    if removed.is_empty() {
        return Ok(Vec::new());
    }
    let periods = network.check_demand(demand)?;
    let ptdf = compute_ptdf(network)?;
    let mut out = Vec::new();
    for t in 0..periods {
        let mut injection: Vec<f64> = (0..network.n_buses()).map(|n| -demand[n][t]).collect();
        for (g, gen) in network.generators.iter().enumerate() {
            injection[gen.bus] += dispatch[g][t];
        }
        let flows = ptdf.flows(&injection);
        for &k in removed {
            let limit = network.lines[k].limit;
            let flow = flows[k];
            // same tolerance scale as the solver's feasibility check
            if flow.abs() > limit + 1e-6 {
                out.push(Violation {
                    line: k,
                    t,
                    flow,
                    limit,
                    overload: flow.abs() - limit,
                });
            }
        }
    }
    Ok(out)
}
