//! Security-constrained unit commitment model builder.
//!
//! Builds either the angle-based (B-θ) or the PTDF-based formulation of the
//! day-ahead SCUC over `T` periods:
//!
//! * objective: no-load + start-up + linear production cost;
//! * generator limits, ramp-limited spinning reserve covering the loss of any
//!   single unit, hourly ramping, minimum up/down times, start-up definition;
//! * line flows from angles (B-θ) or from PTDF times net nodal injection,
//!   thermal limits, and power balance (nodal for B-θ, system-wide for PTDF).
//!
//! Periods are 0-based here. Period 0 looks back at the generator's initial
//! state (`initial_on`, `initial_output`).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::milp::{ConKey, ConKind, MilpModel, Sense, Solution, VarId, VarKey, VarKind};
use crate::power_model::{compute_ptdf, Network, NetworkError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    BTheta,
    Ptdf,
}

impl std::str::FromStr for Formulation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "btheta" | "b-theta" => Ok(Formulation::BTheta),
            "ptdf" => Ok(Formulation::Ptdf),
            other => Err(format!("unknown formulation {other:?} (expected btheta or ptdf)")),
        }
    }
}

/// Commitment map keyed by `(generator, period)`.
pub type CommitmentMap = BTreeMap<(usize, usize), bool>;

#[derive(Debug, Clone, PartialEq)]
pub struct BuildOptions {
    pub formulation: Formulation,
    pub reserve_enabled: bool,
    pub fixed_commitments: CommitmentMap,
    pub warm_starts: CommitmentMap,
    /// Lines whose thermal limits are omitted in every period.
    pub inactive_thermal: BTreeSet<usize>,
}

impl BuildOptions {
    pub fn new(formulation: Formulation) -> Self {
        BuildOptions {
            formulation,
            reserve_enabled: true,
            fixed_commitments: CommitmentMap::new(),
            warm_starts: CommitmentMap::new(),
            inactive_thermal: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("commitment ({g}, {t}) is both fixed and warm-started")]
    OverlappingKeys { g: usize, t: usize },
    #[error("commitment key ({g}, {t}) is outside {gens} generators x {periods} periods")]
    KeyOutOfRange {
        g: usize,
        t: usize,
        gens: usize,
        periods: usize,
    },
    #[error("inactive line index {0} does not exist")]
    UnknownLine(usize),
    #[error("inconsistent fixing at generator {g}, period {t}: {reason}")]
    InconsistentFixing { g: usize, t: usize, reason: String },
}

/// Per-generator view of which commitments are pinned.
struct Pins {
    /// `u[g][t]`, `None` when free
    u: Vec<Vec<Option<bool>>>,
    /// `v[g][t]`, `None` when free
    v: Vec<Vec<Option<bool>>>,
}

fn pinned_startups(network: &Network, periods: usize, known: &CommitmentMap) -> Pins {
    let g_count = network.n_generators();
    let mut u = vec![vec![None; periods]; g_count];
    for (&(g, t), &on) in known {
        u[g][t] = Some(on);
    }
    let v = (0..g_count)
        .map(|g| {
            (0..periods)
                .map(|t| {
                    let prev = if t == 0 {
                        Some(network.generators[g].initial_on)
                    } else {
                        u[g][t - 1]
                    };
                    match (prev, u[g][t]) {
                        (Some(p), Some(c)) => Some(c && !p),
                        _ => None,
                    }
                })
                .collect()
        })
        .collect();
    Pins { u, v }
}

/// Rejects fixings that violate the minimum up/down rows before solving.
fn check_fixings(network: &Network, periods: usize, pins: &Pins) -> Result<(), BuildError> {
    for (g, gen) in network.generators.iter().enumerate() {
        let v_min = |q: usize| pins.v[g][q].map_or(0, u8::from);
        for t in 0..periods {
            // minimum up: startups in the trailing window need u_t = 1
            let start = (t + 1).saturating_sub(gen.min_up);
            let lhs: u8 = (start..=t).map(v_min).sum();
            let rhs = pins.u[g][t].map_or(1, u8::from);
            if lhs > rhs {
                return Err(BuildError::InconsistentFixing {
                    g,
                    t,
                    reason: format!("unit is off within {} periods of a start-up", gen.min_up),
                });
            }
            // minimum down: an online unit may not restart within the window
            if t + gen.min_down < periods {
                let lhs: u8 = (t + 1..=t + gen.min_down).map(v_min).sum::<u8>()
                    + pins.u[g][t].map_or(0, u8::from);
                if lhs > 1 {
                    return Err(BuildError::InconsistentFixing {
                        g,
                        t,
                        reason: format!("restart within {} periods of being online", gen.min_down),
                    });
                }
            }
        }
    }
    Ok(())
}

struct Builder<'a> {
    network: &'a Network,
    demand: &'a [Vec<f64>],
    periods: usize,
    model: MilpModel,
}

impl Builder<'_> {
    fn var(&mut self, kind: VarKind, index: usize, t: usize, lb: f64, ub: f64, integer: bool) -> VarId {
        let tag = match kind {
            VarKind::U => "u",
            VarKind::V => "v",
            VarKind::Pg => "pg",
            VarKind::R => "r",
            VarKind::Pk => "pk",
            VarKind::Theta => "theta",
        };
        let id = self.model.add_var(format!("{tag}[{index},{t}]"), lb, ub, integer);
        self.model.register_var(VarKey { kind, index, t }, id);
        id
    }

    fn con(&mut self, kind: ConKind, index: usize, t: usize, terms: Vec<(VarId, f64)>, sense: Sense, rhs: f64) {
        let id = self
            .model
            .add_constraint(format!("{kind:?}[{index},{t}]"), terms, sense, rhs);
        self.model.register_con(ConKey { kind, index, t }, id);
    }

    fn get(&self, kind: VarKind, index: usize, t: usize) -> VarId {
        self.model.var(kind, index, t).expect("variable registered")
    }
}

pub fn build(network: &Network, demand: &[Vec<f64>], options: &BuildOptions) -> Result<MilpModel, BuildError> {
    let periods = network.check_demand(demand)?;
    let g_count = network.n_generators();
    for (&(g, t), _) in options.fixed_commitments.iter().chain(&options.warm_starts) {
        if g >= g_count || t >= periods {
            return Err(BuildError::KeyOutOfRange {
                g,
                t,
                gens: g_count,
                periods,
            });
        }
    }
    if let Some(&(g, t)) = options
        .fixed_commitments
        .keys()
        .find(|k| options.warm_starts.contains_key(k))
    {
        return Err(BuildError::OverlappingKeys { g, t });
    }
    if let Some(&k) = options.inactive_thermal.iter().find(|&&k| k >= network.n_lines()) {
        return Err(BuildError::UnknownLine(k));
    }
    let pins = pinned_startups(network, periods, &options.fixed_commitments);
    check_fixings(network, periods, &pins)?;

    let mut b = Builder {
        network,
        demand,
        periods,
        model: MilpModel::new(),
    };
    add_generator_block(&mut b, options.reserve_enabled);
    match options.formulation {
        Formulation::BTheta => add_btheta_network(&mut b),
        Formulation::Ptdf => add_ptdf_network(&mut b)?,
    }
    add_thermal_limits(&mut b, &options.inactive_thermal);

    // fixings pin u, and v wherever both neighbouring commitments are pinned
    for g in 0..g_count {
        for t in 0..periods {
            if let Some(on) = pins.u[g][t] {
                let u = b.get(VarKind::U, g, t);
                let x = f64::from(u8::from(on));
                b.model.set_bounds(u, x, x);
            }
            if let Some(start) = pins.v[g][t] {
                let v = b.get(VarKind::V, g, t);
                let x = f64::from(u8::from(start));
                b.model.set_bounds(v, x, x);
            }
        }
    }
    if !options.warm_starts.is_empty() {
        let mut known = options.fixed_commitments.clone();
        known.extend(options.warm_starts.iter().map(|(k, v)| (*k, *v)));
        let hints = pinned_startups(network, periods, &known);
        for g in 0..g_count {
            for t in 0..periods {
                if options.warm_starts.contains_key(&(g, t)) || hints.v[g][t].is_some() {
                    if let Some(on) = hints.u[g][t] {
                        let u = b.get(VarKind::U, g, t);
                        b.model.set_warm_start(u, f64::from(u8::from(on)));
                    }
                    if let Some(start) = hints.v[g][t] {
                        let v = b.get(VarKind::V, g, t);
                        b.model.set_warm_start(v, f64::from(u8::from(start)));
                    }
                }
            }
        }
    }
    Ok(b.model)
}

fn add_generator_block(b: &mut Builder, reserve_enabled: bool) {
    let network = b.network;
    let periods = b.periods;
    for (g, gen) in network.generators.iter().enumerate() {
        for t in 0..periods {
            let u = b.var(VarKind::U, g, t, 0.0, 1.0, true);
            let v = b.var(VarKind::V, g, t, 0.0, 1.0, true);
            let p = b.var(VarKind::Pg, g, t, 0.0, gen.p_max, false);
            b.var(VarKind::R, g, t, 0.0, gen.p_max, false);
            b.model.add_objective_term(u, gen.cost_no_load);
            b.model.add_objective_term(v, gen.cost_startup);
            b.model.add_objective_term(p, gen.cost_linear);
        }
    }
    for (g, gen) in network.generators.iter().enumerate() {
        for t in 0..periods {
            let u = b.get(VarKind::U, g, t);
            let v = b.get(VarKind::V, g, t);
            let p = b.get(VarKind::Pg, g, t);
            let r = b.get(VarKind::R, g, t);

            b.con(ConKind::MinOutput, g, t, vec![(p, 1.0), (u, -gen.p_min)], Sense::Ge, 0.0);
            b.con(ConKind::MaxOutput, g, t, vec![(p, 1.0), (r, 1.0), (u, -gen.p_max)], Sense::Le, 0.0);
            b.con(ConKind::ReserveCap, g, t, vec![(r, 1.0), (u, -gen.ramp_10)], Sense::Le, 0.0);

            if reserve_enabled {
                // sum_q r_q >= P_g + r_g, with r_g cancelled on both sides
                let mut terms: Vec<(VarId, f64)> = (0..network.n_generators())
                    .filter(|&q| q != g)
                    .map(|q| (b.get(VarKind::R, q, t), 1.0))
                    .collect();
                terms.push((p, -1.0));
                b.con(ConKind::ReserveReq, g, t, terms, Sense::Ge, 0.0);
            }

            let init_u = f64::from(u8::from(gen.initial_on));
            if t == 0 {
                b.con(
                    ConKind::RampUp,
                    g,
                    t,
                    vec![(p, 1.0), (v, -gen.ramp_su)],
                    Sense::Le,
                    gen.initial_output + gen.ramp_hr * init_u,
                );
                b.con(
                    ConKind::RampDown,
                    g,
                    t,
                    vec![(p, -1.0), (u, gen.ramp_sd - gen.ramp_hr), (v, -gen.ramp_sd)],
                    Sense::Le,
                    gen.ramp_sd * init_u - gen.initial_output,
                );
                b.con(ConKind::StartupDef, g, t, vec![(v, 1.0), (u, -1.0)], Sense::Ge, -init_u);
            } else {
                let p_prev = b.get(VarKind::Pg, g, t - 1);
                let u_prev = b.get(VarKind::U, g, t - 1);
                b.con(
                    ConKind::RampUp,
                    g,
                    t,
                    vec![(p, 1.0), (p_prev, -1.0), (u_prev, -gen.ramp_hr), (v, -gen.ramp_su)],
                    Sense::Le,
                    0.0,
                );
                b.con(
                    ConKind::RampDown,
                    g,
                    t,
                    vec![
                        (p_prev, 1.0),
                        (p, -1.0),
                        (u, gen.ramp_sd - gen.ramp_hr),
                        (v, -gen.ramp_sd),
                        (u_prev, -gen.ramp_sd),
                    ],
                    Sense::Le,
                    0.0,
                );
                b.con(
                    ConKind::StartupDef,
                    g,
                    t,
                    vec![(v, 1.0), (u, -1.0), (u_prev, 1.0)],
                    Sense::Ge,
                    0.0,
                );
            }

            // minimum up time, window truncated at the first period
            let start = (t + 1).saturating_sub(gen.min_up);
            let mut terms: Vec<(VarId, f64)> =
                (start..=t).map(|q| (b.get(VarKind::V, g, q), 1.0)).collect();
            terms.push((u, -1.0));
            b.con(ConKind::MinUp, g, t, terms, Sense::Le, 0.0);

            // minimum down time
            if t + gen.min_down < periods {
                let mut terms: Vec<(VarId, f64)> = (t + 1..=t + gen.min_down)
                    .map(|q| (b.get(VarKind::V, g, q), 1.0))
                    .collect();
                terms.push((u, 1.0));
                b.con(ConKind::MinDown, g, t, terms, Sense::Le, 1.0);
            }
        }
    }
}

fn add_flow_vars(b: &mut Builder) {
    for k in 0..b.network.n_lines() {
        for t in 0..b.periods {
            b.var(VarKind::Pk, k, t, f64::NEG_INFINITY, f64::INFINITY, false);
        }
    }
}

fn add_btheta_network(b: &mut Builder) {
    let network = b.network;
    let slack = network.slack_bus();
    add_flow_vars(b);
    for n in 0..network.n_buses() {
        for t in 0..b.periods {
            b.var(VarKind::Theta, n, t, f64::NEG_INFINITY, f64::INFINITY, false);
        }
    }
    let at_bus = network.generators_at();
    for t in 0..b.periods {
        for (k, line) in network.lines.iter().enumerate() {
            let terms = vec![
                (b.get(VarKind::Pk, k, t), 1.0),
                (b.get(VarKind::Theta, line.from_bus, t), -line.susceptance),
                (b.get(VarKind::Theta, line.to_bus, t), line.susceptance),
            ];
            b.con(ConKind::FlowBTheta, k, t, terms, Sense::Eq, 0.0);
        }
        for n in 0..network.n_buses() {
            let mut terms: Vec<(VarId, f64)> =
                at_bus[n].iter().map(|&g| (b.get(VarKind::Pg, g, t), 1.0)).collect();
            for (k, line) in network.lines.iter().enumerate() {
                if line.to_bus == n {
                    terms.push((b.get(VarKind::Pk, k, t), 1.0));
                } else if line.from_bus == n {
                    terms.push((b.get(VarKind::Pk, k, t), -1.0));
                }
            }
            b.con(ConKind::NodalBalance, n, t, terms, Sense::Eq, b.demand[n][t]);
        }
        let theta = b.get(VarKind::Theta, slack, t);
        b.con(ConKind::SlackAngle, slack, t, vec![(theta, 1.0)], Sense::Eq, 0.0);
    }
}

fn add_ptdf_network(b: &mut Builder) -> Result<(), BuildError> {
    let network = b.network;
    let ptdf = compute_ptdf(network)?;
    add_flow_vars(b);
    for t in 0..b.periods {
        for k in 0..network.n_lines() {
            // P_k = sum_n PTDF[k][n] * (sum_{g at n} P_g - d_n)
            let mut terms = vec![(b.get(VarKind::Pk, k, t), 1.0)];
            for (g, gen) in network.generators.iter().enumerate() {
                let f = ptdf.values[k][gen.bus];
                if f != 0.0 {
                    terms.push((b.get(VarKind::Pg, g, t), -f));
                }
            }
            let withdrawn: f64 = (0..network.n_buses())
                .map(|n| ptdf.values[k][n] * b.demand[n][t])
                .sum();
            b.con(ConKind::FlowPtdf, k, t, terms, Sense::Eq, -withdrawn);
        }
        let terms = (0..network.n_generators())
            .map(|g| (b.get(VarKind::Pg, g, t), 1.0))
            .collect();
        let total: f64 = (0..network.n_buses()).map(|n| b.demand[n][t]).sum();
        b.con(ConKind::SystemBalance, 0, t, terms, Sense::Eq, total);
    }
    Ok(())
}

fn add_thermal_limits(b: &mut Builder, inactive: &BTreeSet<usize>) {
    for (k, line) in b.network.lines.iter().enumerate() {
        if inactive.contains(&k) {
            continue;
        }
        for t in 0..b.periods {
            let flow = b.get(VarKind::Pk, k, t);
            b.con(ConKind::ThermalMax, k, t, vec![(flow, 1.0)], Sense::Le, line.limit);
            b.con(ConKind::ThermalMin, k, t, vec![(flow, 1.0)], Sense::Ge, -line.limit);
        }
    }
}

/// Commitments, dispatch and flows read back from a solved SCUC model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// `commitment[g][t]`
    pub commitment: Vec<Vec<u8>>,
    /// `dispatch[g][t]` in MW
    pub dispatch: Vec<Vec<f64>>,
    /// `flows[k][t]` in MW
    pub flows: Vec<Vec<f64>>,
    pub objective: f64,
}

impl Schedule {
    pub fn extract(network: &Network, model: &MilpModel, solution: &Solution) -> Schedule {
        let periods = model
            .var_registry()
            .keys()
            .filter(|k| k.kind == VarKind::U && k.index == 0)
            .count();
        let read = |kind: VarKind, count: usize| -> Vec<Vec<f64>> {
            (0..count)
                .map(|i| {
                    (0..periods)
                        .map(|t| solution.value(model.var(kind, i, t).expect("registered")))
                        .collect()
                })
                .collect()
        };
        Schedule {
            commitment: read(VarKind::U, network.n_generators())
                .into_iter()
                .map(|row| row.into_iter().map(|x| u8::from(x > 0.5)).collect())
                .collect(),
            dispatch: read(VarKind::Pg, network.n_generators()),
            flows: read(VarKind::Pk, network.n_lines()),
            objective: solution.objective,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{brute_force_oracle, solve, SolveOptions, SolveStatus};
    use crate::power_model::{Bus, Generator};

    fn gen(id: usize, c: f64, c_nl: f64, c_su: f64, ramps: f64, ramp_10: f64) -> Generator {
        Generator {
            id,
            bus: 0,
            p_min: 0.0,
            p_max: 100.0,
            cost_linear: c,
            cost_no_load: c_nl,
            cost_startup: c_su,
            ramp_hr: ramps,
            ramp_10,
            ramp_su: ramps,
            ramp_sd: ramps,
            min_up: 1,
            min_down: 1,
            initial_on: false,
            initial_output: 0.0,
        }
    }

    fn one_bus_two_gen() -> Network {
        Network::new(
            vec![Bus { id: 0, is_slack: true }],
            vec![gen(0, 2.0, 5.0, 3.0, 100.0, 100.0), gen(1, 10.0, 0.0, 0.0, 100.0, 100.0)],
            vec![],
            vec![vec![50.0]],
        )
        .unwrap()
    }

    #[test]
    fn reserve_forces_second_unit() {
        let net = one_bus_two_gen();
        let model = build(&net, &net.base_demand, &BuildOptions::new(Formulation::Ptdf)).unwrap();
        let oracle = brute_force_oracle(&model).unwrap();
        assert!((oracle.objective - 108.0).abs() < 1e-9);
        let sol = solve(&model, &SolveOptions::exact());
        assert!((sol.objective - 108.0).abs() < 1e-9);
        let u2 = model.var(VarKind::U, 1, 0).unwrap();
        let r2 = model.var(VarKind::R, 1, 0).unwrap();
        let p1 = model.var(VarKind::Pg, 0, 0).unwrap();
        assert_eq!(sol.value(u2), 1.0);
        assert!((sol.value(p1) - 50.0).abs() < 1e-9);
        assert!(sol.value(r2) >= 50.0 - 1e-9);
    }

    #[test]
    fn without_reserve_second_unit_may_stay_off() {
        let net = one_bus_two_gen();
        let mut opts = BuildOptions::new(Formulation::Ptdf);
        opts.reserve_enabled = false;
        let model = build(&net, &net.base_demand, &opts).unwrap();
        let oracle = brute_force_oracle(&model).unwrap();
        assert!((oracle.objective - 108.0).abs() < 1e-9);
        // g2 carries no cost when committed, so both patterns tie; fixing it
        // off must keep the optimum
        let mut off = opts.clone();
        off.fixed_commitments.insert((1, 0), false);
        let m2 = build(&net, &net.base_demand, &off).unwrap();
        let s2 = solve(&m2, &SolveOptions::exact());
        assert!((s2.objective - 108.0).abs() < 1e-9);
        assert_eq!(s2.value(m2.var(VarKind::U, 1, 0).unwrap()), 0.0);
    }

    #[test]
    fn two_gen_single_period_has_four_binaries() {
        let net = one_bus_two_gen();
        let model = build(&net, &net.base_demand, &BuildOptions::new(Formulation::BTheta)).unwrap();
        assert_eq!(model.stats().n_binaries, 4);
    }

    #[test]
    fn single_unit_with_reserve_is_infeasible() {
        let net = Network::new(
            vec![Bus { id: 0, is_slack: true }],
            vec![gen(0, 2.0, 5.0, 3.0, 100.0, 100.0)],
            vec![],
            vec![vec![50.0]],
        )
        .unwrap();
        let model = build(&net, &net.base_demand, &BuildOptions::new(Formulation::Ptdf)).unwrap();
        assert_eq!(solve(&model, &SolveOptions::exact()).status, SolveStatus::Infeasible);
    }

    #[test]
    fn off_on_off_inside_min_up_is_rejected() {
        let mut g = gen(0, 1.0, 1.0, 1.0, 100.0, 100.0);
        g.min_up = 3;
        let net = Network::new(
            vec![Bus { id: 0, is_slack: true }],
            vec![g],
            vec![],
            vec![vec![10.0; 4]],
        )
        .unwrap();
        let mut opts = BuildOptions::new(Formulation::Ptdf);
        opts.fixed_commitments.insert((0, 0), false);
        opts.fixed_commitments.insert((0, 1), true);
        opts.fixed_commitments.insert((0, 2), false);
        match build(&net, &net.base_demand, &opts) {
            Err(BuildError::InconsistentFixing { g: 0, t: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn overlapping_keys_are_rejected() {
        let net = one_bus_two_gen();
        let mut opts = BuildOptions::new(Formulation::Ptdf);
        opts.fixed_commitments.insert((0, 0), true);
        opts.warm_starts.insert((0, 0), true);
        assert!(matches!(
            build(&net, &net.base_demand, &opts),
            Err(BuildError::OverlappingKeys { g: 0, t: 0 })
        ));
    }

    #[test]
    fn demand_shape_is_checked() {
        let net = one_bus_two_gen();
        let err = build(&net, &[vec![1.0], vec![2.0]], &BuildOptions::new(Formulation::Ptdf));
        assert!(matches!(err, Err(BuildError::Network(NetworkError::DemandShape { .. }))));
    }
}
