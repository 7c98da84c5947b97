mod common;

use std::collections::BTreeSet;

use scuc_core::milp::{solve, ConKind, SolveOptions, SolveStatus, VarKind};
use scuc_core::power_model::compute_ptdf;
use scuc_core::scuc::{build, BuildOptions, Formulation, Schedule};

fn instance(seed: u64) -> scuc_core::power_model::Network {
    let buses = 2 + (seed as usize % 5);
    let gens = 2 + (seed as usize % 3);
    let periods = 2 + (seed as usize % 7);
    common::random_network(seed, buses, gens, periods)
}

#[test]
fn formulations_agree_on_random_instances() {
    let mut optimal = 0;
    for seed in 0..40u64 {
        let net = instance(seed);
        let demand = net.base_demand.clone();
        let a = build(&net, &demand, &BuildOptions::new(Formulation::BTheta)).unwrap();
        let b = build(&net, &demand, &BuildOptions::new(Formulation::Ptdf)).unwrap();
        let sa = solve(&a, &SolveOptions::exact());
        let sb = solve(&b, &SolveOptions::exact());
        assert_eq!(sa.status == SolveStatus::Infeasible, sb.status == SolveStatus::Infeasible, "seed {seed}");
        if sa.status == SolveStatus::Optimal {
            assert_eq!(sb.status, SolveStatus::Optimal);
            let rel = (sa.objective - sb.objective).abs() / sa.objective.abs().max(1.0);
            assert!(rel < 1e-6, "seed {seed}: {} vs {}", sa.objective, sb.objective);
            optimal += 1;
        }
    }
    assert!(optimal >= 20, "only {optimal} feasible instances");
}

#[test]
fn ptdf_model_is_smaller() {
    for seed in 0..10u64 {
        let net = instance(seed);
        let a = build(&net, &net.base_demand, &BuildOptions::new(Formulation::BTheta)).unwrap().stats();
        let b = build(&net, &net.base_demand, &BuildOptions::new(Formulation::Ptdf)).unwrap().stats();
        assert_eq!(a.n_binaries, b.n_binaries);
        assert!(b.n_continuous < a.n_continuous, "seed {seed}");
        assert!(b.n_constraints < a.n_constraints, "seed {seed}");
    }
}

#[test]
fn all_lines_inactive_removes_thermal_rows() {
    let net = instance(3);
    for f in [Formulation::BTheta, Formulation::Ptdf] {
        let mut opts = BuildOptions::new(f);
        opts.inactive_thermal = (0..net.n_lines()).collect();
        let m = build(&net, &net.base_demand, &opts).unwrap();
        assert_eq!(m.count_constraints(ConKind::ThermalMax), 0);
        assert_eq!(m.count_constraints(ConKind::ThermalMin), 0);
        let full = build(&net, &net.base_demand, &BuildOptions::new(f)).unwrap();
        assert_eq!(full.count_constraints(ConKind::ThermalMax), net.n_lines() * net.horizon());
    }
}

#[test]
fn huge_limits_make_screening_irrelevant() {
    for seed in 0..10u64 {
        let mut net = instance(seed);
        for l in &mut net.lines {
            l.limit = 1e6;
        }
        let full = solve(&build(&net, &net.base_demand, &BuildOptions::new(Formulation::Ptdf)).unwrap(), &SolveOptions::exact());
        let mut opts = BuildOptions::new(Formulation::Ptdf);
        opts.inactive_thermal = (0..net.n_lines()).collect();
        let relaxed = solve(&build(&net, &net.base_demand, &opts).unwrap(), &SolveOptions::exact());
        assert_eq!(full.status, relaxed.status, "seed {seed}");
        if full.has_solution() {
            assert!((full.objective - relaxed.objective).abs() <= 1e-6 * full.objective.abs().max(1.0));
        }
    }
}

#[test]
fn solved_flows_match_ptdf_of_net_injection() {
    let mut checked = 0;
    for seed in 0..15u64 {
        let net = instance(seed);
        for f in [Formulation::BTheta, Formulation::Ptdf] {
            let model = build(&net, &net.base_demand, &BuildOptions::new(f)).unwrap();
            let sol = solve(&model, &SolveOptions::exact());
            if !sol.has_solution() {
                continue;
            }
            checked += 1;
            let s = Schedule::extract(&net, &model, &sol);
            let ptdf = compute_ptdf(&net).unwrap();
            for t in 0..net.horizon() {
                let mut inj: Vec<f64> = (0..net.n_buses()).map(|n| -net.base_demand[n][t]).collect();
                for (g, gen) in net.generators.iter().enumerate() {
                    inj[gen.bus] += s.dispatch[g][t];
                }
                let flows = ptdf.flows(&inj);
                for k in 0..net.n_lines() {
                    assert!((flows[k] - s.flows[k][t]).abs() < 1e-5, "seed {seed} {f:?} line {k} t {t}");
                    assert!(s.flows[k][t].abs() <= net.lines[k].limit + 1e-6);
                }
                let gen: f64 = (0..net.n_generators()).map(|g| s.dispatch[g][t]).sum();
                let load: f64 = (0..net.n_buses()).map(|n| net.base_demand[n][t]).sum();
                assert!((gen - load).abs() < 1e-5);
            }
        }
    }
    assert!(checked > 10);
}

#[test]
fn startups_follow_commitment_changes() {
    for seed in 0..15u64 {
        let net = instance(seed);
        let model = build(&net, &net.base_demand, &BuildOptions::new(Formulation::Ptdf)).unwrap();
        let sol = solve(&model, &SolveOptions::exact());
        if !sol.has_solution() {
            continue;
        }
        for (g, gen) in net.generators.iter().enumerate() {
            let mut prev = if gen.initial_on { 1.0 } else { 0.0 };
            for t in 0..net.horizon() {
                let u = sol.value(model.var(VarKind::U, g, t).unwrap()).round();
                let v = sol.value(model.var(VarKind::V, g, t).unwrap()).round();
                assert!(v >= u - prev, "seed {seed} g {g} t {t}");
                assert!(v <= u, "start-up while off, seed {seed} g {g} t {t}");
                prev = u;
            }
        }
    }
}

#[test]
fn fixing_the_optimal_commitment_reproduces_the_cost() {
    for seed in 0..10u64 {
        let net = instance(seed);
        let model = build(&net, &net.base_demand, &BuildOptions::new(Formulation::Ptdf)).unwrap();
        let sol = solve(&model, &SolveOptions::exact());
        if !sol.has_solution() {
            continue;
        }
        let s = Schedule::extract(&net, &model, &sol);
        let mut opts = BuildOptions::new(Formulation::Ptdf);
        for (g, row) in s.commitment.iter().enumerate() {
            for (t, &u) in row.iter().enumerate() {
                opts.fixed_commitments.insert((g, t), u == 1);
            }
        }
        let fixed = build(&net, &net.base_demand, &opts).unwrap();
        assert_eq!(fixed.stats().n_binaries, model.stats().n_binaries);
        let r = solve(&fixed, &SolveOptions::exact());
        assert!((r.objective - sol.objective).abs() <= 1e-6 * sol.objective.abs().max(1.0), "seed {seed}");
        assert_eq!(r.node_count, 1);
    }
}

#[test]
fn unknown_inactive_line_is_rejected() {
    let net = instance(1);
    let mut opts = BuildOptions::new(Formulation::Ptdf);
    opts.inactive_thermal = BTreeSet::from([net.n_lines() + 3]);
    assert!(build(&net, &net.base_demand, &opts).is_err());
}
