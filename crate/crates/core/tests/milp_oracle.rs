mod common;

use scuc_core::milp::{brute_force_oracle, solve, SolveOptions, SolveStatus};

#[test]
fn branch_and_bound_matches_enumeration() {
    let mut feasible = 0;
    for seed in 0..200u64 {
        let binaries = 2 + (seed as usize % 11);
        let continuous = (seed as usize * 7) % 21;
        let rows = 3 + (seed as usize % 9);
        let model = common::random_milp(seed, binaries, continuous, rows);
        let oracle = brute_force_oracle(&model).unwrap();
        let sol = solve(&model, &SolveOptions::exact());
        match oracle.status {
            SolveStatus::Infeasible => {
                assert_eq!(sol.status, SolveStatus::Infeasible, "seed {seed}");
            }
            SolveStatus::Optimal => {
                feasible += 1;
                assert_eq!(sol.status, SolveStatus::Optimal, "seed {seed}");
                let rel = (sol.objective - oracle.objective).abs() / oracle.objective.abs().max(1.0);
                assert!(rel < 1e-6, "seed {seed}: {} vs {}", sol.objective, oracle.objective);
                assert!(model.max_violation(&sol.values) < 1e-6, "seed {seed}");
            }
            other => panic!("seed {seed}: oracle status {other:?}"),
        }
    }
    assert!(feasible > 50, "only {feasible} feasible instances");
}

#[test]
fn warm_start_never_worsens() {
    for seed in 0..60u64 {
        let mut model = common::random_milp(1000 + seed, 8, 6, 6);
        let cold = solve(&model, &SolveOptions::exact());
        if !cold.has_solution() {
            continue;
        }
        // warm start from a different, possibly infeasible, assignment
        let ints: Vec<_> = (0..model.vars.len()).filter(|&j| model.vars[j].integer).collect();
        for (k, &j) in ints.iter().enumerate() {
            let v = if k % 2 == 0 { cold.values[j] } else { 1.0 - cold.values[j] };
            model.set_warm_start(scuc_core::milp::VarId(j), v);
        }
        let warm = solve(&model, &SolveOptions::exact());
        assert!(warm.objective <= cold.objective + 1e-9, "seed {seed}");
    }
}
