#![allow(dead_code)]

pub mod nn;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scuc_core::milp::{MilpModel, Sense};

/// Random bounded MILP with `binaries` binary and `continuous` continuous
/// columns. Continuous columns are boxed, so every LP is bounded.
pub fn random_milp(seed: u64, binaries: usize, continuous: usize, rows: usize) -> MilpModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = MilpModel::new();
    let mut vars = Vec::new();
    for i in 0..binaries {
        vars.push(m.add_binary(format!("b{i}")));
    }
    for i in 0..continuous {
        let ub = rng.gen_range(1.0..10.0);
        vars.push(m.add_var(format!("x{i}"), 0.0, ub, false));
    }
    for &v in &vars {
        let c: f64 = rng.gen_range(-10.0..10.0);
        m.add_objective_term(v, (c * 100.0).round() / 100.0);
    }
    for r in 0..rows {
        let mut terms = Vec::new();
        for &v in &vars {
            if rng.gen_bool(0.35) {
                let a: f64 = rng.gen_range(-5.0..5.0);
                terms.push((v, (a * 10.0).round() / 10.0));
            }
        }
        if terms.is_empty() {
            continue;
        }
        // rhs chosen so the all-half point is roughly feasible
        let center: f64 = terms.iter().map(|(_, a)| a * 0.5).sum();
        let sense = match rng.gen_range(0..10) {
            0 => Sense::Eq,
            1..=5 => Sense::Le,
            _ => Sense::Ge,
        };
        let slack = rng.gen_range(0.0..3.0);
        let rhs = match sense {
            Sense::Le => center + slack,
            Sense::Ge => center - slack,
            Sense::Eq => center,
        };
        m.add_constraint(format!("r{r}"), terms, sense, (rhs * 10.0).round() / 10.0);
    }
    m
}

use scuc_core::power_model::{Bus, Generator, Line, Network};

/// Random connected network with `buses` buses, `gens` units and `periods`
/// hours of demand. Capacity comfortably exceeds peak demand so most
/// instances are feasible; thermal limits are tight enough to bind now and
/// then.
pub fn random_network(seed: u64, buses: usize, gens: usize, periods: usize) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bus_list = (0..buses).map(|id| Bus { id, is_slack: id == 0 }).collect();
    let mut lines = Vec::new();
    // random spanning tree plus a few chords
    for n in 1..buses {
        let to = rng.gen_range(0..n);
        lines.push((n, to));
    }
    for _ in 0..rng.gen_range(0..=buses) {
        let a = rng.gen_range(0..buses);
        let b = rng.gen_range(0..buses);
        if a != b {
            lines.push((a, b));
        }
    }
    let lines: Vec<Line> = lines
        .into_iter()
        .enumerate()
        .map(|(id, (a, b))| Line {
            id,
            from_bus: a,
            to_bus: b,
            susceptance: rng.gen_range(2.0..10.0),
            limit: rng.gen_range(40.0..120.0),
        })
        .collect();
    let load_buses: Vec<usize> = (0..buses).filter(|_| rng.gen_bool(0.6)).collect();
    let peak: f64 = rng.gen_range(60.0..140.0);
    let mut demand = vec![vec![0.0; periods]; buses];
    for t in 0..periods {
        let level = peak * (0.6 + 0.4 * (t as f64 / periods.max(1) as f64 * std::f64::consts::PI).sin());
        let share = load_buses.len().max(1) as f64;
        for &n in &load_buses {
            demand[n][t] = (level / share * rng.gen_range(0.8..1.2) * 10.0).round() / 10.0;
        }
    }
    let generators = (0..gens)
        .map(|id| {
            let p_max: f64 = (peak * rng.gen_range(0.8..1.4)).round();
            let p_min = (p_max * rng.gen_range(0.1..0.3)).round();
            let on = rng.gen_bool(0.6);
            Generator {
                id,
                bus: rng.gen_range(0..buses),
                p_min,
                p_max,
                cost_linear: rng.gen_range(8.0..40.0_f64).round(),
                cost_no_load: rng.gen_range(0.0..200.0_f64).round(),
                cost_startup: rng.gen_range(0.0..400.0_f64).round(),
                ramp_hr: (p_max * rng.gen_range(0.4..1.0)).round(),
                ramp_10: (p_max * rng.gen_range(0.3..1.0)).round(),
                ramp_su: p_max,
                ramp_sd: p_max,
                min_up: rng.gen_range(1..=3),
                min_down: rng.gen_range(1..=3),
                initial_on: on,
                initial_output: if on { p_min } else { 0.0 },
            }
        })
        .collect();
    if load_buses.is_empty() {
        demand[buses - 1] = vec![20.0; periods];
    }
    Network::new(bus_list, generators, lines, demand).expect("random network is valid")
}
