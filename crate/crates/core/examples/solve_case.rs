//! Solves a case file at its base demand and prints the schedule.
//!
//! `cargo run --release --example solve_case -- path/to/case.json [btheta|ptdf]`

use scuc_core::milp::{solve, SolveOptions};
use scuc_core::power_model::Network;
use scuc_core::scuc::{build, BuildOptions, Formulation, Schedule};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args.next().ok_or("usage: solve_case CASE [btheta|ptdf] [scale]")?;
    let formulation: Formulation = args.next().as_deref().unwrap_or("ptdf").parse()?;
    let scale: f64 = args.next().as_deref().unwrap_or("1.0").parse()?;
    let network = Network::load(&path)?;
    let demand: Vec<Vec<f64>> = network
        .base_demand
        .iter()
        .map(|row| row.iter().map(|d| d * scale).collect())
        .collect();
    let model = build(&network, &demand, &BuildOptions::new(formulation))?;
    let stats = model.stats();
    println!(
        "{} binaries, {} continuous, {} constraints",
        stats.n_binaries, stats.n_continuous, stats.n_constraints
    );
    let solution = solve(&model, &SolveOptions::default());
    println!(
        "status {:?} objective {:.2} nodes {} gap {:.2e} time {:.3}s",
        solution.status, solution.objective, solution.node_count, solution.final_gap, solution.solve_time
    );
    if !solution.has_solution() {
        return Ok(());
    }
    let schedule = Schedule::extract(&network, &model, &solution);
    for (g, row) in schedule.commitment.iter().enumerate() {
        let marks: String = row.iter().map(|&u| if u == 1 { '#' } else { '.' }).collect();
        println!("G{g} {marks}");
    }
    for (k, line) in network.lines.iter().enumerate() {
        let peak = schedule.flows[k].iter().fold(0.0f64, |m, f| m.max(f.abs()));
        let loaded = schedule.flows[k].iter().filter(|f| f.abs() / line.limit > 0.75).count();
        println!(
            "line {k} {}-{} peak {:.1}/{:.0} ({:.0}%), {} hours above 75%",
            line.from_bus,
            line.to_bus,
            peak,
            line.limit,
            100.0 * peak / line.limit,
            loaded
        );
    }
    Ok(())
}
