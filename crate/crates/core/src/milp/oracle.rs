use std::sync::Arc;
use std::time::Instant;

use thiserror::Error;

use super::presolve::presolve;
use super::simplex::{solve_lp, LpStatus};
use super::{MilpModel, Solution, SolveStatus};

pub const ORACLE_BINARY_CAP: usize = 20;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("model has {count} binary variables; enumeration is capped at {cap}")]
    TooManyBinaries { count: usize, cap: usize },
    #[error("integer variable {0} is not binary")]
    NonBinaryInteger(String),
}

/// Enumerates every binary assignment and solves the remaining LP for each.
/// Test-only reference for [`super::solve`].
pub fn brute_force_oracle(model: &MilpModel) -> Result<Solution, OracleError> {
    let clock = Instant::now();
    let mut binaries = Vec::new();
    for (j, v) in model.vars.iter().enumerate() {
        if v.integer {
            if v.lb < 0.0 || v.ub > 1.0 {
                return Err(OracleError::NonBinaryInteger(v.name.clone()));
            }
            binaries.push(j);
        }
    }
    if binaries.len() > ORACLE_BINARY_CAP {
        return Err(OracleError::TooManyBinaries {
            count: binaries.len(),
            cap: ORACLE_BINARY_CAP,
        });
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut unbounded = false;
    let mut lps = 0usize;
    for mask in 0u32..(1u32 << binaries.len()) {
        let overrides: Vec<(usize, f64, f64)> = binaries
            .iter()
            .enumerate()
            .map(|(bit, &j)| {
                let v = ((mask >> bit) & 1) as f64;
                (j, v, v)
            })
            .collect();
        let Ok(pre) = presolve(model, &overrides) else {
            continue;
        };
        lps += 1;
        let (status, state) = solve_lp(Arc::new(pre.lp.clone()));
        match status {
            LpStatus::Optimal => {
                let obj = state.objective() + pre.obj_constant;
                if best.as_ref().is_none_or(|(b, _)| obj < *b - 1e-12) {
                    best = Some((obj, pre.expand(state.structural_values())));
                }
            }
            LpStatus::Unbounded => unbounded = true,
            _ => {}
        }
    }
    let elapsed = clock.elapsed().as_secs_f64();
    if unbounded {
        return Ok(Solution::without_solution(SolveStatus::Unbounded, elapsed, lps));
    }
    Ok(match best {
        None => Solution::without_solution(SolveStatus::Infeasible, elapsed, lps),
        Some((objective, values)) => Solution {
            status: SolveStatus::Optimal,
            objective,
            values,
            solve_time: elapsed,
            node_count: lps,
            final_gap: 0.0,
            best_bound: objective,
        },
    })
}
