//! Physical network representation: buses, generators, lines, nodal demand.
//!
//! A [`Network`] is immutable once built and is shared by both SCUC
//! formulations and by graph construction. Lines are stored after parallel
//! merging, so every unordered bus pair appears at most once.

mod case;
mod ptdf;

pub use case::{CaseBus, CaseFile, CaseGenerator, CaseLine};
pub use ptdf::{compute_ptdf, PtdfMatrix};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("network has no slack bus")]
    NoSlack,
    #[error("network has {0} slack buses, expected exactly one")]
    MultipleSlack(usize),
    #[error("{what} {id} references unknown bus {bus}")]
    UnknownBus {
        what: &'static str,
        id: usize,
        bus: usize,
    },
    #[error("duplicate bus id {0}")]
    DuplicateBus(usize),
    #[error("line {0} connects a bus to itself")]
    SelfLoop(usize),
    #[error("line {id}: {reason}")]
    InvalidLine { id: usize, reason: String },
    #[error("generator {id}: {reason}")]
    InvalidGenerator { id: usize, reason: String },
    #[error("demand matrix has shape {rows}x{cols}, expected {buses} buses x {periods} periods")]
    DemandShape {
        rows: usize,
        cols: usize,
        buses: usize,
        periods: usize,
    },
    #[error("disconnected network: buses {isolated:?} are not reachable from the slack bus")]
    Disconnected { isolated: Vec<usize> },
    #[error("reading case: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing case: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub is_slack: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub id: usize,
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    /// $/MWh
    pub cost_linear: f64,
    /// $/h while committed
    pub cost_no_load: f64,
    /// $ per start
    pub cost_startup: f64,
    pub ramp_hr: f64,
    pub ramp_10: f64,
    pub ramp_su: f64,
    pub ramp_sd: f64,
    pub min_up: usize,
    pub min_down: usize,
    pub initial_on: bool,
    pub initial_output: f64,
}

impl Generator {
    fn validate(&self) -> Result<(), NetworkError> {
        let bad = |reason: &str| {
            Err(NetworkError::InvalidGenerator {
                id: self.id,
                reason: reason.to_string(),
            })
        };
        if !(self.p_min >= 0.0 && self.p_min <= self.p_max) {
            return bad("requires 0 <= p_min <= p_max");
        }
        if [self.ramp_hr, self.ramp_10, self.ramp_su, self.ramp_sd]
            .iter()
            .any(|r| !(*r >= 0.0))
        {
            return bad("ramp limits must be non-negative");
        }
        if self.min_up < 1 || self.min_down < 1 {
            return bad("min_up and min_down must be at least 1");
        }
        if !(self.initial_output >= 0.0 && self.initial_output <= self.p_max) {
            return bad("initial output must lie in [0, p_max]");
        }
        if !self.initial_on && self.initial_output != 0.0 {
            return bad("initial output must be 0 when initially off");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: usize,
    pub from_bus: usize,
    pub to_bus: usize,
    /// per-unit susceptance
    pub susceptance: f64,
    /// MW
    pub limit: f64,
}

impl Line {
    fn endpoints(&self) -> (usize, usize) {
        if self.from_bus <= self.to_bus {
            (self.from_bus, self.to_bus)
        } else {
            (self.to_bus, self.from_bus)
        }
    }
}

/// Collapses parallel lines into one equivalent line per unordered bus pair.
///
/// Susceptances add; the merged limit is the smallest member limit. The
/// merged line keeps the id and orientation of the first member seen.
pub fn merge_parallel_lines(raw_lines: &[Line]) -> Vec<Line> {
    let mut merged: Vec<Line> = Vec::with_capacity(raw_lines.len());
    let mut by_pair: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for line in raw_lines {
        match by_pair.get(&line.endpoints()) {
            Some(&slot) => {
                let target = &mut merged[slot];
                target.susceptance += line.susceptance;
                target.limit = target.limit.min(line.limit);
            }
            None => {
                by_pair.insert(line.endpoints(), merged.len());
                merged.push(line.clone());
            }
        }
    }
    merged
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub buses: Vec<Bus>,
    pub generators: Vec<Generator>,
    pub lines: Vec<Line>,
    /// `base_demand[n][t]` in MW.
    pub base_demand: Vec<Vec<f64>>,
}

impl Network {
    /// Validates and assembles a network. Buses must already carry contiguous
    /// ids `0..N`; raw lines are merged here.
    pub fn new(
        buses: Vec<Bus>,
        generators: Vec<Generator>,
        raw_lines: Vec<Line>,
        base_demand: Vec<Vec<f64>>,
    ) -> Result<Self, NetworkError> {
        let n = buses.len();
        for (i, bus) in buses.iter().enumerate() {
            if bus.id != i {
                return Err(NetworkError::DuplicateBus(bus.id));
            }
        }
        match buses.iter().filter(|b| b.is_slack).count() {
            0 => return Err(NetworkError::NoSlack),
            1 => {}
            k => return Err(NetworkError::MultipleSlack(k)),
        }
        for g in &generators {
            if g.bus >= n {
                return Err(NetworkError::UnknownBus {
                    what: "generator",
                    id: g.id,
                    bus: g.bus,
                });
            }
            g.validate()?;
        }
        for line in &raw_lines {
            for bus in [line.from_bus, line.to_bus] {
                if bus >= n {
                    return Err(NetworkError::UnknownBus {
                        what: "line",
                        id: line.id,
                        bus,
                    });
                }
            }
            if line.from_bus == line.to_bus {
                return Err(NetworkError::SelfLoop(line.id));
            }
            if !(line.susceptance > 0.0 && line.susceptance.is_finite()) {
                return Err(NetworkError::InvalidLine {
                    id: line.id,
                    reason: "susceptance must be positive".into(),
                });
            }
            if !(line.limit > 0.0) {
                return Err(NetworkError::InvalidLine {
                    id: line.id,
                    reason: "thermal limit must be positive".into(),
                });
            }
        }
        let periods = base_demand.first().map_or(0, Vec::len);
        if base_demand.len() != n || base_demand.iter().any(|row| row.len() != periods) {
            return Err(NetworkError::DemandShape {
                rows: base_demand.len(),
                cols: periods,
                buses: n,
                periods,
            });
        }
        Ok(Network {
            buses,
            generators,
            lines: merge_parallel_lines(&raw_lines),
            base_demand,
        })
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_generators(&self) -> usize {
        self.generators.len()
    }

    pub fn n_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn horizon(&self) -> usize {
        self.base_demand.first().map_or(0, Vec::len)
    }

    pub fn slack_bus(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.is_slack)
            .expect("validated network has a slack bus")
    }

    /// Generator indices attached to each bus.
    pub fn generators_at(&self) -> Vec<Vec<usize>> {
        let mut at = vec![Vec::new(); self.n_buses()];
        for (g, gen) in self.generators.iter().enumerate() {
            at[gen.bus].push(g);
        }
        at
    }

    /// Buses not reachable from the slack bus through any line.
    pub fn isolated_buses(&self) -> Vec<usize> {
        let n = self.n_buses();
        let mut adj = vec![Vec::new(); n];
        for line in &self.lines {
            adj[line.from_bus].push(line.to_bus);
            adj[line.to_bus].push(line.from_bus);
        }
        let mut seen = vec![false; n];
        let mut stack = vec![self.slack_bus()];
        seen[self.slack_bus()] = true;
        while let Some(b) = stack.pop() {
            for &nb in &adj[b] {
                if !seen[nb] {
                    seen[nb] = true;
                    stack.push(nb);
                }
            }
        }
        (0..n).filter(|&b| !seen[b]).collect()
    }

    pub fn total_capacity(&self) -> f64 {
        self.generators.iter().map(|g| g.p_max).sum()
    }

    /// Checks that a demand matrix is `N x T` for this network.
    pub fn check_demand(&self, demand: &[Vec<f64>]) -> Result<usize, NetworkError> {
        let periods = demand.first().map_or(0, Vec::len);
        if demand.len() != self.n_buses() || periods == 0 || demand.iter().any(|r| r.len() != periods)
        {
            return Err(NetworkError::DemandShape {
                rows: demand.len(),
                cols: periods,
                buses: self.n_buses(),
                periods: self.horizon(),
            });
        }
        Ok(periods)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(id: usize, from: usize, to: usize, b: f64, limit: f64) -> Line {
        Line {
            id,
            from_bus: from,
            to_bus: to,
            susceptance: b,
            limit,
        }
    }

    #[test]
    fn merges_two_parallels() {
        let merged = merge_parallel_lines(&[line(0, 1, 2, 10.0, 100.0), line(1, 1, 2, 15.0, 80.0)]);
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].susceptance, 25.0);
        assert_eq!(merged[0].limit, 80.0);
    }

    #[test]
    fn single_line_unchanged() {
        let raw = vec![line(3, 0, 4, 7.0, 50.0)];
        assert_eq!(merge_parallel_lines(&raw), raw);
    }

    #[test]
    fn three_parallels_including_reversed() {
        let merged = merge_parallel_lines(&[
            line(0, 1, 2, 1.0, 10.0),
            line(1, 2, 1, 2.0, 20.0),
            line(2, 1, 2, 3.0, 5.0),
        ]);
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].susceptance, 6.0);
        assert_eq!(merged[0].limit, 5.0);
        assert_eq!((merged[0].from_bus, merged[0].to_bus), (1, 2));
    }

    #[test]
    fn empty_input() {
        assert!(merge_parallel_lines(&[]).is_empty());
    }

    #[test]
    fn rejects_self_loop() {
        let buses = vec![
            Bus { id: 0, is_slack: true },
            Bus { id: 1, is_slack: false },
        ];
        let err = Network::new(buses, vec![], vec![line(7, 1, 1, 1.0, 1.0)], vec![vec![0.0], vec![0.0]])
            .unwrap_err();
        assert!(matches!(err, NetworkError::SelfLoop(7)));
    }

    #[test]
    fn rejects_two_slacks() {
        let buses = vec![Bus { id: 0, is_slack: true }, Bus { id: 1, is_slack: true }];
        let err = Network::new(buses, vec![], vec![], vec![vec![0.0], vec![0.0]]).unwrap_err();
        assert!(matches!(err, NetworkError::MultipleSlack(2)));
    }

    proptest::proptest! {
        #[test]
        fn merge_is_idempotent(raw in proptest::collection::vec((0usize..5, 0usize..5, 0.1f64..10.0, 1.0f64..100.0), 0..12)) {
            let lines: Vec<Line> = raw
                .iter()
                .enumerate()
                .filter(|(_, (a, b, _, _))| a != b)
                .map(|(i, &(a, b, s, l))| line(i, a, b, s, l))
                .collect();
            let once = merge_parallel_lines(&lines);
            let twice = merge_parallel_lines(&once);
            proptest::prop_assert_eq!(once, twice);
        }
    }
}
