use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Bus, Generator, Line, Network, NetworkError};

/// On-disk case document. Field names are a stable contract.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseFile {
    pub buses: Vec<CaseBus>,
    pub generators: Vec<CaseGenerator>,
    pub lines: Vec<CaseLine>,
    /// `demand[t][n]`: MW per bus, one row per hour.
    pub demand: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseBus {
    pub id: usize,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub slack: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseGenerator {
    pub id: usize,
    pub bus: usize,
    pub pmin: f64,
    pub pmax: f64,
    pub c: f64,
    pub c_nl: f64,
    pub c_su: f64,
    pub ramp_hr: f64,
    pub ramp_10: f64,
    pub ramp_su: f64,
    pub ramp_sd: f64,
    pub min_up: usize,
    pub min_down: usize,
    pub init_on: bool,
    pub init_p: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseLine {
    pub id: usize,
    pub from: usize,
    pub to: usize,
    /// Series reactance in p.u.; converted to susceptance `1/x` on load.
    pub x: f64,
    pub limit: f64,
}

impl CaseFile {
    pub fn from_json(text: &str) -> Result<Self, NetworkError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn into_network(self) -> Result<Network, NetworkError> {
        let mut index = HashMap::new();
        for (i, bus) in self.buses.iter().enumerate() {
            if index.insert(bus.id, i).is_some() {
                return Err(NetworkError::DuplicateBus(bus.id));
            }
        }
        let lookup = |what, id, bus| {
            index
                .get(&bus)
                .copied()
                .ok_or(NetworkError::UnknownBus { what, id, bus })
        };
        let buses = self
            .buses
            .iter()
            .enumerate()
            .map(|(i, b)| Bus {
                id: i,
                is_slack: b.slack,
            })
            .collect();
        let generators = self
            .generators
            .iter()
            .map(|g| {
                Ok(Generator {
                    id: g.id,
                    bus: lookup("generator", g.id, g.bus)?,
                    p_min: g.pmin,
                    p_max: g.pmax,
                    cost_linear: g.c,
                    cost_no_load: g.c_nl,
                    cost_startup: g.c_su,
                    ramp_hr: g.ramp_hr,
                    ramp_10: g.ramp_10,
                    ramp_su: g.ramp_su,
                    ramp_sd: g.ramp_sd,
                    min_up: g.min_up,
                    min_down: g.min_down,
                    initial_on: g.init_on,
                    initial_output: g.init_p,
                })
            })
            .collect::<Result<Vec<_>, NetworkError>>()?;
        let lines = self
            .lines
            .iter()
            .map(|l| {
                if !(l.x > 0.0) {
                    return Err(NetworkError::InvalidLine {
                        id: l.id,
                        reason: "reactance must be positive".into(),
                    });
                }
                Ok(Line {
                    id: l.id,
                    from_bus: lookup("line", l.id, l.from)?,
                    to_bus: lookup("line", l.id, l.to)?,
                    susceptance: 1.0 / l.x,
                    limit: l.limit,
                })
            })
            .collect::<Result<Vec<_>, NetworkError>>()?;

        let n = self.buses.len();
        for (t, row) in self.demand.iter().enumerate() {
            if row.len() != n {
                return Err(NetworkError::DemandShape {
                    rows: row.len(),
                    cols: t,
                    buses: n,
                    periods: self.demand.len(),
                });
            }
        }
        let base_demand = (0..n)
            .map(|b| self.demand.iter().map(|row| row[b]).collect())
            .collect();
        Network::new(buses, generators, lines, base_demand)
    }
}

impl Network {
    pub fn from_case_json(text: &str) -> Result<Self, NetworkError> {
        CaseFile::from_json(text)?.into_network()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NetworkError> {
        Self::from_case_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BUS: &str = r#"{
        "buses": [{"id": 10, "slack": true}, {"id": 20}],
        "generators": [{"id": 1, "bus": 10, "pmin": 0, "pmax": 100, "c": 2, "c_nl": 5,
            "c_su": 3, "ramp_hr": 100, "ramp_10": 100, "ramp_su": 100, "ramp_sd": 100,
            "min_up": 1, "min_down": 1, "init_on": false, "init_p": 0}],
        "lines": [{"id": 0, "from": 10, "to": 20, "x": 0.1, "limit": 80},
                  {"id": 1, "from": 20, "to": 10, "x": 0.2, "limit": 60}],
        "demand": [[0, 30], [0, 40]]
    }"#;

    #[test]
    fn ingests_and_remaps() {
        let net = Network::from_case_json(TWO_BUS).unwrap();
        assert_eq!(net.n_buses(), 2);
        assert_eq!(net.slack_bus(), 0);
        assert_eq!(net.generators[0].bus, 0);
        assert_eq!(net.n_lines(), 1);
        assert!((net.lines[0].susceptance - 15.0).abs() < 1e-12);
        assert_eq!(net.lines[0].limit, 60.0);
        assert_eq!(net.base_demand, vec![vec![0.0, 0.0], vec![30.0, 40.0]]);
    }

    #[test]
    fn unknown_bus_is_reported() {
        let text = TWO_BUS.replace(r#""bus": 10"#, r#""bus": 99"#);
        let err = Network::from_case_json(&text).unwrap_err();
        assert!(matches!(err, NetworkError::UnknownBus { bus: 99, .. }));
    }
}
