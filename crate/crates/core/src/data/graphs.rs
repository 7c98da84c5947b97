use serde::{Deserialize, Serialize};

use super::{DataError, SampleSet};
use crate::power_model::Network;

/// Loading ratio above which a line-period counts as critical.
pub const CRITICAL_LOADING: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphMode {
    /// Node classification: labels are generator commitments.
    Nc,
    /// Edge classification: labels are critical line loadings.
    Ec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSnapshot {
    /// Position of the source sample in its sample set.
    pub sample: usize,
    /// Node features `nf[n][t]`: demand at bus `n` in period `t`.
    pub nf: Vec<Vec<f64>>,
    /// Edge features `ef[e] = [susceptance, limit]` of the merged lines.
    pub ef: Vec<[f64; 2]>,
    /// Edge endpoints `(from, to)` in line order.
    pub edges: Vec<(usize, usize)>,
    /// Symmetric `N x N` 0/1 adjacency.
    pub adjacency: Vec<Vec<u8>>,
    /// `G x T` commitments (NC) or `E x T` critical flags (EC).
    pub labels: Vec<Vec<u8>>,
}

impl GraphSnapshot {
    pub fn n_nodes(&self) -> usize {
        self.nf.len()
    }

    pub fn horizon(&self) -> usize {
        self.nf.first().map_or(0, Vec::len)
    }
}

/// All snapshots of one mode, plus the generator-to-bus map NC models need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSet {
    pub mode: GraphMode,
    pub generator_bus: Vec<usize>,
    pub graphs: Vec<GraphSnapshot>,
}

pub fn is_critical(flow: f64, limit: f64) -> bool {
    flow.abs() / limit > CRITICAL_LOADING
}

pub fn build_graphs(samples: &SampleSet, network: &Network, mode: GraphMode) -> Result<GraphSet, DataError> {
    samples.check_against(network)?;
    let n = network.n_buses();
    let ef: Vec<[f64; 2]> = network.lines.iter().map(|l| [l.susceptance, l.limit]).collect();
    let edges: Vec<(usize, usize)> = network.lines.iter().map(|l| (l.from_bus, l.to_bus)).collect();
    let mut adjacency = vec![vec![0u8; n]; n];
    for &(a, b) in &edges {
        adjacency[a][b] = 1;
        adjacency[b][a] = 1;
    }
    let graphs = samples
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let labels = match mode {
                GraphMode::Nc => s.commitment.clone(),
                GraphMode::Ec => s
                    .flows
                    .iter()
                    .zip(&network.lines)
                    .map(|(row, line)| row.iter().map(|&f| u8::from(is_critical(f, line.limit))).collect())
                    .collect(),
            };
            GraphSnapshot {
                sample: i,
                nf: s.demand.clone(),
                ef: ef.clone(),
                edges: edges.clone(),
                adjacency: adjacency.clone(),
                labels,
            }
        })
        .collect();
    Ok(GraphSet {
        mode,
        generator_bus: network.generators.iter().map(|g| g.bus).collect(),
        graphs,
    })
}
