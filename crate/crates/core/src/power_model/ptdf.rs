use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Network, NetworkError};

/// Line-flow sensitivities to bus injections withdrawn at the slack bus.
///
/// `values[k][n]` is the MW flow on line `k` (positive from `from_bus` to
/// `to_bus`) when 1 MW is injected at bus `n` and withdrawn at `ref_bus`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PtdfMatrix {
    pub values: Vec<Vec<f64>>,
    pub ref_bus: usize,
}

impl PtdfMatrix {
    /// Flows induced by a net injection vector (MW per bus).
    pub fn flows(&self, injections: &[f64]) -> Vec<f64> {
        self.values
            .iter()
            .map(|row| row.iter().zip(injections).map(|(f, p)| f * p).sum())
            .collect()
    }

    pub fn n_lines(&self) -> usize {
        self.values.len()
    }
}

/// Dense PTDF from the slack-reduced susceptance matrix.
pub fn compute_ptdf(network: &Network) -> Result<PtdfMatrix, NetworkError> {
    let isolated = network.isolated_buses();
    if !isolated.is_empty() {
        return Err(NetworkError::Disconnected { isolated });
    }
    let n = network.n_buses();
    let slack = network.slack_bus();
    // reduced index: buses other than slack, in order
    let reduced: Vec<Option<usize>> = {
        let mut next = 0;
        (0..n)
            .map(|b| {
                (b != slack).then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect()
    };
    let m = n - 1;
    let mut bbus = DMatrix::<f64>::zeros(m, m);
    for line in &network.lines {
        let (f, t, b) = (reduced[line.from_bus], reduced[line.to_bus], line.susceptance);
        if let Some(f) = f {
            bbus[(f, f)] += b;
        }
        if let Some(t) = t {
            bbus[(t, t)] += b;
        }
        if let (Some(f), Some(t)) = (f, t) {
            bbus[(f, t)] -= b;
            bbus[(t, f)] -= b;
        }
    }

    // X = B_red^{-1}; angles per unit injection at each bus
    let x = if m == 0 {
        DMatrix::<f64>::zeros(0, 0)
    } else {
        bbus.clone()
            .lu()
            .try_inverse()
            .ok_or_else(|| NetworkError::Disconnected {
                isolated: (0..n).filter(|&b| b != slack).collect(),
            })?
    };
    let angle = |bus: usize, inj: usize| -> f64 {
        match (reduced[bus], reduced[inj]) {
            (Some(i), Some(j)) => x[(i, j)],
            _ => 0.0,
        }
    };
    let values = network
        .lines
        .iter()
        .map(|line| {
            (0..n)
                .map(|inj| line.susceptance * (angle(line.from_bus, inj) - angle(line.to_bus, inj)))
                .collect()
        })
        .collect();
    Ok(PtdfMatrix {
        values,
        ref_bus: slack,
    })
}
