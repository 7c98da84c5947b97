//! Sample generation, graph snapshots and dataset splits.
//!
//! A sample is one perturbed demand profile together with the solved SCUC
//! labels. Draw `i` always uses the random stream `(seed, i)`, so the sample
//! set depends only on the seed and the requested count, never on how many
//! worker threads solved the draws.

mod graphs;
mod split;

pub use graphs::{build_graphs, is_critical, GraphMode, GraphSet, GraphSnapshot, CRITICAL_LOADING};
pub use split::{split_dataset, DatasetSplit, SplitRatios};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::milp::{solve, SolveOptions, SolveStatus};
use crate::power_model::Network;
use crate::scuc::{build, BuildError, BuildOptions, Formulation, Schedule};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("requested zero samples")]
    NoSamples,
    #[error(
        "only {feasible} feasible samples after {draws} draws (feasibility rate {:.1}%)",
        100.0 * *feasible as f64 / *draws as f64
    )]
    RetryCap { feasible: usize, draws: usize },
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("need at least 3 samples to split, got {0}")]
    TooFewSamples(usize),
    #[error("split ratios must be positive and sum to 1, got {0:?}")]
    BadRatios([f64; 3]),
}

/// Multiplicative demand perturbation: one global factor per sample times
/// an independent factor per bus, both uniform around 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Perturbation {
    pub global_amplitude: f64,
    pub bus_amplitude: f64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Perturbation {
            global_amplitude: 0.10,
            bus_amplitude: 0.05,
        }
    }
}

impl Perturbation {
    pub fn none() -> Self {
        Perturbation {
            global_amplitude: 0.0,
            bus_amplitude: 0.0,
        }
    }

    pub fn apply<R: Rng>(&self, base: &[Vec<f64>], rng: &mut R) -> Vec<Vec<f64>> {
        let draw = |rng: &mut R, a: f64| rng.gen_range(1.0 - a..=1.0 + a);
        let global = draw(rng, self.global_amplitude);
        base.iter()
            .map(|row| {
                let local = draw(rng, self.bus_amplitude);
                row.iter().map(|d| d * global * local).collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateOptions {
    pub formulation: Formulation,
    pub perturbation: Perturbation,
    pub mip_gap: f64,
    pub time_limit: f64,
    pub reserve_enabled: bool,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions {
            formulation: Formulation::Ptdf,
            perturbation: Perturbation::default(),
            mip_gap: 0.001,
            time_limit: 600.0,
            reserve_enabled: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Draw index that produced this sample.
    pub draw: usize,
    /// `demand[n][t]`
    pub demand: Vec<Vec<f64>>,
    /// `commitment[g][t]`
    pub commitment: Vec<Vec<u8>>,
    /// `flows[k][t]`
    pub flows: Vec<Vec<f64>>,
    pub objective: f64,
    pub solve_time: f64,
    pub node_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub seed: u64,
    pub draws: usize,
    pub options: GenerateOptions,
    pub samples: Vec<Sample>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn check_against(&self, network: &Network) -> Result<(), DataError> {
        for s in &self.samples {
            let t = network.check_demand(&s.demand).map_err(|e| DataError::Dimension(e.to_string()))?;
            let ok = s.commitment.len() == network.n_generators()
                && s.flows.len() == network.n_lines()
                && s.commitment.iter().all(|r| r.len() == t)
                && s.flows.iter().all(|r| r.len() == t);
            if !ok {
                return Err(DataError::Dimension(format!(
                    "sample from draw {} does not match the network",
                    s.draw
                )));
            }
        }
        Ok(())
    }
}

/// Random stream for draw `index` under `seed`.
pub fn draw_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Solves one perturbed draw; `None` when the SCUC has no usable solution.
pub fn solve_draw(
    network: &Network,
    options: &GenerateOptions,
    seed: u64,
    index: usize,
) -> Result<Option<Sample>, DataError> {
    let demand = options
        .perturbation
        .apply(&network.base_demand, &mut draw_rng(seed, index));
    let mut build_opts = BuildOptions::new(options.formulation);
    build_opts.reserve_enabled = options.reserve_enabled;
    let model = build(network, &demand, &build_opts)?;
    let solve_opts = SolveOptions {
        mip_gap: options.mip_gap,
        time_limit: options.time_limit,
        ..SolveOptions::default()
    };
    let solution = solve(&model, &solve_opts);
    // incumbents cut off by the time limit are not trusted as labels
    if !matches!(solution.status, SolveStatus::Optimal | SolveStatus::GapReached) {
        return Ok(None);
    }
    let schedule = Schedule::extract(network, &model, &solution);
    Ok(Some(Sample {
        draw: index,
        demand,
        commitment: schedule.commitment,
        flows: schedule.flows,
        objective: solution.objective,
        solve_time: solution.solve_time,
        node_count: solution.node_count,
    }))
}

/// Draws and solves perturbed samples until `m_total` feasible ones exist.
///
/// Draws are solved in parallel on the current rayon pool; the accepted set
/// is always the first `m_total` feasible draw indices.
pub fn generate_samples(
    network: &Network,
    m_total: usize,
    options: &GenerateOptions,
    seed: u64,
) -> Result<SampleSet, DataError> {
    if m_total == 0 {
        return Err(DataError::NoSamples);
    }
    let cap = 10 * m_total;
    let mut samples = Vec::with_capacity(m_total);
    let mut next = 0;
    while samples.len() < m_total && next < cap {
        let wave = (m_total - samples.len()).max(rayon::current_num_threads()).min(cap - next);
        let results: Vec<Result<Option<Sample>, DataError>> = (next..next + wave)
            .into_par_iter()
            .map(|i| solve_draw(network, options, seed, i))
            .collect();
        for result in results {
            if let Some(sample) = result? {
                if samples.len() < m_total {
                    samples.push(sample);
                }
            }
        }
        next += wave;
    }
    if samples.len() < m_total {
        return Err(DataError::RetryCap {
            feasible: samples.len(),
            draws: next,
        });
    }
    let draws = samples.last().map_or(0, |s| s.draw + 1);
    Ok(SampleSet {
        seed,
        draws,
        options: options.clone(),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_amplitude_is_identity() {
        let base = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let out = Perturbation::none().apply(&base, &mut draw_rng(1, 0));
        assert_eq!(out, base);
    }

    #[test]
    fn factors_stay_in_range() {
        let base = vec![vec![100.0]; 5];
        let p = Perturbation::default();
        for i in 0..200 {
            for row in p.apply(&base, &mut draw_rng(9, i)) {
                assert!(row[0] >= 100.0 * 0.9 * 0.95 - 1e-9);
                assert!(row[0] <= 100.0 * 1.1 * 1.05 + 1e-9);
            }
        }
    }

    #[test]
    fn streams_differ_per_draw() {
        let a: f64 = draw_rng(3, 0).gen();
        let b: f64 = draw_rng(3, 1).gen();
        assert_ne!(a, b);
        let c: f64 = draw_rng(3, 0).gen();
        assert_eq!(a, c);
    }
}
