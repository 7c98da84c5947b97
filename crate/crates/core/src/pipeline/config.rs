use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::data::{Perturbation, SplitRatios};
use crate::neural::{EcConfig, NcConfig, TrainConfig};
use crate::reduction::Thresholds;
use crate::scuc::Formulation;

/// Everything a pipeline run depends on. Loaded from one JSON document;
/// command-line flags override individual fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub case: PathBuf,
    pub outdir: PathBuf,
    pub formulation: Formulation,
    /// Expected horizon; checked against the case when set.
    pub horizon: Option<usize>,
    pub samples: usize,
    pub perturbation: Perturbation,
    pub split: SplitRatios,
    /// Seed for demand draws; the split uses `seed + 1`. Model and shuffling
    /// seeds live in `nc`, `ec` and `train`.
    pub seed: u64,
    pub nc: NcConfig,
    pub ec: EcConfig,
    pub train: TrainConfig,
    /// Positive-class loss weight for edge classification.
    pub ec_pos_weight: f64,
    pub thresholds: Thresholds,
    pub mip_gap: f64,
    pub time_limit: f64,
    /// Each verification solve is timed this many times and the median kept.
    pub timing_repeats: usize,
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            case: PathBuf::from("case.json"),
            outdir: PathBuf::from("out"),
            formulation: Formulation::Ptdf,
            horizon: None,
            samples: 200,
            perturbation: Perturbation::default(),
            split: SplitRatios::default(),
            seed: 0,
            nc: NcConfig::default(),
            ec: EcConfig::default(),
            train: TrainConfig::default(),
            ec_pos_weight: 1.0,
            thresholds: Thresholds::default(),
            mip_gap: 0.001,
            time_limit: 600.0,
            timing_repeats: 1,
            jobs: 1,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.samples < 3 {
            return bad(format!("samples must be at least 3, got {}", self.samples));
        }
        if let Err(e) = self.thresholds.validate() {
            return bad(e.to_string());
        }
        if !(0.0..1.0).contains(&self.mip_gap) {
            return bad(format!("mip_gap must be in [0, 1), got {}", self.mip_gap));
        }
        if !(self.time_limit > 0.0) {
            return bad(format!("time_limit must be positive, got {}", self.time_limit));
        }
        let r = self.split;
        if [r.train, r.val, r.test].iter().any(|x| !(*x > 0.0)) || (r.train + r.val + r.test - 1.0).abs() > 1e-9 {
            return bad(format!("split ratios must be positive and sum to 1, got {r:?}"));
        }
        if self.train.batch_size == 0 || !(self.train.lr > 0.0) {
            return bad("batch_size and lr must be positive".into());
        }
        if self.nc.depth < 1 || self.ec.depth < 1 {
            return bad("GNN depth must be at least 1".into());
        }
        if self.timing_repeats == 0 {
            return bad("timing_repeats must be at least 1".into());
        }
        let p = self.perturbation;
        if !(0.0..1.0).contains(&p.global_amplitude) || !(0.0..1.0).contains(&p.bus_amplitude) {
            return bad(format!("perturbation amplitudes must be in [0, 1), got {p:?}"));
        }
        Ok(())
    }

    /// Sets the base seed and derives the model-initialisation and
    /// shuffling seeds from it.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.nc.seed = seed.wrapping_add(1);
        self.ec.seed = seed.wrapping_add(2);
        self.train.seed = seed.wrapping_add(3);
    }

    /// SHA-256 over the fields that influence results; `outdir` and `jobs`
    /// are excluded.
    pub fn hash(&self) -> String {
        let mut view = self.clone();
        view.outdir = PathBuf::new();
        view.jobs = 0;
        let text = serde_json::to_string(&view).expect("config serialises");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
