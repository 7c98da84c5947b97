//! Batch pipeline: each stage reads its upstream artifacts from the output
//! directory and writes its own, atomically.
//!
//! ```text
//! <outdir>/samples/samples.json
//! <outdir>/graphs/{graphs_nc,graphs_ec,split}.json
//! <outdir>/models/{nc_model,ec_model}.json
//! <outdir>/plans/{predictions,plan_<sample>}.json
//! <outdir>/reports/...
//! ```

mod config;
mod stages;

pub use config::RunConfig;
pub use stages::{
    run_stage, Layout, PlanRecord, PredictionSet, SamplePrediction, Stage, StageOptions, Summary,
};

use std::path::PathBuf;

use thiserror::Error;

use crate::artifact::ArtifactError;
use crate::data::DataError;
use crate::neural::NeuralError;
use crate::power_model::NetworkError;
use crate::reduction::ReductionError;
use crate::scuc::BuildError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error("case {path}: {source}")]
    Case { path: PathBuf, source: NetworkError },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Reduction(#[from] ReductionError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error("{path} was produced by config {found}, current config is {expected} (pass --allow-mixed to accept)")]
    MixedHash { path: PathBuf, found: String, expected: String },
    #[error("base model for sample {sample} has no solution ({status})")]
    BaseSolve { sample: usize, status: String },
    #[error("no verification results under {0}; run verify first")]
    NothingToReport(PathBuf),
    #[error("thread pool: {0}")]
    Pool(String),
}
