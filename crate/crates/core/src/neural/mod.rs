//! Graph neural network layers, spatio-temporal classifiers and training.
//!
//! Everything runs on a small reverse-mode autodiff tape over dense `f64`
//! matrices; see [`tape`].

pub mod layers;
pub mod model;
pub mod tape;
pub mod tensor;
mod train;

pub use layers::{ecc_forward, lstm_step, xenet_forward, Activation, EccLayer, GraphIndex, LstmLayer, XenetLayer};
pub use model::{EcConfig, EcModel, GnnKind, GnnLayer, GraphModel, NcConfig, NcModel, Scaling, Topology};
pub use tensor::Mat;
pub use train::{
    evaluate, gradient_check, gradient_check_params, predict, train, EpochRecord, TrainConfig, TrainReport,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("graph set mode does not match the model")]
    Mode,
    #[error("training and validation partitions must be non-empty")]
    EmptySplit,
    #[error("loss became non-finite in epoch {epoch}")]
    Diverged { epoch: usize },
}
