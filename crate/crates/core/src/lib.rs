pub mod artifact;
pub mod data;
pub mod metrics;
pub mod milp;
pub mod neural;
pub mod pipeline;
pub mod power_model;
pub mod reduction;
pub mod scuc;
