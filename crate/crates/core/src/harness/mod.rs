//! The KdV tracking experiment: data generation, fitting, closed-loop
//! simulation and metrics, driven by one [`ExperimentConfig`].

mod closed_loop;
mod config;
mod data;
mod metrics;
mod plot;

pub use closed_loop::{run_closed_loop, ClosedLoopFailure, ClosedLoopLog, StepRecord};
pub use config::{DataConfig, ExperimentConfig, MpcConfig, OutputConfig, ReferenceConfig, CONFIG_VERSION};
pub use data::{generate_dataset, GeneratedData};
pub use metrics::{compute_metrics, Metrics, SegmentMetrics, SETTLING_BAND};
pub use plot::render_svg;

use crate::condensed::MpcController;
use crate::error::Result;
use crate::koopman::{LiftedPredictor, SnapshotDataset};

/// Fit the predictor with the dictionary and output mode named in `cfg`.
pub fn fit_predictor(cfg: &ExperimentConfig, data: &SnapshotDataset) -> Result<LiftedPredictor> {
    LiftedPredictor::fit(data, cfg.observable()?, cfg.output_mode()?)
}

/// Condense and wrap `predictor` with the weights, bounds and tolerance in `cfg`.
pub fn build_controller(cfg: &ExperimentConfig, predictor: LiftedPredictor) -> Result<MpcController> {
    MpcController::build(predictor, &cfg.weights(), &cfg.scaling()?, cfg.solver()?)
}
