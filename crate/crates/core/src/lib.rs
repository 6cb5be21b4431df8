//! Time-certified input-constrained MPC for systems identified with
//! extended dynamic mode decomposition.
//!
//! The pipeline fits a lifted linear predictor from snapshot data, condenses
//! the tracking MPC problem into a box-constrained QP over the stacked
//! inputs, and solves that QP with a feasible full-Newton interior-point
//! method whose iteration count is fixed in advance. Every step therefore has
//! an a-priori operation count; see [`condensed::certificate`].

pub mod boxqp;
pub mod condensed;
pub mod error;
pub mod flops;
pub mod harness;
pub mod io;
pub mod kdv;
pub mod koopman;
pub mod linalg;

pub use boxqp::{BoxQp, BoxQpSolver, Solution, SolverConfig};
pub use condensed::{
    build_condensed, certificate, online_gradient, solve_mpc_step, Certificate, CertificateDims, CondensedData,
    InputScaling, MpcController, MpcStep, MpcWeights, References,
};
pub use error::{Error, Result};
pub use flops::FlopCounter;
pub use kdv::{KdvConfig, KdvPlant, PlantState};
pub use koopman::{LiftedPredictor, ObservableMap, OutputMode, SnapshotDataset};
