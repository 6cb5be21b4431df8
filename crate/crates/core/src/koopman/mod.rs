//! Lifted linear predictors identified by extended dynamic mode decomposition.

mod dictionary;
mod edmd;

pub use dictionary::{
    builtin_registry, ConstantOnly, Dictionary, DictionaryRegistry, ObservableMap, ShiftedQuadratic,
    StateConstant, StateOnly,
};
pub use edmd::{fit_output, fit_predictor, normal_equation_residual, LiftedPredictor, OutputMode, SnapshotDataset};
