//! Continuous-density left-to-right HMMs with diagonal-covariance Gaussian
//! mixture emissions, computed in log space throughout.

mod gmm;
mod io;
mod lattice;
mod model;
mod train;

pub use self::gmm::{gmm_log_density, log_add, log_sum_exp, DiagonalGaussian, GaussianMixture};
pub use self::io::{models_from_str, models_to_string, MODEL_HEADER, MODEL_VERSION};
pub use self::lattice::{backward, forward, viterbi, Alignment, Lattice};
pub use self::model::{ClassHmm, CompositeHmm, HmmState, ModelSet};
pub use self::train::{
    accumulate, embedded_train, embedded_train_with, flat_start, reestimate, split_mixtures,
    variance_floor, Accumulators, ClassStats, LabeledSequence, StateStats, SweepRecord,
    TrainConfig, TrainOutcome, TrainingSchedule, MIN_INITIAL_SELF_LOOP, SPLIT_PERTURBATION,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HmmError {
    #[error("frame dimension mismatch: model expects {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("no legal alignment of {frames} frames through {states} emitting states")]
    ImpossiblePath { frames: usize, states: usize },
    #[error("observation sequence is empty")]
    EmptySequence,
    #[error("no usable training sequences for class {0}")]
    NoUsableSequences(String),
    #[error("unknown class {0}")]
    UnknownClass(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid training schedule: {0}")]
    InvalidSchedule(String),
    #[error("model file line {line}: {message}")]
    ModelFormat { line: usize, message: String },
}
