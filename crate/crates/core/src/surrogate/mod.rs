//! Surrogate pipelines, prediction, moments and validation metrics.

mod frozen;
mod validation;
mod warping;

pub use frozen::{fit_time_frozen, moments_time_frozen, predict_time_frozen, TimeFrozenSurrogate};
pub use validation::{exceedance_fraction, relative_error, validation_error, ValidationReport, DEFAULT_THRESHOLD};
pub use warping::{
    fit_time_warping, moments_time_warping, predict_time_warping, sample_moments, SampleMoments,
    TimeWarpSurrogate, TrainingMeta, WarpingOptions,
};
