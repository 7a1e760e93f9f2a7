//! Classifier-error-aware measurement of class-probability bias.
//!
//! A sensitive-attribute classifier with known per-class accuracies labels
//! batches of generated samples. The [`estimators`] module turns the observed
//! label proportions into point and interval estimates of the generator's true
//! class probabilities, correcting for classifier error. [`simulator`] provides
//! a seeded pseudo-generator with a known ground truth, and [`validation`]
//! checks the Gaussian model of the batch proportions against data.

pub mod error;
pub mod estimators;
pub mod metrics;
pub mod model;
pub mod simulator;
pub mod stats;
pub mod validation;

pub use error::{Error, ErrorClass, Result};
pub use estimators::{
    baseline_estimate, bbse_estimate, cleam_interval, cleam_point, multiclass_estimate, sample_stats, EstimateReport,
    EstimatorKind, IntervalEstimate, MulticlassEstimate, Observations, PhatSeries, PointEstimate, SampleStats,
};
pub use model::{
    covariance_matrix, event_probabilities, multiclass_forward, phat_distribution, AccuracyProfile, Channel,
    ClassDistribution, ConfusionMatrix, EventProbabilities, GaussianSpec,
};
pub use simulator::{run_grid, run_scenario, ScenarioConfig, ScenarioResult};
