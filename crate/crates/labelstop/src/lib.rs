//! Cost-aware stopping for label acquisition.
//!
//! Labels cost money; error costs money. This crate maintains a Bayesian
//! posterior over learning-curve hypotheses from per-label error
//! indicators, applies cost-optimal stopping rules on top of it, and
//! scores stopping/sampling combinations against the retrospective optimum
//! through a realized-cost metric.
//!
//! All numeric code is generic over the scalar type (`f32` or `f64`).
//! Type aliases below pin the common `f64` instantiations.

pub mod belief;
pub mod cli;
pub mod config;
pub mod curves;
pub mod datasets;
pub mod eval;
pub mod learners;
pub mod sampling;
pub mod scalar;
pub mod stopping;

pub use scalar::Scalar;

pub type CurveModel64 = curves::CurveModel<f64>;
pub type BeliefGridSpec64 = belief::BeliefGridSpec<f64>;
pub type Belief64 = belief::Belief<f64>;
pub type GridConfig64 = belief::GridConfig<f64>;
pub type StoppingConfig64 = stopping::StoppingConfig<f64>;
pub type StopDecision64 = stopping::StopDecision<f64>;
pub type LearnerConfig64 = learners::LearnerConfig<f64>;
pub type TrainedModel64 = learners::TrainedModel<f64>;
pub type LabelledExample64 = learners::LabelledExample<f64>;
pub type Dataset64 = datasets::Dataset<f64>;
pub type RunRecord64 = eval::RunRecord<f64>;
pub type SweepSummary64 = eval::SweepSummary<f64>;
