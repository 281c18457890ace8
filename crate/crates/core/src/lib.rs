//! Fact-counting human evaluation of generated summaries.
//!
//! Evaluators count facts in a reference description (R) and in each
//! generated description (G), plus the facts the two share (R&G) and the
//! correct facts in the generated text (C). From those counts this crate
//! derives precision, recall, f-score and accuracy, aggregates them per
//! model and evaluator, and measures inter-annotator agreement with
//! Krippendorff's alpha.
//!
//! The metric and agreement math is generic over [`Scalar`]; the aliases
//! below fix the common choices.

pub mod agreement;
pub mod corpus;
pub mod metrics;
pub mod report;
pub mod scalar;
pub mod tasks;

mod rng;

pub use scalar::{Exact, Scalar};

/// Default seed for every seeded step of the pipeline.
pub const DEFAULT_SEED: u64 = 20210401;

pub type DerivedMetricsF64 = metrics::DerivedMetrics<f64>;
pub type DerivedMetricsF32 = metrics::DerivedMetrics<f32>;
pub type ExactMetrics = metrics::DerivedMetrics<Exact>;

pub type CellAggregateF64 = metrics::CellAggregate<f64>;
pub type ExactCellAggregate = metrics::CellAggregate<Exact>;

pub type ReliabilityDataF64 = agreement::ReliabilityData<f64>;
pub type ExactReliabilityData = agreement::ReliabilityData<Exact>;

pub type AlphaResultF64 = agreement::AlphaResult<f64>;
pub type ExactAlphaResult = agreement::AlphaResult<Exact>;
