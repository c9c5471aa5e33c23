//! Hierarchical apprenticeship learning from mixed-quality demonstrations.
//!
//! The crate covers the full offline pipeline: quality ranking of
//! demonstrators, reward-regulated time-series segmentation, a
//! quality-weighted mixture of energy-based policies, a high-level reward
//! regulator, and the evaluation harness used to compare methods.

pub mod bench;
pub mod dataset;
pub mod evaluation;
pub mod kmeans;
pub mod linalg;
pub mod pipeline;
pub mod policy;
pub mod ranking;
pub mod regulator;
pub mod segmentation;
pub mod stats;
pub mod synthetic;
