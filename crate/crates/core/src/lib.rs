//! Summary Markov models for event sequences without timestamps.

pub mod error;
pub mod estimate;
pub mod eval;
pub mod graph;
pub mod io;
pub mod report;
pub mod search;
pub mod sequence;
pub mod summary;
pub mod synth;

pub use error::{Result, SummError};

/// Version tag embedded in every JSON report.
pub const SCHEMA_VERSION: &str = "1.0";
