//! Shared fixtures for the benchmarks.

use mandv_core::models::Samples;
use mandv_core::synthetic::normal_matrix;

/// Standardised-looking samples with `features` predictors and `rows` rows.
pub fn samples(features: usize, rows: usize, seed: u64) -> Samples {
    Samples::from_matrix(&normal_matrix(features, rows, seed)).expect("generated matrix is complete")
}
