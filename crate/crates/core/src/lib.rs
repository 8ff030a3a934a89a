//! Measurement and verification of energy savings from interval meter data.
//!
//! The crate follows the baseline-modelling workflow end to end:
//!
//! 1. [`data`]: project configuration, tagged channels, CSV ingestion and
//!    alignment onto an observation matrix.
//! 2. [`selection`]: Spearman ranking, greedy adjusted-R² feature selection and
//!    variance-inflation screening.
//! 3. [`quality`]: availability statistics, the 5 % omission rule and
//!    removal-only cleaning.
//! 4. [`preprocess`]: aggregation to coarser frequencies, shuffled 80:20 split
//!    and z-score scaling.
//! 5. [`models`]: OLS, kernel kNN, a single-hidden-layer network and linear
//!    SVR, each tuned by grid search over 10-fold cross-validation.
//! 6. [`evaluation`]: CV(RMSE)/NMBE on held-out data and model selection.
//! 7. [`savings`]: range gating, adjusted baseline, non-routine adjustments
//!    and savings uncertainty.
//!
//! [`pipeline`] strings the stages together for the command-line front end.

pub mod data;
pub mod evaluation;
pub mod linalg;
pub mod models;
pub mod pipeline;
pub mod preprocess;
pub mod quality;
pub mod savings;
pub mod selection;
pub mod synthetic;
pub mod time;

mod error;

pub use data::{ChannelId, FeatureMatrix, ProjectConfig, RawDataset, TaggedChannel};
pub use error::Error;
pub use evaluation::ModelScore;
pub use models::{Family, HyperGrid, TrainedModel};
pub use preprocess::ScalingParams;
pub use savings::SavingsReport;
pub use time::{DatePeriod, Frequency, Timestamp};
