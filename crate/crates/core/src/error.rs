use crate::data::DataError;
use crate::evaluation::EvaluationError;
use crate::models::ModelError;
use crate::preprocess::PreprocessError;
use crate::quality::QualityError;
use crate::savings::SavingsError;
use crate::selection::SelectionError;

/// Any error raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Quality(#[from] QualityError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
    #[error(transparent)]
    Savings(#[from] SavingsError),
}
