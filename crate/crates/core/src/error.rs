use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input not found: {}", .0.display())]
    InputNotFound(PathBuf),

    #[error("failed to read csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("treatment not binary: row {row} has value `{value}` (expected 0 or 1)")]
    TreatmentNotBinary { row: usize, value: String },

    #[error("non-numeric cell in column `{column}` at row {row}: `{value}`")]
    NonNumeric { row: usize, column: String, value: String },

    #[error("non-finite value in {what} at row {row}")]
    NonFinite { what: &'static str, row: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("need at least {required} units, got {got}")]
    TooFewUnits { required: usize, got: usize },

    #[error("single-arm dataset: {treated} treated and {control} control units")]
    SingleArm { treated: usize, control: usize },

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("could not draw a split with both arms in every fold after {attempts} attempts")]
    DegenerateFolds { attempts: usize },

    #[error("need at least {required} units in arm `{arm}`, got {got}")]
    ArmTooSmall {
        arm: &'static str,
        required: usize,
        got: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("learner failed: {0}")]
    Learner(String),

    #[error("simulation aborted: {failed} of {total} method runs failed (first error: {first})")]
    TooManyFailures { failed: usize, total: usize, first: String },
}
