//! Synthetic clustered data, the per-cluster train/test split and the Adult
//! census ingestion.

mod adult;
mod split;
mod synth;

use thiserror::Error;

use crate::data::DataError;

pub use adult::{ingest_adult, read_adult, AdultData, AdultOptions, SensitiveColumn, Standardizer};
pub use split::{fraction_split, split, split_rows, Split, SplitSpec};
pub use synth::{generate, logistic, Scenario, SynthData, SynthSpec};

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("invalid specification: {0}")]
    Spec(String),
    #[error("cluster {cluster} has {size} points, the split needs at least {needed}")]
    ClusterTooSmall {
        cluster: usize,
        size: usize,
        needed: usize,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}, column `{column}`: unknown category `{value}`")]
    UnknownCategory {
        line: u64,
        column: String,
        value: String,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
