//! Fair mixed-effects linear support vector machines.
//!
//! The crate covers four linear classifiers on clustered data (plain SVM, SVM
//! with a disparate-impact constraint, mixed-effects SVM with per-cluster random
//! intercepts, and the fair mixed-effects combination), all solved by a dense
//! ADMM quadratic-program solver in [`qp`]. Around them sit the synthetic data
//! protocol ([`datagen`]), evaluation metrics ([`metrics`]) and a replication /
//! resource benchmark harness ([`bench`]).

pub mod bench;
pub mod data;
pub mod datagen;
pub mod metrics;
pub mod models;
pub mod qp;

pub use data::{ClusteredDataset, DataError, SBar, Violation};
pub use metrics::{FairnessReport, MetricsError};
pub use models::{FitSpec, FittedModel, ModelError, ModelKind};
pub use qp::{QpProblem, QpSettings, QpSolution, QpStatus};
