//! Replication studies, resource measurements, performance profiles and
//! quadratic trend fits.

mod alloc;
mod experiment;
mod onehot;
mod profile;
mod stats;

use std::time::Instant;

use thiserror::Error;

use crate::datagen::DatagenError;

pub use alloc::{is_installed as tracking_installed, TrackingAllocator};
pub use experiment::{run, ExperimentResult, ExperimentScenario, ExperimentSpec, ResultRow};
pub use onehot::{onehot_study, OneHotPoint, OneHotStudy, OneHotStudySpec};
pub use profile::{performance_profile, poly2_fit, ProfileCurve};
pub use stats::{quantile, Summary};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid benchmark specification: {0}")]
    Spec(String),
    #[error(transparent)]
    Datagen(#[from] DatagenError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub wall_time_us: f64,
    /// Allocator high-water mark above the level at the start of the task,
    /// on the calling thread. Zero unless [`TrackingAllocator`] is the global
    /// allocator.
    pub peak_memory_bytes: u64,
}

/// Runs `task` on the current thread and records its wall time and peak
/// allocation. Measurements must not be nested.
pub fn measure<T>(task: impl FnOnce() -> T) -> (T, Measurement) {
    let window = alloc::Window::open();
    let start = Instant::now();
    let out = task();
    let elapsed = start.elapsed();
    let peak = window.peak();
    (
        out,
        Measurement {
            wall_time_us: elapsed.as_secs_f64() * 1e6,
            peak_memory_bytes: peak,
        },
    )
}
