use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde_json::{json, Map, Value};

use super::stats::Summary;
use super::{measure, BenchError};
use crate::data::ClusteredDataset;
use crate::datagen::{
    fraction_split, generate, ingest_adult, split_rows, AdultData, AdultOptions, Scenario,
    SplitSpec, SynthSpec,
};
use crate::metrics::FairnessReport;
use crate::models::{fit, FitSpec, ModelError, ModelKind};
use crate::qp::QpSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentScenario {
    Synthetic(Scenario),
    Adult,
}

impl ExperimentScenario {
    pub fn names() -> Vec<&'static str> {
        let mut v: Vec<&str> = Scenario::ALL.iter().map(|s| s.as_str()).collect();
        v.push("adult");
        v
    }
}

impl fmt::Display for ExperimentScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExperimentScenario::Synthetic(s) => s.fmt(f),
            ExperimentScenario::Adult => f.write_str("adult"),
        }
    }
}

impl FromStr for ExperimentScenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim().eq_ignore_ascii_case("adult") {
            return Ok(ExperimentScenario::Adult);
        }
        s.parse::<Scenario>().map(ExperimentScenario::Synthetic).map_err(|_| {
            format!("unknown scenario `{s}` (valid: {})", Self::names().join(", "))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub scenario: ExperimentScenario,
    pub replications: usize,
    pub estimators: Vec<ModelKind>,
    pub base_seed: u64,
    /// Size and cluster count of the synthetic dataset.
    pub n: usize,
    pub k: usize,
    pub mu: f64,
    pub lambda: f64,
    pub c: f64,
    pub adult_path: Option<PathBuf>,
    pub adult_options: AdultOptions,
    /// Share of Adult rows drawn for training in each replication.
    pub train_fraction: f64,
    /// Worker threads; 0 uses all cores.
    pub jobs: usize,
    pub settings: QpSettings,
}

impl ExperimentSpec {
    pub fn new(scenario: ExperimentScenario) -> Self {
        Self {
            scenario,
            replications: 1000,
            estimators: vec![ModelKind::Svm, ModelKind::Svmf, ModelKind::Mesvm, ModelKind::Fmesvm],
            base_seed: 0,
            n: SynthSpec::DEFAULT_N,
            k: SynthSpec::DEFAULT_K,
            mu: 1.0,
            lambda: 1.0,
            c: 1e-3,
            adult_path: None,
            adult_options: AdultOptions::default(),
            train_fraction: 0.005,
            jobs: 0,
            settings: QpSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.replications == 0 {
            return Err(BenchError::Spec("replications must be at least 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(BenchError::Spec("no estimators selected".into()));
        }
        for &kind in &self.estimators {
            FitSpec::for_kind(kind, self.mu, self.lambda, self.c)
                .validate()
                .map_err(|e| BenchError::Spec(e.to_string()))?;
        }
        if self.scenario == ExperimentScenario::Adult && self.adult_path.is_none() {
            return Err(BenchError::Spec("the adult scenario needs a data file".into()));
        }
        Ok(())
    }
}

/// One estimator fitted in one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub replication: usize,
    pub seed: u64,
    pub estimator: ModelKind,
    /// Solver status, or `Error` when no model was produced.
    pub status: String,
    pub train_size: usize,
    pub accuracy: f64,
    pub di: Option<f64>,
    pub di_score: f64,
    pub di_defined: bool,
    /// Fairness-constraint residual on the training rows.
    pub fairness_residual: f64,
    pub iterations: usize,
    pub wall_time_us: f64,
    pub peak_memory_bytes: u64,
    pub error: Option<String>,
}

impl ResultRow {
    pub const HEADER: [&'static str; 14] = [
        "replication",
        "seed",
        "estimator",
        "status",
        "train_size",
        "accuracy",
        "di",
        "DI",
        "di_defined",
        "fairness_residual",
        "iterations",
        "wall_time_us",
        "peak_memory_bytes",
        "error",
    ];

    pub fn solved(&self) -> bool {
        self.status == "Solved"
    }

    fn record(&self) -> Vec<String> {
        vec![
            self.replication.to_string(),
            self.seed.to_string(),
            self.estimator.to_string(),
            self.status.clone(),
            self.train_size.to_string(),
            self.accuracy.to_string(),
            self.di.map(|v| v.to_string()).unwrap_or_default(),
            self.di_score.to_string(),
            self.di_defined.to_string(),
            self.fairness_residual.to_string(),
            self.iterations.to_string(),
            format!("{:.1}", self.wall_time_us),
            self.peak_memory_bytes.to_string(),
            self.error.clone().unwrap_or_default(),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub scenario: ExperimentScenario,
    pub base_seed: u64,
    pub replications: usize,
    pub estimators: Vec<ModelKind>,
    /// Ordered by replication, then by estimator as listed in the spec.
    pub rows: Vec<ResultRow>,
}

impl ExperimentResult {
    pub fn rows_for(&self, kind: ModelKind) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(move |r| r.estimator == kind)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), BenchError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(ResultRow::HEADER)?;
        for row in &self.rows {
            w.write_record(row.record())?;
        }
        w.flush()?;
        Ok(())
    }

    /// Per-replication values of `f` for every estimator pair, both solved.
    fn paired<'a>(
        &'a self,
        a: ModelKind,
        b: ModelKind,
        f: impl Fn(&ResultRow) -> f64 + 'a,
    ) -> impl Iterator<Item = (f64, f64)> + 'a {
        let per = self.estimators.len();
        let ia = self.estimators.iter().position(|&k| k == a);
        let ib = self.estimators.iter().position(|&k| k == b);
        self.rows.chunks(per).filter_map(move |chunk| {
            let (ra, rb) = (&chunk[ia?], &chunk[ib?]);
            (ra.solved() && rb.solved()).then(|| (f(ra), f(rb)))
        })
    }

    /// Fraction of replications where `better(a, b)` holds for the metric.
    pub fn win_rate(
        &self,
        a: ModelKind,
        b: ModelKind,
        metric: impl Fn(&ResultRow) -> f64,
        better: impl Fn(f64, f64) -> bool,
    ) -> f64 {
        let (mut wins, mut total) = (0usize, 0usize);
        for (x, y) in self.paired(a, b, metric) {
            total += 1;
            wins += usize::from(better(x, y));
        }
        if total == 0 {
            f64::NAN
        } else {
            wins as f64 / total as f64
        }
    }

    pub fn metric_summary(&self, kind: ModelKind, metric: impl Fn(&ResultRow) -> f64) -> Summary {
        Summary::of(self.rows_for(kind).filter(|r| r.solved()).map(metric))
    }

    pub fn summary(&self) -> Value {
        let mut per = Map::new();
        for &kind in &self.estimators {
            let rows: Vec<&ResultRow> = self.rows_for(kind).collect();
            let failed = rows.iter().filter(|r| !r.solved()).count();
            per.insert(
                kind.to_string(),
                json!({
                    "rows": rows.len(),
                    "failed": failed,
                    "di_undefined": rows.iter().filter(|r| r.solved() && !r.di_defined).count(),
                    "accuracy": self.metric_summary(kind, |r| r.accuracy).to_json(),
                    "DI": self.metric_summary(kind, |r| r.di_score).to_json(),
                    "fairness_residual": self.metric_summary(kind, |r| r.fairness_residual).to_json(),
                    "iterations": self.metric_summary(kind, |r| r.iterations as f64).to_json(),
                    "wall_time_us": self.metric_summary(kind, |r| r.wall_time_us).to_json(),
                    "peak_memory_bytes": self.metric_summary(kind, |r| r.peak_memory_bytes as f64).to_json(),
                }),
            );
        }
        let mut wins = Map::new();
        for &a in &self.estimators {
            for &b in &self.estimators {
                if a == b {
                    continue;
                }
                let rate = |v: f64| if v.is_finite() { json!(v) } else { Value::Null };
                wins.insert(
                    format!("DI({a})>DI({b})"),
                    rate(self.win_rate(a, b, |r| r.di_score, |x, y| x > y)),
                );
                wins.insert(
                    format!("DI({a})>=DI({b})"),
                    rate(self.win_rate(a, b, |r| r.di_score, |x, y| x >= y)),
                );
                wins.insert(
                    format!("accuracy({a})>accuracy({b})"),
                    rate(self.win_rate(a, b, |r| r.accuracy, |x, y| x > y)),
                );
            }
        }
        json!({
            "scenario": self.scenario.to_string(),
            "base_seed": self.base_seed,
            "replications": self.replications,
            "estimators": per,
            "win_rates": wins,
        })
    }
}

enum Source {
    Synthetic(ClusteredDataset),
    Adult(AdultData),
}

impl Source {
    fn replicate(&self, seed: u64, fraction: f64) -> Result<(ClusteredDataset, ClusteredDataset), BenchError> {
        match self {
            Source::Synthetic(ds) => Ok(split_rows(ds, &SplitSpec::new(seed))?.apply(ds)),
            Source::Adult(data) => {
                let rows = fraction_split(data.dataset.n(), fraction, seed)?;
                Ok(rows.apply(&data.standardized(&rows.train)))
            }
        }
    }
}

fn fit_row(
    spec: &ExperimentSpec,
    kind: ModelKind,
    replication: usize,
    seed: u64,
    train: &ClusteredDataset,
    test: &ClusteredDataset,
) -> ResultRow {
    let fit_spec = FitSpec::for_kind(kind, spec.mu, spec.lambda, spec.c);
    let (outcome, m) = measure(|| fit(train, &fit_spec, &spec.settings));
    let mut row = ResultRow {
        replication,
        seed,
        estimator: kind,
        status: "Error".into(),
        train_size: train.n(),
        accuracy: f64::NAN,
        di: None,
        di_score: f64::NAN,
        di_defined: false,
        fairness_residual: f64::NAN,
        iterations: 0,
        wall_time_us: m.wall_time_us,
        peak_memory_bytes: m.peak_memory_bytes,
        error: None,
    };
    let model = match outcome {
        Ok(model) => model,
        Err(ModelError::Solver { model }) => *model,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    row.status = model.stats.status.to_string();
    row.iterations = model.stats.iterations;
    row.fairness_residual = model.fairness_residual;
    match FairnessReport::evaluate(&model, test) {
        Ok(report) => {
            row.accuracy = report.accuracy;
            row.di = report.disparate_impact.di;
            row.di_score = report.disparate_impact.score;
            row.di_defined = report.disparate_impact.is_defined();
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Runs `spec.replications` train resamples of one fixed dataset and fits
/// every estimator on each. Replications run on a worker pool; the result
/// does not depend on the number of workers.
pub fn run(spec: &ExperimentSpec) -> Result<ExperimentResult, BenchError> {
    spec.validate()?;
    let source = match spec.scenario {
        ExperimentScenario::Synthetic(sc) => {
            let synth = SynthSpec::preset(sc, spec.n, spec.k, spec.base_seed);
            Source::Synthetic(generate(&synth)?.dataset)
        }
        ExperimentScenario::Adult => {
            let path = spec.adult_path.as_ref().expect("validated");
            Source::Adult(ingest_adult(path, &spec.adult_options)?)
        }
    };
    // Surface split errors (such as clusters that are too small) up front.
    source.replicate(spec.base_seed, spec.train_fraction)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs)
        .build()
        .map_err(|e| BenchError::Spec(e.to_string()))?;
    let chunks: Vec<Result<Vec<ResultRow>, BenchError>> = pool.install(|| {
        (0..spec.replications)
            .into_par_iter()
            .map(|r| {
                let seed = spec.base_seed.wrapping_add(r as u64);
                let (train, test) = source.replicate(seed, spec.train_fraction)?;
                Ok(spec
                    .estimators
                    .iter()
                    .map(|&kind| fit_row(spec, kind, r, seed, &train, &test))
                    .collect())
            })
            .collect()
    });
    let mut rows = Vec::with_capacity(spec.replications * spec.estimators.len());
    for chunk in chunks {
        rows.extend(chunk?);
    }
    Ok(ExperimentResult {
        scenario: spec.scenario,
        base_seed: spec.base_seed,
        replications: spec.replications,
        estimators: spec.estimators.clone(),
        rows,
    })
}
