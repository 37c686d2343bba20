use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use fmesvm::bench::{onehot_study, ExperimentScenario, ExperimentSpec, OneHotStudySpec};
use fmesvm::datagen::{generate as draw, Scenario, SynthSpec};
use fmesvm::metrics::FairnessReport;
use fmesvm::models::{fit as fit_model, FitSpec, FittedModel, ModelError, ModelKind};
use fmesvm::{ClusteredDataset, QpSettings};
use serde_json::{json, Value};

use crate::config::List;
use crate::{
    CliError, Common, EvaluateArgs, ExperimentArgs, FitArgs, GenerateArgs, PredictArgs, ProfileArgs,
    SolverArgs,
};

const COMMON_KEYS: [&str; 3] = ["seed", "jobs", "output"];
const SOLVER_KEYS: [&str; 2] = ["max_iter", "eps_abs"];

fn keys(common: &Common, own: &[&str], solver: bool) -> Result<(), CliError> {
    let mut all: Vec<&str> = COMMON_KEYS.to_vec();
    all.extend_from_slice(own);
    if solver {
        all.extend_from_slice(&SOLVER_KEYS);
    }
    common.config.check_keys(&all)
}

fn output(common: &Common) -> Result<Option<PathBuf>, CliError> {
    common.config.get("output", common.output.clone())
}

fn seed(common: &Common) -> Result<u64, CliError> {
    common.config.get_or("seed", common.seed, 0)
}

fn solver_settings(common: &Common, a: &SolverArgs) -> Result<QpSettings, CliError> {
    let mut s = QpSettings::default();
    s.max_iter = common.config.get_or("max_iter", a.max_iter, s.max_iter)?;
    s.eps_abs = common.config.get_or("eps_abs", a.eps_abs, s.eps_abs)?;
    if s.max_iter == 0 || !(s.eps_abs > 0.0) {
        return Err(CliError::Input("max_iter and eps_abs must be positive".into()));
    }
    Ok(s)
}

/// A buffered writer on `path`, or on stdout when there is none.
fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::Input(format!("cannot create {}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn read_data(path: &Path) -> Result<ClusteredDataset, CliError> {
    ClusteredDataset::read_csv(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn read_model(path: &Path) -> Result<FittedModel, CliError> {
    FittedModel::load(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn print_json(v: &Value) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn report_json(r: &FairnessReport) -> Value {
    let num = |x: f64| if x.is_finite() { json!(x) } else { Value::Null };
    json!({
        "tp": r.tp,
        "tn": r.tn,
        "fp": r.fp,
        "fn": r.fn_,
        "accuracy": num(r.accuracy),
        "di": r.disparate_impact.di.map_or(Value::Null, num),
        "DI": num(r.disparate_impact.score),
        "di_defined": r.disparate_impact.is_defined(),
        "rate_s0": num(r.disparate_impact.rate_s0),
        "rate_s1": num(r.disparate_impact.rate_s1),
        "fairness_residual": num(r.fairness_residual),
    })
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Input(format!("cannot create directory {}: {e}", dir.display())))
}

pub fn generate(common: &Common, a: GenerateArgs) -> Result<(), CliError> {
    keys(common, &["scenario", "n", "clusters"], false)?;
    let cfg = &common.config;
    let scenario: Scenario = cfg.require("scenario", a.scenario.map(|s| s.parse()).transpose().map_err(CliError::Input)?)?;
    let n = cfg.get_or("n", a.n, SynthSpec::DEFAULT_N)?;
    let k = cfg.get_or("clusters", a.clusters, SynthSpec::DEFAULT_K)?;
    let data = draw(&SynthSpec::preset(scenario, n, k, seed(common)?))?;
    data.dataset.to_csv_writer(sink(output(common)?.as_deref())?)?;
    Ok(())
}

fn fit_spec(
    kind: ModelKind,
    mu: Option<f64>,
    lambda: Option<f64>,
    c: Option<f64>,
) -> FitSpec {
    let mu = mu.unwrap_or(1.0);
    match kind {
        ModelKind::OneHot => FitSpec::onehot(mu, c),
        _ => FitSpec::for_kind(kind, mu, lambda.unwrap_or(1.0), c.unwrap_or(1e-3)),
    }
}

pub fn fit(common: &Common, a: FitArgs) -> Result<(), CliError> {
    keys(common, &["data", "model", "mu", "lambda", "c"], true)?;
    let cfg = &common.config;
    let data_path: PathBuf = cfg.require("data", a.data)?;
    let kind: ModelKind = cfg.get("model", a.model.map(|s| s.parse()).transpose().map_err(CliError::Input)?)?
        .unwrap_or(ModelKind::Fmesvm);
    let spec = fit_spec(
        kind,
        cfg.get("mu", a.mu)?,
        cfg.get("lambda", a.lambda)?,
        cfg.get("c", a.c)?,
    );
    spec.validate()?;
    let settings = solver_settings(common, &a.solver)?;
    let ds = read_data(&data_path)?;

    let (model, failure) = match fit_model(&ds, &spec, &settings) {
        Ok(m) => (m, None),
        Err(ModelError::Solver { model }) => {
            let msg = format!("solver stopped with status {}", model.stats.status);
            (*model, Some(msg))
        }
        Err(e) => return Err(e.into()),
    };
    if let Some(path) = output(common)? {
        model.save(&path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    }
    let report = FairnessReport::evaluate(&model, &ds)?;
    print_json(&json!({
        "model": kind.to_string(),
        "status": model.stats.status.to_string(),
        "iterations": model.stats.iterations,
        "objective": model.stats.objective,
        "wall_time_s": model.stats.wall_time,
        "c": model.c,
        "train": report_json(&report),
    }))?;
    match failure {
        Some(msg) => Err(CliError::Solver(msg)),
        None => Ok(()),
    }
}

pub fn predict(common: &Common, a: PredictArgs) -> Result<(), CliError> {
    keys(common, &["model", "data"], false)?;
    let model = read_model(&common.config.require("model", a.model)?)?;
    let ds = read_data(&common.config.require("data", a.data)?)?;
    let decisions = model.decisions(&ds)?;
    let mut w = csv::Writer::from_writer(sink(output(common)?.as_deref())?);
    let csv_err = |e: csv::Error| CliError::Input(e.to_string());
    w.write_record(["row", "decision", "label", "unseen_cluster"]).map_err(csv_err)?;
    for (i, d) in decisions.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            d.value.to_string(),
            d.label().to_string(),
            d.unseen_cluster.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn evaluate(common: &Common, a: EvaluateArgs) -> Result<(), CliError> {
    keys(common, &["model", "data"], false)?;
    let model = read_model(&common.config.require("model", a.model)?)?;
    let ds = read_data(&common.config.require("data", a.data)?)?;
    let report = FairnessReport::evaluate(&model, &ds)?;
    if let Some(path) = output(common)? {
        let mut w = sink(Some(&path))?;
        writeln!(w, "{}", FairnessReport::CSV_HEADER)?;
        writeln!(w, "{}", report.csv_row())?;
        w.flush()?;
    }
    print_json(&report_json(&report))
}

pub fn experiment(common: &Common, a: ExperimentArgs) -> Result<(), CliError> {
    keys(
        common,
        &["scenario", "replications", "estimators", "n", "clusters", "mu", "lambda", "c", "adult", "train_fraction"],
        true,
    )?;
    let cfg = &common.config;
    let scenario: ExperimentScenario =
        cfg.require("scenario", a.scenario.map(|s| s.parse()).transpose().map_err(CliError::Input)?)?;
    let mut spec = ExperimentSpec::new(scenario);
    spec.replications = cfg.get_or("replications", a.replications, spec.replications)?;
    if let Some(List(kinds)) = cfg.get::<List<ModelKind>>(
        "estimators",
        a.estimators.map(|s| s.parse()).transpose().map_err(CliError::Input)?,
    )? {
        spec.estimators = kinds;
    }
    spec.base_seed = seed(common)?;
    spec.n = cfg.get_or("n", a.n, SynthSpec::SMALL_N)?;
    spec.k = cfg.get_or("clusters", a.clusters, spec.k)?;
    spec.mu = cfg.get_or("mu", a.mu, spec.mu)?;
    spec.lambda = cfg.get_or("lambda", a.lambda, spec.lambda)?;
    spec.c = cfg.get_or("c", a.c, spec.c)?;
    spec.adult_path = cfg.get("adult", a.adult)?;
    spec.train_fraction = cfg.get_or("train_fraction", a.train_fraction, spec.train_fraction)?;
    spec.jobs = cfg.get_or("jobs", common.jobs, 0)?;
    spec.settings = solver_settings(common, &a.solver)?;

    let result = fmesvm::bench::run(&spec)?;
    let summary = result.summary();
    if let Some(dir) = output(common)? {
        create_dir(&dir)?;
        result.write_csv(BufWriter::new(File::create(dir.join("results.csv"))?))?;
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    }
    print_json(&summary)
}

pub fn profile(common: &Common, a: ProfileArgs) -> Result<(), CliError> {
    keys(
        common,
        &["preset", "n", "groups", "datasets", "repeats", "mu", "lambda", "c"],
        true,
    )?;
    let cfg = &common.config;
    let seed = seed(common)?;
    let preset: String = cfg.get_or("preset", a.preset, "small".into())?;
    let mut spec = match preset.as_str() {
        "small" => OneHotStudySpec::small(seed),
        "full" => OneHotStudySpec::full(seed),
        other => return Err(CliError::Input(format!("unknown preset `{other}` (valid: small, full)"))),
    };
    spec.n = cfg.get_or("n", a.n, spec.n)?;
    if let Some(List(groups)) =
        cfg.get::<List<usize>>("groups", a.groups.map(|s| s.parse()).transpose().map_err(CliError::Input)?)?
    {
        spec.groups = groups;
    }
    spec.datasets = cfg.get_or("datasets", a.datasets, spec.datasets)?;
    spec.repeats = cfg.get_or("repeats", a.repeats, spec.repeats)?;
    spec.mu = cfg.get_or("mu", a.mu, spec.mu)?;
    spec.lambda = cfg.get_or("lambda", a.lambda, spec.lambda)?;
    spec.c = cfg.get_or("c", a.c, spec.c)?;
    spec.settings = solver_settings(common, &a.solver)?;
    if let Some(&k) = spec.groups.iter().find(|&&k| k == 0 || k > spec.n) {
        return Err(CliError::Input(format!("group count {k} must be between 1 and n = {}", spec.n)));
    }

    let study = onehot_study(&spec)?;
    let summary = study.summary();
    if let Some(dir) = output(common)? {
        create_dir(&dir)?;
        study.write_csv(BufWriter::new(File::create(dir.join("onehot.csv"))?))?;
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    }
    print_json(&summary)
}
