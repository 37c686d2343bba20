//! The four linear classifiers and the one-hot baseline, assembled as
//! standard-form QPs over the decision vector `z = [β | g | ξ]`.
//!
//! * `P` is the identity on β, `2λ·I` on the random intercepts g and zero on
//!   the slacks ξ; `q` is `μ` on ξ.
//! * Rows: one margin row per point, `yₗ(βᵀxₗ + g_cluster(ℓ)) + ξₗ ≥ 1`, one
//!   `ξₗ ≥ 0` row per point, and for fair kinds a single two-sided row
//!   `−c ≤ (1/n) Σ (sₗ − s̄)(βᵀxₗ + g_cluster(ℓ)) ≤ c`.

mod io;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::data::{ClusteredDataset, DataError};
use crate::metrics;
use crate::qp::{self, QpError, QpProblem, QpSettings, QpStatus, INFINITY};

pub use io::ModelParseError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Svm,
    Svmf,
    Mesvm,
    Fmesvm,
    OneHot,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Svm,
        ModelKind::Svmf,
        ModelKind::Mesvm,
        ModelKind::Fmesvm,
        ModelKind::OneHot,
    ];

    /// Kinds with explicit random intercepts.
    pub fn is_mixed(self) -> bool {
        matches!(self, ModelKind::Mesvm | ModelKind::Fmesvm)
    }

    /// Kinds that always carry the fairness row. The one-hot baseline carries
    /// it when a threshold is given.
    pub fn requires_threshold(self) -> bool {
        matches!(self, ModelKind::Svmf | ModelKind::Fmesvm)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Svm => "SVM",
            ModelKind::Svmf => "SVMF",
            ModelKind::Mesvm => "MESVM",
            ModelKind::Fmesvm => "FMESVM",
            ModelKind::OneHot => "ONEHOT",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "SVM" => Ok(ModelKind::Svm),
            "SVMF" => Ok(ModelKind::Svmf),
            "MESVM" => Ok(ModelKind::Mesvm),
            "FMESVM" => Ok(ModelKind::Fmesvm),
            "ONEHOT" | "ONE-HOT" => Ok(ModelKind::OneHot),
            other => Err(format!(
                "unknown model kind `{other}` (expected SVM, SVMF, MESVM, FMESVM or ONEHOT)"
            )),
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid fit specification: {0}")]
    Spec(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("sensitive attribute is constant (s̄ = {0}); the fairness constraint would be vacuous")]
    DegenerateSensitive(f64),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("solver stopped with status {}", .model.stats.status)]
    Solver { model: Box<FittedModel> },
    #[error("covariate row has {got} entries, model expects {expected}")]
    RowLength { expected: usize, got: usize },
}

/// Hyperparameters of one fit. `mu` is the slack penalty, `lambda` the
/// random-intercept penalty and `c` the fairness threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitSpec {
    pub kind: ModelKind,
    pub mu: f64,
    pub lambda: Option<f64>,
    pub c: Option<f64>,
}

impl FitSpec {
    pub fn svm(mu: f64) -> Self {
        Self { kind: ModelKind::Svm, mu, lambda: None, c: None }
    }

    pub fn svmf(mu: f64, c: f64) -> Self {
        Self { kind: ModelKind::Svmf, mu, lambda: None, c: Some(c) }
    }

    pub fn mesvm(mu: f64, lambda: f64) -> Self {
        Self { kind: ModelKind::Mesvm, mu, lambda: Some(lambda), c: None }
    }

    pub fn fmesvm(mu: f64, lambda: f64, c: f64) -> Self {
        Self { kind: ModelKind::Fmesvm, mu, lambda: Some(lambda), c: Some(c) }
    }

    pub fn onehot(mu: f64, c: Option<f64>) -> Self {
        Self { kind: ModelKind::OneHot, mu, lambda: None, c }
    }

    /// Builds a spec for `kind` from a full parameter set, dropping whatever
    /// the kind does not use.
    pub fn for_kind(kind: ModelKind, mu: f64, lambda: f64, c: f64) -> Self {
        match kind {
            ModelKind::Svm => Self::svm(mu),
            ModelKind::Svmf => Self::svmf(mu, c),
            ModelKind::Mesvm => Self::mesvm(mu, lambda),
            ModelKind::Fmesvm => Self::fmesvm(mu, lambda, c),
            ModelKind::OneHot => Self::onehot(mu, Some(c)),
        }
    }

    pub fn is_fair(&self) -> bool {
        self.c.is_some()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(ModelError::Spec(format!("mu must be positive, got {}", self.mu)));
        }
        match (self.kind.is_mixed(), self.lambda) {
            (true, None) => return Err(ModelError::Spec(format!("{} needs lambda", self.kind))),
            (true, Some(l)) if !(l > 0.0 && l.is_finite()) => {
                return Err(ModelError::Spec(format!("lambda must be positive, got {l}")))
            }
            (false, Some(_)) => {
                return Err(ModelError::Spec(format!("{} takes no lambda", self.kind)))
            }
            _ => {}
        }
        match (self.kind, self.c) {
            (k, None) if k.requires_threshold() => {
                Err(ModelError::Spec(format!("{k} needs a fairness threshold c")))
            }
            (ModelKind::Svm | ModelKind::Mesvm, Some(_)) => {
                Err(ModelError::Spec(format!("{} takes no fairness threshold", self.kind)))
            }
            (_, Some(c)) if !(c >= 0.0) => {
                Err(ModelError::Spec(format!("c must be nonnegative, got {c}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverStats {
    pub status: QpStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub objective: f64,
    /// Seconds.
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub kind: ModelKind,
    /// Fixed effects; `beta[0]` is the bias.
    pub beta: Vec<f64>,
    /// Per-cluster intercepts indexed by `id - 1`: random effects for the
    /// mixed kinds, indicator coefficients for the one-hot baseline, empty
    /// otherwise.
    pub g: Vec<f64>,
    pub mu: f64,
    pub lambda: Option<f64>,
    pub c: Option<f64>,
    /// Cluster key of each entry of `g`, so models survive re-indexing of
    /// clusters in other files.
    pub cluster_keys: Vec<String>,
    /// `(1/n) Σ (sₗ − s̄)(βᵀxₗ + g)` on the training data.
    pub fairness_residual: f64,
    pub stats: SolverStats,
}

/// A decision value, flagged when the cluster was not seen in training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub value: f64,
    pub unseen_cluster: bool,
}

impl Decision {
    /// `+1` iff the logistic of the decision value is at least ½, i.e. iff the
    /// value is nonnegative.
    pub fn label(&self) -> i8 {
        if self.value >= 0.0 {
            1
        } else {
            -1
        }
    }
}

impl FittedModel {
    pub fn uses_cluster_effects(&self) -> bool {
        !self.g.is_empty()
    }

    /// `βᵀx + g_cluster`; `x` includes the intercept entry. Unknown clusters
    /// fall back to `g = 0`.
    pub fn decision_value(&self, x: &[f64], cluster: Option<usize>) -> Result<Decision, ModelError> {
        if x.len() != self.beta.len() {
            return Err(ModelError::RowLength { expected: self.beta.len(), got: x.len() });
        }
        let fixed: f64 = self.beta.iter().zip(x).map(|(b, v)| b * v).sum();
        if !self.uses_cluster_effects() {
            return Ok(Decision { value: fixed, unseen_cluster: false });
        }
        let shift = cluster.and_then(|c| c.checked_sub(1)).and_then(|i| self.g.get(i));
        Ok(Decision {
            value: fixed + shift.copied().unwrap_or(0.0),
            unseen_cluster: shift.is_none(),
        })
    }

    pub fn predict(&self, x: &[f64], cluster: Option<usize>) -> Result<Decision, ModelError> {
        self.decision_value(x, cluster)
    }

    /// Maps the dataset's cluster ids onto this model's ids through the
    /// cluster keys.
    fn cluster_map(&self, ds: &ClusteredDataset) -> Option<Vec<Option<usize>>> {
        if ds.cluster_keys() == self.cluster_keys.as_slice() {
            return None;
        }
        let index: HashMap<&str, usize> = self
            .cluster_keys
            .iter()
            .enumerate()
            .map(|(i, k)| (k.as_str(), i + 1))
            .collect();
        Some(ds.cluster_keys().iter().map(|k| index.get(k.as_str()).copied()).collect())
    }

    /// Decision values for every row of `ds`.
    pub fn decisions(&self, ds: &ClusteredDataset) -> Result<Vec<Decision>, ModelError> {
        if ds.x().ncols() != self.beta.len() {
            return Err(ModelError::RowLength { expected: self.beta.len(), got: ds.x().ncols() });
        }
        let map = self.cluster_map(ds);
        let x = ds.x();
        let mut row = vec![0.0; x.ncols()];
        (0..ds.n())
            .map(|i| {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = x[(i, j)];
                }
                let id = ds.cluster()[i];
                let cluster = match &map {
                    None => Some(id),
                    Some(m) => id.checked_sub(1).and_then(|k| m.get(k).copied().flatten()),
                };
                self.decision_value(&row, cluster)
            })
            .collect()
    }

    pub fn predict_dataset(&self, ds: &ClusteredDataset) -> Result<Vec<i8>, ModelError> {
        Ok(self.decisions(ds)?.iter().map(Decision::label).collect())
    }
}

/// Index layout of the decision vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n_beta: usize,
    pub n_g: usize,
    pub n_slack: usize,
}

impl Layout {
    pub fn dim(&self) -> usize {
        self.n_beta + self.n_g + self.n_slack
    }

    pub fn g_offset(&self) -> usize {
        self.n_beta
    }

    pub fn slack_offset(&self) -> usize {
        self.n_beta + self.n_g
    }
}

/// Random-intercept block: cluster of each row, K and λ.
struct RandomEffects<'a> {
    cluster: &'a [usize],
    k: usize,
    lambda: f64,
}

fn build_problem(
    design: &DMatrix<f64>,
    ds: &ClusteredDataset,
    random: Option<RandomEffects<'_>>,
    mu: f64,
    c: Option<f64>,
) -> (QpProblem, Layout) {
    let n = design.nrows();
    let layout = Layout {
        n_beta: design.ncols(),
        n_g: random.as_ref().map_or(0, |r| r.k),
        n_slack: n,
    };
    let d = layout.dim();
    let m = 2 * n + usize::from(c.is_some());
    let (g0, x0) = (layout.g_offset(), layout.slack_offset());

    let mut p_diag = DVector::zeros(d);
    for j in 0..layout.n_beta {
        p_diag[j] = 1.0;
    }
    if let Some(r) = &random {
        for i in 0..r.k {
            p_diag[g0 + i] = 2.0 * r.lambda;
        }
    }
    let p = DMatrix::from_diagonal(&p_diag);
    let mut q = DVector::zeros(d);
    for l in 0..n {
        q[x0 + l] = mu;
    }

    let mut a = DMatrix::zeros(m, d);
    let mut lo = DVector::zeros(m);
    let mut hi = DVector::from_element(m, INFINITY);
    let y = ds.y();
    for l in 0..n {
        let yl = f64::from(y[l]);
        for j in 0..layout.n_beta {
            a[(l, j)] = yl * design[(l, j)];
        }
        if let Some(r) = &random {
            a[(l, g0 + r.cluster[l] - 1)] = yl;
        }
        a[(l, x0 + l)] = 1.0;
        lo[l] = 1.0;

        a[(n + l, x0 + l)] = 1.0;
        lo[n + l] = 0.0;
    }
    if let Some(c) = c {
        let row = 2 * n;
        let s_bar = ds.s_bar().value();
        let inv_n = 1.0 / n as f64;
        for l in 0..n {
            let w = (f64::from(ds.s()[l]) - s_bar) * inv_n;
            for j in 0..layout.n_beta {
                a[(row, j)] += w * design[(l, j)];
            }
            if let Some(r) = &random {
                a[(row, g0 + r.cluster[l] - 1)] += w;
            }
        }
        lo[row] = -c;
        hi[row] = c;
    }
    let problem = QpProblem::new(p, q, a, lo, hi).expect("assembly produces consistent shapes");
    (problem, layout)
}

fn check_inputs(ds: &ClusteredDataset, spec: &FitSpec) -> Result<(), ModelError> {
    spec.validate()?;
    ds.ensure_usable()?;
    if spec.is_fair() && ds.s_bar().is_degenerate() {
        return Err(ModelError::DegenerateSensitive(ds.s_bar().value()));
    }
    Ok(())
}

/// Assembles SVM, SVMF, MESVM or FMESVM. For the one-hot baseline use
/// [`assemble_onehot`].
pub fn assemble(ds: &ClusteredDataset, spec: &FitSpec) -> Result<(QpProblem, Layout), ModelError> {
    check_inputs(ds, spec)?;
    if spec.kind == ModelKind::OneHot {
        return Err(ModelError::Spec("use assemble_onehot for the one-hot baseline".into()));
    }
    let random = spec.kind.is_mixed().then(|| RandomEffects {
        cluster: ds.cluster(),
        k: ds.k(),
        lambda: spec.lambda.unwrap_or(1.0),
    });
    Ok(build_problem(ds.x(), ds, random, spec.mu, spec.c))
}

/// One-hot baseline: the design matrix widened by K cluster indicators, and
/// the plain (or fair) SVM problem on it.
#[derive(Debug, Clone)]
pub struct OneHotAssembly {
    pub design: DMatrix<f64>,
    pub problem: QpProblem,
    pub layout: Layout,
}

impl OneHotAssembly {
    /// Entries held by the widened design plus the QP.
    pub fn dense_entries(&self) -> usize {
        self.design.len() + self.problem.dense_entries()
    }
}

/// `[X | e_cluster]` with one indicator column per cluster.
pub fn widen_with_indicators(ds: &ClusteredDataset) -> DMatrix<f64> {
    let (n, cols) = (ds.n(), ds.x().ncols());
    let mut wide = DMatrix::zeros(n, cols + ds.k());
    wide.columns_mut(0, cols).copy_from(ds.x());
    for (l, &c) in ds.cluster().iter().enumerate() {
        wide[(l, cols + c - 1)] = 1.0;
    }
    wide
}

pub fn assemble_onehot(ds: &ClusteredDataset, spec: &FitSpec) -> Result<OneHotAssembly, ModelError> {
    check_inputs(ds, spec)?;
    let design = widen_with_indicators(ds);
    let (problem, layout) = build_problem(&design, ds, None, spec.mu, spec.c);
    Ok(OneHotAssembly { design, problem, layout })
}

/// Fits `spec` on `ds`. A solve that ends in anything but `Solved` is an
/// error that still carries the (unconverged) model.
pub fn fit(ds: &ClusteredDataset, spec: &FitSpec, settings: &QpSettings) -> Result<FittedModel, ModelError> {
    let spec = *spec;
    let p1 = ds.x().ncols();
    let (solution, layout) = if spec.kind == ModelKind::OneHot {
        let assembly = assemble_onehot(ds, &spec)?;
        let sol = qp::solve(&assembly.problem, settings);
        (sol, assembly.layout)
    } else {
        let (problem, layout) = assemble(ds, &spec)?;
        (qp::solve(&problem, settings), layout)
    };
    let z = &solution.z;
    let beta: Vec<f64> = z.rows(0, p1).iter().copied().collect();
    let g: Vec<f64> = match spec.kind {
        ModelKind::OneHot => z.rows(p1, ds.k()).iter().copied().collect(),
        k if k.is_mixed() => z.rows(layout.g_offset(), layout.n_g).iter().copied().collect(),
        _ => Vec::new(),
    };
    let mut model = FittedModel {
        kind: spec.kind,
        beta,
        g,
        mu: spec.mu,
        lambda: spec.lambda,
        c: spec.c,
        cluster_keys: Vec::new(),
        fairness_residual: 0.0,
        stats: SolverStats {
            status: solution.status,
            iterations: solution.iterations,
            primal_residual: solution.primal_residual,
            dual_residual: solution.dual_residual,
            objective: solution.objective,
            wall_time: solution.wall_time,
        },
    };
    if model.uses_cluster_effects() {
        model.cluster_keys = ds.cluster_keys().to_vec();
    }
    model.fairness_residual = metrics::fairness_residual(&model, ds);
    if solution.status == QpStatus::Solved {
        Ok(model)
    } else {
        Err(ModelError::Solver { model: Box::new(model) })
    }
}
