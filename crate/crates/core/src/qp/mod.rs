//! Dense convex quadratic programs
//!
//! ```text
//! minimize    ½ zᵀPz + qᵀz
//! subject to  l ≤ Az ≤ u
//! ```
//!
//! solved with an operator-splitting (ADMM) iteration: Ruiz equilibration,
//! over-relaxation, adaptive step size and a final polish on the detected active
//! set. Matrices are dense at the interface; internally only their nonzeros are
//! touched.

mod admm;
mod csr;
mod linsys;
mod residuals;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub use residuals::{kkt_residuals, KktResiduals};

/// Internal stand-in for an infinite bound.
pub const INFINITY: f64 = 1e30;

/// Any bound at least this large in magnitude counts as infinite.
pub const INFINITY_THRESHOLD: f64 = 1e29;

pub(crate) fn is_infinite(b: f64) -> bool {
    b.abs() >= INFINITY_THRESHOLD
}

#[derive(Debug, Error)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("P is not symmetric: |P[{row},{col}] - P[{col},{row}]| = {gap:e}")]
    NotSymmetric { row: usize, col: usize, gap: f64 },
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    p: DMatrix<f64>,
    q: DVector<f64>,
    a: DMatrix<f64>,
    l: DVector<f64>,
    u: DVector<f64>,
}

impl QpProblem {
    /// Checks shapes, finiteness and symmetry of `P` (to 1e-12). Infinite
    /// bounds may be given as `±f64::INFINITY` or as anything with magnitude
    /// ≥ 1e29; both are stored as ±1e30. `l > u` is accepted here and reported
    /// as infeasible by [`solve`].
    pub fn new(
        p: DMatrix<f64>,
        q: DVector<f64>,
        a: DMatrix<f64>,
        l: DVector<f64>,
        u: DVector<f64>,
    ) -> Result<Self, QpError> {
        let d = q.len();
        if p.nrows() != d || p.ncols() != d {
            return Err(QpError::Dimension(format!(
                "P is {}x{}, q has {d} entries",
                p.nrows(),
                p.ncols()
            )));
        }
        if a.ncols() != d {
            return Err(QpError::Dimension(format!("A has {} columns, expected {d}", a.ncols())));
        }
        let m = a.nrows();
        if l.len() != m || u.len() != m {
            return Err(QpError::Dimension(format!(
                "A has {m} rows, l and u have {} and {}",
                l.len(),
                u.len()
            )));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(QpError::NonFinite("P"));
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(QpError::NonFinite("q"));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(QpError::NonFinite("A"));
        }
        if l.iter().chain(u.iter()).any(|v| v.is_nan()) {
            return Err(QpError::NonFinite("bounds"));
        }
        for j in 0..d {
            for i in (j + 1)..d {
                let gap = (p[(i, j)] - p[(j, i)]).abs();
                if gap > 1e-12 {
                    return Err(QpError::NotSymmetric { row: i, col: j, gap });
                }
            }
        }
        let clamp = |v: &mut DVector<f64>| {
            for b in v.iter_mut() {
                if is_infinite(*b) {
                    *b = INFINITY.copysign(*b);
                }
            }
        };
        let (mut l, mut u) = (l, u);
        clamp(&mut l);
        clamp(&mut u);
        Ok(Self { p, q, a, l, u })
    }

    /// Number of decision variables.
    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// Number of constraint rows.
    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn q(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn l(&self) -> &DVector<f64> {
        &self.l
    }

    pub fn u(&self) -> &DVector<f64> {
        &self.u
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.p * z)) + self.q.dot(z)
    }

    /// Stored matrix and vector entries, the dense footprint of the problem.
    pub fn dense_entries(&self) -> usize {
        let d = self.dim();
        let m = self.rows();
        d * d + d + m * d + 2 * m
    }

    /// Returns a copy with `P` and `q` multiplied by `factor`.
    pub fn scaled_objective(&self, factor: f64) -> Self {
        Self {
            p: &self.p * factor,
            q: &self.q * factor,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Solved,
    MaxIters,
    Infeasible,
}

impl std::fmt::Display for QpStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            QpStatus::Solved => "Solved",
            QpStatus::MaxIters => "MaxIters",
            QpStatus::Infeasible => "Infeasible",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for QpStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Solved" => Ok(QpStatus::Solved),
            "MaxIters" => Ok(QpStatus::MaxIters),
            "Infeasible" => Ok(QpStatus::Infeasible),
            other => Err(format!("unknown solver status `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    /// Absolute primal tolerance (constraint violation).
    pub eps_abs: f64,
    /// Absolute dual tolerance (stationarity), also used for complementarity.
    pub eps_dual: f64,
    /// Relative tolerance of the ADMM stopping test that triggers a polish
    /// attempt. Tightened tenfold each time the result is not yet accurate.
    pub eps_rel: f64,
    /// Tolerance of the infeasibility certificates.
    pub eps_infeasible: f64,
    pub max_iter: usize,
    pub rho: f64,
    pub sigma: f64,
    /// Over-relaxation parameter in (0, 2).
    pub alpha: f64,
    pub adaptive_rho: bool,
    pub scaling_iters: usize,
    pub check_interval: usize,
    pub polish: bool,
    pub polish_delta: f64,
    pub polish_refine_iters: usize,
    /// Active-set corrections tried after the first polish solve.
    pub polish_active_rounds: usize,
    /// Rows whose violation is at least this fraction of the worst one are
    /// corrected in each round.
    pub polish_active_fraction: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            eps_abs: 1e-6,
            eps_dual: 1e-6,
            eps_rel: 1e-3,
            eps_infeasible: 1e-5,
            max_iter: 100_000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            adaptive_rho: true,
            scaling_iters: 10,
            check_interval: 25,
            polish: true,
            polish_delta: 1e-6,
            polish_refine_iters: 25,
            polish_active_rounds: 6,
            polish_active_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: DVector<f64>,
    /// Multipliers with the convention `Pz + q + Aᵀλ = 0`: positive entries
    /// push against the upper bound, negative against the lower bound.
    pub lambda: DVector<f64>,
    pub status: QpStatus,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub complementarity: f64,
    pub objective: f64,
    pub iterations: usize,
    pub polished: bool,
    /// Seconds.
    pub wall_time: f64,
}

/// Solves `problem`. Deterministic for identical inputs and settings.
pub fn solve(problem: &QpProblem, settings: &QpSettings) -> QpSolution {
    admm::solve(problem, settings)
}
