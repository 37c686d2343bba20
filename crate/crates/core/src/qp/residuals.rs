use nalgebra::DVector;

use super::{is_infinite, QpProblem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    /// Largest violation of `l ≤ Az ≤ u`.
    pub primal: f64,
    /// `‖Pz + q + Aᵀλ‖∞`.
    pub dual: f64,
    /// Largest `|λᵢ| · slack` against the bound that `λᵢ`'s sign points at. A
    /// multiplier pushing against an infinite bound counts with its magnitude.
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn within(&self, eps_primal: f64, eps_dual: f64) -> bool {
        self.primal <= eps_primal && self.dual <= eps_dual && self.complementarity <= eps_dual
    }
}

pub fn kkt_residuals(problem: &QpProblem, z: &DVector<f64>, lambda: &DVector<f64>) -> KktResiduals {
    let az = problem.a() * z;
    let mut primal = 0.0f64;
    let mut complementarity = 0.0f64;
    for i in 0..az.len() {
        let (l, u) = (problem.l()[i], problem.u()[i]);
        let lo = if is_infinite(l) { 0.0 } else { l - az[i] };
        let hi = if is_infinite(u) { 0.0 } else { az[i] - u };
        primal = primal.max(lo).max(hi);

        let li = lambda[i];
        let c = if li > 0.0 {
            if is_infinite(u) {
                li
            } else {
                li * (u - az[i]).abs()
            }
        } else if li < 0.0 {
            if is_infinite(l) {
                -li
            } else {
                -li * (az[i] - l).abs()
            }
        } else {
            0.0
        };
        complementarity = complementarity.max(c);
    }
    let stationarity = problem.p() * z + problem.q() + problem.a().tr_mul(lambda);
    KktResiduals {
        primal,
        dual: stationarity.amax(),
        complementarity,
    }
}
