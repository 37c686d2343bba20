use nalgebra::{Matrix3, Vector3};

use super::BenchError;

/// `ρ_s(τ)` of one solver as a right-continuous step function: `rho[i]` holds
/// on `[taus[i], taus[i+1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileCurve {
    pub taus: Vec<f64>,
    pub rho: Vec<f64>,
}

impl ProfileCurve {
    pub fn at(&self, tau: f64) -> f64 {
        match self.taus.iter().rposition(|&t| t <= tau) {
            Some(i) => self.rho[i],
            None => 0.0,
        }
    }
}

/// Dolan–Moré performance profiles. `times[p][s]` is the cost of solver `s` on
/// problem `p`; a failed run is `f64::INFINITY` and never counts as solved.
pub fn performance_profile(times: &[Vec<f64>]) -> Result<Vec<ProfileCurve>, BenchError> {
    let solvers = times.first().map_or(0, Vec::len);
    if times.is_empty() || solvers == 0 {
        return Err(BenchError::Spec("performance profile needs at least one problem and solver".into()));
    }
    let mut ratios = vec![Vec::with_capacity(times.len()); solvers];
    for (p, row) in times.iter().enumerate() {
        if row.len() != solvers {
            return Err(BenchError::Spec(format!("problem {p} has {} entries, expected {solvers}", row.len())));
        }
        if let Some(&t) = row.iter().find(|t| !(**t > 0.0)) {
            return Err(BenchError::Spec(format!("problem {p}: nonpositive time {t}")));
        }
        let best = row.iter().copied().fold(f64::INFINITY, f64::min);
        for (s, &t) in row.iter().enumerate() {
            ratios[s].push(if t.is_finite() { t / best } else { f64::INFINITY });
        }
    }
    let mut taus: Vec<f64> = ratios.iter().flatten().copied().filter(|r| r.is_finite()).collect();
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    let np = times.len() as f64;
    Ok(ratios
        .iter()
        .map(|r| ProfileCurve {
            rho: taus.iter().map(|&tau| r.iter().filter(|&&v| v <= tau).count() as f64 / np).collect(),
            taus: taus.clone(),
        })
        .collect())
}

/// Least-squares `(a, b, c)` of `a + b x + c x²`. The normal equations are
/// formed on `x / max|x|` and the coefficients mapped back.
pub fn poly2_fit(x: &[f64], y: &[f64]) -> Result<[f64; 3], BenchError> {
    if x.len() != y.len() {
        return Err(BenchError::Spec(format!("{} x values for {} y values", x.len(), y.len())));
    }
    let mut distinct: Vec<f64> = x.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(BenchError::Spec(format!(
            "quadratic fit needs 3 distinct x values, got {}",
            distinct.len()
        )));
    }
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut ata = Matrix3::zeros();
    let mut aty = Vector3::zeros();
    for (&xi, &yi) in x.iter().zip(y) {
        let t = xi / scale;
        let row = Vector3::new(1.0, t, t * t);
        ata += row * row.transpose();
        aty += row * yi;
    }
    let sol = ata
        .lu()
        .solve(&aty)
        .ok_or_else(|| BenchError::Spec("singular normal equations".into()))?;
    Ok([sol[0], sol[1] / scale, sol[2] / (scale * scale)])
}
