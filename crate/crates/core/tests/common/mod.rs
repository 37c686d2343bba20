//! Test-only oracles, independent of the library's solver path.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};

/// Random convex QP whose first `d` rows box `z` into [-1, 1]^d, followed by
/// `general` random rows that keep an interior point `z0` strictly feasible.
pub struct BoxQp {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub a: DMatrix<f64>,
    pub l: DVector<f64>,
    pub u: DVector<f64>,
    pub z0: DVector<f64>,
}

pub fn random_box_qp<R: Rng>(rng: &mut R, d: usize, general: usize) -> BoxQp {
    let rank = rng.random_range(0..=d);
    let f = DMatrix::from_fn(d, rank.max(1), |_, _| rng.random_range(-1.0..1.0));
    let mut p = &f * f.transpose();
    if rank == 0 {
        p.fill(0.0);
    }
    let p = (&p + p.transpose()) * 0.5;
    let q = DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0));
    let z0 = DVector::from_fn(d, |_, _| rng.random_range(-0.5..0.5));

    let m = d + general;
    let mut a = DMatrix::zeros(m, d);
    let mut l = DVector::zeros(m);
    let mut u = DVector::zeros(m);
    for i in 0..d {
        a[(i, i)] = 1.0;
        l[i] = -1.0;
        u[i] = 1.0;
    }
    for r in d..m {
        for j in 0..d {
            a[(r, j)] = rng.random_range(-1.0..1.0);
        }
        let center = a.row(r).dot(&z0.transpose());
        l[r] = if rng.random_bool(0.2) { f64::NEG_INFINITY } else { center - rng.random_range(0.05..1.0) };
        u[r] = if rng.random_bool(0.2) { f64::INFINITY } else { center + rng.random_range(0.05..1.0) };
    }
    BoxQp { p, q, a, l, u, z0 }
}

impl BoxQp {
    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.p * z)) + self.q.dot(z)
    }

    pub fn feasible(&self, z: &DVector<f64>, tol: f64) -> bool {
        let az = &self.a * z;
        az.iter()
            .zip(self.l.iter().zip(self.u.iter()))
            .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol)
    }

    /// Grid search over the box, shrinking local grids around the best few
    /// feasible points, then random-direction line searches. Only ever accepts
    /// feasible points, so the returned value is an upper bound on the optimum.
    pub fn grid_oracle(&self) -> (DVector<f64>, f64) {
        let d = self.q.len();
        let coarse = match d {
            1 => 201,
            2 => 61,
            3 => 25,
            _ => 15,
        };
        let mut seeds: Vec<(f64, DVector<f64>)> = Vec::new();
        let consider = |z: DVector<f64>, seeds: &mut Vec<(f64, DVector<f64>)>| {
            if self.feasible(&z, 0.0) {
                seeds.push((self.objective(&z), z));
            }
        };
        consider(self.z0.clone(), &mut seeds);
        for_each_grid_point(d, coarse, &DVector::zeros(d), 1.0, |z| consider(z, &mut seeds));
        seeds.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        seeds.truncate(4);

        let mut best = seeds[0].clone();
        for (val, start) in seeds {
            let mut center = start;
            let mut center_val = val;
            let mut half = 2.0 / (coarse - 1) as f64;
            let mut steps = 0;
            while half > 1e-10 && steps < 5000 {
                steps += 1;
                let mut local_best = (center_val, center.clone());
                for_each_grid_point(d, 9, &center, half, |z| {
                    if self.feasible(&z, 0.0) {
                        let v = self.objective(&z);
                        if v < local_best.0 {
                            local_best = (v, z);
                        }
                    }
                });
                // Keep the window while it still finds descent; shrink otherwise.
                if local_best.0 < center_val {
                    center_val = local_best.0;
                    center = local_best.1;
                } else {
                    half *= 0.5;
                }
            }
            if center_val < best.0 {
                best = (center_val, center);
            }
        }
        self.line_search_refine(best.1)
    }

    /// Exact minimization along random directions, restricted to the
    /// feasible segment. Escapes the narrow wedges where an axis-aligned grid
    /// finds no feasible descent.
    fn line_search_refine(&self, start: DVector<f64>) -> (DVector<f64>, f64) {
        let d = self.q.len();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x0ac1e);
        let mut z = start;
        let mut val = self.objective(&z);
        let mut idle = 0;
        while idle < 2000 {
            let mut dir = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
            if rng.random_bool(0.5) {
                // Stay on the face of the currently tight rows.
                let az = &self.a * &z;
                let mut basis: Vec<DVector<f64>> = Vec::new();
                for i in 0..az.len() {
                    if (az[i] - self.l[i]).abs() > 1e-10 && (az[i] - self.u[i]).abs() > 1e-10 {
                        continue;
                    }
                    let mut r = self.a.row(i).transpose();
                    for b in &basis {
                        r -= b * b.dot(&r);
                    }
                    let n = r.norm();
                    if n > 1e-10 {
                        basis.push(r / n);
                    }
                }
                for b in &basis {
                    dir -= b * b.dot(&dir);
                }
            }
            let norm = dir.norm();
            if norm < 1e-12 {
                continue;
            }
            dir /= norm;
            let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
            let az = &self.a * &z;
            let ad = &self.a * &dir;
            for i in 0..ad.len() {
                if ad[i].abs() < 1e-14 {
                    continue;
                }
                let (a, b) = ((self.l[i] - az[i]) / ad[i], (self.u[i] - az[i]) / ad[i]);
                lo = lo.max(a.min(b));
                hi = hi.min(a.max(b));
            }
            let curv = dir.dot(&(&self.p * &dir));
            let slope = dir.dot(&(&self.p * &z + &self.q));
            let t = if curv > 1e-14 { -slope / curv } else if slope < 0.0 { hi } else { lo };
            let t = t.clamp(lo.min(0.0), hi.max(0.0));
            let cand = &z + t * &dir;
            let cv = self.objective(&cand);
            if t.is_finite() && cv < val - 1e-15 && self.feasible(&cand, 1e-12) {
                z = cand;
                val = cv;
                idle = 0;
            } else {
                idle += 1;
            }
        }
        (z, val)
    }
}

impl BoxQp {
    /// Exact brute force over active sets: every row is either free, at its
    /// lower bound or at its upper bound (3^m patterns). For each pattern the
    /// objective is minimized over the affine face with pseudo-inverses and the
    /// result kept if feasible. Some vertex of the optimal set has a pattern
    /// with a nonsingular reduced Hessian, so the minimum over candidates is the
    /// optimum.
    pub fn enumeration_oracle(&self) -> (DVector<f64>, f64) {
        let d = self.q.len();
        let m = self.l.len();
        let mut best: Option<(f64, DVector<f64>)> = None;
        let mut pattern = vec![0u8; m];
        loop {
            let rows: Vec<(usize, f64)> = pattern
                .iter()
                .enumerate()
                .filter_map(|(i, &s)| match s {
                    1 if self.l[i].is_finite() => Some((i, self.l[i])),
                    2 if self.u[i].is_finite() => Some((i, self.u[i])),
                    _ => None,
                })
                .collect();
            let complete = rows.len() == pattern.iter().filter(|&&s| s != 0).count();
            if complete {
                if let Some(z) = self.face_minimizer(&rows, d) {
                    if self.feasible(&z, 1e-9) {
                        let v = self.objective(&z);
                        if best.as_ref().is_none_or(|b| v < b.0) {
                            best = Some((v, z));
                        }
                    }
                }
            }
            let mut i = 0;
            loop {
                if i == m {
                    let (v, z) = best.expect("z0 is feasible, so some face yields a candidate");
                    return (z, v);
                }
                pattern[i] += 1;
                if pattern[i] < 3 {
                    break;
                }
                pattern[i] = 0;
                i += 1;
            }
        }
    }

    fn face_minimizer(&self, rows: &[(usize, f64)], d: usize) -> Option<DVector<f64>> {
        let k = rows.len();
        let a_s = DMatrix::from_fn(k, d, |r, j| self.a[(rows[r].0, j)]);
        let b_s = DVector::from_fn(k, |r, _| rows[r].1);
        // Particular solution and null space from the eigen-decomposition of AᵀA.
        let (z_p, null) = if k == 0 {
            (DVector::zeros(d), DMatrix::identity(d, d))
        } else {
            let gram = a_s.transpose() * &a_s;
            let eig = gram.clone().symmetric_eigen();
            let tol = 1e-10 * eig.eigenvalues.amax().max(1.0);
            let pinv = pseudo_inverse(&eig, tol);
            let z_p = &pinv * a_s.transpose() * &b_s;
            if (&a_s * &z_p - &b_s).amax() > 1e-9 {
                return None;
            }
            let cols: Vec<DVector<f64>> = (0..d)
                .filter(|&i| eig.eigenvalues[i].abs() <= tol)
                .map(|i| eig.eigenvectors.column(i).into_owned())
                .collect();
            let null = if cols.is_empty() { DMatrix::zeros(d, 0) } else { DMatrix::from_columns(&cols) };
            (z_p, null)
        };
        if null.ncols() == 0 {
            return Some(z_p);
        }
        let h = null.transpose() * &self.p * &null;
        let g = null.transpose() * (&self.p * &z_p + &self.q);
        let eig = h.clone().symmetric_eigen();
        let tol = 1e-10 * eig.eigenvalues.amax().max(1.0);
        let w = -pseudo_inverse(&eig, tol) * &g;
        if (&h * &w + &g).amax() > 1e-8 {
            // Objective unbounded below on this affine face.
            return None;
        }
        Some(z_p + null * w)
    }
}

fn pseudo_inverse(eig: &nalgebra::SymmetricEigen<f64, nalgebra::Dyn>, tol: f64) -> DMatrix<f64> {
    let n = eig.eigenvalues.len();
    let inv = DVector::from_fn(n, |i, _| {
        let v = eig.eigenvalues[i];
        if v.abs() > tol { 1.0 / v } else { 0.0 }
    });
    &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose()
}

/// Calls `f` on every point of a `k^d` grid spanning `center ± half`, clipped
/// to the unit box.
fn for_each_grid_point<F: FnMut(DVector<f64>)>(d: usize, k: usize, center: &DVector<f64>, half: f64, mut f: F) {
    let mut idx = vec![0usize; d];
    loop {
        let z = DVector::from_fn(d, |j, _| {
            let t = if k == 1 { 0.0 } else { idx[j] as f64 / (k - 1) as f64 * 2.0 - 1.0 };
            (center[j] + t * half).clamp(-1.0, 1.0)
        });
        f(z);
        let mut j = 0;
        loop {
            if j == d {
                return;
            }
            idx[j] += 1;
            if idx[j] < k {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

/// Soft-margin linear SVM objective with slacks eliminated:
/// ½‖β‖² + μ Σ max(0, 1 − yᵢ βᵀxᵢ).
pub fn hinge_objective(beta: &[f64], xs: &[Vec<f64>], ys: &[f64], mu: f64) -> f64 {
    let reg: f64 = 0.5 * beta.iter().map(|b| b * b).sum::<f64>();
    let loss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let m: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
            (1.0 - y * m).max(0.0)
        })
        .sum();
    reg + mu * loss
}

/// Two-parameter grid search with successive refinement.
pub fn grid_min_2d<F: Fn(f64, f64) -> f64>(f: F, lo: f64, hi: f64) -> (f64, f64) {
    let (mut cx, mut cy) = (0.5 * (lo + hi), 0.5 * (lo + hi));
    let mut half = 0.5 * (hi - lo);
    while half > 1e-9 {
        let mut best = (f(cx, cy), cx, cy);
        let k = 41;
        for i in 0..k {
            for j in 0..k {
                let x = cx + (i as f64 / (k - 1) as f64 * 2.0 - 1.0) * half;
                let y = cy + (j as f64 / (k - 1) as f64 * 2.0 - 1.0) * half;
                let v = f(x, y);
                if v < best.0 {
                    best = (v, x, y);
                }
            }
        }
        cx = best.1;
        cy = best.2;
        half *= 0.25;
    }
    (cx, cy)
}
