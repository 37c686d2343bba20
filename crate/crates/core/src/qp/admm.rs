use std::time::Instant;

use nalgebra::DVector;

use super::csr::{norm_inf, Csr};
use super::linsys::{Elimination, ReducedSystem};
use super::residuals::kkt_residuals;
use super::{is_infinite, QpProblem, QpSettings, QpSolution, QpStatus, INFINITY};

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_FACTOR: f64 = 1e3;
const RHO_ADAPT_RATIO: f64 = 5.0;
const SCALING_MIN: f64 = 1e-4;
const SCALING_MAX: f64 = 1e4;

/// Ruiz-equilibrated copy of the problem: `P̄ = c·DPD`, `q̄ = c·Dq`,
/// `Ā = EAD`, `l̄ = El`, `ū = Eu`.
struct Scaled {
    p: Csr,
    a: Csr,
    a_cols: Vec<Vec<usize>>,
    q: Vec<f64>,
    l: Vec<f64>,
    u: Vec<f64>,
    d: Vec<f64>,
    e: Vec<f64>,
    c: f64,
}

fn limit_scaling(v: f64) -> f64 {
    if v < SCALING_MIN {
        1.0
    } else {
        v.min(SCALING_MAX)
    }
}

impl Scaled {
    fn new(problem: &QpProblem, iters: usize) -> Self {
        let mut p = Csr::from_dense(problem.p());
        let mut a = Csr::from_dense(problem.a());
        let mut q: Vec<f64> = problem.q().iter().copied().collect();
        let (dim, m) = (problem.dim(), problem.rows());
        let mut d = vec![1.0; dim];
        let mut e = vec![1.0; m];
        let mut c = 1.0;

        for _ in 0..iters {
            let pn = p.col_inf_norms();
            let an = a.col_inf_norms();
            let dt: Vec<f64> = pn
                .iter()
                .zip(&an)
                .map(|(x, y)| 1.0 / limit_scaling(x.max(*y)).sqrt())
                .collect();
            let et: Vec<f64> = a
                .row_inf_norms()
                .iter()
                .map(|x| 1.0 / limit_scaling(*x).sqrt())
                .collect();
            p.scale(&dt, &dt);
            a.scale(&et, &dt);
            q.iter_mut().zip(&dt).for_each(|(qi, s)| *qi *= s);
            d.iter_mut().zip(&dt).for_each(|(di, s)| *di *= s);
            e.iter_mut().zip(&et).for_each(|(ei, s)| *ei *= s);

            let pn = p.col_inf_norms();
            let mean = if dim > 0 {
                pn.iter().sum::<f64>() / dim as f64
            } else {
                0.0
            };
            let ct = 1.0 / limit_scaling(mean.max(norm_inf(&q)));
            p.scale_all(ct);
            q.iter_mut().for_each(|qi| *qi *= ct);
            c *= ct;
        }

        let scale_bound = |b: f64, ei: f64| {
            if is_infinite(b) {
                INFINITY.copysign(b)
            } else {
                (b * ei).clamp(-INFINITY, INFINITY)
            }
        };
        let l = problem
            .l()
            .iter()
            .zip(&e)
            .map(|(&b, &ei)| scale_bound(b, ei))
            .collect();
        let u = problem
            .u()
            .iter()
            .zip(&e)
            .map(|(&b, &ei)| scale_bound(b, ei))
            .collect();
        let a_cols = a.column_rows();
        Self {
            p,
            a,
            a_cols,
            q,
            l,
            u,
            d,
            e,
            c,
        }
    }

    fn unscale_x(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(x.len(), x.iter().zip(&self.d).map(|(v, d)| v * d))
    }

    fn unscale_y(&self, y: &[f64]) -> DVector<f64> {
        DVector::from_iterator(y.len(), y.iter().zip(&self.e).map(|(v, e)| v * e / self.c))
    }
}

fn rho_vector(s: &Scaled, rho: f64) -> Vec<f64> {
    s.l.iter()
        .zip(&s.u)
        .map(|(&l, &u)| {
            if is_infinite(l) && is_infinite(u) {
                RHO_MIN
            } else if l == u {
                RHO_EQ_FACTOR * rho
            } else {
                rho
            }
        })
        .collect()
}

struct Workspace {
    x: Vec<f64>,
    z: Vec<f64>,
    y: Vec<f64>,
    delta_x: Vec<f64>,
    delta_y: Vec<f64>,
    ax: Vec<f64>,
    px: Vec<f64>,
    aty: Vec<f64>,
    rhs: Vec<f64>,
    tmp_m: Vec<f64>,
    x_tilde: Vec<f64>,
    z_tilde: Vec<f64>,
}

impl Workspace {
    fn new(dim: usize, m: usize) -> Self {
        Self {
            x: vec![0.0; dim],
            z: vec![0.0; m],
            y: vec![0.0; m],
            delta_x: vec![0.0; dim],
            delta_y: vec![0.0; m],
            ax: vec![0.0; m],
            px: vec![0.0; dim],
            aty: vec![0.0; dim],
            rhs: vec![0.0; dim],
            tmp_m: vec![0.0; m],
            x_tilde: vec![0.0; dim],
            z_tilde: vec![0.0; m],
        }
    }
}

/// Residuals of the current iterate, both unscaled (termination) and scaled
/// (step-size adaptation).
struct IterResiduals {
    prim: f64,
    dual: f64,
    prim_norm: f64,
    dual_norm: f64,
    prim_scaled: f64,
    dual_scaled: f64,
    prim_norm_scaled: f64,
    dual_norm_scaled: f64,
}

fn iterate_residuals(s: &Scaled, w: &mut Workspace) -> IterResiduals {
    s.a.mul_vec(&w.x, &mut w.ax);
    s.p.mul_vec(&w.x, &mut w.px);
    s.a.mul_t_vec(&w.y, &mut w.aty);

    let mut prim: f64 = 0.0;
    let mut prim_scaled: f64 = 0.0;
    let mut ax_n: f64 = 0.0;
    let mut z_n: f64 = 0.0;
    let mut ax_ns: f64 = 0.0;
    let mut z_ns: f64 = 0.0;
    for i in 0..w.ax.len() {
        let inv_e = 1.0 / s.e[i];
        let r = w.ax[i] - w.z[i];
        prim = prim.max((r * inv_e).abs());
        prim_scaled = prim_scaled.max(r.abs());
        ax_n = ax_n.max((w.ax[i] * inv_e).abs());
        z_n = z_n.max((w.z[i] * inv_e).abs());
        ax_ns = ax_ns.max(w.ax[i].abs());
        z_ns = z_ns.max(w.z[i].abs());
    }

    let inv_c = 1.0 / s.c;
    let mut dual: f64 = 0.0;
    let mut dual_scaled: f64 = 0.0;
    let (mut px_n, mut aty_n, mut q_n): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let (mut px_ns, mut aty_ns, mut q_ns): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for j in 0..w.px.len() {
        let inv_d = inv_c / s.d[j];
        let r = w.px[j] + s.q[j] + w.aty[j];
        dual = dual.max((r * inv_d).abs());
        dual_scaled = dual_scaled.max(r.abs());
        px_n = px_n.max((w.px[j] * inv_d).abs());
        aty_n = aty_n.max((w.aty[j] * inv_d).abs());
        q_n = q_n.max((s.q[j] * inv_d).abs());
        px_ns = px_ns.max(w.px[j].abs());
        aty_ns = aty_ns.max(w.aty[j].abs());
        q_ns = q_ns.max(s.q[j].abs());
    }
    IterResiduals {
        prim,
        dual,
        prim_norm: ax_n.max(z_n),
        dual_norm: px_n.max(aty_n).max(q_n),
        prim_scaled,
        dual_scaled,
        prim_norm_scaled: ax_ns.max(z_ns),
        dual_norm_scaled: px_ns.max(aty_ns).max(q_ns),
    }
}

fn primal_infeasible(s: &Scaled, w: &mut Workspace, eps: f64) -> bool {
    let norm = w
        .delta_y
        .iter()
        .zip(&s.e)
        .fold(0.0f64, |acc, (dy, e)| acc.max((dy * e).abs()));
    if norm <= eps {
        return false;
    }
    let dy: Vec<f64> = w.delta_y.iter().map(|v| v / norm).collect();
    let mut support = 0.0;
    for i in 0..dy.len() {
        if dy[i] > 0.0 {
            support += s.u[i] * dy[i];
        } else if dy[i] < 0.0 {
            support += s.l[i] * dy[i];
        }
    }
    if !(support < -eps) {
        return false;
    }
    s.a.mul_t_vec(&dy, &mut w.rhs);
    let at_norm = w
        .rhs
        .iter()
        .zip(&s.d)
        .fold(0.0f64, |acc, (v, d)| acc.max((v / d).abs()));
    at_norm < eps
}

fn dual_infeasible(s: &Scaled, w: &mut Workspace, eps: f64) -> bool {
    let norm = w
        .delta_x
        .iter()
        .zip(&s.d)
        .fold(0.0f64, |acc, (dx, d)| acc.max((dx * d).abs()));
    if norm <= eps {
        return false;
    }
    let dx: Vec<f64> = w.delta_x.iter().map(|v| v / norm).collect();
    let qdx: f64 = s.q.iter().zip(&dx).map(|(a, b)| a * b).sum();
    if !(qdx < -s.c * eps) {
        return false;
    }
    s.p.mul_vec(&dx, &mut w.rhs);
    let p_norm = w
        .rhs
        .iter()
        .zip(&s.d)
        .fold(0.0f64, |acc, (v, d)| acc.max((v / d).abs()));
    if p_norm >= s.c * eps {
        return false;
    }
    s.a.mul_vec(&dx, &mut w.tmp_m);
    for i in 0..w.tmp_m.len() {
        let adx = w.tmp_m[i] / s.e[i];
        if !is_infinite(s.u[i]) && adx > eps {
            return false;
        }
        if !is_infinite(s.l[i]) && adx < -eps {
            return false;
        }
    }
    true
}

/// Which bound a row is held at during polishing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bound {
    Free,
    Lower,
    Upper,
}

/// Solves the equality-constrained QP on a guessed active set, then corrects
/// the guess (activate violated rows, release rows whose multiplier has the
/// wrong sign) and re-solves. Each correction starts from the best set seen
/// so far; once a batch correction fails to improve it, rows are flipped one
/// at a time in order of violation. Returns unscaled `(z, λ)`.
fn polish(
    s: &Scaled,
    elim: &Elimination,
    guess: &[Bound],
    settings: &QpSettings,
) -> Option<(DVector<f64>, DVector<f64>)> {
    struct Attempt {
        worst: f64,
        active: Vec<Bound>,
        x: Vec<f64>,
        y: Vec<f64>,
        ax: Vec<f64>,
        order: Vec<usize>,
    }
    let m = s.l.len();
    let evaluate = |active: Vec<Bound>| -> Option<Attempt> {
        let (x, y) = solve_on_active_set(s, elim, &active, settings)?;
        let mut ax = vec![0.0; m];
        s.a.mul_vec(&x, &mut ax);
        let viol: Vec<f64> = (0..m)
            .map(|i| match active[i] {
                _ if s.l[i] == s.u[i] => 0.0,
                Bound::Lower => y[i],
                Bound::Upper => -y[i],
                Bound::Free => (s.l[i] - ax[i]).max(ax[i] - s.u[i]),
            })
            .collect();
        let mut order: Vec<usize> = (0..m).filter(|&i| viol[i] > 1e-9).collect();
        order.sort_by(|&a, &b| viol[b].total_cmp(&viol[a]));
        let worst = order.first().map_or(0.0, |&i| viol[i]);
        let cut = worst * settings.polish_active_fraction;
        order.retain(|&i| viol[i] >= cut);
        Some(Attempt { worst, active, x, y, ax, order })
    };
    let flip = |a: &Attempt, i: usize| match a.active[i] {
        Bound::Free if a.ax[i] < s.l[i] => Bound::Lower,
        Bound::Free => Bound::Upper,
        _ => Bound::Free,
    };

    let mut best = evaluate(guess.to_vec())?;
    // `None` while batch corrections still improve; then the index of the
    // next single row to try.
    let mut single: Option<usize> = None;
    for _ in 0..settings.polish_active_rounds {
        if best.worst <= 1e-9 {
            break;
        }
        let mut active = best.active.clone();
        match single {
            None => {
                for &i in &best.order {
                    active[i] = flip(&best, i);
                }
            }
            Some(k) if k < best.order.len() => {
                let i = best.order[k];
                active[i] = flip(&best, i);
            }
            Some(_) => break,
        }
        let Some(next) = evaluate(active) else { break };
        if next.worst < best.worst {
            best = next;
            single = single.map(|_| 0);
        } else {
            single = Some(single.map_or(0, |k| k + 1));
        }
    }
    Some((s.unscale_x(&best.x), s.unscale_y(&best.y)))
}

fn guess_active_set(s: &Scaled, w: &Workspace) -> Vec<Bound> {
    (0..s.l.len())
        .map(|i| {
            if s.l[i] == s.u[i] || w.z[i] - s.l[i] < -w.y[i] {
                Bound::Lower
            } else if s.u[i] - w.z[i] < w.y[i] {
                Bound::Upper
            } else {
                Bound::Free
            }
        })
        .collect()
}

/// Regularized KKT solve on a fixed active set with iterative refinement
/// against the unregularized system. Scaled space.
fn solve_on_active_set(
    s: &Scaled,
    elim: &Elimination,
    bounds: &[Bound],
    settings: &QpSettings,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let m = s.l.len();
    let dim = s.q.len();
    let delta = settings.polish_delta;
    let active: Vec<bool> = bounds.iter().map(|&b| b != Bound::Free).collect();
    let target: Vec<f64> = bounds
        .iter()
        .enumerate()
        .map(|(i, b)| match b {
            Bound::Lower => s.l[i],
            Bound::Upper => s.u[i],
            Bound::Free => 0.0,
        })
        .collect();
    let weights: Vec<f64> = active.iter().map(|&a| if a { 1.0 / delta } else { 0.0 }).collect();
    let mut sys = ReducedSystem::factor(&s.p, &s.a, elim, &weights, delta)?;

    // Regularized KKT solve: (P + δI + A_Rᵀ A_R / δ) x = r1 + A_Rᵀ r2 / δ,
    // y_R = (A_R x − r2) / δ.
    let mut rhs = vec![0.0; dim];
    let mut solve_reg = |r1: &[f64], r2: &[f64], x: &mut [f64], y: &mut [f64]| {
        rhs.copy_from_slice(r1);
        for i in 0..m {
            if active[i] && r2[i] != 0.0 {
                for (j, v) in s.a.row(i) {
                    rhs[j] += v * r2[i] / delta;
                }
            }
        }
        sys.solve(elim, &rhs, x);
        for i in 0..m {
            y[i] = if active[i] {
                (s.a.row(i).map(|(j, v)| v * x[j]).sum::<f64>() - r2[i]) / delta
            } else {
                0.0
            };
        }
    };

    let neg_q: Vec<f64> = s.q.iter().map(|v| -v).collect();
    let mut x = vec![0.0; dim];
    let mut y = vec![0.0; m];
    solve_reg(&neg_q, &target, &mut x, &mut y);

    let mut res1 = vec![0.0; dim];
    let mut res2 = vec![0.0; m];
    let mut dx = vec![0.0; dim];
    let mut dy = vec![0.0; m];
    let mut px = vec![0.0; dim];
    let mut aty = vec![0.0; dim];
    let mut ax = vec![0.0; m];
    let mut last = f64::INFINITY;
    for _ in 0..settings.polish_refine_iters {
        s.p.mul_vec(&x, &mut px);
        s.a.mul_t_vec(&y, &mut aty);
        s.a.mul_vec(&x, &mut ax);
        for j in 0..dim {
            res1[j] = neg_q[j] - px[j] - aty[j];
        }
        for i in 0..m {
            res2[i] = if active[i] { target[i] - ax[i] } else { 0.0 };
        }
        let r = norm_inf(&res1).max(norm_inf(&res2));
        if r < 1e-14 || r >= last {
            break;
        }
        last = r;
        solve_reg(&res1, &res2, &mut dx, &mut dy);
        x.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
        y.iter_mut().zip(&dy).for_each(|(a, b)| *a += b);
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return None;
    }
    Some((x, y))
}

fn finish(
    problem: &QpProblem,
    z: DVector<f64>,
    lambda: DVector<f64>,
    status: QpStatus,
    iterations: usize,
    polished: bool,
    start: Instant,
) -> QpSolution {
    let kkt = kkt_residuals(problem, &z, &lambda);
    let objective = problem.objective(&z);
    QpSolution {
        z,
        lambda,
        status,
        primal_residual: kkt.primal,
        dual_residual: kkt.dual,
        complementarity: kkt.complementarity,
        objective,
        iterations,
        polished,
        wall_time: start.elapsed().as_secs_f64(),
    }
}

pub(super) fn solve(problem: &QpProblem, settings: &QpSettings) -> QpSolution {
    let start = Instant::now();
    let dim = problem.dim();
    let m = problem.rows();

    if problem.l().iter().zip(problem.u().iter()).any(|(l, u)| l > u) {
        return finish(
            problem,
            DVector::zeros(dim),
            DVector::zeros(m),
            QpStatus::Infeasible,
            0,
            false,
            start,
        );
    }

    let s = Scaled::new(problem, settings.scaling_iters);
    let elim = Elimination::choose(&s.p, &s.a, &s.a_cols);
    let mut rho = settings.rho.clamp(RHO_MIN, RHO_MAX);
    let mut rho_vec = rho_vector(&s, rho);
    let mut sys = match ReducedSystem::factor(&s.p, &s.a, &elim, &rho_vec, settings.sigma) {
        Some(sys) => sys,
        None => {
            return finish(
                problem,
                DVector::zeros(dim),
                DVector::zeros(m),
                QpStatus::MaxIters,
                0,
                false,
                start,
            )
        }
    };

    let mut w = Workspace::new(dim, m);
    let alpha = settings.alpha;
    let sigma = settings.sigma;
    let check_every = settings.check_interval.max(1);
    let mut eps_rel = settings.eps_rel;
    let mut last_guess: Option<Vec<Bound>> = None;
    let mut polish_failures = 0u32;
    let mut next_polish = 0;

    for iter in 1..=settings.max_iter {
        // x̃ from the reduced KKT system, then relaxed z and dual updates.
        for i in 0..m {
            w.tmp_m[i] = rho_vec[i] * w.z[i] - w.y[i];
        }
        s.a.mul_t_vec(&w.tmp_m, &mut w.rhs);
        for j in 0..dim {
            w.rhs[j] += sigma * w.x[j] - s.q[j];
        }
        sys.solve(&elim, &w.rhs, &mut w.x_tilde);
        s.a.mul_vec(&w.x_tilde, &mut w.z_tilde);

        for j in 0..dim {
            let nx = alpha * w.x_tilde[j] + (1.0 - alpha) * w.x[j];
            w.delta_x[j] = nx - w.x[j];
            w.x[j] = nx;
        }
        for i in 0..m {
            let relaxed = alpha * w.z_tilde[i] + (1.0 - alpha) * w.z[i];
            let nz = (relaxed + w.y[i] / rho_vec[i]).clamp(s.l[i], s.u[i]);
            let ny = w.y[i] + rho_vec[i] * (relaxed - nz);
            w.delta_y[i] = ny - w.y[i];
            w.y[i] = ny;
            w.z[i] = nz;
        }

        if iter % check_every != 0 && iter != settings.max_iter {
            continue;
        }

        let r = iterate_residuals(&s, &mut w);
        let prim_tol = settings.eps_abs + eps_rel * r.prim_norm;
        let dual_tol = settings.eps_dual + eps_rel * r.dual_norm;
        let loose = r.prim <= prim_tol && r.dual <= dual_tol;
        // After the first loose convergence, polish again whenever the
        // guessed active set moves.
        // Failed attempts back off geometrically, counted in checks.
        if settings.polish && (loose || last_guess.is_some()) && iter >= next_polish {
            let guess = guess_active_set(&s, &w);
            if last_guess.as_ref() != Some(&guess) {
                polish_failures += 1;
                next_polish = iter + check_every * (1 << polish_failures.min(4)) / 2;
                if let Some((z, lambda)) = polish(&s, &elim, &guess, settings) {
                    let kkt = kkt_residuals(problem, &z, &lambda);
                    if kkt.within(settings.eps_abs, settings.eps_dual) {
                        return finish(problem, z, lambda, QpStatus::Solved, iter, true, start);
                    }
                }
                last_guess = Some(guess);
            }
        }
        if loose {
            let z = s.unscale_x(&w.x);
            let lambda = s.unscale_y(&w.y);
            let kkt = kkt_residuals(problem, &z, &lambda);
            if kkt.within(settings.eps_abs, settings.eps_dual) {
                return finish(problem, z, lambda, QpStatus::Solved, iter, false, start);
            }
            eps_rel = if eps_rel > 1e-12 { eps_rel / 10.0 } else { 0.0 };
        } else if primal_infeasible(&s, &mut w, settings.eps_infeasible)
            || dual_infeasible(&s, &mut w, settings.eps_infeasible)
        {
            let z = s.unscale_x(&w.x);
            let lambda = s.unscale_y(&w.y);
            return finish(problem, z, lambda, QpStatus::Infeasible, iter, false, start);
        }

        if settings.adaptive_rho {
            let prim_ratio = r.prim_scaled / r.prim_norm_scaled.max(1e-10);
            let dual_ratio = r.dual_scaled / r.dual_norm_scaled.max(1e-10);
            let new_rho = (rho * (prim_ratio / dual_ratio.max(1e-10)).sqrt()).clamp(RHO_MIN, RHO_MAX);
            if new_rho.is_finite() && (new_rho > RHO_ADAPT_RATIO * rho || new_rho < rho / RHO_ADAPT_RATIO) {
                let candidate = rho_vector(&s, new_rho);
                if let Some(new_sys) = ReducedSystem::factor(&s.p, &s.a, &elim, &candidate, sigma) {
                    rho = new_rho;
                    rho_vec = candidate;
                    sys = new_sys;
                }
            }
        }
    }

    let z = s.unscale_x(&w.x);
    let lambda = s.unscale_y(&w.y);
    finish(problem, z, lambda, QpStatus::MaxIters, settings.max_iter, false, start)
}
