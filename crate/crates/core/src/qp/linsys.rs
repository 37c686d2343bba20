//! Direct solves with the reduced KKT matrix `M = P + σI + Aᵀ W A`, `W`
//! diagonal and nonnegative.
//!
//! Columns that are pairwise uncoupled in `M` (an independent set of its
//! sparsity graph, e.g. SVM slack variables) are eliminated first: their block
//! of `M` is diagonal, so the Schur complement on the remaining columns is
//! formed exactly and factored with a dense Cholesky.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::csr::Csr;

#[derive(Debug, Clone)]
pub(crate) struct Elimination {
    /// Position of each column inside its block.
    pos: Vec<usize>,
    is_d: Vec<bool>,
    b_cols: Vec<usize>,
    d_cols: Vec<usize>,
}

impl Elimination {
    /// Greedy independent set over the sparsity graph of `M`, visiting columns
    /// from the sparsest coupling to the densest.
    pub fn choose(p: &Csr, a: &Csr, a_cols: &[Vec<usize>]) -> Self {
        let d = p.ncols;
        let degree: Vec<usize> = (0..d)
            .map(|j| a_cols[j].iter().map(|&r| a.row_nnz(r)).sum::<usize>() + p.row_nnz(j))
            .collect();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by_key(|&j| (degree[j], j));

        let mut is_d = vec![false; d];
        for &j in &order {
            let p_free = p.row(j).all(|(k, _)| k == j || !is_d[k]);
            let a_free = p_free
                && a_cols[j]
                    .iter()
                    .all(|&r| a.row(r).all(|(k, _)| k == j || !is_d[k]));
            if a_free {
                is_d[j] = true;
            }
        }
        let mut pos = vec![0; d];
        let mut b_cols = Vec::new();
        let mut d_cols = Vec::new();
        for j in 0..d {
            if is_d[j] {
                pos[j] = d_cols.len();
                d_cols.push(j);
            } else {
                pos[j] = b_cols.len();
                b_cols.push(j);
            }
        }
        Self {
            pos,
            is_d,
            b_cols,
            d_cols,
        }
    }

    #[cfg(test)]
    pub fn dense_block(&self) -> usize {
        self.b_cols.len()
    }
}

pub(crate) struct ReducedSystem {
    diag_d: Vec<f64>,
    /// Per eliminated column, its coupling to the dense block as (position, value).
    coupling: Vec<Vec<(usize, f64)>>,
    chol: Option<Cholesky<f64, Dyn>>,
    scratch: DVector<f64>,
}

impl ReducedSystem {
    /// Factors `P + σI + Aᵀ diag(weights) A`. Returns `None` when the dense
    /// Schur complement is not numerically positive definite.
    pub fn factor(
        p: &Csr,
        a: &Csr,
        elim: &Elimination,
        weights: &[f64],
        sigma: f64,
    ) -> Option<Self> {
        let nb = elim.b_cols.len();
        let nd = elim.d_cols.len();
        let mut s = DMatrix::<f64>::zeros(nb, nb);
        let mut diag_d = vec![sigma; nd];
        let mut coupling: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nd];

        for i in 0..p.nrows {
            for (j, v) in p.row(i) {
                match (elim.is_d[i], elim.is_d[j]) {
                    (false, false) => s[(elim.pos[i], elim.pos[j])] += v,
                    (true, true) => {
                        debug_assert_eq!(i, j);
                        diag_d[elim.pos[i]] += v;
                    }
                    (true, false) => coupling[elim.pos[i]].push((elim.pos[j], v)),
                    (false, true) => {}
                }
            }
        }
        for k in 0..nb {
            s[(k, k)] += sigma;
        }

        let mut b_entries: Vec<(usize, f64)> = Vec::new();
        for (r, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            b_entries.clear();
            let mut d_entry = None;
            for (j, v) in a.row(r) {
                if elim.is_d[j] {
                    d_entry = Some((elim.pos[j], v));
                } else {
                    b_entries.push((elim.pos[j], v));
                }
            }
            for &(ci, vi) in &b_entries {
                let wv = w * vi;
                for &(cj, vj) in &b_entries {
                    s[(ci, cj)] += wv * vj;
                }
            }
            if let Some((dj, dv)) = d_entry {
                diag_d[dj] += w * dv * dv;
                coupling[dj].extend(b_entries.iter().map(|&(ci, vi)| (ci, w * dv * vi)));
            }
        }

        for (c, &dd) in coupling.iter_mut().zip(&diag_d) {
            if c.is_empty() {
                continue;
            }
            c.sort_by_key(|e| e.0);
            c.dedup_by(|later, kept| {
                if later.0 == kept.0 {
                    kept.1 += later.1;
                    true
                } else {
                    false
                }
            });
            for &(ci, vi) in c.iter() {
                let f = vi / dd;
                for &(cj, vj) in c.iter() {
                    s[(ci, cj)] -= f * vj;
                }
            }
        }
        if diag_d.iter().any(|&v| !(v > 0.0)) {
            return None;
        }

        let chol = if nb > 0 { Some(Cholesky::new(s)?) } else { None };
        Some(Self {
            diag_d,
            coupling,
            chol,
            scratch: DVector::zeros(nb),
        })
    }

    /// Solves `M x = rhs` into `out`.
    pub fn solve(&mut self, elim: &Elimination, rhs: &[f64], out: &mut [f64]) {
        for (k, &j) in elim.b_cols.iter().enumerate() {
            self.scratch[k] = rhs[j];
        }
        for (k, &j) in elim.d_cols.iter().enumerate() {
            let t = rhs[j] / self.diag_d[k];
            for &(ci, v) in &self.coupling[k] {
                self.scratch[ci] -= v * t;
            }
        }
        if let Some(chol) = &self.chol {
            chol.solve_mut(&mut self.scratch);
        }
        for (k, &j) in elim.b_cols.iter().enumerate() {
            out[j] = self.scratch[k];
        }
        for (k, &j) in elim.d_cols.iter().enumerate() {
            let cx: f64 = self.coupling[k]
                .iter()
                .map(|&(ci, v)| v * self.scratch[ci])
                .sum();
            out[j] = (rhs[j] - cx) / self.diag_d[k];
        }
    }
}
