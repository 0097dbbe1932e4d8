//! Sparse symmetric positive-definite solver: CSR storage plus
//! Jacobi-preconditioned conjugate gradients.
//!
//! The nodal conductance matrices built by the network module are SPD by
//! construction (conductance Laplacian plus positive diagonal anchors from
//! grounded and driven branches), which is exactly CG territory. Iteration
//! order is fixed and all reductions are sequential, so a solve is bitwise
//! deterministic; the execution mode only parallelizes the per-row
//! mat-vec, whose per-element accumulation order never changes.

use crate::error::{Error, Result};
use crate::exec::{map_range, ExecMode};

/// Compressed sparse row matrix, assembled once from triplets.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds an `n x n` CSR matrix from coordinate triplets, summing
    /// duplicates. Column indices within a row end up sorted.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; n + 1];
        for &(r, _, _) in triplets {
            counts[r + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0f64; triplets.len()];
        let mut cursor = counts.clone();
        for &(r, c, v) in triplets {
            let slot = cursor[r];
            cols[slot] = c;
            vals[slot] = v;
            cursor[r] += 1;
        }
        // Sort each row by column and merge duplicates.
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        for r in 0..n {
            let lo = counts[r];
            let hi = counts[r + 1];
            let mut entries: Vec<(usize, f64)> =
                cols[lo..hi].iter().copied().zip(vals[lo..hi].iter().copied()).collect();
            entries.sort_by_key(|&(c, _)| c);
            for (c, v) in entries {
                if let Some(last) = col_idx.last() {
                    if *last == c && col_idx.len() > row_ptr[r] {
                        *values.last_mut().unwrap() += v;
                        continue;
                    }
                }
                col_idx.push(c);
                values.push(v);
            }
            row_ptr[r + 1] = col_idx.len();
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entries of one row as (column, value) pairs.
    pub fn row_entries(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        self.col_idx[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|r| {
                self.row_entries(r)
                    .find(|&(c, _)| c == r)
                    .map_or(0.0, |(_, v)| v)
            })
            .collect()
    }

    /// `y = A x`, row-parallel.
    pub fn mul_vec(&self, x: &[f64], mode: ExecMode) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n);
        map_range(mode, self.n, |r| {
            let mut acc = 0.0;
            for (c, v) in self.row_entries(r) {
                acc += v * x[c];
            }
            acc
        })
    }

    /// Maximum relative asymmetry |A - A^T| / max|A|; zero for the
    /// networks built here.
    pub fn asymmetry(&self) -> f64 {
        let mut max_abs: f64 = 0.0;
        for &v in &self.values {
            max_abs = max_abs.max(v.abs());
        }
        if max_abs == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for r in 0..self.n {
            for (c, v) in self.row_entries(r) {
                let vt = self
                    .row_entries(c)
                    .find(|&(cc, _)| cc == r)
                    .map_or(0.0, |(_, v)| v);
                worst = worst.max((v - vt).abs());
            }
        }
        worst / max_abs
    }
}

/// Converged CG solution.
#[derive(Debug, Clone)]
pub struct CgSolution {
    pub x: Vec<f64>,
    /// Final `||b - Ax|| / ||b||` (0 when `b = 0`).
    pub relative_residual: f64,
    pub iterations: usize,
}

/// One tridiagonal block of a line preconditioner, Thomas-factored once.
///
/// `idx` lists the global unknown indices along the line; `sub[k]` is the
/// matrix entry between `idx[k]` and `idx[k+1]`; `dp` holds the pivots of
/// the in-place LU.
#[derive(Debug, Clone)]
pub struct TriLine {
    idx: Vec<usize>,
    sub: Vec<f64>,
    dp: Vec<f64>,
    w: Vec<f64>,
}

impl TriLine {
    /// Factors a tridiagonal line with the given diagonal and off-diagonal
    /// entries. Returns `None` if a pivot degenerates (not SPD).
    pub fn factor(idx: Vec<usize>, diag: Vec<f64>, sub: Vec<f64>) -> Option<Self> {
        let n = idx.len();
        debug_assert_eq!(diag.len(), n);
        debug_assert_eq!(sub.len(), n.saturating_sub(1));
        let mut dp = vec![0.0; n];
        let mut w = vec![0.0; n];
        dp[0] = diag[0];
        if dp[0] <= 0.0 {
            return None;
        }
        for k in 1..n {
            w[k] = sub[k - 1] / dp[k - 1];
            dp[k] = diag[k] - w[k] * sub[k - 1];
            if dp[k] <= 0.0 {
                return None;
            }
        }
        Some(Self { idx, sub, dp, w })
    }

    /// Solves this block: gathers `r` along the line, forward/back
    /// substitutes, scatters into `z`.
    fn apply(&self, r: &[f64], z: &mut [f64], scratch: &mut Vec<f64>) {
        let n = self.idx.len();
        scratch.clear();
        scratch.extend(self.idx.iter().map(|&i| r[i]));
        for k in 1..n {
            scratch[k] -= self.w[k] * scratch[k - 1];
        }
        scratch[n - 1] /= self.dp[n - 1];
        for k in (0..n - 1).rev() {
            scratch[k] = (scratch[k] - self.sub[k] * scratch[k + 1]) / self.dp[k];
        }
        for (k, &i) in self.idx.iter().enumerate() {
            z[i] = scratch[k];
        }
    }
}

/// Preconditioner for [`solve_spd`].
///
/// The line variant solves each strongly-coupled wire chain exactly per
/// application, which collapses the along-wire stiffness that otherwise
/// dominates the condition number of crossbar networks; Jacobi is the
/// fallback for degenerate (contracted) topologies.
#[derive(Debug, Clone)]
pub enum Preconditioner {
    Identity,
    /// Inverse diagonal.
    Jacobi(Vec<f64>),
    /// Disjoint tridiagonal blocks covering every unknown exactly once.
    Lines(Vec<TriLine>),
}

impl Preconditioner {
    pub fn jacobi_of(a: &CsrMatrix) -> Result<Self> {
        let mut inv = a.diagonal();
        for d in &mut inv {
            if *d <= 0.0 {
                return Err(Error::Solver {
                    reason: "non-positive diagonal entry: system is singular or not SPD".into(),
                    residual: f64::INFINITY,
                    iterations: 0,
                });
            }
            *d = 1.0 / *d;
        }
        Ok(Preconditioner::Jacobi(inv))
    }

    fn apply(&self, r: &[f64], z: &mut [f64], scratch: &mut Vec<f64>) {
        match self {
            Preconditioner::Identity => z.copy_from_slice(r),
            Preconditioner::Jacobi(inv) => {
                for i in 0..r.len() {
                    z[i] = r[i] * inv[i];
                }
            }
            Preconditioner::Lines(lines) => {
                for line in lines {
                    line.apply(r, z, scratch);
                }
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = b` for SPD `A` by preconditioned CG.
///
/// Iterates to a relative residual of `tol` (or stagnation); errors if the
/// `required` residual bound is still not met when the iteration budget
/// runs out. The zero right-hand side short-circuits to the zero solution.
pub fn solve_spd(
    a: &CsrMatrix,
    b: &[f64],
    precond: &Preconditioner,
    tol: f64,
    required: f64,
    mode: ExecMode,
) -> Result<CgSolution> {
    let n = a.size();
    debug_assert_eq!(b.len(), n);
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok(CgSolution {
            x: vec![0.0; n],
            relative_residual: 0.0,
            iterations: 0,
        });
    }

    let mut scratch = Vec::new();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    precond.apply(&r, &mut z, &mut scratch);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let max_iter = 4 * n + 100;
    let mut best_rel = f64::INFINITY;

    for iter in 1..=max_iter {
        let q = a.mul_vec(&p, mode);
        let pq = dot(&p, &q);
        if pq <= 0.0 || !pq.is_finite() {
            return Err(Error::Solver {
                reason: "curvature <= 0 encountered: system is not SPD".into(),
                residual: best_rel,
                iterations: iter,
            });
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        let rel = norm(&r) / b_norm;
        best_rel = best_rel.min(rel);
        if rel <= tol {
            return Ok(CgSolution {
                x,
                relative_residual: rel,
                iterations: iter,
            });
        }
        precond.apply(&r, &mut z, &mut scratch);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }

    // Accept a stagnated run if it already satisfies the hard requirement.
    let r_final = {
        let ax = a.mul_vec(&x, mode);
        let mut rr = vec![0.0; n];
        for i in 0..n {
            rr[i] = b[i] - ax[i];
        }
        norm(&rr) / b_norm
    };
    if r_final <= required {
        return Ok(CgSolution {
            x,
            relative_residual: r_final,
            iterations: max_iter,
        });
    }
    Err(Error::Solver {
        reason: "conjugate gradient did not converge".into(),
        residual: r_final,
        iterations: max_iter,
    })
}
