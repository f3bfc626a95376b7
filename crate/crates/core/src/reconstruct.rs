//! Structure reconstruction: a heterophilic graph `H` from feature and
//! topology dissimilarity, and a homophilic graph `S` learned row by row.
//!
//! `S` minimizes, for every row `i` over the probability simplex (with
//! `S_ii = 0`),
//!
//! ```text
//! sum_j  S_ij K_ij + S_ij^2 + (S2_ij - S_ij)^2,     K_ij = |x_i - x_j|^2,  S2 = S S
//! ```
//!
//! With `S`, `S2` and the cross-row constants frozen at the previous iterate
//! the stationarity condition is affine in `S_ij`, which gives the clamped
//! closed form
//!
//! ```text
//! S_ij = [ (2 S2_ij + lambda - K_ij - 2 sum_{f != j} S_jf C_f) / (2 (2 + sum_{f != j} S_jf^2)) ]_+
//! C_f  = S2_if - S_ij S_jf - S_if   (f != i),   0   (f == i)
//! ```
//!
//! The multiplier `lambda` enforces the row's sum-to-one constraint. The row
//! sum is continuous, piecewise linear and nondecreasing in `lambda`, so it
//! is found by bisection.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::NormalizedGraph;
use crate::matrix::Matrix;

/// Cosine similarities between feature rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub w: Matrix,
}

/// `W_ij = <x_i, x_j> / (|x_i| |x_j|)`. Zero rows get 0 off the diagonal
/// and 1 on it.
pub fn cosine_similarity_matrix(x: &Matrix) -> SimilarityMatrix {
    let n = x.rows();
    let (unit, norms) = x.normalize_rows();
    let mut w = unit.matmul_t(&unit);
    for i in 0..n {
        // Exact 1 on the diagonal, whatever the rounding of |x_i|^2 / |x_i|^2.
        w[(i, i)] = 1.0;
        if norms[i] == 0.0 {
            for j in 0..n {
                if j != i {
                    w[(i, j)] = 0.0;
                    w[(j, i)] = 0.0;
                }
            }
        }
    }
    SimilarityMatrix { w }
}

/// Sparse graph linking nodes that are dissimilar in both feature and
/// topology space.
#[derive(Debug, Clone, PartialEq)]
pub struct HeterophilicGraph {
    pub h: Matrix,
    /// Edges kept per row.
    pub budget: usize,
    /// Set when every candidate weight vanished (identical features).
    pub degenerate: bool,
}

/// Default per-row edge budget of the heterophilic graph.
pub const DEFAULT_HETEROPHILIC_BUDGET: usize = 5;

/// `H = (1 - W) ⊙ (1 - A)` with zero diagonal, keeping the `budget` largest
/// entries of each row (lowest column index wins ties).
pub fn build_heterophilic(
    w: &SimilarityMatrix,
    a: &NormalizedGraph,
    budget: usize,
) -> Result<HeterophilicGraph> {
    let n = w.w.rows();
    if !w.w.is_square() || a.n() != n {
        return Err(Error::shape("build_heterophilic", n, a.n()));
    }
    if budget == 0 {
        return Err(Error::InvalidArgument(
            "edge budget must be at least 1".into(),
        ));
    }
    let mut h = Matrix::zeros(n, n);
    let mut candidates: Vec<(usize, f64)> = Vec::with_capacity(n);
    for i in 0..n {
        candidates.clear();
        candidates.extend(
            (0..n)
                .filter(|&j| j != i)
                .map(|j| (j, (1.0 - w.w[(i, j)]) * (1.0 - a.a_norm[(i, j)]))),
        );
        // Descending weight, ascending column on ties; stable order makes
        // the selection deterministic.
        candidates.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
        for &(j, v) in candidates.iter().take(budget) {
            if v > 0.0 {
                h[(i, j)] = v;
            }
        }
    }
    let degenerate = h.count_nonzero() == 0;
    Ok(HeterophilicGraph {
        h,
        budget,
        degenerate,
    })
}

/// `K_ij = |x_i - x_j|^2`, computed directly (no Gram-matrix cancellation).
pub fn squared_distance_matrix(x: &Matrix) -> Matrix {
    let n = x.rows();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d: f64 = x
                .row(i)
                .iter()
                .zip(x.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            k[(i, j)] = d;
            k[(j, i)] = d;
        }
    }
    k
}

/// One row of the frozen-iterate problem.
///
/// `coupling[j]` is `sum_{f != j} S_jf C_f` and `denom[j]` is
/// `2 (2 + sum_{f != j} S_jf^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RowSubproblem {
    pub row: usize,
    pub k_row: Vec<f64>,
    pub s2_row: Vec<f64>,
    pub coupling: Vec<f64>,
    pub denom: Vec<f64>,
}

impl RowSubproblem {
    pub fn new(
        row: usize,
        k_row: Vec<f64>,
        s2_row: Vec<f64>,
        coupling: Vec<f64>,
        denom: Vec<f64>,
    ) -> Result<Self> {
        let n = k_row.len();
        if s2_row.len() != n || coupling.len() != n || denom.len() != n {
            return Err(Error::shape("RowSubproblem", n, s2_row.len()));
        }
        if row >= n {
            return Err(Error::InvalidArgument(format!(
                "row {row} out of range {n}"
            )));
        }
        if n < 2 {
            return Err(Error::InvalidArgument(
                "a row needs at least one off-diagonal entry".into(),
            ));
        }
        for (j, &d) in denom.iter().enumerate() {
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "denominator {d} at column {j} is not positive"
                )));
            }
        }
        let all = k_row.iter().chain(&s2_row).chain(&coupling);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("row subproblem {row}")));
        }
        Ok(RowSubproblem {
            row,
            k_row,
            s2_row,
            coupling,
            denom,
        })
    }

    pub fn len(&self) -> usize {
        self.k_row.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k_row.is_empty()
    }

    /// The `lambda`-free part of the numerator: `2 S2_ij - K_ij - 2 coupling_j`.
    #[inline]
    fn offset(&self, j: usize) -> f64 {
        2.0 * self.s2_row[j] - self.k_row[j] - 2.0 * self.coupling[j]
    }

    fn row_sum(&self, lambda: f64) -> f64 {
        (0..self.len())
            .filter(|&j| j != self.row)
            .map(|j| ((self.offset(j) + lambda) / self.denom[j]).max(0.0))
            .sum()
    }
}

/// Clamped closed-form row for a given multiplier. The diagonal entry is 0.
pub fn row_update(sub: &RowSubproblem, lambda: f64) -> Vec<f64> {
    (0..sub.len())
        .map(|j| {
            if j == sub.row {
                0.0
            } else {
                ((sub.offset(j) + lambda) / sub.denom[j]).max(0.0)
            }
        })
        .collect()
}

/// Cap on bracket doublings before the solver gives up.
pub const MAX_BRACKET_DOUBLINGS: u32 = 1_000_000;
/// Row-sum tolerance the multiplier is solved to.
pub const ROW_SUM_TOL: f64 = 1e-10;

/// Multiplier making the clamped row sum to one.
pub fn solve_lambda(sub: &RowSubproblem) -> Result<f64> {
    let max_offset = (0..sub.len())
        .filter(|&j| j != sub.row)
        .map(|j| sub.offset(j))
        .fold(f64::NEG_INFINITY, f64::max);
    // Every numerator is <= 0 here, so the sum is exactly 0.
    let mut lo = -max_offset;
    let mut step = 1.0;
    let mut hi = lo + step;
    let mut doublings = 0u32;
    loop {
        let s = sub.row_sum(hi);
        if s.is_nan() || !hi.is_finite() {
            return Err(Error::SolverFailure(format!(
                "row {}: bracket for the multiplier diverged",
                sub.row
            )));
        }
        if s >= 1.0 {
            break;
        }
        lo = hi;
        step *= 2.0;
        hi = lo + step;
        doublings += 1;
        if doublings > MAX_BRACKET_DOUBLINGS {
            return Err(Error::SolverFailure(format!(
                "row {}: no bracket after {MAX_BRACKET_DOUBLINGS} doublings",
                sub.row
            )));
        }
    }

    let mut lambda = hi;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let s = sub.row_sum(mid);
        lambda = mid;
        if libm::fabs(s - 1.0) <= ROW_SUM_TOL {
            break;
        }
        if s < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    // On the active set the sum is affine in lambda; solve it exactly and
    // keep the result when it is at least as accurate.
    let (mut inv_sum, mut off_sum) = (0.0, 0.0);
    for j in (0..sub.len()).filter(|&j| j != sub.row) {
        if sub.offset(j) + lambda > 0.0 {
            inv_sum += 1.0 / sub.denom[j];
            off_sum += sub.offset(j) / sub.denom[j];
        }
    }
    if inv_sum > 0.0 {
        let exact = (1.0 - off_sum) / inv_sum;
        if libm::fabs(sub.row_sum(exact) - 1.0) <= libm::fabs(sub.row_sum(lambda) - 1.0) {
            lambda = exact;
        }
    }
    let err = libm::fabs(sub.row_sum(lambda) - 1.0);
    if err > ROW_SUM_TOL {
        return Err(Error::SolverFailure(format!(
            "row {}: row sum misses 1 by {err:e}",
            sub.row
        )));
    }
    Ok(lambda)
}

/// Quantities frozen at the previous iterate `S`.
#[derive(Debug, Clone)]
pub struct FrozenIterate {
    s: Matrix,
    s2: Matrix,
    /// `S S2ᵀ`, entry `(j, i) = sum_f S_jf S2_if`.
    s_s2t: Matrix,
    /// `S Sᵀ`, entry `(j, i) = sum_f S_jf S_if`.
    s_st: Matrix,
    row_sq: Vec<f64>,
}

impl FrozenIterate {
    pub fn new(s: &Matrix) -> Result<Self> {
        if !s.is_square() {
            return Err(Error::shape("FrozenIterate", "square", s.rows()));
        }
        let s2 = s.matmul(s);
        let s_s2t = s.matmul_t(&s2);
        let s_st = s.matmul_t(s);
        let row_sq = s
            .iter_rows()
            .map(|r| r.iter().map(|v| v * v).sum())
            .collect();
        Ok(FrozenIterate {
            s: s.clone(),
            s2,
            s_s2t,
            s_st,
            row_sq,
        })
    }

    pub fn s2(&self) -> &Matrix {
        &self.s2
    }

    /// Row `i` subproblem for squared distances `k`.
    pub fn subproblem(&self, i: usize, k: &Matrix) -> Result<RowSubproblem> {
        let s = &self.s;
        let s2 = &self.s2;
        let n = s.rows();
        if k.shape() != (n, n) {
            return Err(Error::shape("subproblem distances", n, k.rows()));
        }
        let mut coupling = alloc::vec![0.0; n];
        let mut denom = alloc::vec![0.0; n];
        for j in 0..n {
            let s_jj = s[(j, j)];
            denom[j] = 2.0 * (2.0 + self.row_sq[j] - s_jj * s_jj);
            if j == i {
                continue;
            }
            // sum over f outside {i, j} of S_jf (S2_if - S_ij S_jf - S_if)
            let s_ji = s[(j, i)];
            let cross_s2 = self.s_s2t[(j, i)] - s_jj * s2[(i, j)] - s_ji * s2[(i, i)];
            let sq = self.row_sq[j] - s_jj * s_jj - s_ji * s_ji;
            let cross_s = self.s_st[(j, i)] - s_jj * s[(i, j)] - s_ji * s[(i, i)];
            coupling[j] = cross_s2 - s[(i, j)] * sq - cross_s;
        }
        RowSubproblem::new(i, k.row(i).to_vec(), s2.row(i).to_vec(), coupling, denom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HomophilicConfig {
    pub max_iters: usize,
    /// Stop once the largest row-wise L1 change falls below this.
    pub tol: f64,
}

impl Default for HomophilicConfig {
    fn default() -> Self {
        HomophilicConfig {
            max_iters: 10,
            tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomophilicGraph {
    /// Row-stochastic, nonnegative, zero diagonal.
    pub s: Matrix,
    pub iterations_run: usize,
    /// Largest row-wise L1 change in the last iteration.
    pub residual: f64,
}

/// One Jacobi sweep: every row re-solved against the same frozen iterate.
pub fn homophilic_step(s: &Matrix, k: &Matrix) -> Result<Matrix> {
    let frozen = FrozenIterate::new(s)?;
    let n = s.rows();
    let mut next = Matrix::zeros(n, n);
    for i in 0..n {
        let sub = frozen.subproblem(i, k)?;
        let lambda = solve_lambda(&sub)?;
        next.row_mut(i).copy_from_slice(&row_update(&sub, lambda));
    }
    Ok(next)
}

/// Learns `S` starting from the normalized adjacency with its diagonal
/// removed.
pub fn build_homophilic(
    x: &Matrix,
    a: &NormalizedGraph,
    cfg: &HomophilicConfig,
) -> Result<HomophilicGraph> {
    let n = a.n();
    if x.rows() != n {
        return Err(Error::shape("build_homophilic features", n, x.rows()));
    }
    if cfg.max_iters == 0 || !(cfg.tol > 0.0) {
        return Err(Error::InvalidArgument(
            "max_iters must be >= 1 and tol > 0".into(),
        ));
    }
    let k = squared_distance_matrix(x);
    if !k.all_finite() {
        return Err(Error::NonFinite("squared feature distances".into()));
    }
    let mut s = a.a_norm.clone();
    for i in 0..n {
        s[(i, i)] = 0.0;
    }
    let mut residual = f64::INFINITY;
    let mut iterations_run = 0;
    for _ in 0..cfg.max_iters {
        let next = homophilic_step(&s, &k)?;
        residual = (0..n)
            .map(|i| {
                next.row(i)
                    .iter()
                    .zip(s.row(i))
                    .map(|(a, b)| libm::fabs(a - b))
                    .sum::<f64>()
            })
            .fold(0.0, f64::max);
        s = next;
        iterations_run += 1;
        if residual < cfg.tol {
            break;
        }
    }
    Ok(HomophilicGraph {
        s,
        iterations_run,
        residual,
    })
}
