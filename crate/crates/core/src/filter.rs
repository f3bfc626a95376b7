//! Polynomial graph filters over reconstructed graphs.
//!
//! ```text
//! low pass   F = (I - L/2)^k X
//! high pass  F = (L/2)^k X
//! mixed      F = mu (L_H/2)^k X + (1 - mu) (I - L_S/2)^k X
//! ```
//!
//! Powers are applied as `k` successive products with `X`, never formed as
//! matrices.

use alloc::format;

use crate::error::{Error, Result};
use crate::graph::NormalizedGraph;
use crate::matrix::Matrix;

/// Largest supported filter order.
pub const MAX_ORDER: usize = 10;

/// Floor added to degrees so isolated rows normalize to zero.
pub const DEGREE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FilterConfig {
    pub k: usize,
    pub mu: f64,
}

impl FilterConfig {
    pub fn new(k: usize, mu: f64) -> Result<Self> {
        if k > MAX_ORDER {
            return Err(Error::InvalidArgument(format!(
                "filter order {k} exceeds {MAX_ORDER}"
            )));
        }
        if !(0.0..=1.0).contains(&mu) {
            return Err(Error::InvalidArgument(format!(
                "mu = {mu} is outside [0, 1]"
            )));
        }
        Ok(FilterConfig { k, mu })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilteredFeatures {
    pub f: Matrix,
    pub config: FilterConfig,
}

/// Symmetrizes `(M + Mᵀ) / 2` and normalizes it without adding self-loops.
pub fn laplacian_of_reconstructed(m: &Matrix) -> Result<NormalizedGraph> {
    if !m.is_square() {
        return Err(Error::shape(
            "laplacian_of_reconstructed",
            "square",
            m.rows(),
        ));
    }
    let n = m.rows();
    for i in 0..n {
        for (j, &v) in m.row(i).iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidWeight { row: i, col: j });
            }
        }
    }
    let sym = Matrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    if sym.count_nonzero() == 0 {
        return Err(Error::EmptyGraph);
    }
    let inv_sqrt: alloc::vec::Vec<f64> = sym
        .row_sums()
        .into_iter()
        .map(|d| 1.0 / libm::sqrt(d + DEGREE_FLOOR))
        .collect();
    let a_norm = Matrix::from_fn(n, n, |i, j| inv_sqrt[i] * sym[(i, j)] * inv_sqrt[j]);
    Ok(NormalizedGraph::from_normalized(a_norm))
}

fn check(x: &Matrix, l: &Matrix) -> Result<()> {
    if !l.is_square() || l.rows() != x.rows() {
        return Err(Error::shape("filter operator", x.rows(), l.rows()));
    }
    Ok(())
}

/// Applies `op^k` to `x`, where `op = id_weight * I + lap_weight * L`.
fn apply_power(x: &Matrix, l: &Matrix, k: usize, id_weight: f64, lap_weight: f64) -> Matrix {
    let mut f = x.clone();
    for _ in 0..k {
        let mut next = l.matmul(&f);
        next.scale_in_place(lap_weight);
        if id_weight != 0.0 {
            next.add_scaled(&f, id_weight);
        }
        f = next;
    }
    f
}

/// `(I - L/2)^k X`.
pub fn low_pass(x: &Matrix, l: &Matrix, k: usize) -> Result<Matrix> {
    check(x, l)?;
    Ok(apply_power(x, l, k, 1.0, -0.5))
}

/// `(L/2)^k X`.
pub fn high_pass(x: &Matrix, l: &Matrix, k: usize) -> Result<Matrix> {
    check(x, l)?;
    Ok(apply_power(x, l, k, 0.0, 0.5))
}

/// `mu (L_H/2)^k X + (1 - mu) (I - L_S/2)^k X`.
pub fn mixed_filter(
    x: &Matrix,
    l_s: &Matrix,
    l_h: &Matrix,
    cfg: FilterConfig,
) -> Result<FilteredFeatures> {
    let mut f = low_pass(x, l_s, cfg.k)?;
    f.scale_in_place(1.0 - cfg.mu);
    let high = high_pass(x, l_h, cfg.k)?;
    f.add_scaled(&high, cfg.mu);
    if !f.all_finite() {
        return Err(Error::NonFinite("filtered features".into()));
    }
    Ok(FilteredFeatures { f, config: cfg })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{normalize_adjacency, Graph};

    fn path3() -> NormalizedGraph {
        normalize_adjacency(&Graph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap())
    }

    fn features() -> Matrix {
        Matrix::from_rows(&[[1.0, -2.0], [0.5, 3.0], [-1.5, 0.25]])
    }

    fn naive_mul(a: &Matrix, b: &Matrix) -> Matrix {
        Matrix::from_fn(a.rows(), b.cols(), |i, j| {
            (0..a.cols()).map(|k| a[(i, k)] * b[(k, j)]).sum()
        })
    }

    #[test]
    fn order_zero_is_identity() {
        let g = path3();
        let x = features();
        assert_eq!(low_pass(&x, &g.laplacian, 0).unwrap(), x);
        assert_eq!(high_pass(&x, &g.laplacian, 0).unwrap(), x);
    }

    #[test]
    fn zero_laplacian_leaves_features() {
        let x = features();
        for k in 0..4 {
            assert_eq!(low_pass(&x, &Matrix::zeros(3, 3), k).unwrap(), x);
        }
    }

    #[test]
    fn low_pass_matches_explicit_square() {
        let g = path3();
        let x = features();
        let op = Matrix::from_fn(3, 3, |i, j| {
            (if i == j { 1.0 } else { 0.0 }) - 0.5 * g.laplacian[(i, j)]
        });
        let want = naive_mul(&naive_mul(&op, &op), &x);
        assert!(low_pass(&x, &g.laplacian, 2).unwrap().max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn high_pass_kills_constant_on_regular_graph() {
        let mut edges = alloc::vec::Vec::new();
        for i in 0..6 {
            edges.push((i, (i + 1) % 6, 1.0));
        }
        let g = Graph::from_edges(6, &edges).unwrap();
        let l = laplacian_of_reconstructed(g.adj()).unwrap();
        let x = Matrix::filled(6, 2, 3.0);
        let f = high_pass(&x, &l.laplacian, 1).unwrap();
        assert!(f.as_slice().iter().all(|v| v.abs() < 1e-9));
        let l = normalize_adjacency(&g);
        let f = high_pass(&x, &l.laplacian, 1).unwrap();
        assert!(f.as_slice().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn reconstructed_laplacian_single_edge() {
        let m = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        let l = laplacian_of_reconstructed(&m).unwrap();
        let want = Matrix::from_rows(&[[1.0, -1.0], [-1.0, 1.0]]);
        // The degree floor perturbs the result at the 1e-12 level.
        assert!(l.laplacian.max_abs_diff(&want) < 1e-11);
    }

    #[test]
    fn reconstructed_laplacian_symmetrizes() {
        let m = Matrix::from_rows(&[[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]);
        let l = laplacian_of_reconstructed(&m).unwrap();
        assert!(l.laplacian.asymmetry(0.0).is_none());
        let sym = Matrix::from_rows(&[[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]]);
        assert_eq!(laplacian_of_reconstructed(&sym).unwrap(), l);
    }

    #[test]
    fn isolated_row_is_identity_row() {
        let m = Matrix::from_rows(&[[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]);
        let l = laplacian_of_reconstructed(&m).unwrap();
        assert_eq!(l.laplacian.row(2), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn empty_graph_is_an_error() {
        assert_eq!(
            laplacian_of_reconstructed(&Matrix::zeros(3, 3)),
            Err(Error::EmptyGraph)
        );
    }

    #[test]
    fn mixed_endpoints() {
        let g = path3();
        let h = laplacian_of_reconstructed(&Matrix::from_rows(&[
            [0.0, 0.0, 1.0],
            [0.0, 0.0, 1.0],
            [1.0, 1.0, 0.0],
        ]))
        .unwrap();
        let x = features();
        let low = low_pass(&x, &g.laplacian, 3).unwrap();
        let high = high_pass(&x, &h.laplacian, 3).unwrap();
        let f0 = mixed_filter(
            &x,
            &g.laplacian,
            &h.laplacian,
            FilterConfig::new(3, 0.0).unwrap(),
        )
        .unwrap();
        let f1 = mixed_filter(
            &x,
            &g.laplacian,
            &h.laplacian,
            FilterConfig::new(3, 1.0).unwrap(),
        )
        .unwrap();
        assert!(f0.f.max_abs_diff(&low) < 1e-15);
        assert!(f1.f.max_abs_diff(&high) < 1e-15);
        let half = mixed_filter(
            &x,
            &g.laplacian,
            &h.laplacian,
            FilterConfig::new(3, 0.5).unwrap(),
        )
        .unwrap();
        let mut want = low.scale(0.5);
        want.add_scaled(&high, 0.5);
        assert!(half.f.max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn config_bounds() {
        assert!(FilterConfig::new(11, 0.5).is_err());
        assert!(FilterConfig::new(2, 1.5).is_err());
        assert!(FilterConfig::new(10, 1.0).is_ok());
    }
}
