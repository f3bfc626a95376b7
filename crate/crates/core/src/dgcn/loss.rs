//! The three training objectives and their gradients.
//!
//! ```text
//! L_CR  = 1/n² Σ_i (M_ii - 1)² + 1/(n² - n) Σ_{i≠j} M_ij²,   M_ij = cos(z^A_i, z^F_j)
//! L_SCE = Σ_i (1 - cos(f_i, f̄_i))^β
//! q_iu  ∝ (1 + |z_i - σ_u|² / α)^(-(α+1)/2)
//! p_iu  ∝ q_iu² / Σ_i q_iu
//! L_CLU = Σ_i Σ_u p_iu log(p_iu / q_iu)
//! ```

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Floor on soft cluster frequencies in the target distribution.
pub const FREQUENCY_FLOOR: f64 = 1e-12;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// `M_ij = cos(z_a_i, z_f_j)`.
pub fn correlation_matrix(z_a: &Matrix, z_f: &Matrix) -> Result<Matrix> {
    if z_a.shape() != z_f.shape() {
        return Err(Error::shape("correlation_matrix", z_a.cols(), z_f.cols()));
    }
    let (u, _) = z_a.normalize_rows();
    let (v, _) = z_f.normalize_rows();
    Ok(u.matmul_t(&v))
}

fn cr_sizes(m: &Matrix) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::shape("loss_cr", "square", m.cols()));
    }
    if m.rows() <= 1 {
        return Err(Error::InvalidArgument(
            "correlation reduction needs at least two nodes".into(),
        ));
    }
    Ok(m.rows() as f64)
}

pub fn loss_cr(m: &Matrix) -> Result<f64> {
    Ok(loss_cr_grad(m)?.0)
}

/// Value and `dL/dM`.
pub fn loss_cr_grad(m: &Matrix) -> Result<(f64, Matrix)> {
    let d = cr_sizes(m)?;
    let diag_w = 1.0 / (d * d);
    let off_w = 1.0 / (d * d - d);
    let n = m.rows();
    let mut diag = 0.0;
    let mut off = 0.0;
    let mut g = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let v = m[(i, j)];
            if i == j {
                diag += (v - 1.0) * (v - 1.0);
                g[(i, j)] = 2.0 * diag_w * (v - 1.0);
            } else {
                off += v * v;
                g[(i, j)] = 2.0 * off_w * v;
            }
        }
    }
    Ok((diag_w * diag + off_w * off, g))
}

/// Gradient through `u = z / |z|`; zero rows receive no gradient.
fn normalize_backward(z: &Matrix, d_u: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(z.rows(), z.cols());
    for i in 0..z.rows() {
        let zr = z.row(i);
        let nz = norm(zr);
        if nz == 0.0 {
            continue;
        }
        let du = d_u.row(i);
        let proj = dot(zr, du) / (nz * nz);
        for ((o, &zv), &g) in out.row_mut(i).iter_mut().zip(zr).zip(du) {
            *o = (g - zv * proj) / nz;
        }
    }
    out
}

/// Pulls `dL/dM` back to `(dL/dZ_A, dL/dZ_F)`.
pub fn correlation_backward(z_a: &Matrix, z_f: &Matrix, d_m: &Matrix) -> (Matrix, Matrix) {
    let (u, _) = z_a.normalize_rows();
    let (v, _) = z_f.normalize_rows();
    let d_u = d_m.matmul(&v);
    let d_v = d_m.t_matmul(&u);
    (normalize_backward(z_a, &d_u), normalize_backward(z_f, &d_v))
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta >= 1.0) || !beta.is_finite() {
        return Err(Error::InvalidArgument(alloc::format!(
            "beta = {beta} must be >= 1"
        )));
    }
    Ok(())
}

pub fn loss_sce(f: &Matrix, f_bar: &Matrix, beta: f64) -> Result<f64> {
    Ok(loss_sce_grad(f, f_bar, beta)?.0)
}

/// Value and `dL/dF̄`.
pub fn loss_sce_grad(f: &Matrix, f_bar: &Matrix, beta: f64) -> Result<(f64, Matrix)> {
    check_beta(beta)?;
    if f.shape() != f_bar.shape() {
        return Err(Error::shape("loss_sce", f.cols(), f_bar.cols()));
    }
    let mut total = 0.0;
    let mut g = Matrix::zeros(f.rows(), f.cols());
    for i in 0..f.rows() {
        let (a, b) = (f.row(i), f_bar.row(i));
        let (na, nb) = (norm(a), norm(b));
        if na == 0.0 || nb == 0.0 {
            total += 1.0;
            continue;
        }
        let c = dot(a, b) / (na * nb);
        let t = (1.0 - c).max(0.0);
        total += libm::pow(t, beta);
        if t == 0.0 && beta > 1.0 {
            continue;
        }
        // d/db (1 - c)^β = -β t^(β-1) (a / (|a||b|) - c b / |b|²)
        let s = -beta * libm::pow(t, beta - 1.0);
        for ((o, &av), &bv) in g.row_mut(i).iter_mut().zip(a).zip(b) {
            *o = s * (av / (na * nb) - c * bv / (nb * nb));
        }
    }
    Ok((total, g))
}

fn check_assignment_inputs(z: &Matrix, centroids: &Matrix, alpha: f64) -> Result<()> {
    if centroids.rows() < 2 {
        return Err(Error::InvalidArgument("need at least two centroids".into()));
    }
    if z.cols() != centroids.cols() {
        return Err(Error::shape("soft_assignment", centroids.cols(), z.cols()));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument("alpha must be positive".into()));
    }
    Ok(())
}

fn kernel_value(d2: f64, alpha: f64) -> f64 {
    let base = 1.0 + d2 / alpha;
    if alpha == 1.0 {
        1.0 / base
    } else {
        libm::pow(base, -(alpha + 1.0) / 2.0)
    }
}

fn squared_distances(z: &Matrix, centroids: &Matrix) -> Matrix {
    Matrix::from_fn(z.rows(), centroids.rows(), |i, u| {
        z.row(i)
            .iter()
            .zip(centroids.row(u))
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    })
}

/// Unnormalized Student-t kernel values.
pub fn student_t_kernel(z: &Matrix, centroids: &Matrix, alpha: f64) -> Result<Matrix> {
    check_assignment_inputs(z, centroids, alpha)?;
    Ok(squared_distances(z, centroids).map(|d2| kernel_value(d2, alpha)))
}

/// Row-normalized Student-t kernel.
pub fn soft_assignment(z: &Matrix, centroids: &Matrix, alpha: f64) -> Result<Matrix> {
    let mut q = student_t_kernel(z, centroids, alpha)?;
    for i in 0..q.rows() {
        let row = q.row_mut(i);
        let s: f64 = row.iter().sum();
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::NonFinite("soft assignment normalizer".into()));
        }
        row.iter_mut().for_each(|v| *v /= s);
    }
    Ok(q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetDistribution {
    pub p: Matrix,
    /// Some soft cluster had zero total mass and was floored.
    pub floored: bool,
}

/// Sharpened self-training target.
pub fn target_distribution(q: &Matrix) -> Result<TargetDistribution> {
    let c = q.cols();
    let mut freq = vec![0.0; c];
    for r in q.iter_rows() {
        for (f, v) in freq.iter_mut().zip(r) {
            *f += v;
        }
    }
    let mut floored = false;
    for f in freq.iter_mut() {
        if *f < FREQUENCY_FLOOR {
            *f = FREQUENCY_FLOOR;
            floored = true;
        }
    }
    let mut p = Matrix::zeros(q.rows(), c);
    for i in 0..q.rows() {
        let row = p.row_mut(i);
        for ((o, &qv), &f) in row.iter_mut().zip(q.row(i)).zip(&freq) {
            *o = qv * qv / f;
        }
        let s: f64 = row.iter().sum();
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::NonFinite("target distribution normalizer".into()));
        }
        row.iter_mut().for_each(|v| *v /= s);
    }
    Ok(TargetDistribution { p, floored })
}

/// `KL(P || Q)` summed over rows. Terms with `p = 0` contribute 0.
pub fn loss_clu(p: &Matrix, q: &Matrix) -> Result<f64> {
    if p.shape() != q.shape() {
        return Err(Error::shape("loss_clu", q.cols(), p.cols()));
    }
    let mut total = 0.0;
    for (&pv, &qv) in p.as_slice().iter().zip(q.as_slice()) {
        if pv > 0.0 {
            total += pv * libm::log(pv / qv);
        }
    }
    Ok(total)
}

/// Gradients of `L_CLU` with `P` held fixed, with respect to the embeddings
/// and the centroids.
pub fn clu_backward(
    z: &Matrix,
    centroids: &Matrix,
    alpha: f64,
    p: &Matrix,
) -> Result<(Matrix, Matrix)> {
    check_assignment_inputs(z, centroids, alpha)?;
    let (n, c) = (z.rows(), centroids.rows());
    if p.shape() != (n, c) {
        return Err(Error::shape("clu_backward target", c, p.cols()));
    }
    let d2 = squared_distances(z, centroids);
    let kernel = d2.map(|v| kernel_value(v, alpha));
    let mut d_z = Matrix::zeros(n, z.cols());
    let mut d_c = Matrix::zeros(c, z.cols());
    let shape = (alpha + 1.0) / (2.0 * alpha);
    for i in 0..n {
        let s: f64 = kernel.row(i).iter().sum();
        let p_mass: f64 = p.row(i).iter().sum();
        for u in 0..c {
            let k = kernel[(i, u)];
            let q = k / s;
            // dL/dq = -p/q; through q = k/S this gives dL/dk = (p_mass - p/q)/S.
            let d_k = (p_mass - p[(i, u)] / q) / s;
            let d_d2 = d_k * (-shape * k / (1.0 + d2[(i, u)] / alpha));
            for j in 0..z.cols() {
                let diff = 2.0 * d_d2 * (z[(i, j)] - centroids[(u, j)]);
                d_z[(i, j)] += diff;
                d_c[(u, j)] -= diff;
            }
        }
    }
    Ok((d_z, d_c))
}

/// Hard labels: per-row argmax, lowest index on ties.
pub fn assign(q: &Matrix) -> Vec<usize> {
    q.iter_rows()
        .map(|r| {
            let mut best = 0;
            for (u, &v) in r.iter().enumerate() {
                if v > r[best] {
                    best = u;
                }
            }
            best
        })
        .collect()
}
