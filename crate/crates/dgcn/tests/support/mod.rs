//! Reference implementations written straight from the definitions, kept
//! deliberately naive so they share no code paths with the library.

#![allow(dead_code)]

use dgcn_core::Matrix;

pub fn naive_squared_distances(x: &Matrix) -> Matrix {
    let n = x.rows();
    Matrix::from_fn(n, n, |i, j| {
        x.row(i)
            .iter()
            .zip(x.row(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    })
}

pub fn naive_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// `D^-1/2 (adj + I) D^-1/2` entry by entry.
pub fn naive_normalized_adjacency(adj: &Matrix) -> Matrix {
    let n = adj.rows();
    let tilde = |i: usize, j: usize| adj[(i, j)] + if i == j { 1.0 } else { 0.0 };
    let deg: Vec<f64> = (0..n).map(|i| (0..n).map(|j| tilde(i, j)).sum()).collect();
    Matrix::from_fn(n, n, |i, j| tilde(i, j) / (deg[i] * deg[j]).sqrt())
}

/// Euclidean projection onto the probability simplex (sort and threshold).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &x) in u.iter().enumerate() {
        cumsum += x;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Minimizes the frozen row-`i` surrogate over the simplex (with `S_ii = 0`)
/// by projected gradient. Every frozen quantity is rebuilt from raw `s`:
///
/// `C_f = S2_if - S_ij S_jf - S_if` for `f != i`, else 0,
/// objective `sum_j (2 + sum_{f!=j} S_jf^2) x_j^2 - (2 S2_ij - K_ij - 2 sum_{f!=j} S_jf C_f) x_j`.
pub fn qp_row_oracle(s: &Matrix, k: &Matrix, i: usize) -> Vec<f64> {
    let n = s.rows();
    let s2 = Matrix::from_fn(n, n, |a, b| (0..n).map(|m| s[(a, m)] * s[(m, b)]).sum());
    let cols: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    let mut quad = Vec::new();
    let mut lin = Vec::new();
    for &j in &cols {
        let mut coupling = 0.0;
        let mut sq = 0.0;
        for f in (0..n).filter(|&f| f != j) {
            let c_f = if f == i {
                0.0
            } else {
                s2[(i, f)] - s[(i, j)] * s[(j, f)] - s[(i, f)]
            };
            coupling += s[(j, f)] * c_f;
            sq += s[(j, f)] * s[(j, f)];
        }
        quad.push(2.0 + sq);
        lin.push(2.0 * s2[(i, j)] - k[(i, j)] - 2.0 * coupling);
    }
    let step = 1.0 / (2.0 * quad.iter().cloned().fold(0.0, f64::max));
    let mut x = vec![1.0 / cols.len() as f64; cols.len()];
    for _ in 0..2_000_000 {
        let trial: Vec<f64> = x
            .iter()
            .zip(quad.iter().zip(&lin))
            .map(|(&xj, (&a, &b))| xj - step * (2.0 * a * xj - b))
            .collect();
        let next = project_simplex(&trial);
        let delta = next
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        x = next;
        if delta < 1e-15 {
            break;
        }
    }
    let mut row = vec![0.0; n];
    for (&j, &v) in cols.iter().zip(&x) {
        row[j] = v;
    }
    row
}

fn permutations(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == items.len() {
        out.push(items.clone());
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permutations(items, k + 1, out);
        items.swap(k, i);
    }
}

/// Best accuracy over every relabelling of the predicted clusters.
pub fn brute_force_accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    let c = pred.iter().chain(truth).max().map_or(1, |m| m + 1);
    let mut perms = Vec::new();
    permutations(&mut (0..c).collect(), 0, &mut perms);
    let best = perms
        .iter()
        .map(|p| {
            pred.iter()
                .zip(truth)
                .filter(|(a, b)| p[**a] == **b)
                .count()
        })
        .max()
        .unwrap_or(0);
    best as f64 / pred.len() as f64
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}
