//! k-means and clustering metrics.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const KMEANS_MAX_ITERS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansResult {
    pub centroids: Matrix,
    pub labels: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
    /// Clusters still empty at the end (only possible with duplicate rows).
    pub empty_clusters: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid, lowest index on ties.
fn nearest(point: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (u, c) in centroids.iter_rows().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (u, d);
        }
    }
    best
}

fn plus_plus_seeds(z: &Matrix, c: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = z.rows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut dist: Vec<f64> = (0..n)
        .map(|i| sq_dist(z.row(i), z.row(chosen[0])))
        .collect();
    while chosen.len() < c {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in dist.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc >= target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave `acc` just short of `target`.
            pick.unwrap_or_else(|| dist.iter().rposition(|&d| d > 0.0).unwrap_or(0))
        } else {
            // All remaining points coincide with a seed.
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min(sq_dist(z.row(i), z.row(next)));
        }
    }
    chosen
}

/// Lloyd iterations from k-means++ seeds. Deterministic per seed.
///
/// An empty cluster is moved onto the point farthest from its own centroid;
/// when every point sits on its centroid the cluster stays empty.
pub fn kmeans(z: &Matrix, c: usize, seed: u64, max_iters: usize) -> Result<KmeansResult> {
    let n = z.rows();
    if c == 0 || n < c {
        return Err(Error::InvalidArgument(format!(
            "k-means needs 1 <= c <= n, got c = {c}, n = {n}"
        )));
    }
    if !z.all_finite() {
        return Err(Error::NonFinite("k-means input".into()));
    }
    let dims = z.cols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds = plus_plus_seeds(z, c, &mut rng);
    let mut centroids = Matrix::from_fn(c, dims, |u, j| z[(seeds[u], j)]);
    let mut labels = vec![usize::MAX; n];
    let mut iterations = 0;
    let mut empty_clusters = 0;

    for _ in 0..max_iters.max(1) {
        iterations += 1;
        let mut changed = false;
        let mut dists = vec![0.0; n];
        for i in 0..n {
            let (u, d) = nearest(z.row(i), &centroids);
            dists[i] = d;
            if labels[i] != u {
                labels[i] = u;
                changed = true;
            }
        }
        let mut sums = Matrix::zeros(c, dims);
        let mut counts = vec![0usize; c];
        for i in 0..n {
            counts[labels[i]] += 1;
            for (s, v) in sums.row_mut(labels[i]).iter_mut().zip(z.row(i)) {
                *s += v;
            }
        }
        empty_clusters = 0;
        for u in 0..c {
            if counts[u] > 0 {
                let inv = 1.0 / counts[u] as f64;
                for (cv, s) in centroids.row_mut(u).iter_mut().zip(sums.row(u)) {
                    *cv = s * inv;
                }
                continue;
            }
            // Farthest point from its centroid, lowest index on ties; never
            // steal the last member of another cluster.
            let far = (0..n).filter(|&i| counts[labels[i]] > 1).fold(
                None,
                |best: Option<(usize, f64)>, i| match best {
                    Some((_, d)) if dists[i] <= d => best,
                    _ => Some((i, dists[i])),
                },
            );
            match far {
                Some((i, d)) if d > 0.0 => {
                    counts[labels[i]] -= 1;
                    labels[i] = u;
                    counts[u] = 1;
                    dists[i] = 0.0;
                    centroids.row_mut(u).copy_from_slice(z.row(i));
                    changed = true;
                }
                _ => empty_clusters += 1,
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = (0..n)
        .map(|i| sq_dist(z.row(i), centroids.row(labels[i])))
        .sum();
    Ok(KmeansResult {
        centroids,
        labels,
        inertia,
        iterations,
        empty_clusters,
    })
}

/// Maximum-weight perfect matching on a square matrix (Hungarian method,
/// O(n^3)). Returns `assignment[row] = col`.
pub fn max_weight_assignment(weights: &Matrix) -> Vec<usize> {
    let n = weights.rows();
    assert!(weights.is_square());
    if n == 0 {
        return Vec::new();
    }
    // Minimize negated weights with 1-based potentials (classic e-maxx form).
    let cost = |i: usize, j: usize| -weights[(i - 1, j - 1)];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if p[j] != 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Counts `table[pred][truth]`, padded to a square of side
/// `max(#pred ids, #truth ids)`.
pub fn contingency(pred: &[usize], truth: &[usize]) -> Result<Matrix> {
    if pred.len() != truth.len() {
        return Err(Error::shape("contingency", truth.len(), pred.len()));
    }
    if pred.is_empty() {
        return Err(Error::InvalidArgument("no labels to compare".into()));
    }
    let kp = pred.iter().max().map_or(0, |m| m + 1);
    let kt = truth.iter().max().map_or(0, |m| m + 1);
    let k = kp.max(kt);
    let mut table = Matrix::zeros(k, k);
    for (&p, &t) in pred.iter().zip(truth) {
        table[(p, t)] += 1.0;
    }
    Ok(table)
}

/// Fraction of points correctly labelled under the best one-to-one mapping
/// from predicted clusters to classes.
pub fn clustering_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = contingency(pred, truth)?;
    let assignment = max_weight_assignment(&table);
    let matched: f64 = assignment
        .iter()
        .enumerate()
        .map(|(p, &t)| table[(p, t)])
        .sum();
    Ok(matched / pred.len() as f64)
}

fn entropy(counts: impl Iterator<Item = f64>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0.0)
        .map(|c| {
            let p = c / n;
            -p * libm::log(p)
        })
        .sum()
}

/// Mutual information normalized by the arithmetic mean of the two
/// entropies.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = contingency(pred, truth)?;
    let n = pred.len() as f64;
    let k = table.rows();
    let row_tot: Vec<f64> = table.row_sums();
    let col_tot: Vec<f64> = (0..k)
        .map(|j| (0..k).map(|i| table[(i, j)]).sum())
        .collect();
    let h_pred = entropy(row_tot.iter().copied(), n);
    let h_true = entropy(col_tot.iter().copied(), n);
    if h_pred == 0.0 && h_true == 0.0 {
        return Ok(1.0);
    }
    if h_pred == 0.0 || h_true == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for i in 0..k {
        for j in 0..k {
            let nij = table[(i, j)];
            if nij > 0.0 {
                mi += nij / n * libm::log(n * nij / (row_tot[i] * col_tot[j]));
            }
        }
    }
    Ok((mi / (0.5 * (h_pred + h_true))).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricReport {
    pub acc: f64,
    pub nmi: f64,
    /// `confusion[cluster][class]`.
    pub confusion: Vec<Vec<usize>>,
    pub nmi_normalization: String,
}

pub fn evaluate(pred: &[usize], truth: &[usize]) -> Result<MetricReport> {
    let table = contingency(pred, truth)?;
    let confusion = table
        .iter_rows()
        .map(|r| r.iter().map(|&v| v as usize).collect())
        .collect();
    Ok(MetricReport {
        acc: clustering_accuracy(pred, truth)?,
        nmi: nmi(pred, truth)?,
        confusion,
        nmi_normalization: "arithmetic".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_clouds_are_recovered() {
        let centers = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]];
        let z = Matrix::from_fn(30, 2, |i, j| {
            centers[i % 3][j] + ((i * 7 + j) % 5) as f64 * 0.1
        });
        let truth: Vec<usize> = (0..30).map(|i| i % 3).collect();
        for seed in 0..5 {
            let r = kmeans(&z, 3, seed, KMEANS_MAX_ITERS).unwrap();
            assert_eq!(clustering_accuracy(&r.labels, &truth).unwrap(), 1.0);
        }
    }

    #[test]
    fn one_cluster_per_point() {
        let z = Matrix::from_rows(&[[0.0, 1.0], [2.0, 3.0], [5.0, -1.0], [7.0, 7.0]]);
        let r = kmeans(&z, 4, 3, KMEANS_MAX_ITERS).unwrap();
        assert_eq!(r.inertia, 0.0);
        let mut l = r.labels.clone();
        l.sort_unstable();
        assert_eq!(l, [0, 1, 2, 3]);
    }

    #[test]
    fn duplicate_rows_stay_finite() {
        let z = Matrix::filled(6, 3, 1.25);
        let r = kmeans(&z, 3, 0, KMEANS_MAX_ITERS).unwrap();
        assert!(r.centroids.all_finite());
        assert_eq!(r.inertia, 0.0);
        assert_eq!(r.empty_clusters, 2);
    }

    #[test]
    fn kmeans_is_deterministic() {
        let z = Matrix::from_fn(40, 3, |i, j| ((i * 13 + j * 5) as f64 * 0.71).sin());
        assert_eq!(
            kmeans(&z, 4, 9, 300).unwrap(),
            kmeans(&z, 4, 9, 300).unwrap()
        );
    }

    #[test]
    fn kmeans_rejects_too_many_clusters() {
        assert!(kmeans(&Matrix::zeros(2, 2), 3, 0, 10).is_err());
    }

    #[test]
    fn accuracy_cases() {
        let truth = [0, 0, 1, 1, 2, 2];
        assert_eq!(clustering_accuracy(&truth, &truth).unwrap(), 1.0);
        assert_eq!(
            clustering_accuracy(&[2, 2, 0, 0, 1, 1], &truth).unwrap(),
            1.0
        );
        let t = [0, 0, 0, 1, 1, 1];
        let p = [1, 1, 0, 0, 0, 0];
        assert!((clustering_accuracy(&p, &t).unwrap() - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn more_clusters_than_classes() {
        let truth = [0, 0, 1, 1];
        let pred = [0, 1, 2, 3];
        assert_eq!(clustering_accuracy(&pred, &truth).unwrap(), 0.5);
    }

    #[test]
    fn single_cluster_gets_largest_class_share() {
        let truth = [0, 0, 0, 1, 2, 2];
        assert_eq!(clustering_accuracy(&[0; 6], &truth).unwrap(), 0.5);
    }

    #[test]
    fn nmi_cases() {
        let a = [0, 0, 1, 1, 2, 2];
        assert!((nmi(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!((nmi(&[1, 1, 2, 2, 0, 0], &a).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(nmi(&[0; 6], &a).unwrap(), 0.0);
        assert_eq!(nmi(&[0; 6], &[3; 6]).unwrap(), 1.0);
    }

    #[test]
    fn nmi_small_contingency() {
        // table [[2, 0], [1, 1]]: pred (0,0,1,1), truth (0,0,0,1)
        let pred = [0, 0, 1, 1];
        let truth = [0, 0, 0, 1];
        let ln = |x: f64| x.ln();
        let h_p = ln(2.0);
        let h_t = -(0.75 * ln(0.75) + 0.25 * ln(0.25));
        let mi = 0.5 * ln(4.0 * 2.0 / (2.0 * 3.0))
            + 0.25 * ln(4.0 * 1.0 / (2.0 * 3.0))
            + 0.25 * ln(4.0 * 1.0 / (2.0 * 1.0));
        let want = mi / (0.5 * (h_p + h_t));
        assert!((nmi(&pred, &truth).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn assignment_on_known_matrix() {
        let w = Matrix::from_rows(&[[1.0, 5.0, 3.0], [4.0, 2.0, 1.0], [2.0, 3.0, 6.0]]);
        assert_eq!(max_weight_assignment(&w), [1, 0, 2]);
    }

    #[test]
    fn mismatched_lengths_error() {
        assert!(clustering_accuracy(&[0, 1], &[0]).is_err());
        assert!(nmi(&[], &[]).is_err());
    }
}
