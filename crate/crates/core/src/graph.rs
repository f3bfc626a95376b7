//! Graph representation, symmetric normalization and homophily measures.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::{cosine, Matrix};

/// Absolute tolerance for the symmetry check on adjacency matrices.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Undirected weighted graph stored as a dense adjacency matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adj: Matrix,
    has_self_loops: bool,
}

impl Graph {
    /// Validates that `adj` is square, non-empty, finite, nonnegative and
    /// symmetric.
    pub fn new(adj: Matrix) -> Result<Self> {
        if !adj.is_square() {
            return Err(Error::shape("Graph::new", "square", format_shape(&adj)));
        }
        if adj.rows() == 0 {
            return Err(Error::InvalidArgument(
                "graph needs at least one node".into(),
            ));
        }
        for i in 0..adj.rows() {
            for (j, &w) in adj.row(i).iter().enumerate() {
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::InvalidWeight { row: i, col: j });
                }
            }
        }
        if let Some((row, col)) = adj.asymmetry(SYMMETRY_TOL) {
            return Err(Error::NotSymmetric { row, col });
        }
        let has_self_loops = (0..adj.rows()).any(|i| adj[(i, i)] != 0.0);
        Ok(Graph {
            adj,
            has_self_loops,
        })
    }

    /// Builds a graph from undirected weighted edges; both directions are set.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut adj = Matrix::zeros(n, n);
        for &(u, v, w) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidArgument(alloc::format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            adj[(u, v)] = w;
            adj[(v, u)] = w;
        }
        Graph::new(adj)
    }

    pub fn n(&self) -> usize {
        self.adj.rows()
    }

    pub fn adj(&self) -> &Matrix {
        &self.adj
    }

    pub fn has_self_loops(&self) -> bool {
        self.has_self_loops
    }

    /// Number of undirected off-diagonal edges.
    pub fn edge_count(&self) -> usize {
        let n = self.n();
        (0..n)
            .map(|i| ((i + 1)..n).filter(|&j| self.adj[(i, j)] > 0.0).count())
            .sum()
    }
}

fn format_shape(m: &Matrix) -> alloc::string::String {
    alloc::format!("{}x{}", m.rows(), m.cols())
}

/// Symmetrically normalized adjacency `A` and its Laplacian `L = I - A`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedGraph {
    pub a_norm: Matrix,
    pub laplacian: Matrix,
}

impl NormalizedGraph {
    pub fn n(&self) -> usize {
        self.a_norm.rows()
    }

    pub(crate) fn from_normalized(a_norm: Matrix) -> Self {
        let n = a_norm.rows();
        let laplacian = Matrix::from_fn(n, n, |i, j| {
            let id = if i == j { 1.0 } else { 0.0 };
            id - a_norm[(i, j)]
        });
        NormalizedGraph { a_norm, laplacian }
    }
}

/// `A = D^{-1/2} (Ã + I) D^{-1/2}` with `D` the degree matrix of `Ã + I`.
pub fn normalize_adjacency(g: &Graph) -> NormalizedGraph {
    let n = g.n();
    let mut looped = g.adj().clone();
    for i in 0..n {
        looped[(i, i)] += 1.0;
    }
    // Every degree is at least 1 because of the added loop.
    let inv_sqrt: Vec<f64> = looped
        .row_sums()
        .into_iter()
        .map(|d| 1.0 / libm::sqrt(d))
        .collect();
    let a_norm = Matrix::from_fn(n, n, |i, j| inv_sqrt[i] * looped[(i, j)] * inv_sqrt[j]);
    NormalizedGraph::from_normalized(a_norm)
}

/// Ground-truth class ids.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LabelVector {
    labels: Vec<usize>,
    classes: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>, classes: usize) -> Result<Self> {
        if classes == 0 {
            return Err(Error::InvalidArgument(
                "class count must be positive".into(),
            ));
        }
        if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= classes) {
            return Err(Error::InvalidArgument(alloc::format!(
                "label {y} at node {i} is not below class count {classes}"
            )));
        }
        Ok(LabelVector { labels, classes })
    }

    /// Class count inferred as `max + 1`.
    pub fn from_labels(labels: Vec<usize>) -> Result<Self> {
        let classes = labels.iter().max().map_or(1, |m| m + 1);
        LabelVector::new(labels, classes)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Out-neighbour lists of the support of `m^hops` (walks of exactly `hops`
/// steps over entries `> 0`), diagonal removed, each list sorted ascending.
///
/// Lower hops are not excluded: a node reachable in one step and in two steps
/// appears in both the 1-hop and the 2-hop lists.
pub fn hop_support(m: &Matrix, hops: usize) -> Result<Vec<Vec<usize>>> {
    if !m.is_square() {
        return Err(Error::shape("hop_support", "square", format_shape(m)));
    }
    if hops == 0 {
        return Err(Error::InvalidArgument(
            "hop order must be at least 1".into(),
        ));
    }
    let n = m.rows();
    let nbrs: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            m.row(i)
                .iter()
                .enumerate()
                .filter(|(_, &w)| w > 0.0)
                .map(|(j, _)| j)
                .collect()
        })
        .collect();

    // Generation stamps avoid clearing the mark array for every frontier.
    let mut stamp = vec![0usize; n];
    let mut generation = 0usize;
    let mut out = Vec::with_capacity(n);
    let mut frontier = Vec::new();
    let mut next = Vec::new();
    for source in 0..n {
        frontier.clear();
        frontier.push(source);
        for _ in 0..hops {
            generation += 1;
            next.clear();
            for &v in &frontier {
                for &u in &nbrs[v] {
                    if stamp[u] != generation {
                        stamp[u] = generation;
                        next.push(u);
                    }
                }
            }
            core::mem::swap(&mut frontier, &mut next);
        }
        let mut reach: Vec<usize> = frontier.iter().copied().filter(|&u| u != source).collect();
        reach.sort_unstable();
        out.push(reach);
    }
    Ok(out)
}

fn check_labels(n: usize, y: &LabelVector) -> Result<()> {
    if y.len() != n {
        return Err(Error::shape("labels", n, y.len()));
    }
    Ok(())
}

/// Fraction of ordered hop-`hops` pairs whose labels agree.
///
/// Works on any nonnegative square matrix; pairs are read from its support,
/// so asymmetric learned graphs are measured along their out-edges.
pub fn homophily_ratio(m: &Matrix, y: &LabelVector, hops: usize) -> Result<f64> {
    check_labels(m.rows(), y)?;
    let support = hop_support(m, hops)?;
    ratio_over_pairs(
        y,
        support
            .iter()
            .enumerate()
            .flat_map(|(i, js)| js.iter().map(move |&j| (i, j))),
    )
}

/// Among ordered pairs adjacent at both hop 1 and hop 2, the fraction whose
/// labels agree.
pub fn joint_hop_homophily(m: &Matrix, y: &LabelVector) -> Result<f64> {
    check_labels(m.rows(), y)?;
    let one = hop_support(m, 1)?;
    let two = hop_support(m, 2)?;
    let pairs = one.iter().zip(&two).enumerate().flat_map(|(i, (a, b))| {
        a.iter()
            .filter(move |j| b.binary_search(j).is_ok())
            .map(move |&j| (i, j))
    });
    ratio_over_pairs(y, pairs)
}

fn ratio_over_pairs(y: &LabelVector, pairs: impl Iterator<Item = (usize, usize)>) -> Result<f64> {
    let labels = y.labels();
    let (mut same, mut total) = (0usize, 0usize);
    for (i, j) in pairs {
        total += 1;
        if labels[i] == labels[j] {
            same += 1;
        }
    }
    if total == 0 {
        return Err(Error::NoPairs);
    }
    Ok(same as f64 / total as f64)
}

fn neighbor_cosines(f: &Matrix, m: &Matrix, hops: usize) -> Result<Vec<f64>> {
    if f.rows() != m.rows() {
        return Err(Error::shape("neighbor similarity rows", m.rows(), f.rows()));
    }
    let support = hop_support(m, hops)?;
    let sims: Vec<f64> = support
        .iter()
        .enumerate()
        .flat_map(|(i, js)| js.iter().map(move |&j| cosine(f.row(i), f.row(j))))
        .collect();
    if sims.is_empty() {
        return Err(Error::NoPairs);
    }
    Ok(sims)
}

/// Mean cosine similarity of feature rows over hop-`hops` pairs. Zero rows
/// have similarity 0 with everything.
pub fn avg_neighbor_similarity(f: &Matrix, m: &Matrix, hops: usize) -> Result<f64> {
    let sims = neighbor_cosines(f, m, hops)?;
    Ok(sims.iter().sum::<f64>() / sims.len() as f64)
}

/// Standard deviation of the cosine dissimilarity `1 - cos` over hop-`hops`
/// pairs.
pub fn neighbor_dissimilarity_spread(f: &Matrix, m: &Matrix, hops: usize) -> Result<f64> {
    let sims = neighbor_cosines(f, m, hops)?;
    let k = sims.len() as f64;
    let mean = sims.iter().map(|s| 1.0 - s).sum::<f64>() / k;
    let var = sims
        .iter()
        .map(|s| {
            let dev = 1.0 - s - mean;
            dev * dev
        })
        .sum::<f64>()
        / k;
    Ok(libm::sqrt(var))
}
