use alloc::string::String;

use crate::error::{Error, Result};
use crate::graph::{Graph, LabelVector};
use crate::matrix::Matrix;

/// Attributed graph with optional ground truth.
#[derive(Debug, Clone)]
pub struct NodeDataset {
    pub name: String,
    pub features: Matrix,
    pub graph: Graph,
    pub labels: Option<LabelVector>,
    /// Number of clusters to find.
    pub clusters: usize,
}

impl NodeDataset {
    pub fn new(
        name: impl Into<String>,
        features: Matrix,
        graph: Graph,
        labels: Option<LabelVector>,
        clusters: usize,
    ) -> Result<Self> {
        if features.rows() != graph.n() {
            return Err(Error::shape("dataset features", graph.n(), features.rows()));
        }
        if let Some(y) = &labels {
            if y.len() != graph.n() {
                return Err(Error::shape("dataset labels", graph.n(), y.len()));
            }
        }
        if clusters == 0 {
            return Err(Error::InvalidArgument(
                "cluster count must be positive".into(),
            ));
        }
        Ok(NodeDataset {
            name: name.into(),
            features,
            graph,
            labels,
            clusters,
        })
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn dims(&self) -> usize {
        self.features.cols()
    }
}
