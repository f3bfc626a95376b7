//! Planted-partition generator with a dial for 1-hop homophily.
//!
//! Nodes are split into `c` contiguous, nearly equal blocks. Every unordered
//! pair is an edge independently, with one probability inside a block and
//! another across blocks. The two probabilities are chosen so that the
//! expected number of edges is `n * mean_degree / 2` and the expected share
//! of within-block edges is the target homophily.
//!
//! Features are Gaussian around per-class means `e_c / sqrt(2)`, which are at
//! pairwise distance exactly 1.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::NodeDataset;
use crate::error::{Error, Result};
use crate::graph::{Graph, LabelVector};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SynthConfig {
    pub n: usize,
    pub classes: usize,
    pub dims: usize,
    /// Target 1-hop homophily in `[0, 1]`.
    pub homophily: f64,
    pub mean_degree: f64,
    /// Per-coordinate standard deviation of feature noise.
    pub feature_noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n: 200,
            classes: 5,
            dims: 16,
            homophily: 0.5,
            mean_degree: 10.0,
            feature_noise: 0.3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub dataset: NodeDataset,
    /// Within-class share of the realized edges.
    pub realized_homophily: f64,
    pub edges: usize,
    pub p_within: f64,
    pub p_across: f64,
}

/// Class of node `i` when `n` nodes are split into `c` contiguous blocks.
pub fn block_of(i: usize, n: usize, c: usize) -> usize {
    i * c / n
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.n < self.classes {
            return Err(Error::InvalidArgument(format!(
                "need n >= c >= 2, got n = {}, c = {}",
                self.n, self.classes
            )));
        }
        if self.dims < self.classes {
            return Err(Error::InvalidArgument(format!(
                "feature dimension {} is smaller than class count {}",
                self.dims, self.classes
            )));
        }
        if !(self.mean_degree >= 1.0) || !self.mean_degree.is_finite() {
            return Err(Error::InvalidArgument(
                "mean degree must be at least 1".into(),
            ));
        }
        if !(self.feature_noise >= 0.0) || !self.feature_noise.is_finite() {
            return Err(Error::InvalidArgument(
                "feature noise must be nonnegative".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.homophily) {
            return Err(Error::InvalidArgument(
                "homophily must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Within- and across-block edge probabilities realizing the targets in
    /// expectation.
    pub fn edge_probabilities(&self) -> Result<(f64, f64)> {
        self.validate()?;
        let n = self.n;
        let mut sizes = alloc::vec![0usize; self.classes];
        for i in 0..n {
            sizes[block_of(i, n, self.classes)] += 1;
        }
        let within: f64 = sizes
            .iter()
            .map(|&s| (s * s.saturating_sub(1)) as f64 / 2.0)
            .sum();
        let total = (n * (n - 1)) as f64 / 2.0;
        let across = total - within;
        let edges = n as f64 * self.mean_degree / 2.0;

        // Feasible homophily interval for this degree: both probabilities <= 1.
        let h_max = if edges > 0.0 {
            (within / edges).min(1.0)
        } else {
            1.0
        };
        let h_min = (1.0 - across / edges).max(0.0);
        if self.homophily > h_max + 1e-12 || self.homophily < h_min - 1e-12 {
            return Err(Error::Infeasible(format!(
                "homophily {} with mean degree {} is outside the feasible range [{h_min:.4}, {h_max:.4}]",
                self.homophily, self.mean_degree
            )));
        }
        let p_within = if within > 0.0 {
            self.homophily * edges / within
        } else {
            0.0
        };
        let p_across = if across > 0.0 {
            (1.0 - self.homophily) * edges / across
        } else {
            0.0
        };
        Ok((p_within.min(1.0), p_across.min(1.0)))
    }
}

/// Samples a dataset. Deterministic for a given configuration.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<Synthetic> {
    let (p_within, p_across) = cfg.edge_probabilities()?;
    let n = cfg.n;
    let c = cfg.classes;
    let labels: Vec<usize> = (0..n).map(|i| block_of(i, n, c)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut edges = Vec::new();
    let mut same = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            let inside = labels[i] == labels[j];
            let p = if inside { p_within } else { p_across };
            if rng.random::<f64>() < p {
                edges.push((i, j, 1.0));
                if inside {
                    same += 1;
                }
            }
        }
    }
    if edges.is_empty() {
        return Err(Error::Infeasible("the sampled graph has no edges".into()));
    }

    let scale = core::f64::consts::FRAC_1_SQRT_2;
    let mut features = Matrix::zeros(n, cfg.dims);
    for i in 0..n {
        let row = features.row_mut(i);
        for x in row.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *x = cfg.feature_noise * z;
        }
        row[labels[i]] += scale;
    }

    let realized_homophily = same as f64 / edges.len() as f64;
    let edge_count = edges.len();
    let graph = Graph::from_edges(n, &edges)?;
    let labels = LabelVector::new(labels, c)?;
    let name = format!("synth-n{}-c{}-h{}-s{}", n, c, cfg.homophily, cfg.seed);
    let dataset = NodeDataset::new(name, features, graph, Some(labels), c)?;
    Ok(Synthetic {
        dataset,
        realized_homophily,
        edges: edge_count,
        p_within,
        p_across,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::homophily_ratio;

    fn cfg(h: f64, seed: u64) -> SynthConfig {
        SynthConfig {
            homophily: h,
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn full_homophily_has_only_internal_edges() {
        let s = synth_dataset(&cfg(1.0, 3)).unwrap();
        assert_eq!(s.realized_homophily, 1.0);
        assert_eq!(s.p_across, 0.0);
    }

    #[test]
    fn realized_ratio_equals_hop_one_homophily() {
        for seed in 0..4 {
            let s = synth_dataset(&cfg(0.3, seed)).unwrap();
            let y = s.dataset.labels.as_ref().unwrap();
            let h = homophily_ratio(s.dataset.graph.adj(), y, 1).unwrap();
            assert_eq!(h, s.realized_homophily);
        }
    }

    #[test]
    fn low_homophily_concentrates() {
        let mut total = 0.0;
        for seed in 0..20 {
            let s = synth_dataset(&cfg(0.1, seed)).unwrap();
            assert!(
                (s.realized_homophily - 0.1).abs() <= 0.03,
                "seed {seed}: {}",
                s.realized_homophily
            );
            total += s.realized_homophily;
        }
        assert!((total / 20.0 - 0.1).abs() < 0.01);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = synth_dataset(&cfg(0.4, 9)).unwrap();
        let b = synth_dataset(&cfg(0.4, 9)).unwrap();
        assert_eq!(a.dataset.features, b.dataset.features);
        assert_eq!(a.dataset.graph, b.dataset.graph);
    }

    #[test]
    fn realized_homophily_monotone_in_target() {
        let mut last = -1.0;
        for step in 1..=9 {
            let s = synth_dataset(&cfg(step as f64 / 10.0, 11)).unwrap();
            assert!(s.realized_homophily > last);
            last = s.realized_homophily;
        }
    }

    #[test]
    fn infeasible_combination_is_reported() {
        // 4 blocks of 5 nodes hold only 40 internal pairs, far fewer than
        // the 190 edges a mean degree of 19 requires.
        let bad = SynthConfig {
            n: 20,
            classes: 4,
            dims: 4,
            homophily: 0.9,
            mean_degree: 19.0,
            ..SynthConfig::default()
        };
        match synth_dataset(&bad) {
            Err(Error::Infeasible(msg)) => assert!(msg.contains("feasible range")),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_config() {
        let bad = SynthConfig {
            classes: 1,
            ..SynthConfig::default()
        };
        assert!(synth_dataset(&bad).is_err());
        let bad = SynthConfig {
            dims: 2,
            ..SynthConfig::default()
        };
        assert!(synth_dataset(&bad).is_err());
    }
}
