//! Dual-encoder clustering network.
//!
//! An attribute encoder maps filtered features `F` to `Z_F`, a structure
//! encoder maps the normalized adjacency `A` to `Z_A`, and a decoder
//! reconstructs `F` from `Z = [Z_A | Z_F]`. Training minimizes
//! `L_CR + L_SCE + L_CLU` with Adam; cluster centres start from k-means on
//! the untrained embeddings and are then learned with everything else.

pub mod loss;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::NodeDataset;
use crate::error::{Error, Result};
use crate::eval::{evaluate, kmeans, MetricReport, KMEANS_MAX_ITERS};
use crate::filter::{laplacian_of_reconstructed, mixed_filter, FilterConfig};
use crate::graph::{normalize_adjacency, LabelVector, NormalizedGraph};
use crate::matrix::Matrix;
use crate::nn::{AdamConfig, AdamState, Mlp, Parameters};
use crate::reconstruct::{
    build_heterophilic, build_homophilic, cosine_similarity_matrix, HomophilicConfig,
    DEFAULT_HETEROPHILIC_BUDGET,
};

pub use loss::{
    assign, correlation_matrix, loss_clu, loss_cr, loss_sce, soft_assignment, target_distribution,
    TargetDistribution,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Architecture {
    pub hidden: usize,
    pub embedding: usize,
    pub decoder_hidden: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            hidden: 256,
            embedding: 64,
            decoder_hidden: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgcnModel {
    pub enc_f: Mlp,
    pub enc_a: Mlp,
    pub dec: Mlp,
    /// `c x 2·embedding`.
    pub centroids: Matrix,
    pub alpha: f64,
    pub beta: f64,
}

impl DgcnModel {
    /// Glorot-initialized model with zero centroids.
    pub fn new(
        dims: usize,
        nodes: usize,
        clusters: usize,
        arch: Architecture,
        alpha: f64,
        beta: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let e = arch.embedding;
        let enc_f = Mlp::glorot(&[dims, arch.hidden, e], rng)?;
        let enc_a = Mlp::glorot(&[nodes, arch.hidden, e], rng)?;
        let dec = Mlp::glorot(&[2 * e, arch.decoder_hidden, dims], rng)?;
        let model = DgcnModel {
            enc_f,
            enc_a,
            dec,
            centroids: Matrix::zeros(clusters, 2 * e),
            alpha,
            beta,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let e = self.enc_f.output_width();
        if self.enc_a.output_width() != e {
            return Err(Error::shape(
                "structure embedding",
                e,
                self.enc_a.output_width(),
            ));
        }
        if self.dec.input_width() != 2 * e {
            return Err(Error::shape("decoder input", 2 * e, self.dec.input_width()));
        }
        if self.dec.output_width() != self.enc_f.input_width() {
            return Err(Error::shape(
                "decoder output",
                self.enc_f.input_width(),
                self.dec.output_width(),
            ));
        }
        if self.centroids.cols() != 2 * e {
            return Err(Error::shape("centroids", 2 * e, self.centroids.cols()));
        }
        if !self.centroids.all_finite() {
            return Err(Error::NonFinite("centroids".into()));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidArgument("alpha must be positive".into()));
        }
        if !(self.beta >= 1.0) {
            return Err(Error::InvalidArgument("beta must be >= 1".into()));
        }
        Ok(())
    }

    pub fn clusters(&self) -> usize {
        self.centroids.rows()
    }
}

fn prefixed<'a>(prefix: &str, tensors: Vec<(String, &'a [f64])>) -> Vec<(String, &'a [f64])> {
    tensors
        .into_iter()
        .map(|(n, t)| (format!("{prefix}.{n}"), t))
        .collect()
}

impl Parameters for DgcnModel {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = prefixed("enc_f", self.enc_f.tensors());
        out.extend(prefixed("enc_a", self.enc_a.tensors()));
        out.extend(prefixed("dec", self.dec.tensors()));
        out.push(("centroids".into(), self.centroids.as_slice()));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.enc_f.tensors_mut();
        out.extend(self.enc_a.tensors_mut());
        out.extend(self.dec.tensors_mut());
        out.push(self.centroids.as_mut_slice());
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub z_f: Matrix,
    pub z_a: Matrix,
    /// `[Z_A | Z_F]`.
    pub z: Matrix,
}

/// Runs both encoders. `a` is the normalized adjacency.
pub fn encode(model: &DgcnModel, f: &Matrix, a: &Matrix) -> Result<Embeddings> {
    check_inputs(model, f, a)?;
    let (z_f, _) = model.enc_f.forward(f)?;
    let (z_a, _) = model.enc_a.forward(a)?;
    let z = z_a.hconcat(&z_f)?;
    Ok(Embeddings { z_f, z_a, z })
}

fn check_inputs(model: &DgcnModel, f: &Matrix, a: &Matrix) -> Result<()> {
    if f.cols() != model.enc_f.input_width() {
        return Err(Error::shape(
            "attribute encoder input",
            model.enc_f.input_width(),
            f.cols(),
        ));
    }
    if a.cols() != model.enc_a.input_width() || !a.is_square() {
        return Err(Error::shape(
            "structure encoder input",
            model.enc_a.input_width(),
            a.cols(),
        ));
    }
    if a.rows() != f.rows() {
        return Err(Error::shape("node count", f.rows(), a.rows()));
    }
    Ok(())
}

/// Multipliers on the three objectives. All ones is the model as defined;
/// other values exist for ablations.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossWeights {
    pub cr: f64,
    pub sce: f64,
    pub clu: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            cr: 1.0,
            sce: 1.0,
            clu: 1.0,
        }
    }
}

/// Unweighted component values and the weighted total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub cr: f64,
    pub sce: f64,
    pub clu: f64,
}

struct Evaluation {
    loss: LossBreakdown,
    grads: Vec<Vec<f64>>,
    floored: bool,
}

/// With `target = None` the target distribution is derived from the current
/// soft assignment and treated as a constant.
fn objective(
    model: &DgcnModel,
    f: &Matrix,
    a: &Matrix,
    target: Option<&Matrix>,
    w: &LossWeights,
) -> Result<Evaluation> {
    check_inputs(model, f, a)?;
    let e = model.enc_f.output_width();
    let (z_f, tape_f) = model.enc_f.forward(f)?;
    let (z_a, tape_a) = model.enc_a.forward(a)?;
    let z = z_a.hconcat(&z_f)?;
    let (f_bar, tape_d) = model.dec.forward(&z)?;

    let m = correlation_matrix(&z_a, &z_f)?;
    let (cr, d_m) = loss::loss_cr_grad(&m)?;
    let (sce, d_fbar) = loss::loss_sce_grad(f, &f_bar, model.beta)?;
    let q = soft_assignment(&z, &model.centroids, model.alpha)?;
    let derived;
    let (p, floored) = match target {
        Some(p) => (p, false),
        None => {
            let t = target_distribution(&q)?;
            derived = t.p;
            (&derived, t.floored)
        }
    };
    let clu = loss_clu(p, &q)?;

    let (mut d_za, mut d_zf) = loss::correlation_backward(&z_a, &z_f, &d_m);
    d_za.scale_in_place(w.cr);
    d_zf.scale_in_place(w.cr);
    let (dec_grads, mut d_z) = model.dec.backward(tape_d, &d_fbar.scale(w.sce))?;
    let (d_z_clu, d_centroids) = loss::clu_backward(&z, &model.centroids, model.alpha, p)?;
    d_z.add_scaled(&d_z_clu, w.clu);
    let (dz_a, dz_f) = d_z.hsplit(e);
    d_za.add_scaled(&dz_a, 1.0);
    d_zf.add_scaled(&dz_f, 1.0);

    let (enc_f_grads, _) = model.enc_f.backward(tape_f, &d_zf)?;
    let (enc_a_grads, _) = model.enc_a.backward(tape_a, &d_za)?;
    let mut grads = enc_f_grads.into_flat();
    grads.extend(enc_a_grads.into_flat());
    grads.extend(dec_grads.into_flat());
    grads.push(d_centroids.scale(w.clu).into_vec());

    let loss = LossBreakdown {
        total: w.cr * cr + w.sce * sce + w.clu * clu,
        cr,
        sce,
        clu,
    };
    Ok(Evaluation {
        loss,
        grads,
        floored,
    })
}

/// Objective and gradients for every parameter of [`DgcnModel`], in
/// [`Parameters`] order. `p` is the fixed target distribution.
pub fn total_loss(
    model: &DgcnModel,
    f: &Matrix,
    a: &Matrix,
    p: &Matrix,
    weights: &LossWeights,
) -> Result<(LossBreakdown, Vec<Vec<f64>>)> {
    let ev = objective(model, f, a, Some(p), weights)?;
    Ok((ev.loss, ev.grads))
}

/// Mean over embedding columns of the standard deviation across nodes.
/// Values near zero mean every node maps to the same point.
pub fn embedding_spread(z: &Matrix) -> f64 {
    let n = z.rows() as f64;
    if z.rows() == 0 || z.cols() == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for j in 0..z.cols() {
        let mean = (0..z.rows()).map(|i| z[(i, j)]).sum::<f64>() / n;
        let var = (0..z.rows())
            .map(|i| (z[(i, j)] - mean) * (z[(i, j)] - mean))
            .sum::<f64>()
            / n;
        total += libm::sqrt(var);
    }
    total / z.cols() as f64
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub epochs: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub arch: Architecture,
    pub alpha: f64,
    pub beta: f64,
    pub weights: LossWeights,
    /// k-means seeds tried before giving up on an empty cluster.
    pub kmeans_restarts: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 500,
            adam: AdamConfig::default(),
            seed: 0,
            arch: Architecture::default(),
            alpha: 1.0,
            beta: 1.0,
            weights: LossWeights::default(),
            kmeans_restarts: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainReport {
    pub total: Vec<f64>,
    pub cr: Vec<f64>,
    pub sce: Vec<f64>,
    pub clu: Vec<f64>,
    pub labels: Vec<usize>,
    pub metrics: Option<MetricReport>,
    pub seed: u64,
    pub config: TrainConfig,
    /// Epochs whose target distribution had an empty soft cluster.
    pub floored_targets: usize,
    pub embedding_spread: f64,
}

impl TrainReport {
    pub fn epochs_run(&self) -> usize {
        self.total.len()
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: DgcnModel,
    pub report: TrainReport,
}

/// Sets the centroids by k-means on the untrained embeddings.
pub fn init_centroids(model: &mut DgcnModel, z: &Matrix, seed: u64, restarts: usize) -> Result<()> {
    let c = model.clusters();
    for r in 0..restarts.max(1) {
        let km = kmeans(z, c, seed.wrapping_add(r as u64), KMEANS_MAX_ITERS)?;
        if km.empty_clusters == 0 {
            model.centroids = km.centroids;
            return Ok(());
        }
    }
    Err(Error::KmeansDegenerate(format!(
        "k-means left a cluster empty after {} seeds",
        restarts.max(1)
    )))
}

/// Trains on filtered features `f` and normalized adjacency `a`.
pub fn train(
    f: &Matrix,
    a: &Matrix,
    clusters: usize,
    truth: Option<&LabelVector>,
    cfg: &TrainConfig,
) -> Result<Trained> {
    if clusters < 2 {
        return Err(Error::InvalidArgument("need at least two clusters".into()));
    }
    if !f.all_finite() || !a.all_finite() {
        return Err(Error::NonFinite("training inputs".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = DgcnModel::new(
        f.cols(),
        a.rows(),
        clusters,
        cfg.arch,
        cfg.alpha,
        cfg.beta,
        &mut rng,
    )?;
    let z0 = encode(&model, f, a)?.z;
    init_centroids(&mut model, &z0, cfg.seed, cfg.kmeans_restarts)?;

    let mut adam = AdamState::new(cfg.adam, &model);
    let mut report = TrainReport {
        total: Vec::with_capacity(cfg.epochs),
        cr: Vec::with_capacity(cfg.epochs),
        sce: Vec::with_capacity(cfg.epochs),
        clu: Vec::with_capacity(cfg.epochs),
        labels: Vec::new(),
        metrics: None,
        seed: cfg.seed,
        config: cfg.clone(),
        floored_targets: 0,
        embedding_spread: 0.0,
    };
    for epoch in 0..cfg.epochs {
        let ev = objective(&model, f, a, None, &cfg.weights)?;
        if ev.floored {
            report.floored_targets += 1;
        }
        if !ev.loss.total.is_finite() {
            return Err(Error::NonFinite(format!("loss at epoch {epoch}")));
        }
        report.total.push(ev.loss.total);
        report.cr.push(ev.loss.cr);
        report.sce.push(ev.loss.sce);
        report.clu.push(ev.loss.clu);
        adam.step(&mut model, &ev.grads)?;
    }
    let z = encode(&model, f, a)?.z;
    let q = soft_assignment(&z, &model.centroids, model.alpha)?;
    report.labels = assign(&q);
    report.embedding_spread = embedding_spread(&z);
    if let Some(y) = truth {
        report.metrics = Some(evaluate(&report.labels, y.labels())?);
    }
    Ok(Trained { model, report })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PipelineConfig {
    pub filter: FilterConfig,
    pub heterophilic_budget: usize,
    pub homophilic: HomophilicConfig,
    pub train: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            filter: FilterConfig { k: 2, mu: 0.5 },
            heterophilic_budget: DEFAULT_HETEROPHILIC_BUDGET,
            homophilic: HomophilicConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

/// Both reconstructed graphs and the Laplacians the filter uses.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub normalized: NormalizedGraph,
    pub s: Matrix,
    pub h: Matrix,
    pub l_s: Matrix,
    pub l_h: Matrix,
    pub homophilic_iterations: usize,
    pub warnings: Vec<String>,
}

/// Builds `S` and `H` from the raw features and graph.
pub fn reconstruct(dataset: &NodeDataset, cfg: &PipelineConfig) -> Result<Reconstruction> {
    let x = &dataset.features;
    let normalized = normalize_adjacency(&dataset.graph);
    let w = cosine_similarity_matrix(x);
    let het = build_heterophilic(&w, &normalized, cfg.heterophilic_budget)?;
    let hom = build_homophilic(x, &normalized, &cfg.homophilic)?;
    let mut warnings = Vec::new();
    let l_s = laplacian_of_reconstructed(&hom.s)?.laplacian;
    let l_h = match laplacian_of_reconstructed(&het.h) {
        Ok(l) => l.laplacian,
        Err(Error::EmptyGraph) => {
            warnings
                .push("heterophilic graph is empty; high-pass branch uses the input graph".into());
            normalized.laplacian.clone()
        }
        Err(e) => return Err(e),
    };
    Ok(Reconstruction {
        normalized,
        s: hom.s,
        h: het.h,
        l_s,
        l_h,
        homophilic_iterations: hom.iterations_run,
        warnings,
    })
}

impl Reconstruction {
    pub fn filter(&self, x: &Matrix, cfg: FilterConfig) -> Result<Matrix> {
        Ok(mixed_filter(x, &self.l_s, &self.l_h, cfg)?.f)
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub reconstruction: Reconstruction,
    pub features: Matrix,
    pub trained: Trained,
}

/// Reconstruct, filter, train. The structure encoder sees the normalized
/// input adjacency.
pub fn run_pipeline(dataset: &NodeDataset, cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    let reconstruction = reconstruct(dataset, cfg)?;
    let features = reconstruction.filter(&dataset.features, cfg.filter)?;
    let trained = train(
        &features,
        &reconstruction.normalized.a_norm,
        dataset.clusters,
        dataset.labels.as_ref(),
        &cfg.train,
    )?;
    Ok(PipelineOutcome {
        reconstruction,
        features,
        trained,
    })
}

/// Every node spread evenly over `c` clusters.
pub fn uniform_target(n: usize, c: usize) -> Matrix {
    Matrix::filled(n, c, 1.0 / c as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_arch() -> Architecture {
        Architecture {
            hidden: 6,
            embedding: 3,
            decoder_hidden: 5,
        }
    }

    fn toy_model(n: usize, d: usize, c: usize) -> DgcnModel {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut m = DgcnModel::new(d, n, c, small_arch(), 1.0, 1.0, &mut rng).unwrap();
        m.centroids = Matrix::from_fn(c, 6, |u, j| ((u * 3 + j) as f64 * 0.9).cos());
        m
    }

    #[test]
    fn zero_encoders_give_zero_embeddings() {
        let m = DgcnModel {
            enc_f: Mlp::zeros(&[4, 6, 3]).unwrap(),
            enc_a: Mlp::zeros(&[5, 6, 3]).unwrap(),
            dec: Mlp::zeros(&[6, 5, 4]).unwrap(),
            centroids: Matrix::zeros(2, 6),
            alpha: 1.0,
            beta: 1.0,
        };
        let e = encode(&m, &Matrix::filled(5, 4, 1.0), &Matrix::identity(5)).unwrap();
        assert_eq!(e.z, Matrix::zeros(5, 6));
    }

    #[test]
    fn structure_embedding_comes_first() {
        let m = toy_model(3, 4, 2);
        let f = Matrix::from_fn(3, 4, |i, j| (i + j) as f64 * 0.3);
        let e = encode(&m, &f, &Matrix::identity(3)).unwrap();
        let (left, right) = e.z.hsplit(3);
        assert_eq!(left, e.z_a);
        assert_eq!(right, e.z_f);
        assert_eq!(e.z_a, m.enc_a.forward(&Matrix::identity(3)).unwrap().0);
    }

    #[test]
    fn parameter_layout_matches_gradients() {
        let m = toy_model(4, 3, 2);
        let f = Matrix::from_fn(4, 3, |i, j| ((i * 3 + j) as f64).sin());
        let a = Matrix::identity(4);
        let p = uniform_target(4, 2);
        let (_, g) = total_loss(&m, &f, &a, &p, &LossWeights::default()).unwrap();
        assert_eq!(g.iter().map(Vec::len).collect::<Vec<_>>(), m.tensor_sizes());
        let names: Vec<String> = m.tensors().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names[0], "enc_f.layers[0].weight");
        assert_eq!(names.last().unwrap(), "centroids");
    }

    #[test]
    fn rejects_wrong_widths() {
        let m = toy_model(4, 3, 2);
        assert!(encode(&m, &Matrix::zeros(4, 2), &Matrix::identity(4)).is_err());
        assert!(encode(&m, &Matrix::zeros(4, 3), &Matrix::identity(5)).is_err());
    }

    #[test]
    fn spread_of_constant_rows_is_zero() {
        assert_eq!(embedding_spread(&Matrix::filled(4, 3, 2.0)), 0.0);
        let z = Matrix::from_rows(&[[0.0, 1.0], [2.0, 1.0]]);
        assert!((embedding_spread(&z) - 0.5).abs() < 1e-15);
    }
}
