//! Dense MLPs with hand-written reverse-mode gradients, Adam, and a
//! central-difference gradient checker.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Activation {
    Relu,
    Identity,
}

/// Affine map `y = x Wᵀ + b` with `W` stored `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        DenseLayer {
            weight: Matrix::zeros(outputs, inputs),
            bias: vec![0.0; outputs],
        }
    }

    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let limit = libm::sqrt(6.0 / (inputs + outputs) as f64);
        let weight = Matrix::from_fn(outputs, inputs, |_, _| rng.random_range(-limit..=limit));
        DenseLayer {
            weight,
            bias: vec![0.0; outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<DenseLayer>,
    activations: Vec<Activation>,
}

/// Activations cached by [`Mlp::forward`]. Consumed by [`Mlp::backward`], so
/// a tape can only be replayed once.
#[derive(Debug)]
pub struct MlpTape {
    /// Input of every layer.
    inputs: Vec<Matrix>,
    /// Pre-activation output of every layer.
    pre: Vec<Matrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<DenseGrads>,
}

impl MlpGrads {
    /// Weight then bias of every layer, matching [`Parameters`] order.
    pub fn into_flat(self) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for g in self.layers {
            out.push(g.weight.into_vec());
            out.push(g.bias);
        }
        out
    }
}

impl Mlp {
    pub fn new(layers: Vec<DenseLayer>, activations: Vec<Activation>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument(
                "an MLP needs at least one layer".into(),
            ));
        }
        if layers.len() != activations.len() {
            return Err(Error::shape(
                "Mlp activations",
                layers.len(),
                activations.len(),
            ));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::shape(
                    "Mlp layer chain",
                    pair[0].outputs(),
                    pair[1].inputs(),
                ));
            }
        }
        for l in &layers {
            if l.bias.len() != l.outputs() {
                return Err(Error::shape("Mlp bias", l.outputs(), l.bias.len()));
            }
        }
        Ok(Mlp {
            layers,
            activations,
        })
    }

    /// ReLU between layers, linear output, Glorot-uniform weights.
    pub fn glorot(widths: &[usize], rng: &mut impl Rng) -> Result<Self> {
        Self::build(widths, |i, o| DenseLayer::glorot(i, o, rng))
    }

    pub fn zeros(widths: &[usize]) -> Result<Self> {
        Self::build(widths, DenseLayer::zeros)
    }

    fn build(widths: &[usize], mut make: impl FnMut(usize, usize) -> DenseLayer) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidArgument(
                "need input and output widths".into(),
            ));
        }
        let n = widths.len() - 1;
        let layers = widths.windows(2).map(|w| make(w[0], w[1])).collect();
        let mut activations = vec![Activation::Relu; n];
        activations[n - 1] = Activation::Identity;
        Mlp::new(layers, activations)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    /// Layer widths from input to output.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_width()];
        w.extend(self.layers.iter().map(|l| l.outputs()));
        w
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, MlpTape)> {
        if x.cols() != self.input_width() {
            return Err(Error::shape(
                "Mlp::forward input",
                self.input_width(),
                x.cols(),
            ));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (layer, act) in self.layers.iter().zip(&self.activations) {
            let mut y = h.matmul_t(&layer.weight);
            for r in 0..y.rows() {
                for (v, b) in y.row_mut(r).iter_mut().zip(&layer.bias) {
                    *v += b;
                }
            }
            let out = match act {
                Activation::Relu => y.map(|v| v.max(0.0)),
                Activation::Identity => y.clone(),
            };
            inputs.push(h);
            pre.push(y);
            h = out;
        }
        Ok((h, MlpTape { inputs, pre }))
    }

    /// Parameter gradients and the gradient with respect to the input.
    pub fn backward(&self, tape: MlpTape, d_out: &Matrix) -> Result<(MlpGrads, Matrix)> {
        if tape.pre.len() != self.layers.len() {
            return Err(Error::InvalidArgument(
                "tape does not belong to this network".into(),
            ));
        }
        let last = &tape.pre[tape.pre.len() - 1];
        if d_out.shape() != last.shape() {
            return Err(Error::shape(
                "Mlp::backward upstream gradient",
                format!("{}x{}", last.rows(), last.cols()),
                format!("{}x{}", d_out.rows(), d_out.cols()),
            ));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut d = d_out.clone();
        for idx in (0..self.layers.len()).rev() {
            let layer = &self.layers[idx];
            let pre = &tape.pre[idx];
            if self.activations[idx] == Activation::Relu {
                for (g, &p) in d.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                    if p <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            let weight = d.t_matmul(&tape.inputs[idx]);
            let mut bias = vec![0.0; layer.outputs()];
            for row in d.iter_rows() {
                for (b, g) in bias.iter_mut().zip(row) {
                    *b += g;
                }
            }
            let d_in = d.matmul(&layer.weight);
            grads.push(DenseGrads { weight, bias });
            d = d_in;
        }
        grads.reverse();
        Ok((MlpGrads { layers: grads }, d))
    }
}

/// Ordered access to trainable tensors. Gradients are exchanged as
/// `Vec<Vec<f64>>` in the same order.
pub trait Parameters {
    fn tensors(&self) -> Vec<(String, &[f64])>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn tensor_sizes(&self) -> Vec<usize> {
        self.tensors().iter().map(|(_, t)| t.len()).collect()
    }
}

impl Parameters for Mlp {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("layers[{i}].weight"), l.weight.as_slice()));
            out.push((format!("layers[{i}].bias"), l.bias.as_slice()));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in self.layers.iter_mut() {
            out.push(l.weight.as_mut_slice());
            out.push(l.bias.as_mut_slice());
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &impl Parameters) -> Self {
        let sizes = params.tensor_sizes();
        AdamState {
            config,
            step: 0,
            m: sizes.iter().map(|&s| vec![0.0; s]).collect(),
            v: sizes.iter().map(|&s| vec![0.0; s]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Advances the moment estimates and returns the bias-corrected step
    /// `lr * m_hat / (sqrt(v_hat) + eps)` for every tensor. Nothing changes
    /// when a gradient is non-finite.
    pub fn next_update(&mut self, names: &[String], grads: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if grads.len() != self.m.len() {
            return Err(Error::shape("Adam gradients", self.m.len(), grads.len()));
        }
        for (t, g) in grads.iter().enumerate() {
            if g.len() != self.m[t].len() {
                return Err(Error::shape(
                    "Adam gradient tensor",
                    self.m[t].len(),
                    g.len(),
                ));
            }
            if let Some(pos) = g.iter().position(|v| !v.is_finite()) {
                let name = names.get(t).map_or("?", |s| s.as_str());
                return Err(Error::NonFinite(format!("gradient of {name}[{pos}]")));
            }
        }
        self.step += 1;
        let c = &self.config;
        let bc1 = 1.0 - libm::pow(c.beta1, self.step as f64);
        let bc2 = 1.0 - libm::pow(c.beta2, self.step as f64);
        let mut updates = Vec::with_capacity(grads.len());
        for ((g, m), v) in grads.iter().zip(&mut self.m).zip(&mut self.v) {
            let mut u = Vec::with_capacity(g.len());
            for ((&gi, mi), vi) in g.iter().zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = c.beta1 * *mi + (1.0 - c.beta1) * gi;
                *vi = c.beta2 * *vi + (1.0 - c.beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                u.push(c.lr * (m_hat / (libm::sqrt(v_hat) + c.eps)));
            }
            updates.push(u);
        }
        Ok(updates)
    }

    /// One descent step on `params`.
    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &[Vec<f64>]) -> Result<()> {
        let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
        let updates = self.next_update(&names, grads)?;
        for (p, u) in params.tensors_mut().into_iter().zip(&updates) {
            for (pi, ui) in p.iter_mut().zip(u) {
                *pi -= ui;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub h: f64,
    /// Coordinates to test; every coordinate when the model is smaller.
    pub samples: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            h: 1e-5,
            samples: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Name and index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    /// Coordinates resampled because a ReLU kink fell inside the stencil.
    pub kinks: usize,
}

/// Compares analytic gradients with central differences on a random sample
/// of coordinates.
///
/// The relative error of one coordinate is
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`. A coordinate
/// whose one-sided differences disagree sharply is treated as straddling a
/// ReLU kink and replaced by another sample.
pub fn grad_check<P, F>(params: &P, mut loss: F, cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    P: Parameters + Clone,
    F: FnMut(&P) -> Result<(f64, Vec<Vec<f64>>)>,
{
    let (f0, analytic) = loss(params)?;
    let sizes = params.tensor_sizes();
    let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
    if analytic.len() != sizes.len() || analytic.iter().zip(&sizes).any(|(g, &s)| g.len() != s) {
        return Err(Error::InvalidArgument(
            "gradient layout does not match parameters".into(),
        ));
    }
    let coords: Vec<(usize, usize)> = sizes
        .iter()
        .enumerate()
        .flat_map(|(t, &s)| (0..s).map(move |i| (t, i)))
        .collect();
    let mut order: Vec<usize> = (0..coords.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // Fisher-Yates; the first `samples` entries form the sample and the
    // rest are spares for resampling.
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }

    let eval_at = |loss: &mut F, t: usize, i: usize, delta: f64| -> Result<f64> {
        let mut p = params.clone();
        p.tensors_mut()[t][i] += delta;
        Ok(loss(&p)?.0)
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        kinks: 0,
    };
    for &idx in &order {
        if report.checked >= cfg.samples {
            break;
        }
        let (t, i) = coords[idx];
        let plus = eval_at(&mut loss, t, i, cfg.h)?;
        let minus = eval_at(&mut loss, t, i, -cfg.h)?;
        let first = plus - minus;
        let second = plus - 2.0 * f0 + minus;
        if libm::fabs(second) > 1e-4 * libm::fabs(first) + 1e-12 * libm::fabs(f0).max(1.0) {
            report.kinks += 1;
            continue;
        }
        let numeric = first / (2.0 * cfg.h);
        let a = analytic[t][i];
        let denom = libm::fabs(a).max(libm::fabs(numeric)).max(1e-8);
        let rel = libm::fabs(a - numeric) / denom;
        if rel > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = rel;
            report.worst = Some((names[t].clone(), i));
        }
        report.checked += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(17)
    }

    fn input(rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |i, j| ((i * 7 + j * 3) as f64 * 0.37).sin())
    }

    /// Half the squared Frobenius norm of the output.
    fn quadratic_loss(m: &Mlp, x: &Matrix) -> Result<(f64, Vec<Vec<f64>>)> {
        let (y, tape) = m.forward(x)?;
        let value = 0.5 * y.frobenius_sq();
        let (g, _) = m.backward(tape, &y)?;
        Ok((value, g.into_flat()))
    }

    #[test]
    fn zero_network_outputs_zero() {
        let m = Mlp::zeros(&[3, 4, 2]).unwrap();
        let (y, _) = m.forward(&input(5, 3)).unwrap();
        assert_eq!(y, Matrix::zeros(5, 2));
    }

    #[test]
    fn single_layer_is_affine_map() {
        let m = Mlp::glorot(&[3, 2], &mut rng()).unwrap();
        let x = input(4, 3);
        let (y, _) = m.forward(&x).unwrap();
        let l = &m.layers()[0];
        let want = Matrix::from_fn(4, 2, |i, o| {
            (0..3).map(|k| x[(i, k)] * l.weight[(o, k)]).sum::<f64>() + l.bias[o]
        });
        assert!(y.max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn dead_relu_passes_only_output_bias() {
        let mut m = Mlp::glorot(&[2, 3, 2], &mut rng()).unwrap();
        {
            let hidden = &mut m.layers_mut()[0];
            hidden.weight = Matrix::zeros(3, 2);
            hidden.bias = vec![-1.0; 3];
        }
        m.layers_mut()[1].bias = vec![0.25, -0.5];
        let (y, _) = m.forward(&input(3, 2)).unwrap();
        for r in y.iter_rows() {
            assert_eq!(r, &[0.25, -0.5]);
        }
    }

    #[test]
    fn linear_layer_weight_gradient() {
        let m = Mlp::glorot(&[3, 2], &mut rng()).unwrap();
        let x = input(4, 3);
        let (y, tape) = m.forward(&x).unwrap();
        let d_out = y.map(|v| v * 0.5 + 1.0);
        let (g, d_in) = m.backward(tape, &d_out).unwrap();
        assert!(g.layers[0].weight.max_abs_diff(&d_out.t_matmul(&x)) < 1e-12);
        assert!(d_in.max_abs_diff(&d_out.matmul(&m.layers()[0].weight)) < 1e-12);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let m = Mlp::glorot(&[3, 5, 2], &mut rng()).unwrap();
        let (_, tape) = m.forward(&input(4, 3)).unwrap();
        let (g, d_in) = m.backward(tape, &Matrix::zeros(4, 2)).unwrap();
        assert!(g.into_flat().iter().flatten().all(|&v| v == 0.0));
        assert!(d_in.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let m = Mlp::zeros(&[3, 2]).unwrap();
        assert!(m.forward(&input(2, 4)).is_err());
        let (_, tape) = m.forward(&input(2, 3)).unwrap();
        assert!(m.backward(tape, &Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn two_layer_gradients_match_finite_differences() {
        let m = Mlp::glorot(&[4, 6, 3], &mut rng()).unwrap();
        let x = input(5, 4);
        let report =
            grad_check(&m, |p| quadratic_loss(p, &x), &GradCheckConfig::default()).unwrap();
        assert!(report.checked > 20);
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn linear_net_gradient_is_near_exact() {
        let m = Mlp::glorot(&[4, 3], &mut rng()).unwrap();
        let x = input(6, 4);
        let report =
            grad_check(&m, |p| quadratic_loss(p, &x), &GradCheckConfig::default()).unwrap();
        assert!(report.max_rel_error < 1e-7, "{report:?}");
    }

    #[test]
    fn adam_zero_gradient_keeps_parameters() {
        let mut m = Mlp::glorot(&[3, 2], &mut rng()).unwrap();
        let before = m.clone();
        let mut adam = AdamState::new(AdamConfig::default(), &m);
        let zeros: Vec<Vec<f64>> = m.tensor_sizes().iter().map(|&s| vec![0.0; s]).collect();
        for _ in 0..3 {
            adam.step(&mut m, &zeros).unwrap();
        }
        assert_eq!(m, before);
    }

    #[derive(Clone)]
    struct Scalar(Vec<f64>);

    impl Parameters for Scalar {
        fn tensors(&self) -> Vec<(String, &[f64])> {
            vec![("x".into(), self.0.as_slice())]
        }
        fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
            vec![self.0.as_mut_slice()]
        }
    }

    #[test]
    fn adam_three_step_trace() {
        let mut p = Scalar(vec![1.0]);
        let cfg = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        let mut adam = AdamState::new(cfg, &p);
        let grads = [0.5, -0.2, 0.8];
        // Hand recurrence.
        let (mut m, mut v, mut x) = (0.0f64, 0.0f64, 1.0f64);
        for (t, &g) in grads.iter().enumerate() {
            let t = (t + 1) as i32;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x -= 0.1 * (mh / (vh.sqrt() + 1e-8));
            adam.step(&mut p, &[vec![g]]).unwrap();
            assert!((p.0[0] - x).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_constant_gradient_step_tends_to_lr() {
        let mut p = Scalar(vec![0.0]);
        let mut adam = AdamState::new(AdamConfig::default(), &p);
        let mut last = 0.0;
        for _ in 0..2000 {
            let before = p.0[0];
            adam.step(&mut p, &[vec![-3.0]]).unwrap();
            last = p.0[0] - before;
        }
        assert!((last - 1e-2).abs() < 1e-6);
    }

    #[test]
    fn adam_step_scales_with_lr() {
        let names = vec![String::from("x")];
        let grads = [vec![0.3, -1.2, 4.0]];
        let p = Scalar(vec![0.0; 3]);
        let mut a = AdamState::new(AdamConfig::default(), &p);
        let mut b = AdamState::new(
            AdamConfig {
                lr: 4e-2,
                ..AdamConfig::default()
            },
            &p,
        );
        for _ in 0..5 {
            let ua = a.next_update(&names, &grads).unwrap();
            let ub = b.next_update(&names, &grads).unwrap();
            for (x, y) in ua[0].iter().zip(&ub[0]) {
                assert!((4.0 * x - y).abs() <= 1e-15 * y.abs());
            }
        }
    }

    #[test]
    fn adam_rejects_non_finite_gradient_with_path() {
        let mut m = Mlp::zeros(&[2, 2, 1]).unwrap();
        let mut adam = AdamState::new(AdamConfig::default(), &m);
        let mut g: Vec<Vec<f64>> = m.tensor_sizes().iter().map(|&s| vec![0.0; s]).collect();
        g[2][0] = f64::NAN;
        match adam.step(&mut m, &g) {
            Err(Error::NonFinite(msg)) => assert!(msg.contains("layers[1].weight")),
            other => panic!("{other:?}"),
        }
        assert_eq!(adam.steps(), 0);
    }
}
