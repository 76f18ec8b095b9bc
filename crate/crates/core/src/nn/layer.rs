use rand::Rng;

use super::matrix::{gemm_nn, gemm_nt, gemm_tn, Matrix};
use crate::error::{Error, Result};

/// A flat view over every trainable tensor of a parameter set.
///
/// Averaging, SGD and bit-equality checks all work through this view, so the
/// engine can treat a full classifier and a single autoencoder layer alike.
pub trait Parameters: Clone + Send + Sync + 'static {
    fn tensors(&self) -> Vec<&[f32]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f32]>;

    fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// True when both sets have the same layout and identical bit patterns.
    fn bit_eq(&self, other: &Self) -> bool {
        let (a, b) = (self.tensors(), other.tensors());
        a.len() == b.len()
            && a.iter().zip(&b).all(|(x, y)| {
                x.len() == y.len() && x.iter().zip(y.iter()).all(|(p, q)| p.to_bits() == q.to_bits())
            })
    }

    fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// `p -= lr * g` over congruent parameter sets. Gradients are checked for
/// finiteness before anything is written.
pub fn sgd_update<P: Parameters, G: Parameters>(params: &mut P, grads: &G, learning_rate: f32) -> Result<()> {
    let g = grads.tensors();
    {
        let p = params.tensors();
        if p.len() != g.len() || p.iter().zip(&g).any(|(a, b)| a.len() != b.len()) {
            return Err(Error::shape("sgd_step", "gradients congruent with parameters", "mismatched layout"));
        }
    }
    if !g.iter().all(|t| t.iter().all(|v| v.is_finite())) {
        return Err(Error::NonFinite("gradient".into()));
    }
    for (p, g) in params.tensors_mut().into_iter().zip(g) {
        for (pv, gv) in p.iter_mut().zip(g) {
            *pv -= learning_rate * gv;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Softmax,
    /// Only meaningful for tests and analytic checks.
    Identity,
}

#[inline]
pub fn sigmoid(z: f32) -> f32 {
    1.0 / (1.0 + (-z).exp())
}

impl Activation {
    fn apply(self, z: &mut Matrix) {
        match self {
            Activation::Sigmoid => z.map_inplace(sigmoid),
            Activation::Identity => {}
            Activation::Softmax => {
                let cols = z.cols();
                for row in z.as_mut_slice().chunks_exact_mut(cols.max(1)) {
                    softmax_inplace(row);
                }
            }
        }
    }
}

pub(crate) fn softmax_inplace(row: &mut [f32]) {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0f32;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Weights and biases of one dense layer; weights are `in_dim x out_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Matrix,
    pub biases: Vec<f32>,
}

impl LayerParams {
    pub fn new(weights: Matrix, biases: Vec<f32>) -> Result<Self> {
        if biases.len() != weights.cols() {
            return Err(Error::shape("LayerParams::new", weights.cols(), biases.len()));
        }
        Ok(LayerParams { weights, biases })
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        LayerParams {
            weights: Matrix::zeros(in_dim, out_dim),
            biases: vec![0.0; out_dim],
        }
    }

    /// Glorot-uniform weights in `±sqrt(6 / (in + out))`, zero biases.
    pub fn glorot<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt() as f32;
        let data = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        LayerParams {
            weights: Matrix::from_vec(in_dim, out_dim, data).expect("length matches shape"),
            biases: vec![0.0; out_dim],
        }
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.weights.rows()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.weights.cols()
    }

    /// `x * W + b` without activation.
    pub(crate) fn affine(&self, x: &Matrix) -> Matrix {
        let mut z = Matrix::zeros(x.rows(), self.out_dim());
        gemm_nn(x, &self.weights, &mut z);
        add_bias(&mut z, &self.biases);
        z
    }

    pub fn forward(&self, x: &Matrix, activation: Activation) -> Result<Matrix> {
        if x.cols() != self.in_dim() {
            return Err(Error::shape("layer input", self.in_dim(), x.cols()));
        }
        let mut z = self.affine(x);
        activation.apply(&mut z);
        Ok(z)
    }
}

impl Parameters for LayerParams {
    fn tensors(&self) -> Vec<&[f32]> {
        vec![self.weights.as_slice(), &self.biases]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f32]> {
        vec![self.weights.as_mut_slice(), &mut self.biases]
    }
}

pub(crate) fn add_bias(z: &mut Matrix, bias: &[f32]) {
    let cols = z.cols();
    if cols == 0 {
        return;
    }
    for row in z.as_mut_slice().chunks_exact_mut(cols) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

pub(crate) fn column_sums(m: &Matrix) -> Vec<f32> {
    let mut out = vec![0.0f32; m.cols()];
    for row in m.row_iter() {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Mean over rows of `-ln p[label]`; requires a softmax output.
    SoftmaxCrossEntropy,
    /// Mean over rows of `0.5 * Σ (ŷ - t)²`.
    SquaredReconstruction,
}

#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    Labels(&'a [usize]),
    Dense(&'a Matrix),
}

/// One layer of a feedforward chain, borrowed for a forward/backward pass.
#[derive(Debug, Clone, Copy)]
pub struct Dense<'a> {
    pub params: &'a LayerParams,
    pub activation: Activation,
}

pub(crate) struct ChainPass {
    /// `acts[0]` is the input, `acts[i + 1]` the output of layer `i`.
    pub acts: Vec<Matrix>,
    /// Pre-activation of the final layer.
    pub last_logits: Matrix,
}

impl ChainPass {
    pub fn output(&self) -> &Matrix {
        self.acts.last().expect("chain has at least the input")
    }
}

pub(crate) fn chain_forward(layers: &[Dense<'_>], x: &Matrix) -> Result<ChainPass> {
    let mut acts = Vec::with_capacity(layers.len() + 1);
    acts.push(x.clone());
    let mut last_logits = Matrix::zeros(0, 0);
    for (i, layer) in layers.iter().enumerate() {
        let input = acts.last().expect("non-empty");
        if input.cols() != layer.params.in_dim() {
            return Err(Error::shape(
                format!("layer {i} input"),
                layer.params.in_dim(),
                input.cols(),
            ));
        }
        let z = layer.params.affine(input);
        let mut a = z.clone();
        layer.activation.apply(&mut a);
        if i + 1 == layers.len() {
            last_logits = z;
        }
        acts.push(a);
    }
    Ok(ChainPass { acts, last_logits })
}

fn check_targets(out: &Matrix, targets: Targets<'_>, kind: LossKind) -> Result<()> {
    match (kind, targets) {
        (LossKind::SoftmaxCrossEntropy, Targets::Labels(labels)) => {
            if labels.len() != out.rows() {
                return Err(Error::shape("labels", out.rows(), labels.len()));
            }
            if let Some(&bad) = labels.iter().find(|&&l| l >= out.cols()) {
                return Err(Error::Label {
                    label: bad,
                    label_count: out.cols(),
                });
            }
            Ok(())
        }
        (LossKind::SquaredReconstruction, Targets::Dense(t)) => {
            if t.shape() != out.shape() {
                return Err(Error::shape(
                    "reconstruction targets",
                    format!("{:?}", out.shape()),
                    format!("{:?}", t.shape()),
                ));
            }
            Ok(())
        }
        (LossKind::SoftmaxCrossEntropy, Targets::Dense(_)) => Err(Error::Config(
            "cross-entropy loss takes one label per row".into(),
        )),
        (LossKind::SquaredReconstruction, Targets::Labels(_)) => Err(Error::Config(
            "reconstruction loss takes a dense target matrix".into(),
        )),
    }
}

/// Mean loss of a completed forward pass, accumulated in f64.
pub(crate) fn chain_loss(pass: &ChainPass, targets: Targets<'_>, kind: LossKind) -> Result<f64> {
    let out = pass.output();
    check_targets(out, targets, kind)?;
    let rows = out.rows().max(1) as f64;
    let total = match targets {
        Targets::Labels(labels) => {
            let z = &pass.last_logits;
            labels
                .iter()
                .enumerate()
                .map(|(r, &y)| {
                    let row = z.row(r);
                    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
                    let lse = max + row.iter().map(|&v| (v as f64 - max).exp()).sum::<f64>().ln();
                    lse - row[y] as f64
                })
                .sum::<f64>()
        }
        Targets::Dense(t) => {
            0.5 * out
                .as_slice()
                .iter()
                .zip(t.as_slice())
                .map(|(&a, &b)| {
                    let d = a as f64 - b as f64;
                    d * d
                })
                .sum::<f64>()
        }
    };
    Ok(total / rows)
}

/// Gradient of the mean loss with respect to the final pre-activation.
fn output_delta(
    pass: &ChainPass,
    activation: Activation,
    targets: Targets<'_>,
    kind: LossKind,
) -> Result<Matrix> {
    let out = pass.output();
    let inv_b = 1.0 / out.rows() as f32;
    let mut delta = out.clone();
    match (kind, targets) {
        (LossKind::SoftmaxCrossEntropy, Targets::Labels(labels)) => {
            if activation != Activation::Softmax {
                return Err(Error::Config(
                    "cross-entropy loss requires a softmax output layer".into(),
                ));
            }
            for (r, &y) in labels.iter().enumerate() {
                let row = delta.row_mut(r);
                row[y] -= 1.0;
                for v in row.iter_mut() {
                    *v *= inv_b;
                }
            }
        }
        (LossKind::SquaredReconstruction, Targets::Dense(t)) => {
            for (d, tv) in delta.as_mut_slice().iter_mut().zip(t.as_slice()) {
                *d = (*d - tv) * inv_b;
            }
            match activation {
                Activation::Identity => {}
                Activation::Sigmoid => {
                    for (d, y) in delta.as_mut_slice().iter_mut().zip(out.as_slice()) {
                        *d *= y * (1.0 - y);
                    }
                }
                Activation::Softmax => {
                    let cols = out.cols();
                    for (drow, prow) in delta
                        .as_mut_slice()
                        .chunks_exact_mut(cols)
                        .zip(out.as_slice().chunks_exact(cols))
                    {
                        let s: f32 = drow.iter().zip(prow).map(|(g, p)| g * p).sum();
                        for (g, p) in drow.iter_mut().zip(prow) {
                            *g = p * (*g - s);
                        }
                    }
                }
            }
        }
        _ => unreachable!("targets validated by chain_loss"),
    }
    Ok(delta)
}

/// Backpropagation through a dense chain. Returns the mean loss and one
/// gradient entry per layer, congruent with the layer parameters.
pub fn chain_backprop(
    layers: &[Dense<'_>],
    x: &Matrix,
    targets: Targets<'_>,
    kind: LossKind,
) -> Result<(f64, Vec<LayerParams>)> {
    if layers.is_empty() {
        return Err(Error::Config("backprop needs at least one layer".into()));
    }
    if x.rows() == 0 {
        return Err(Error::shape("backprop batch", "at least one row", 0));
    }
    let pass = chain_forward(layers, x)?;
    let loss = chain_loss(&pass, targets, kind)?;
    let last = layers.len() - 1;
    let mut delta = output_delta(&pass, layers[last].activation, targets, kind)?;
    let mut grads: Vec<LayerParams> = Vec::with_capacity(layers.len());
    for i in (0..layers.len()).rev() {
        let params = layers[i].params;
        let input = &pass.acts[i];
        let mut dw = Matrix::zeros(params.in_dim(), params.out_dim());
        gemm_tn(input, &delta, &mut dw);
        let db = column_sums(&delta);
        if i > 0 {
            let mut prev = Matrix::zeros(delta.rows(), params.in_dim());
            gemm_nt(&delta, &params.weights, &mut prev);
            match layers[i - 1].activation {
                Activation::Sigmoid => {
                    for (d, a) in prev.as_mut_slice().iter_mut().zip(input.as_slice()) {
                        *d *= a * (1.0 - a);
                    }
                }
                Activation::Identity => {}
                Activation::Softmax => {
                    return Err(Error::Config("softmax is only supported on the output layer".into()))
                }
            }
            delta = prev;
        }
        grads.push(LayerParams { weights: dw, biases: db });
    }
    grads.reverse();
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    Ok((loss, grads))
}
