use rand::Rng;

use super::layer::{
    chain_backprop, chain_forward, chain_loss, sgd_update, Activation, Dense, LayerParams, LossKind,
    Parameters, Targets,
};
use super::matrix::Matrix;
use crate::error::{Error, Result};
use crate::rng;

/// Sigmoid hidden layers followed by a softmax head over `label_count` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepModel {
    hidden: Vec<LayerParams>,
    head: LayerParams,
    label_count: usize,
}

/// Per-layer gradients, hidden layers first and the head last.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerParams>,
}

impl Parameters for Gradients {
    fn tensors(&self) -> Vec<&[f32]> {
        self.layers.iter().flat_map(|l| l.tensors()).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f32]> {
        self.layers.iter_mut().flat_map(|l| l.tensors_mut()).collect()
    }
}

impl DeepModel {
    pub fn new(hidden: Vec<LayerParams>, head: LayerParams) -> Result<Self> {
        if hidden.is_empty() {
            return Err(Error::Config("a model needs at least one hidden layer".into()));
        }
        for (i, pair) in hidden.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::shape(
                    format!("hidden layer {} input", i + 1),
                    pair[0].out_dim(),
                    pair[1].in_dim(),
                ));
            }
        }
        let last = hidden.last().expect("non-empty").out_dim();
        if head.in_dim() != last {
            return Err(Error::shape("head input", last, head.in_dim()));
        }
        if head.out_dim() == 0 {
            return Err(Error::Config("label_count must be positive".into()));
        }
        for layer in hidden.iter().chain(std::iter::once(&head)) {
            if !layer.is_finite() {
                return Err(Error::NonFinite("model parameters".into()));
            }
        }
        let label_count = head.out_dim();
        Ok(DeepModel {
            hidden,
            head,
            label_count,
        })
    }

    /// Glorot-initialised model drawn from `seed`.
    pub fn init(input_dim: usize, hidden_dims: &[usize], label_count: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || hidden_dims.contains(&0) || label_count == 0 {
            return Err(Error::Config("layer dimensions must be positive".into()));
        }
        let mut rng = rng::seeded(seed);
        let mut hidden = Vec::with_capacity(hidden_dims.len());
        let mut prev = input_dim;
        for &d in hidden_dims {
            hidden.push(LayerParams::glorot(prev, d, &mut rng));
            prev = d;
        }
        let head = LayerParams::glorot(prev, label_count, &mut rng);
        DeepModel::new(hidden, head)
    }

    /// A fresh head on top of existing hidden layers.
    pub fn with_new_head<R: Rng + ?Sized>(
        hidden: Vec<LayerParams>,
        label_count: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let last = hidden
            .last()
            .ok_or_else(|| Error::Config("a model needs at least one hidden layer".into()))?
            .out_dim();
        let head = LayerParams::glorot(last, label_count, rng);
        DeepModel::new(hidden, head)
    }

    pub fn hidden(&self) -> &[LayerParams] {
        &self.hidden
    }

    pub fn head(&self) -> &LayerParams {
        &self.head
    }

    pub fn label_count(&self) -> usize {
        self.label_count
    }

    pub fn input_dim(&self) -> usize {
        self.hidden[0].in_dim()
    }

    /// `[input, hidden..., labels]`.
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.hidden.iter().map(|l| l.out_dim()));
        dims.push(self.label_count);
        dims
    }

    pub fn layers(&self) -> impl Iterator<Item = &LayerParams> {
        self.hidden.iter().chain(std::iter::once(&self.head))
    }

    fn chain(&self) -> Vec<Dense<'_>> {
        self.hidden
            .iter()
            .map(|params| Dense {
                params,
                activation: Activation::Sigmoid,
            })
            .chain(std::iter::once(Dense {
                params: &self.head,
                activation: Activation::Softmax,
            }))
            .collect()
    }

    /// Class probabilities, one row per input row.
    pub fn forward(&self, batch: &Matrix) -> Result<Matrix> {
        let pass = chain_forward(&self.chain(), batch)?;
        Ok(pass.acts.into_iter().last().expect("non-empty"))
    }

    /// Output of the last hidden layer.
    pub fn features(&self, batch: &Matrix) -> Result<Matrix> {
        let mut pass = chain_forward(&self.chain()[..self.hidden.len()], batch)?;
        Ok(pass.acts.pop().expect("non-empty"))
    }

    pub fn loss(&self, batch: &Matrix, targets: Targets<'_>, kind: LossKind) -> Result<f64> {
        let pass = chain_forward(&self.chain(), batch)?;
        chain_loss(&pass, targets, kind)
    }

    pub fn backprop(&self, batch: &Matrix, targets: Targets<'_>, kind: LossKind) -> Result<Gradients> {
        self.backprop_with_loss(batch, targets, kind).map(|(_, g)| g)
    }

    pub fn backprop_with_loss(
        &self,
        batch: &Matrix,
        targets: Targets<'_>,
        kind: LossKind,
    ) -> Result<(f64, Gradients)> {
        let (loss, layers) = chain_backprop(&self.chain(), batch, targets, kind)?;
        Ok((loss, Gradients { layers }))
    }

    pub fn sgd_step(&mut self, grads: &Gradients, learning_rate: f32) -> Result<()> {
        if grads.layers.len() != self.hidden.len() + 1 {
            return Err(Error::shape("sgd_step", self.hidden.len() + 1, grads.layers.len()));
        }
        sgd_update(self, grads, learning_rate)
    }

    /// Most probable label per row; ties go to the lowest index.
    pub fn predict(&self, batch: &Matrix) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.forward(batch)?))
    }

    /// `Σ (in·out + out)` over all layers.
    pub fn parameter_count(&self) -> usize {
        self.layers().map(|l| l.in_dim() * l.out_dim() + l.out_dim()).sum()
    }
}

pub fn argmax_rows(probs: &Matrix) -> Vec<usize> {
    probs.row_iter().map(argmax).collect()
}

/// First index of the maximum.
pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

impl Parameters for DeepModel {
    fn tensors(&self) -> Vec<&[f32]> {
        self.layers().flat_map(|l| l.tensors()).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f32]> {
        self.hidden
            .iter_mut()
            .chain(std::iter::once(&mut self.head))
            .flat_map(|l| l.tensors_mut())
            .collect()
    }
}
