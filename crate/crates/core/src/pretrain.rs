//! Greedy layer-wise pretraining with tied-weight denoising autoencoders,
//! followed by supervised fine-tuning of the stacked encoders under a new
//! softmax head.

use rand::Rng;

use crate::data::{holdout, LabeledData};
use crate::engine::{map_batches, MapSchedule};
use crate::error::{Error, Result};
use crate::eval::{error_rate, EarlyStopMonitor, StopDecision};
use crate::nn::{
    add_bias, column_sums, gemm_nn, gemm_nt, gemm_tn, sgd_update, sigmoid, Activation, DeepModel,
    LayerParams, LossKind, Matrix, Parameters, Targets,
};
use crate::rng::{self, derive_seed};

const INIT_TAG: u64 = 0x696e_6974;
const LAYER_TAG: u64 = 0x6c61_7972;
const HEAD_TAG: u64 = 0x6865_6164;

/// Encoder `W: d_in x d_hidden` with bias, and a decoder that reuses `Wᵀ`
/// with its own bias of length `d_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderLayer {
    pub encoder: LayerParams,
    pub decoder_bias: Vec<f32>,
}

impl Parameters for AutoencoderLayer {
    fn tensors(&self) -> Vec<&[f32]> {
        vec![self.encoder.weights.as_slice(), &self.encoder.biases, &self.decoder_bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f32]> {
        vec![
            self.encoder.weights.as_mut_slice(),
            &mut self.encoder.biases,
            &mut self.decoder_bias,
        ]
    }
}

impl AutoencoderLayer {
    pub fn new(encoder: LayerParams, decoder_bias: Vec<f32>) -> Result<Self> {
        if decoder_bias.len() != encoder.in_dim() {
            return Err(Error::shape("decoder bias", encoder.in_dim(), decoder_bias.len()));
        }
        Ok(AutoencoderLayer { encoder, decoder_bias })
    }

    pub fn zeros(d_in: usize, d_hidden: usize) -> Self {
        AutoencoderLayer {
            encoder: LayerParams::zeros(d_in, d_hidden),
            decoder_bias: vec![0.0; d_in],
        }
    }

    pub fn glorot<R: Rng + ?Sized>(d_in: usize, d_hidden: usize, rng: &mut R) -> Self {
        AutoencoderLayer {
            encoder: LayerParams::glorot(d_in, d_hidden, rng),
            decoder_bias: vec![0.0; d_in],
        }
    }

    /// Initialisation shared by the sequential and distributed trainers.
    pub(crate) fn seeded(d_in: usize, d_hidden: usize, seed: u64) -> Self {
        AutoencoderLayer::glorot(d_in, d_hidden, &mut rng::seeded(derive_seed(seed, &[INIT_TAG])))
    }

    pub fn d_in(&self) -> usize {
        self.encoder.in_dim()
    }

    pub fn d_hidden(&self) -> usize {
        self.encoder.out_dim()
    }

    /// Materialised decoder weights (`Wᵀ`, `d_hidden x d_in`).
    pub fn decoder_weights(&self) -> Matrix {
        self.encoder.weights.transpose()
    }

    /// `sigmoid(x W + b)`.
    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        self.encoder.forward(x, Activation::Sigmoid)
    }

    /// `sigmoid(h Wᵀ + b_dec)`.
    pub fn decode(&self, h: &Matrix) -> Result<Matrix> {
        if h.cols() != self.d_hidden() {
            return Err(Error::shape("decode input", self.d_hidden(), h.cols()));
        }
        let mut out = Matrix::zeros(h.rows(), self.d_in());
        gemm_nt(h, &self.encoder.weights, &mut out);
        add_bias(&mut out, &self.decoder_bias);
        out.map_inplace(sigmoid);
        Ok(out)
    }

    /// Mean over rows of `0.5 * Σ (decode(encode(x)) - x)²` on uncorrupted input.
    pub fn reconstruction_loss(&self, clean: &Matrix) -> Result<f64> {
        if clean.rows() == 0 {
            return Ok(0.0);
        }
        let recon = self.decode(&self.encode(clean)?)?;
        Ok(squared_error(&recon, clean) / clean.rows() as f64)
    }

    /// Loss and gradients for reconstructing `target` from `input`
    /// (the corrupted copy). The weight gradient sums the encoder and
    /// decoder paths since the two share `W`.
    pub fn gradients(&self, input: &Matrix, target: &Matrix) -> Result<(f64, AutoencoderLayer)> {
        if input.shape() != target.shape() {
            return Err(Error::shape(
                "autoencoder target",
                format!("{:?}", input.shape()),
                format!("{:?}", target.shape()),
            ));
        }
        if input.rows() == 0 {
            return Err(Error::shape("autoencoder batch", "at least one row", 0));
        }
        let h = self.encode(input)?;
        let recon = self.decode(&h)?;
        let b = input.rows() as f32;
        let loss = squared_error(&recon, target) / input.rows() as f64;

        let mut d_out = recon;
        for (d, t) in d_out.as_mut_slice().iter_mut().zip(target.as_slice()) {
            let y = *d;
            *d = (y - t) / b * y * (1.0 - y);
        }
        let mut d_hidden = Matrix::zeros(h.rows(), self.d_hidden());
        gemm_nn(&d_out, &self.encoder.weights, &mut d_hidden);
        for (d, a) in d_hidden.as_mut_slice().iter_mut().zip(h.as_slice()) {
            *d *= a * (1.0 - a);
        }

        let mut grad_w = Matrix::zeros(self.d_in(), self.d_hidden());
        gemm_tn(input, &d_hidden, &mut grad_w);
        let mut decoder_path = Matrix::zeros(self.d_in(), self.d_hidden());
        gemm_tn(&d_out, &h, &mut decoder_path);
        for (g, d) in grad_w.as_mut_slice().iter_mut().zip(decoder_path.as_slice()) {
            *g += d;
        }
        let grads = AutoencoderLayer {
            encoder: LayerParams {
                weights: grad_w,
                biases: column_sums(&d_hidden),
            },
            decoder_bias: column_sums(&d_out),
        };
        Ok((loss, grads))
    }
}

fn squared_error(a: &Matrix, b: &Matrix) -> f64 {
    0.5 * a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainConfig {
    pub corruption_prob: f32,
    pub epochs: usize,
    pub learning_rate: f32,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            corruption_prob: 0.3,
            epochs: 15,
            learning_rate: 0.1,
            batch_size: 100,
            seed: 0,
        }
    }
}

impl PretrainConfig {
    pub fn new(corruption_prob: f32, epochs: usize, learning_rate: f32, batch_size: usize, seed: u64) -> Result<Self> {
        let cfg = PretrainConfig {
            corruption_prob,
            epochs,
            learning_rate,
            batch_size,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Zero epochs is accepted and leaves layers at initialisation.
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.corruption_prob) {
            return Err(Error::Config(format!(
                "corruption_prob must lie in [0, 1), got {}",
                self.corruption_prob
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }

    /// Config for layer `index` of a stack.
    pub(crate) fn for_layer(&self, index: usize) -> PretrainConfig {
        PretrainConfig {
            seed: derive_seed(self.seed, &[LAYER_TAG, index as u64]),
            ..*self
        }
    }
}

/// Masking noise: every entry is zeroed independently with probability `prob`.
pub fn corrupt(x: &Matrix, prob: f32, seed: u64) -> Matrix {
    corrupt_with(x, prob, &mut rng::seeded(seed))
}

pub(crate) fn corrupt_with<R: Rng + ?Sized>(x: &Matrix, prob: f32, rng: &mut R) -> Matrix {
    let mut out = x.clone();
    if prob > 0.0 {
        for v in out.as_mut_slice() {
            if rng.random::<f32>() < prob {
                *v = 0.0;
            }
        }
    }
    out
}

/// One denoising SGD step on a clean batch; returns the batch loss before the update.
pub(crate) fn denoising_step<R: Rng + ?Sized>(
    layer: &mut AutoencoderLayer,
    clean: &Matrix,
    cfg: &PretrainConfig,
    rng: &mut R,
) -> Result<f64> {
    let noisy = corrupt_with(clean, cfg.corruption_prob, rng);
    let (loss, grads) = layer.gradients(&noisy, clean)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite("reconstruction loss".into()));
    }
    sgd_update(layer, &grads, cfg.learning_rate)?;
    Ok(loss)
}

/// A trained layer with its clean reconstruction loss before training
/// (`losses[0]`) and after each epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub layer: AutoencoderLayer,
    pub losses: Vec<f64>,
}

/// Trains one denoising autoencoder; each epoch is one shuffled pass.
pub fn pretrain_layer(data: &Matrix, d_hidden: usize, cfg: &PretrainConfig) -> Result<LayerTrace> {
    cfg.validate()?;
    if data.rows() == 0 {
        return Err(Error::Config("pretraining data is empty".into()));
    }
    if d_hidden == 0 {
        return Err(Error::Config("hidden width must be positive".into()));
    }
    let mut layer = AutoencoderLayer::seeded(data.cols(), d_hidden, cfg.seed);
    let mut losses = vec![layer.reconstruction_loss(data)?];
    for epoch in 0..cfg.epochs {
        let mut rng = rng::stream_rng(cfg.seed, epoch, 0);
        let batches = map_batches(data.rows(), cfg.batch_size, 0, MapSchedule::FullPass, &mut rng);
        for batch in &batches {
            denoising_step(&mut layer, &data.select_rows(batch), cfg, &mut rng).map_err(|e| match e {
                Error::NonFinite(what) => Error::NonFinite(format!("{what} at epoch {epoch}")),
                other => other,
            })?;
        }
        let loss = layer.reconstruction_loss(data)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("reconstruction loss at epoch {epoch}")));
        }
        losses.push(loss);
    }
    Ok(LayerTrace { layer, losses })
}

/// Greedy stack: layer `i` trains on the codes of layers `0..i`.
pub fn stack_pretrain(unlabeled: &Matrix, layer_dims: &[usize], cfg: &PretrainConfig) -> Result<Vec<LayerTrace>> {
    if layer_dims.is_empty() {
        return Err(Error::Config("layer_dims is empty".into()));
    }
    let mut input = unlabeled.clone();
    let mut out = Vec::with_capacity(layer_dims.len());
    for (i, &d) in layer_dims.iter().enumerate() {
        let trace = pretrain_layer(&input, d, &cfg.for_layer(i))?;
        if i + 1 < layer_dims.len() {
            input = trace.layer.encode(&input)?;
        }
        out.push(trace);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FineTuneConfig {
    pub epochs: usize,
    pub learning_rate: f32,
    pub batch_size: usize,
    pub patience: usize,
    /// Fraction of the labeled data held out for early stopping.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for FineTuneConfig {
    fn default() -> Self {
        FineTuneConfig {
            epochs: 30,
            learning_rate: 0.5,
            batch_size: 100,
            patience: 5,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

/// Stacks the encoders and puts a Glorot-initialised softmax head on top.
pub fn model_from_pretrained(pretrained: &[AutoencoderLayer], label_count: usize, seed: u64) -> Result<DeepModel> {
    let hidden = pretrained.iter().map(|l| l.encoder.clone()).collect();
    DeepModel::with_new_head(hidden, label_count, &mut rng::seeded(derive_seed(seed, &[HEAD_TAG])))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FineTuneOutcome {
    /// Snapshot from the best validation epoch (the last one without validation data).
    pub model: DeepModel,
    pub best_epoch: Option<usize>,
    pub validation_errors: Vec<f64>,
    pub train_losses: Vec<f64>,
}

/// Supervised training of the full stack plus a new head, with early stopping.
pub fn fine_tune(
    pretrained: &[AutoencoderLayer],
    labeled: &LabeledData,
    label_count: usize,
    cfg: &FineTuneConfig,
) -> Result<FineTuneOutcome> {
    let model = model_from_pretrained(pretrained, label_count, cfg.seed)?;
    train_supervised(model, labeled, cfg)
}

/// Sequential supervised trainer shared by fine-tuning and the cold-start
/// baselines: one shuffled pass per epoch, early stopping on held-out error.
pub fn train_supervised(mut model: DeepModel, labeled: &LabeledData, cfg: &FineTuneConfig) -> Result<FineTuneOutcome> {
    if labeled.is_empty() {
        return Err(Error::Config("labeled data is empty".into()));
    }
    if !(cfg.learning_rate > 0.0) || cfg.batch_size == 0 {
        return Err(Error::Config("learning_rate and batch_size must be positive".into()));
    }
    if let Some(&bad) = labeled.labels.iter().find(|&&l| l >= model.label_count()) {
        return Err(Error::Label {
            label: bad,
            label_count: model.label_count(),
        });
    }
    let (fit, val) = holdout(labeled, cfg.validation_fraction, cfg.seed)?;
    let fit = if fit.is_empty() { labeled.clone() } else { fit };
    let mut monitor = EarlyStopMonitor::new(cfg.patience);
    let mut best = model.clone();
    let mut validation_errors = Vec::new();
    let mut train_losses = Vec::new();
    for epoch in 0..cfg.epochs {
        let mut rng = rng::stream_rng(cfg.seed, epoch, 0);
        let batches = map_batches(fit.len(), cfg.batch_size, 0, MapSchedule::FullPass, &mut rng);
        let mut total = 0.0;
        for batch in &batches {
            let x = fit.features.select_rows(batch);
            let y: Vec<usize> = batch.iter().map(|&i| fit.labels[i]).collect();
            let (loss, grads) = model.backprop_with_loss(&x, Targets::Labels(&y), LossKind::SoftmaxCrossEntropy)?;
            model.sgd_step(&grads, cfg.learning_rate)?;
            total += loss * batch.len() as f64;
        }
        train_losses.push(total / fit.len() as f64);
        if val.is_empty() {
            best = model.clone();
            continue;
        }
        let err = error_rate(&model, &val)?;
        validation_errors.push(err);
        let decision = monitor.update(epoch, err);
        if monitor.improved_at(epoch) {
            best = model.clone();
        }
        if decision == StopDecision::Stop {
            break;
        }
    }
    Ok(FineTuneOutcome {
        model: best,
        best_epoch: if val.is_empty() { cfg.epochs.checked_sub(1) } else { monitor.best_round() },
        validation_errors,
        train_losses,
    })
}
