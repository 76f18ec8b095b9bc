//! End-to-end activity recognition: frames, features, pretraining and
//! distributed fine-tuning.

use std::io::Write;

use crate::data::{
    featurize, fit_scaler, frame, split, statistical_features, AccelSample, Dataset, FrameConfig, LabelSet,
    LabeledData, Scaler, SAMPLING_HZ, STATISTICAL_FEATURES,
};
use crate::engine::{pretrain_distributed, train_distributed_logged, PretrainRun, RoundConfig, TrainResult};
use crate::error::{Error, Result};
use crate::eval::BaselineSplit;
use crate::model_file::ModelMeta;
use crate::nn::{DeepModel, Matrix};
use crate::pretrain::{model_from_pretrained, PretrainConfig};

/// Scaled train/test splits of one sample stream.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub labels: LabelSet,
    pub frame: FrameConfig,
    pub scaler: Scaler,
    /// Scaled spectrogram rows, labeled and unlabeled.
    pub train: Dataset,
    pub test: Dataset,
    /// The test rows before scaling, as stored in dataset caches.
    pub test_unscaled: Dataset,
    /// Statistical features of the labeled rows, in the same order.
    pub train_stats: LabeledData,
    pub test_stats: LabeledData,
}

impl Prepared {
    pub fn meta(&self) -> ModelMeta {
        ModelMeta {
            window_len: self.frame.window_len,
            step: self.frame.step,
            sampling_hz: SAMPLING_HZ,
            labels: self.labels.names().to_vec(),
            scaler: Some(self.scaler.clone()),
        }
    }

    pub fn baseline_splits(&self) -> (BaselineSplit, BaselineSplit) {
        (
            BaselineSplit {
                spectrogram: self.train.labeled(),
                statistical: self.train_stats.clone(),
            },
            BaselineSplit {
                spectrogram: self.test.labeled(),
                statistical: self.test_stats.clone(),
            },
        )
    }
}

/// Frames, featurizes and splits `samples`; the scaler is fitted on the
/// training rows only.
pub fn prepare(
    samples: &[AccelSample],
    labels: &LabelSet,
    frame_cfg: FrameConfig,
    test_fraction: f64,
    by_user: bool,
    seed: u64,
) -> Result<Prepared> {
    if frame_cfg.window_len < 2 || frame_cfg.step == 0 {
        return Err(Error::Config("window_len must be at least 2 and step positive".into()));
    }
    let windows = frame(samples, frame_cfg);
    if windows.is_empty() {
        return Err(Error::Config(format!(
            "no {}-sample windows could be framed from {} samples",
            frame_cfg.window_len,
            samples.len()
        )));
    }
    let spectra = featurize(&windows, frame_cfg.window_len, labels.len())?;
    let stats: Vec<f32> = windows.iter().flat_map(statistical_features).collect();
    let stats = Dataset::new(
        Matrix::from_vec(windows.len(), STATISTICAL_FEATURES, stats)?,
        spectra.labels.clone(),
        spectra.users.clone(),
        labels.len(),
    )?;
    let (train, test) = split(&spectra, test_fraction, seed, by_user)?;
    let (train_stats, test_stats) = split(&stats, test_fraction, seed, by_user)?;
    let scaler = fit_scaler(&train.features)?;
    let train = Dataset {
        features: scaler.apply(&train.features)?,
        ..train
    };
    let test_unscaled = test;
    let test = Dataset {
        features: scaler.apply(&test_unscaled.features)?,
        ..test_unscaled.clone()
    };
    Ok(Prepared {
        labels: labels.clone(),
        frame: frame_cfg,
        scaler,
        train,
        test,
        test_unscaled,
        train_stats: train_stats.labeled(),
        test_stats: test_stats.labeled(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainPlan {
    pub layer_dims: Vec<usize>,
    pub pretrain: PretrainConfig,
    pub skip_pretrain: bool,
    pub rounds: RoundConfig,
    pub workers: usize,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub result: TrainResult,
    pub pretrain: Option<PretrainRun>,
}

/// Greedy pretraining on every training row (labels dropped), then
/// supervised Map/Reduce training of the stack plus a softmax head.
pub fn train_model(prep: &Prepared, plan: &TrainPlan, log: Option<&mut dyn Write>) -> Result<Trained> {
    if plan.layer_dims.is_empty() {
        return Err(Error::Config("layer_dims must name at least one hidden layer".into()));
    }
    let labeled = prep.train.labeled();
    if labeled.is_empty() {
        return Err(Error::Config("the training split holds no labeled windows".into()));
    }
    let label_count = prep.labels.len();
    let (init, pretrain) = if plan.skip_pretrain {
        let init = DeepModel::init(prep.train.feature_len(), &plan.layer_dims, label_count, plan.rounds.seed)?;
        (init, None)
    } else {
        let run = pretrain_distributed(
            &prep.train.features,
            None,
            &plan.layer_dims,
            &plan.pretrain,
            plan.workers,
            plan.rounds.weighting,
        )?;
        (model_from_pretrained(&run.layers, label_count, plan.rounds.seed)?, Some(run))
    };
    let result = train_distributed_logged(&labeled, init, &plan.rounds, plan.workers, log)?;
    Ok(Trained { result, pretrain })
}
