//! Stateless inference over raw accelerometer samples.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{ActivityWindow, Spectrogram};
use crate::error::{Error, Result};
use crate::model_file::ModelMeta;
use crate::nn::{argmax, DeepModel, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceRequest {
    pub device_id: String,
    pub sampling_hz: f64,
    pub samples: Vec<[f32; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResponse {
    pub device_id: String,
    pub activity: String,
    pub probabilities: BTreeMap<String, f64>,
    pub window_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HealthReport {
    pub status: &'static str,
    pub layer_dims: Vec<usize>,
    pub parameter_count: usize,
    pub labels: Vec<String>,
    pub window_len: usize,
    pub step: usize,
    pub sampling_hz: f32,
}

/// Why a well-formed request cannot be answered.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RequestError {
    #[error("need at least {required} samples for one window, got {got}")]
    TooShort { required: usize, got: usize },
    #[error("sampling rate {got} Hz does not match the model's {expected} Hz")]
    SamplingRate { expected: f32, got: f64 },
    #[error("sample {index} is not finite")]
    NonFinite { index: usize },
}

/// A loaded model plus everything needed to featurize raw requests.
/// Read-only after construction, so one instance can serve concurrent requests.
#[derive(Debug, Clone)]
pub struct Predictor {
    model: DeepModel,
    meta: ModelMeta,
    spectrogram: Spectrogram,
}

impl Predictor {
    pub fn new(model: DeepModel, meta: ModelMeta) -> Result<Self> {
        if meta.step == 0 {
            return Err(Error::Config("model metadata has step 0".into()));
        }
        let spectrogram = Spectrogram::new(meta.window_len)?;
        if spectrogram.feature_len() != model.input_dim() {
            return Err(Error::shape(
                "model input for the stored window length",
                spectrogram.feature_len(),
                model.input_dim(),
            ));
        }
        if meta.labels.len() != model.label_count() {
            return Err(Error::shape("label names", model.label_count(), meta.labels.len()));
        }
        if let Some(s) = &meta.scaler {
            if s.dim() != model.input_dim() {
                return Err(Error::shape("scaler", model.input_dim(), s.dim()));
            }
        }
        Ok(Predictor {
            model,
            meta,
            spectrogram,
        })
    }

    pub fn model(&self) -> &DeepModel {
        &self.model
    }

    pub fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    pub fn health(&self) -> HealthReport {
        HealthReport {
            status: "ok",
            layer_dims: self.model.layer_dims(),
            parameter_count: self.model.parameter_count(),
            labels: self.meta.labels.clone(),
            window_len: self.meta.window_len,
            step: self.meta.step,
            sampling_hz: self.meta.sampling_hz,
        }
    }

    /// Frames the samples, classifies every frame and averages the
    /// per-frame probability vectors.
    pub fn infer(&self, req: &InferenceRequest) -> std::result::Result<InferenceResponse, RequestError> {
        let window_len = self.meta.window_len;
        if req.samples.len() < window_len {
            return Err(RequestError::TooShort {
                required: window_len,
                got: req.samples.len(),
            });
        }
        if (req.sampling_hz - self.meta.sampling_hz as f64).abs() > 1e-3 {
            return Err(RequestError::SamplingRate {
                expected: self.meta.sampling_hz,
                got: req.sampling_hz,
            });
        }
        if let Some(index) = req.samples.iter().position(|s| s.iter().any(|v| !v.is_finite())) {
            return Err(RequestError::NonFinite { index });
        }
        let window_count = (req.samples.len() - window_len) / self.meta.step + 1;
        let mut features = Vec::with_capacity(window_count * self.spectrogram.feature_len());
        for k in 0..window_count {
            let start = k * self.meta.step;
            let w = ActivityWindow::from_triples(&req.samples[start..start + window_len], None, 0);
            self.spectrogram
                .features_into(&w, &mut features)
                .expect("window length matches the planned transform");
        }
        let mut x = Matrix::from_vec(window_count, self.spectrogram.feature_len(), features).expect("sized above");
        if let Some(s) = &self.meta.scaler {
            x = s.apply(&x).expect("scaler dim checked at construction");
        }
        let probs = self.model.forward(&x).expect("input dim checked at construction");
        let mut mean = vec![0.0f64; self.model.label_count()];
        for row in probs.row_iter() {
            for (m, &p) in mean.iter_mut().zip(row) {
                *m += p as f64;
            }
        }
        for m in &mut mean {
            *m /= window_count as f64;
        }
        let mean_f32: Vec<f32> = mean.iter().map(|&v| v as f32).collect();
        let best = argmax(&mean_f32);
        Ok(InferenceResponse {
            device_id: req.device_id.clone(),
            activity: self.meta.labels[best].clone(),
            probabilities: self.meta.labels.iter().cloned().zip(mean).collect(),
            window_count,
        })
    }
}
