//! Single-segment spectrogram features.
//!
//! Per axis: subtract the mean, apply a periodic Hann window, take the real
//! DFT and keep `log(1 + |X_k|)` for bins `0..=n/2`. The three axes are
//! concatenated, giving `3 * (n/2 + 1)` values (303 for 200-sample windows).

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{ActivityWindow, Dataset, FeatureVector};
use crate::error::{Error, Result};
use crate::nn::Matrix;

pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Planned transform for one window length; reusable across windows and threads.
#[derive(Clone)]
pub struct Spectrogram {
    fft_len: usize,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Spectrogram {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectrogram").field("fft_len", &self.fft_len).finish()
    }
}

impl Spectrogram {
    pub fn new(fft_len: usize) -> Result<Self> {
        if fft_len < 2 {
            return Err(Error::Config(format!("fft_len must be at least 2, got {fft_len}")));
        }
        Ok(Spectrogram {
            fft_len,
            window: hann_window(fft_len),
            fft: FftPlanner::new().plan_fft_forward(fft_len),
        })
    }

    pub fn fft_len(&self) -> usize {
        self.fft_len
    }

    pub fn bins(&self) -> usize {
        self.fft_len / 2 + 1
    }

    pub fn feature_len(&self) -> usize {
        3 * self.bins()
    }

    /// Full complex spectrum of the mean-removed, Hann-weighted signal.
    pub fn spectrum(&self, signal: &[f32]) -> Result<Vec<Complex<f64>>> {
        if signal.len() != self.fft_len {
            return Err(Error::shape("spectrogram input", self.fft_len, signal.len()));
        }
        let mean = signal.iter().map(|&v| v as f64).sum::<f64>() / signal.len() as f64;
        let mut buf: Vec<Complex<f64>> = signal
            .iter()
            .zip(&self.window)
            .map(|(&v, w)| Complex::new((v as f64 - mean) * w, 0.0))
            .collect();
        self.fft.process(&mut buf);
        Ok(buf)
    }

    pub fn features_into(&self, w: &ActivityWindow, out: &mut Vec<f32>) -> Result<()> {
        for channel in &w.channels {
            let spec = self.spectrum(channel)?;
            out.extend(spec[..self.bins()].iter().map(|c| c.norm().ln_1p() as f32));
        }
        Ok(())
    }

    pub fn features(&self, w: &ActivityWindow) -> Result<FeatureVector> {
        let mut values = Vec::with_capacity(self.feature_len());
        self.features_into(w, &mut values)?;
        Ok(FeatureVector {
            values,
            label: w.label,
        })
    }
}

pub fn channel_spectrum(signal: &[f32]) -> Result<Vec<Complex<f64>>> {
    Spectrogram::new(signal.len())?.spectrum(signal)
}

pub fn spectrogram(w: &ActivityWindow, fft_len: usize) -> Result<FeatureVector> {
    Spectrogram::new(fft_len)?.features(w)
}

/// Spectrogram features for every window, one dataset row each.
pub fn featurize(windows: &[ActivityWindow], fft_len: usize, label_count: usize) -> Result<Dataset> {
    let spec = Spectrogram::new(fft_len)?;
    let mut data = Vec::with_capacity(windows.len() * spec.feature_len());
    for w in windows {
        spec.features_into(w, &mut data)?;
    }
    Dataset::new(
        Matrix::from_vec(windows.len(), spec.feature_len(), data)?,
        windows.iter().map(|w| w.label).collect(),
        windows.iter().map(|w| w.user_id).collect(),
        label_count,
    )
}

pub const STATISTICAL_FEATURES: usize = 9;

/// Per-axis mean, standard deviation and energy (mean square).
pub fn statistical_features(w: &ActivityWindow) -> [f32; STATISTICAL_FEATURES] {
    let mut out = [0.0f32; STATISTICAL_FEATURES];
    for (c, channel) in w.channels.iter().enumerate() {
        let n = channel.len().max(1) as f64;
        let mean = channel.iter().map(|&v| v as f64).sum::<f64>() / n;
        let energy = channel.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / n;
        let var = (energy - mean * mean).max(0.0);
        out[c * 3] = mean as f32;
        out[c * 3 + 1] = var.sqrt() as f32;
        out[c * 3 + 2] = energy as f32;
    }
    out
}
