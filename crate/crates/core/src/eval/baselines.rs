//! Shallow comparison methods.

use std::fmt::Write as _;

use crate::data::LabeledData;
use crate::error::{Error, Result};
use crate::eval::error_rate;
use crate::nn::{DeepModel, Matrix};
use crate::pretrain::{train_supervised, FineTuneConfig};

/// The same windows featurized two ways.
#[derive(Debug, Clone)]
pub struct BaselineSplit {
    /// Scaled spectrogram features.
    pub spectrogram: LabeledData,
    /// Per-axis mean, std and energy.
    pub statistical: LabeledData,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub mlp_hidden: usize,
    pub mlp: FineTuneConfig,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            mlp_hidden: 64,
            mlp: FineTuneConfig {
                epochs: 30,
                learning_rate: 0.5,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRow {
    pub method: String,
    pub error: f64,
    pub test_size: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BaselineTable {
    pub rows: Vec<BaselineRow>,
}

impl BaselineTable {
    pub fn push(&mut self, method: impl Into<String>, error: f64, test_size: usize) {
        self.rows.push(BaselineRow {
            method: method.into(),
            error,
            test_size,
        });
    }

    pub fn error(&self, method: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.method == method).map(|r| r.error)
    }

    pub fn to_table(&self) -> String {
        let width = self.rows.iter().map(|r| r.method.len()).max().unwrap_or(6).max(6);
        let mut out = format!("{:<width$}  {:>8}  {:>6}\n", "method", "error %", "test n");
        for r in &self.rows {
            let _ = writeln!(out, "{:<width$}  {:>8.2}  {:>6}", r.method, 100.0 * r.error, r.test_size);
        }
        out
    }
}

pub const MLP_BASELINE: &str = "single-hidden-layer perceptron (spectrogram)";
pub const CENTROID_BASELINE: &str = "nearest centroid (statistical features)";

/// Nearest class mean under per-dimension z-scoring fitted on the training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct NearestCentroid {
    means: Vec<f64>,
    stds: Vec<f64>,
    centroids: Vec<Option<Vec<f64>>>,
}

impl NearestCentroid {
    pub fn fit(train: &LabeledData) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Config("cannot fit centroids on zero rows".into()));
        }
        let d = train.features.cols();
        let n = train.len() as f64;
        let mut means = vec![0.0; d];
        for row in train.features.row_iter() {
            for (m, &v) in means.iter_mut().zip(row) {
                *m += v as f64 / n;
            }
        }
        let mut stds = vec![0.0; d];
        for row in train.features.row_iter() {
            for ((s, &v), m) in stds.iter_mut().zip(row).zip(&means) {
                *s += (v as f64 - m).powi(2) / n;
            }
        }
        for s in &mut stds {
            *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
        }
        let mut sums = vec![vec![0.0; d]; train.label_count];
        let mut counts = vec![0usize; train.label_count];
        let mut nc = NearestCentroid {
            means,
            stds,
            centroids: Vec::new(),
        };
        for (row, &l) in train.features.row_iter().zip(&train.labels) {
            for (s, z) in sums[l].iter_mut().zip(nc.z(row)) {
                *s += z;
            }
            counts[l] += 1;
        }
        nc.centroids = sums
            .into_iter()
            .zip(counts)
            .map(|(s, c)| (c > 0).then(|| s.into_iter().map(|v| v / c as f64).collect()))
            .collect();
        Ok(nc)
    }

    fn z<'a>(&'a self, row: &'a [f32]) -> impl Iterator<Item = f64> + 'a {
        row.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(&v, (m, s))| (v as f64 - m) / s)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        if x.cols() != self.means.len() {
            return Err(Error::shape("centroid features", self.means.len(), x.cols()));
        }
        Ok(x.row_iter()
            .map(|row| {
                let z: Vec<f64> = self.z(row).collect();
                let mut best = (0, f64::INFINITY);
                for (label, c) in self.centroids.iter().enumerate() {
                    if let Some(c) = c {
                        let d: f64 = c.iter().zip(&z).map(|(a, b)| (a - b).powi(2)).sum();
                        if d < best.1 {
                            best = (label, d);
                        }
                    }
                }
                best.0
            })
            .collect())
    }

    pub fn error_rate(&self, test: &LabeledData) -> Result<f64> {
        if test.is_empty() {
            return Ok(0.0);
        }
        let predicted = self.predict(&test.features)?;
        let wrong = predicted.iter().zip(&test.labels).filter(|(p, t)| p != t).count();
        Ok(wrong as f64 / test.len() as f64)
    }
}

/// Trains both shallow methods on `train` and scores them on `test`.
pub fn shallow_baselines(train: &BaselineSplit, test: &BaselineSplit, cfg: &BaselineConfig) -> Result<BaselineTable> {
    if train.spectrogram.len() != train.statistical.len() || test.spectrogram.len() != test.statistical.len() {
        return Err(Error::Config("both feature views must cover the same windows".into()));
    }
    let label_count = train.spectrogram.label_count;
    let init = DeepModel::init(
        train.spectrogram.features.cols(),
        &[cfg.mlp_hidden],
        label_count,
        cfg.mlp.seed,
    )?;
    let mlp = train_supervised(init, &train.spectrogram, &cfg.mlp)?;
    let centroid = NearestCentroid::fit(&train.statistical)?;
    let mut table = BaselineTable::default();
    table.push(MLP_BASELINE, error_rate(&mlp.model, &test.spectrogram)?, test.spectrogram.len());
    table.push(CENTROID_BASELINE, centroid.error_rate(&test.statistical)?, test.statistical.len());
    Ok(table)
}
