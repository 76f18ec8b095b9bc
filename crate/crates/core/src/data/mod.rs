//! Accelerometer ingestion and featurisation: CSV loading, sliding-window
//! framing, per-axis spectrograms, scaling, splitting, a synthetic generator
//! and the binary dataset cache.

mod actitracker;
mod cache;
mod frame;
mod scaler;
mod spectrogram;
mod split;
mod synth;

pub use actitracker::{load_actitracker_csv, parse_actitracker_line, LoadReport, ParsedLine};
pub use cache::{read_cache, read_cache_from, write_cache, write_cache_to, CACHE_MAGIC};
pub use frame::{frame, FrameConfig};
pub use scaler::{fit_scaler, Scaler};
pub use spectrogram::{
    channel_spectrum, featurize, hann_window, spectrogram, statistical_features, Spectrogram,
    STATISTICAL_FEATURES,
};
pub use split::{holdout, split, split_labeled};
pub use synth::{synth_generate, ClassProfile, SynthConfig, CLASS_PROFILES};

use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Nominal Actitracker sampling rate.
pub const SAMPLING_HZ: f32 = 20.0;
/// Ten seconds at 20 Hz.
pub const DEFAULT_WINDOW_LEN: usize = 200;
pub const DEFAULT_STEP: usize = 100;

/// One triaxial reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccelSample {
    pub timestamp: i64,
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub user_id: u32,
    pub label: Option<usize>,
}

/// A framed stretch of samples, one vector per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivityWindow {
    pub channels: [Vec<f32>; 3],
    pub label: Option<usize>,
    pub user_id: u32,
}

impl ActivityWindow {
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Builds a window from `[x, y, z]` triples.
    pub fn from_triples(triples: &[[f32; 3]], label: Option<usize>, user_id: u32) -> Self {
        let mut channels: [Vec<f32>; 3] = Default::default();
        for t in triples {
            for (c, v) in channels.iter_mut().zip(t) {
                c.push(*v);
            }
        }
        ActivityWindow {
            channels,
            label,
            user_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f32>,
    pub label: Option<usize>,
}

/// Ordered activity names; the index of a name is its label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    names: Vec<String>,
}

impl Default for LabelSet {
    fn default() -> Self {
        LabelSet {
            names: ["walking", "jogging", "climbing stairs", "sitting", "standing", "lying down"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

impl LabelSet {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Config("label set is empty".into()));
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::Config(format!("duplicate label name {n:?}")));
            }
        }
        Ok(LabelSet { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, label: usize) -> Option<&str> {
        self.names.get(label).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Featurised windows. `labels[i] == None` marks an unlabeled row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<Option<usize>>,
    pub users: Vec<u32>,
    pub label_count: usize,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<Option<usize>>, users: Vec<u32>, label_count: usize) -> Result<Self> {
        if labels.len() != features.rows() || users.len() != features.rows() {
            return Err(Error::shape(
                "Dataset",
                format!("{} labels and users", features.rows()),
                format!("{} labels, {} users", labels.len(), users.len()),
            ));
        }
        if let Some(bad) = labels.iter().flatten().find(|&&l| l >= label_count) {
            return Err(Error::Label {
                label: *bad,
                label_count,
            });
        }
        Ok(Dataset {
            features,
            labels,
            users,
            label_count,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feature_len(&self) -> usize {
        self.features.cols()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            users: idx.iter().map(|&i| self.users[i]).collect(),
            label_count: self.label_count,
        }
    }

    /// Labeled rows only.
    pub fn labeled(&self) -> LabeledData {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i].is_some()).collect();
        LabeledData {
            features: self.features.select_rows(&idx),
            labels: idx.iter().map(|&i| self.labels[i].expect("filtered")).collect(),
            label_count: self.label_count,
        }
    }

    /// Unlabeled rows only.
    pub fn unlabeled(&self) -> Matrix {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i].is_none()).collect();
        self.features.select_rows(&idx)
    }

    /// Row counts per label plus the unlabeled count.
    pub fn label_histogram(&self) -> (Vec<usize>, usize) {
        let mut counts = vec![0; self.label_count];
        let mut unlabeled = 0;
        for l in &self.labels {
            match l {
                Some(l) => counts[*l] += 1,
                None => unlabeled += 1,
            }
        }
        (counts, unlabeled)
    }
}

/// Feature rows with one label each.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledData {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub label_count: usize,
}

impl LabeledData {
    pub fn new(features: Matrix, labels: Vec<usize>, label_count: usize) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::shape("LabeledData", features.rows(), labels.len()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= label_count) {
            return Err(Error::Label {
                label: bad,
                label_count,
            });
        }
        Ok(LabeledData {
            features,
            labels,
            label_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> LabeledData {
        LabeledData {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            label_count: self.label_count,
        }
    }

    pub fn map_features(&self, f: impl FnOnce(&Matrix) -> Matrix) -> LabeledData {
        LabeledData {
            features: f(&self.features),
            labels: self.labels.clone(),
            label_count: self.label_count,
        }
    }
}
