use std::fmt::Write as _;

use crate::data::LabeledData;
use crate::error::{Error, Result};
use crate::nn::DeepModel;

/// Counts indexed `[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    label_count: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(label_count: usize) -> Self {
        ConfusionMatrix {
            label_count,
            counts: vec![0; label_count * label_count],
        }
    }

    pub fn from_predictions(truth: &[usize], predicted: &[usize], label_count: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::shape("confusion matrix", truth.len(), predicted.len()));
        }
        let mut cm = ConfusionMatrix::new(label_count);
        for (&t, &p) in truth.iter().zip(predicted) {
            cm.record(t, p)?;
        }
        Ok(cm)
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        for l in [truth, predicted] {
            if l >= self.label_count {
                return Err(Error::Label {
                    label: l,
                    label_count: self.label_count,
                });
            }
        }
        self.counts[truth * self.label_count + predicted] += 1;
        Ok(())
    }

    pub fn label_count(&self) -> usize {
        self.label_count
    }

    pub fn count(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.label_count + predicted]
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        &self.counts[truth * self.label_count..(truth + 1) * self.label_count]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.label_count).map(|i| self.count(i, i)).sum()
    }

    /// `1 - trace / total`; zero for an empty matrix.
    pub fn error_rate(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            total => 1.0 - self.trace() as f64 / total as f64,
        }
    }

    pub fn normalize(&self) -> NormalizedConfusion {
        normalize(self)
    }
}

/// Row-normalised confusion matrix. All-zero rows stay zero and are listed in `zero_rows`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedConfusion {
    pub label_count: usize,
    pub values: Vec<f64>,
    pub zero_rows: Vec<usize>,
}

impl NormalizedConfusion {
    pub fn row(&self, truth: usize) -> &[f64] {
        &self.values[truth * self.label_count..(truth + 1) * self.label_count]
    }

    /// CSV with a header of label names; each data row starts with the true label name.
    pub fn to_csv(&self, names: &[String]) -> String {
        let mut out = String::from("true\\predicted");
        for n in names {
            out.push(',');
            out.push_str(&csv_field(n));
        }
        out.push('\n');
        for t in 0..self.label_count {
            out.push_str(&csv_field(names.get(t).map_or("", String::as_str)));
            for v in self.row(t) {
                let _ = write!(out, ",{v:.6}");
            }
            out.push('\n');
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn normalize(cm: &ConfusionMatrix) -> NormalizedConfusion {
    let n = cm.label_count;
    let mut values = vec![0.0; n * n];
    let mut zero_rows = Vec::new();
    for t in 0..n {
        let row = cm.row(t);
        let sum: u64 = row.iter().sum();
        if sum == 0 {
            zero_rows.push(t);
            continue;
        }
        for (v, &c) in values[t * n..(t + 1) * n].iter_mut().zip(row) {
            *v = c as f64 / sum as f64;
        }
    }
    NormalizedConfusion {
        label_count: n,
        values,
        zero_rows,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub error_rate: f64,
    pub confusion: ConfusionMatrix,
}

/// Classifies every row of `test` and tallies the results.
pub fn evaluate(model: &DeepModel, test: &LabeledData) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::Config("evaluation set is empty".into()));
    }
    let predicted = predict_chunked(model, test)?;
    let confusion = ConfusionMatrix::from_predictions(&test.labels, &predicted, model.label_count())?;
    Ok(Evaluation {
        error_rate: confusion.error_rate(),
        confusion,
    })
}

/// Misclassified fraction, or 0 for an empty set.
pub fn error_rate(model: &DeepModel, data: &LabeledData) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    Ok(evaluate(model, data)?.error_rate)
}

pub(crate) fn predict_chunked(model: &DeepModel, data: &LabeledData) -> Result<Vec<usize>> {
    const CHUNK: usize = 1024;
    let mut out = Vec::with_capacity(data.len());
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(CHUNK) {
        out.extend(model.predict(&data.features.select_rows(chunk))?);
    }
    Ok(out)
}
