use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Per-dimension min-max scaling onto `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub mins: Vec<f32>,
    pub maxs: Vec<f32>,
}

/// Fits on training rows only. A dimension with `min == max` maps to 0.5.
pub fn fit_scaler(train: &Matrix) -> Result<Scaler> {
    if train.rows() == 0 {
        return Err(Error::Config("cannot fit a scaler on zero rows".into()));
    }
    let mut mins = train.row(0).to_vec();
    let mut maxs = mins.clone();
    for row in train.row_iter().skip(1) {
        for ((lo, hi), &v) in mins.iter_mut().zip(maxs.iter_mut()).zip(row) {
            *lo = lo.min(v);
            *hi = hi.max(v);
        }
    }
    Ok(Scaler { mins, maxs })
}

impl Scaler {
    pub fn dim(&self) -> usize {
        self.mins.len()
    }

    #[inline]
    fn scale_one(&self, d: usize, v: f32) -> f32 {
        let (lo, hi) = (self.mins[d], self.maxs[d]);
        if hi <= lo {
            0.5
        } else {
            ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
        }
    }

    pub fn apply_row(&self, row: &mut [f32]) {
        for (d, v) in row.iter_mut().enumerate() {
            *v = self.scale_one(d, *v);
        }
    }

    /// Scales and clips into `[0, 1]`.
    pub fn apply(&self, features: &Matrix) -> Result<Matrix> {
        if features.cols() != self.dim() {
            return Err(Error::shape("apply_scaler", self.dim(), features.cols()));
        }
        let mut out = features.clone();
        if self.dim() > 0 {
            for row in out.as_mut_slice().chunks_exact_mut(self.dim()) {
                self.apply_row(row);
            }
        }
        Ok(out)
    }

    /// Inverse of `apply` on non-degenerate dimensions.
    pub fn unscale(&self, scaled: &Matrix) -> Result<Matrix> {
        if scaled.cols() != self.dim() {
            return Err(Error::shape("unscale", self.dim(), scaled.cols()));
        }
        let mut out = scaled.clone();
        if self.dim() > 0 {
            for row in out.as_mut_slice().chunks_exact_mut(self.dim()) {
                for (d, v) in row.iter_mut().enumerate() {
                    let (lo, hi) = (self.mins[d], self.maxs[d]);
                    *v = if hi <= lo { lo } else { lo + *v * (hi - lo) };
                }
            }
        }
        Ok(out)
    }
}
