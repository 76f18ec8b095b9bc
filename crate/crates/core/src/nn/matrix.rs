//! Dense row-major `f32` matrix plus the three GEMM shapes backprop needs.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f32) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Matrix::from_vec",
                format!("{} values for {rows}x{cols}", rows * cols),
                data.len(),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from equally long rows. An empty slice yields a `0 x 0` matrix.
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::shape(format!("Matrix::from_rows row {i}"), cols, r.len()));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f32) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f32] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        // chunks_exact(0) panics, and a zero-width matrix still has rows.
        (0..self.rows).map(move |r| self.row(r))
    }

    /// Gathers the given rows, in order, into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::shape(
                "Matrix::matmul",
                format!("rhs with {} rows", self.cols),
                format!("{}x{}", rhs.rows, rhs.cols),
            ));
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        gemm_nn(self, rhs, &mut out);
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map_inplace(&mut self, f: impl Fn(f32) -> f32) {
        for v in &mut self.data {
            *v = f(*v);
        }
    }

    /// Appends the rows of `other`; column counts must agree unless `self` is empty.
    pub fn append_rows(&mut self, other: &Matrix) -> Result<()> {
        if self.rows == 0 && self.data.is_empty() {
            *self = other.clone();
            return Ok(());
        }
        if other.cols != self.cols {
            return Err(Error::shape("Matrix::append_rows", self.cols, other.cols));
        }
        self.data.extend_from_slice(&other.data);
        self.rows += other.rows;
        Ok(())
    }
}

/// `out = a * b` for `a: m x k`, `b: k x n`. Shapes are the caller's responsibility.
pub(crate) fn gemm_nn(a: &Matrix, b: &Matrix, out: &mut Matrix) {
    debug_assert_eq!(a.cols, b.rows);
    debug_assert_eq!(out.shape(), (a.rows, b.cols));
    let n = b.cols;
    out.data.fill(0.0);
    for i in 0..a.rows {
        let out_row = &mut out.data[i * n..(i + 1) * n];
        for (p, &av) in a.row(i).iter().enumerate() {
            let b_row = &b.data[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// `out = aᵀ * b` for `a: m x k`, `b: m x n`, giving `k x n`.
pub(crate) fn gemm_tn(a: &Matrix, b: &Matrix, out: &mut Matrix) {
    debug_assert_eq!(a.rows, b.rows);
    debug_assert_eq!(out.shape(), (a.cols, b.cols));
    let n = b.cols;
    out.data.fill(0.0);
    for i in 0..a.rows {
        let b_row = b.row(i);
        for (p, &av) in a.row(i).iter().enumerate() {
            let out_row = &mut out.data[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// `out = a * bᵀ` for `a: m x n`, `b: k x n`, giving `m x k`.
pub(crate) fn gemm_nt(a: &Matrix, b: &Matrix, out: &mut Matrix) {
    debug_assert_eq!(a.cols, b.cols);
    debug_assert_eq!(out.shape(), (a.rows, b.rows));
    let k = b.rows;
    for i in 0..a.rows {
        let a_row = a.row(i);
        for p in 0..k {
            out.data[i * k + p] = dot(a_row, b.row(p));
        }
    }
}

#[inline]
fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (xa, xb) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for l in 0..8 {
            acc[l] += xa[l] * xb[l];
        }
    }
    let mut tail = 0.0;
    for j in chunks * 8..a.len() {
        tail += a[j] * b[j];
    }
    acc.iter().sum::<f32>() + tail
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0f64;
                for p in 0..a.cols() {
                    s += a.get(i, p) as f64 * b.get(p, j) as f64;
                }
                out.set(i, j, s as f32);
            }
        }
        out
    }

    fn sample(rows: usize, cols: usize, salt: f32) -> Matrix {
        let data = (0..rows * cols)
            .map(|i| (i as f32 * 0.37 + salt).sin())
            .collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    fn close(a: &Matrix, b: &Matrix) -> bool {
        a.shape() == b.shape()
            && a.as_slice()
                .iter()
                .zip(b.as_slice())
                .all(|(x, y)| (x - y).abs() < 1e-4)
    }

    #[test]
    fn gemm_variants_agree_with_naive_product() {
        let a = sample(5, 11, 0.1);
        let b = sample(11, 7, 0.7);
        assert!(close(&a.matmul(&b).unwrap(), &naive(&a, &b)));

        let c = sample(5, 7, 1.3);
        let mut tn = Matrix::zeros(11, 7);
        gemm_tn(&a, &c, &mut tn);
        assert!(close(&tn, &naive(&a.transpose(), &c)));

        let d = sample(9, 11, 2.1);
        let mut nt = Matrix::zeros(5, 9);
        gemm_nt(&a, &d, &mut nt);
        assert!(close(&nt, &naive(&a, &d.transpose())));
    }

    #[test]
    fn from_vec_rejects_wrong_length() {
        assert!(matches!(
            Matrix::from_vec(2, 3, vec![0.0; 5]),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn select_rows_preserves_order() {
        let m = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        let s = m.select_rows(&[2, 0]);
        assert_eq!(s.as_slice(), &[5.0, 6.0, 1.0, 2.0]);
    }
}
