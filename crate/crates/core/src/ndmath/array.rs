use std::fmt;

use crate::error::{DqsError, Result};

/// Row-major dense array of `f64`.
#[derive(Clone, PartialEq)]
pub struct DenseArray {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for DenseArray {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DenseArray{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

impl DenseArray {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) {
            return Err(DqsError::dim("positive extents", format!("{shape:?}")));
        }
        if len != data.len() {
            return Err(DqsError::dim(
                format!("{len} elements for shape {shape:?}"),
                data.len(),
            ));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// A `[1, n]` row.
    pub fn row(values: &[f64]) -> Self {
        Self {
            shape: vec![1, values.len()],
            data: values.to_vec(),
        }
    }

    pub fn vector(values: &[f64]) -> Self {
        Self {
            shape: vec![values.len()],
            data: values.to_vec(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Leading extent of a 2-D array (1 for vectors).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 => 0,
            1 => 1,
            _ => self.shape[0],
        }
    }

    /// Trailing extent.
    pub fn cols(&self) -> usize {
        self.shape.last().copied().unwrap_or(0)
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_slice_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn scale(&mut self, k: f64) {
        self.data.iter_mut().for_each(|v| *v *= k);
    }

    /// `self += k * other`.
    pub fn axpy(&mut self, k: f64, other: &DenseArray) -> Result<()> {
        if self.shape != other.shape {
            return Err(DqsError::dim(
                format!("{:?}", self.shape),
                format!("{:?}", other.shape),
            ));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += k * b;
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `c = a · bᵀ (+ c if accumulate)` for row-major `a: [m, k]`, `b: [n, k]`, `c: [m, n]`.
///
/// `b` may be a column window of a wider row-major matrix: `b_row_stride` is
/// the distance between its rows.
pub(crate) fn gemm_abt(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    b: &[f64],
    b_row_stride: usize,
    c: &mut [f64],
    accumulate: bool,
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(a.len() >= m * k && c.len() >= m * n);
    debug_assert!(k == 0 || b.len() >= (n - 1) * b_row_stride + k);
    let beta = if accumulate { 1.0 } else { 0.0 };
    if k == 0 {
        if !accumulate {
            c[..m * n].fill(0.0);
        }
        return;
    }
    // SAFETY: extents and strides are checked above against the slice lengths.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            1,
            b_row_stride as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c = a · b (+ c)` for row-major `a: [m, k]`, `b: [k, n]`, `c: [m, n]`.
pub(crate) fn gemm_ab(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    b: &[f64],
    c: &mut [f64],
    accumulate: bool,
) {
    if m == 0 || n == 0 || k == 0 {
        if !accumulate {
            c[..m * n].fill(0.0);
        }
        return;
    }
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: slice lengths are at least the extents passed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c += aᵀ · b` for row-major `a: [m, p]`, `b: [m, q]`, `c: [p, q]`.
pub(crate) fn gemm_atb_acc(m: usize, p: usize, q: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    if m == 0 || p == 0 || q == 0 {
        return;
    }
    debug_assert!(a.len() >= m * p && b.len() >= m * q && c.len() >= p * q);
    // SAFETY: slice lengths are at least the extents passed.
    unsafe {
        matrixmultiply::dgemm(
            p,
            m,
            q,
            1.0,
            a.as_ptr(),
            1,
            p as isize,
            b.as_ptr(),
            q as isize,
            1,
            1.0,
            c.as_mut_ptr(),
            q as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_abt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                c[i * n + j] = (0..k).map(|t| a[i * k + t] * b[j * k + t]).sum();
            }
        }
        c
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(DenseArray::from_vec(&[2, 3], vec![0.0; 5]).is_err());
        assert!(DenseArray::from_vec(&[0, 3], vec![]).is_err());
        let a = DenseArray::from_vec(&[2, 3], (0..6).map(f64::from).collect()).unwrap();
        assert_eq!(a.row_slice(1), &[3.0, 4.0, 5.0]);
    }

    #[test]
    fn gemm_variants_match_naive() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..n * k).map(|i| (i as f64 * 0.11).cos()).collect();
        let want = naive_abt(m, k, n, &a, &b);

        let mut c = vec![0.0; m * n];
        gemm_abt(m, k, n, &a, &b, k, &mut c, false);
        for (x, y) in c.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }

        // bᵀ laid out as [k, n]
        let mut bt = vec![0.0; k * n];
        for j in 0..n {
            for t in 0..k {
                bt[t * n + j] = b[j * k + t];
            }
        }
        let mut c2 = vec![1.0; m * n];
        gemm_ab(m, k, n, &a, &bt, &mut c2, true);
        for (x, y) in c2.iter().zip(&want) {
            assert!((x - 1.0 - y).abs() < 1e-12);
        }

        // aᵀ·c over the m axis
        let mut g = vec![0.0; k * n];
        gemm_atb_acc(m, k, n, &a, &want, &mut g);
        for t in 0..k {
            for j in 0..n {
                let s: f64 = (0..m).map(|i| a[i * k + t] * want[i * n + j]).sum();
                assert!((g[t * n + j] - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gemm_on_column_window() {
        // b is the first 2 columns of a [3, 4] matrix
        let wide: Vec<f64> = (0..12).map(f64::from).collect();
        let a = [1.0, 2.0];
        let mut c = vec![0.0; 3];
        gemm_abt(1, 2, 3, &a, &wide, 4, &mut c, false);
        assert_eq!(c, vec![2.0, 14.0, 26.0]);
    }
}
