//! Separable linear operators applied along one axis of a sampled array.
//!
//! Arrays are laid out as `[outer][extents...]` in row-major order, where
//! `outer` folds batch and feature dimensions together.

use crate::macs;
use crate::par;
use crate::real::Real;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![T::zero(); n * n];
        for i in 0..n {
            data[i * n + i] = T::one();
        }
        Self { rows: n, cols: n, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn transpose(&self) -> Self {
        let mut data = vec![T::zero(); self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Self { rows: self.cols, cols: self.rows, data }
    }

    pub fn matmul(&self, rhs: &Matrix<T>) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul inner dimension");
        let mut data = vec![T::zero(); self.rows * rhs.cols];
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                for c in 0..rhs.cols {
                    data[r * rhs.cols + c] += a * rhs.data[k * rhs.cols + c];
                }
            }
        }
        Self { rows: self.rows, cols: rhs.cols, data }
    }

    pub fn cast<U: Real>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }
}

/// Applies `mat` (rows x extents[axis]) along `axis`, replacing that axis
/// extent by `mat.rows()`. Returns the new array.
pub fn apply_matrix<T: Real>(
    data: &[T],
    outer: usize,
    extents: &[usize],
    axis: usize,
    mat: &Matrix<T>,
) -> Vec<T> {
    let mid = extents[axis];
    assert_eq!(mat.cols, mid, "operator width must match axis extent");
    let before: usize = extents[..axis].iter().product();
    let inner: usize = extents[axis + 1..].iter().product();
    let lines = outer * before;
    assert_eq!(data.len(), lines * mid * inner, "array length");
    let rows = mat.rows;
    macs::record((lines * rows * mid * inner) as u64);

    let mut out = vec![T::zero(); lines * rows * inner];
    par::for_each_chunk(&mut out, rows * inner, |l, dst| {
        let src = &data[l * mid * inner..(l + 1) * mid * inner];
        for r in 0..rows {
            let row = &mut dst[r * inner..(r + 1) * inner];
            for k in 0..mid {
                let w = mat.data[r * mid + k];
                let s = &src[k * inner..(k + 1) * inner];
                for (o, &v) in row.iter_mut().zip(s) {
                    *o += w * v;
                }
            }
        }
    });
    out
}

/// Keeps every `stride`-th sample along `axis`, starting at index 0.
pub fn decimate_axis<T: Real>(data: &[T], outer: usize, extents: &[usize], axis: usize, stride: usize) -> Vec<T> {
    let mid = extents[axis];
    let before: usize = extents[..axis].iter().product();
    let inner: usize = extents[axis + 1..].iter().product();
    let kept = mid / stride;
    let mut out = Vec::with_capacity(outer * before * kept * inner);
    for l in 0..outer * before {
        for k in 0..kept {
            let start = (l * mid + k * stride) * inner;
            out.extend_from_slice(&data[start..start + inner]);
        }
    }
    out
}

/// Adjoint of [`decimate_axis`]: scatters into zeros at the stride positions.
pub fn decimate_axis_adjoint<T: Real>(
    data: &[T],
    outer: usize,
    coarse_extents: &[usize],
    axis: usize,
    stride: usize,
) -> Vec<T> {
    let kept = coarse_extents[axis];
    let mid = kept * stride;
    let before: usize = coarse_extents[..axis].iter().product();
    let inner: usize = coarse_extents[axis + 1..].iter().product();
    let mut out = vec![T::zero(); outer * before * mid * inner];
    for l in 0..outer * before {
        for k in 0..kept {
            let src = (l * kept + k) * inner;
            let dst = (l * mid + k * stride) * inner;
            out[dst..dst + inner].copy_from_slice(&data[src..src + inner]);
        }
    }
    out
}
