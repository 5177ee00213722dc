//! Dense row-major f64 matrices sized for mini-batch work.
//!
//! Rows are samples, columns are features. Multiplication goes through
//! `matrixmultiply::dgemm` with stride tricks for the transposed variants so
//! no operand is ever copied. Shape mismatches are programmer errors and
//! panic.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Mat { rows, cols, data }
    }

    /// Stack row vectors of equal width into a matrix.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let n = rows.len();
        let w = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(n * w);
        for r in rows {
            assert_eq!(r.len(), w, "ragged rows");
            data.extend_from_slice(r);
        }
        Mat {
            rows: n,
            cols: w,
            data,
        }
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
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    /// Select the given rows into a new matrix (gather, e.g. a mini-batch).
    pub fn gather_rows(&self, idx: &[usize]) -> Mat {
        let mut out = Mat::zeros(idx.len(), self.cols);
        for (k, &i) in idx.iter().enumerate() {
            out.row_mut(k).copy_from_slice(self.row(i));
        }
        out
    }

    /// Concatenate two matrices with equal row counts along the column axis.
    pub fn hcat(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows, "hcat row count mismatch");
        let mut out = Mat::zeros(self.rows, self.cols + other.cols);
        for i in 0..self.rows {
            out.row_mut(i)[..self.cols].copy_from_slice(self.row(i));
            out.row_mut(i)[self.cols..].copy_from_slice(other.row(i));
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// View side of a gemm operand: the matrix, optionally transposed.
#[derive(Clone, Copy)]
pub struct Op<'a> {
    pub m: &'a Mat,
    pub transpose: bool,
}

pub fn plain(m: &Mat) -> Op<'_> {
    Op {
        m,
        transpose: false,
    }
}

pub fn transposed(m: &Mat) -> Op<'_> {
    Op { m, transpose: true }
}

impl Op<'_> {
    fn shape(&self) -> (usize, usize) {
        if self.transpose {
            (self.m.cols, self.m.rows)
        } else {
            (self.m.rows, self.m.cols)
        }
    }

    fn strides(&self) -> (isize, isize) {
        if self.transpose {
            (1, self.m.cols as isize)
        } else {
            (self.m.cols as isize, 1)
        }
    }
}

/// `c = alpha * a * b + beta * c`.
pub fn gemm(alpha: f64, a: Op<'_>, b: Op<'_>, beta: f64, c: &mut Mat) {
    let (m, ka) = a.shape();
    let (kb, n) = b.shape();
    assert_eq!(ka, kb, "gemm inner dimension mismatch");
    assert_eq!((c.rows, c.cols), (m, n), "gemm output shape mismatch");
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    unsafe {
        matrixmultiply::dgemm(
            m,
            ka,
            n,
            alpha,
            a.m.data.as_ptr(),
            rsa,
            csa,
            b.m.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
}

/// `a * b` into a fresh matrix.
pub fn matmul(a: Op<'_>, b: Op<'_>) -> Mat {
    let (m, _) = a.shape();
    let (_, n) = b.shape();
    let mut c = Mat::zeros(m, n);
    gemm(1.0, a, b, 0.0, &mut c);
    c
}
