//! Fully connected layer y = x W^T + b over row-major batches.

use alloc::vec::Vec;

use rand::Rng;

use crate::mat::{gemm, matmul, plain, transposed, Mat};
use crate::math;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// out_dim x in_dim.
    pub w: Mat,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub w: Mat,
    pub b: Vec<f64>,
}

impl Dense {
    /// Weights uniform in +-1/sqrt(in_dim), biases zero.
    pub fn init<R: Rng>(out_dim: usize, in_dim: usize, rng: &mut R) -> Dense {
        let bound = 1.0 / math::sqrt(in_dim as f64);
        let mut w = Mat::zeros(out_dim, in_dim);
        for v in w.as_mut_slice() {
            *v = (rng.gen::<f64>() * 2.0 - 1.0) * bound;
        }
        Dense {
            w,
            b: alloc::vec![0.0; out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.w.rows()
    }

    /// x: batch x in_dim -> batch x out_dim.
    pub fn forward(&self, x: &Mat) -> Mat {
        assert_eq!(x.cols(), self.in_dim(), "dense input width mismatch");
        let mut y = matmul(plain(x), transposed(&self.w));
        for i in 0..y.rows() {
            let row = y.row_mut(i);
            for (j, b) in self.b.iter().enumerate() {
                row[j] += b;
            }
        }
        y
    }

    /// Accumulates dW and db into `g`, returns dL/dx.
    pub fn backward(&self, x: &Mat, dy: &Mat, g: &mut DenseGrads) -> Mat {
        gemm(1.0, transposed(dy), plain(x), 1.0, &mut g.w);
        for i in 0..dy.rows() {
            for (j, v) in dy.row(i).iter().enumerate() {
                g.b[j] += v;
            }
        }
        matmul(plain(dy), plain(&self.w))
    }
}

impl DenseGrads {
    pub fn zeros_like(d: &Dense) -> DenseGrads {
        DenseGrads {
            w: Mat::zeros(d.out_dim(), d.in_dim()),
            b: alloc::vec![0.0; d.out_dim()],
        }
    }

    pub fn zero(&mut self) {
        self.w.as_mut_slice().fill(0.0);
        self.b.fill(0.0);
    }
}
