//! Batch normalization over feature columns.
//!
//! Train mode normalizes with the batch's population statistics and folds
//! them into running estimates (new = (1-momentum)*old + momentum*batch);
//! eval mode normalizes with the running estimates only. Population (1/B)
//! variance is used throughout.

use alloc::vec::Vec;

use crate::mat::Mat;
use crate::math;
use crate::nn::NnError;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

/// Forward-pass intermediates needed by the backward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub inv_std: Vec<f64>,
    pub xhat: Mat,
}

impl BatchNorm {
    pub fn new(dim: usize) -> BatchNorm {
        BatchNorm {
            gamma: alloc::vec![1.0; dim],
            beta: alloc::vec![0.0; dim],
            running_mean: alloc::vec![0.0; dim],
            running_var: alloc::vec![1.0; dim],
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward_train(&mut self, x: &Mat) -> Result<(Mat, BnCache), NnError> {
        let b = x.rows();
        if b < 2 {
            return Err(NnError::BatchTooSmall { got: b });
        }
        let dim = self.dim();
        assert_eq!(x.cols(), dim, "batchnorm width mismatch");
        let n = b as f64;

        let mut mean = alloc::vec![0.0; dim];
        let mut var = alloc::vec![0.0; dim];
        for i in 0..b {
            for (j, &v) in x.row(i).iter().enumerate() {
                mean[j] += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= n;
        }
        for i in 0..b {
            for (j, &v) in x.row(i).iter().enumerate() {
                let d = v - mean[j];
                var[j] += d * d;
            }
        }
        for v in var.iter_mut() {
            *v /= n;
        }

        let mut inv_std = alloc::vec![0.0; dim];
        for j in 0..dim {
            inv_std[j] = 1.0 / math::sqrt(var[j] + self.eps);
        }

        let mut xhat = Mat::zeros(b, dim);
        let mut y = Mat::zeros(b, dim);
        for i in 0..b {
            let src = x.row(i);
            for j in 0..dim {
                let z = (src[j] - mean[j]) * inv_std[j];
                xhat.set(i, j, z);
                y.set(i, j, self.gamma[j] * z + self.beta[j]);
            }
        }

        for j in 0..dim {
            self.running_mean[j] =
                (1.0 - self.momentum) * self.running_mean[j] + self.momentum * mean[j];
            self.running_var[j] =
                (1.0 - self.momentum) * self.running_var[j] + self.momentum * var[j];
        }

        Ok((y, BnCache { inv_std, xhat }))
    }

    pub fn forward_eval(&self, x: &Mat) -> Mat {
        let dim = self.dim();
        assert_eq!(x.cols(), dim, "batchnorm width mismatch");
        let mut y = Mat::zeros(x.rows(), dim);
        for i in 0..x.rows() {
            let src = x.row(i);
            for j in 0..dim {
                let z = (src[j] - self.running_mean[j])
                    / math::sqrt(self.running_var[j] + self.eps);
                y.set(i, j, self.gamma[j] * z + self.beta[j]);
            }
        }
        y
    }

    /// Train-mode backward. Accumulates dgamma/dbeta, returns dL/dx.
    pub fn backward(
        &self,
        cache: &BnCache,
        dy: &Mat,
        dgamma: &mut [f64],
        dbeta: &mut [f64],
    ) -> Mat {
        let b = dy.rows();
        let dim = self.dim();
        let n = b as f64;

        let mut sum_dy = alloc::vec![0.0; dim];
        let mut sum_dy_xhat = alloc::vec![0.0; dim];
        for i in 0..b {
            let dyr = dy.row(i);
            let xh = cache.xhat.row(i);
            for j in 0..dim {
                sum_dy[j] += dyr[j];
                sum_dy_xhat[j] += dyr[j] * xh[j];
            }
        }
        for j in 0..dim {
            dgamma[j] += sum_dy_xhat[j];
            dbeta[j] += sum_dy[j];
        }

        let mut dx = Mat::zeros(b, dim);
        for i in 0..b {
            let dyr = dy.row(i);
            let xh = cache.xhat.row(i);
            let dst = dx.row_mut(i);
            for j in 0..dim {
                dst[j] = self.gamma[j] * cache.inv_std[j]
                    * (dyr[j] - sum_dy[j] / n - xh[j] * sum_dy_xhat[j] / n);
            }
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_batch_normalizes_to_itself() {
        let mut bn = BatchNorm::new(1);
        let x = Mat::from_rows(&[&[-1.0], &[1.0]]);
        let (y, _) = bn.forward_train(&x).unwrap();
        assert!((y.get(0, 0) + 1.0).abs() < 1e-4);
        assert!((y.get(1, 0) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn constant_batch_maps_to_zero() {
        let mut bn = BatchNorm::new(2);
        let x = Mat::from_rows(&[&[3.0, -2.0], &[3.0, -2.0], &[3.0, -2.0]]);
        let (y, _) = bn.forward_train(&x).unwrap();
        assert!(y.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn eval_with_unit_running_stats_is_near_identity() {
        let bn = BatchNorm::new(1);
        let x = Mat::from_rows(&[&[0.5], &[-2.0]]);
        let y = bn.forward_eval(&x);
        assert!((y.get(0, 0) - 0.5).abs() < 1e-5);
        assert!((y.get(1, 0) + 2.0).abs() < 1e-5);
    }

    #[test]
    fn train_batch_of_one_errors() {
        let mut bn = BatchNorm::new(1);
        let x = Mat::from_rows(&[&[1.0]]);
        assert_eq!(
            bn.forward_train(&x).unwrap_err(),
            NnError::BatchTooSmall { got: 1 }
        );
    }

    #[test]
    fn running_stats_follow_momentum() {
        let mut bn = BatchNorm::new(1);
        let x = Mat::from_rows(&[&[0.0], &[2.0]]);
        bn.forward_train(&x).unwrap();
        // batch mean 1, population var 1
        assert!((bn.running_mean[0] - 0.1).abs() < 1e-12);
        assert!((bn.running_var[0] - (0.9 + 0.1)).abs() < 1e-12);
        bn.forward_train(&x).unwrap();
        assert!((bn.running_mean[0] - (0.09 + 0.1)).abs() < 1e-12);
    }

    #[test]
    fn train_output_matches_beta_gamma_moments() {
        let mut bn = BatchNorm::new(1);
        bn.gamma[0] = 2.0;
        bn.beta[0] = -1.0;
        let x = Mat::from_rows(&[&[0.3], &[1.9], &[-0.7], &[0.4]]);
        let (y, _) = bn.forward_train(&x).unwrap();
        let vals: Vec<f64> = (0..4).map(|i| y.get(i, 0)).collect();
        let m = vals.iter().sum::<f64>() / 4.0;
        let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / 4.0;
        assert!((m - -1.0).abs() < 1e-9);
        // output std is gamma * sigma / sqrt(sigma^2 + eps), not exactly gamma
        let xs: Vec<f64> = (0..4).map(|i| x.get(i, 0)).collect();
        let xm = xs.iter().sum::<f64>() / 4.0;
        let xvar = xs.iter().map(|v| (v - xm) * (v - xm)).sum::<f64>() / 4.0;
        let want = 2.0 * math::sqrt(xvar / (xvar + bn.eps));
        assert!((math::sqrt(var) - want).abs() < 1e-12);
    }
}
