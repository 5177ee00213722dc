//! The encoder/decoder building block: Dense -> BatchNorm -> ReLU -> Dense.
//!
//! Encoders and decoders share this exact two-layer shape; only the
//! dimensions differ (encoder: feature width in, code width out; decoder the
//! reverse; the entrainment encoder takes two concatenated feature vectors).

use alloc::vec::Vec;

use rand::Rng;

use crate::mat::Mat;
use crate::nn::batchnorm::{BatchNorm, BnCache};
use crate::nn::dense::{Dense, DenseGrads};
use crate::nn::ops::{relu, relu_backward};
use crate::nn::NnError;

#[derive(Debug, Clone, PartialEq)]
pub struct EncDec {
    pub l1: Dense,
    pub bn: BatchNorm,
    pub l2: Dense,
}

#[derive(Debug, Clone)]
pub struct EncDecCache {
    x: Mat,
    bn: BnCache,
    h_bn: Mat,
    h_relu: Mat,
}

#[derive(Debug, Clone)]
pub struct EncDecGrads {
    pub l1: DenseGrads,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub l2: DenseGrads,
}

impl EncDec {
    pub fn init<R: Rng>(in_dim: usize, hidden: usize, out_dim: usize, rng: &mut R) -> EncDec {
        EncDec {
            l1: Dense::init(hidden, in_dim, rng),
            bn: BatchNorm::new(hidden),
            l2: Dense::init(out_dim, hidden, rng),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.l1.in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.l2.out_dim()
    }

    /// Training forward; updates batch-norm running statistics.
    pub fn forward_train(&mut self, x: &Mat) -> Result<(Mat, EncDecCache), NnError> {
        let h = self.l1.forward(x);
        let (h_bn, bn_cache) = self.bn.forward_train(&h)?;
        let h_relu = relu(&h_bn);
        let y = self.l2.forward(&h_relu);
        Ok((
            y,
            EncDecCache {
                x: x.clone(),
                bn: bn_cache,
                h_bn,
                h_relu,
            },
        ))
    }

    /// Inference forward; batch norm uses running statistics.
    pub fn forward_eval(&self, x: &Mat) -> Mat {
        let h = self.l1.forward(x);
        let h_bn = self.bn.forward_eval(&h);
        let h_relu = relu(&h_bn);
        self.l2.forward(&h_relu)
    }

    /// Backward through the training forward; accumulates into `grads`,
    /// returns dL/dx.
    pub fn backward(&self, cache: &EncDecCache, dy: &Mat, grads: &mut EncDecGrads) -> Mat {
        let d_relu = self.l2.backward(&cache.h_relu, dy, &mut grads.l2);
        let d_bn = relu_backward(&cache.h_bn, &d_relu);
        let d_h = self
            .bn
            .backward(&cache.bn, &d_bn, &mut grads.gamma, &mut grads.beta);
        self.l1.backward(&cache.x, &d_h, &mut grads.l1)
    }

    /// Trainable tensors in the fixed order [w1, b1, gamma, beta, w2, b2].
    pub fn tensors(&self) -> [&[f64]; 6] {
        [
            self.l1.w.as_slice(),
            &self.l1.b,
            &self.bn.gamma,
            &self.bn.beta,
            self.l2.w.as_slice(),
            &self.l2.b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.l1.w.as_mut_slice(),
            &mut self.l1.b,
            &mut self.bn.gamma,
            &mut self.bn.beta,
            self.l2.w.as_mut_slice(),
            &mut self.l2.b,
        ]
    }

    pub fn tensor_lens(&self) -> [usize; 6] {
        self.tensors().map(|t| t.len())
    }

    /// Name suffixes matching the `tensors` order.
    pub const TENSOR_NAMES: [&'static str; 6] = ["w1", "b1", "gamma", "beta", "w2", "b2"];

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
            && self.bn.running_mean.iter().all(|v| v.is_finite())
            && self.bn.running_var.iter().all(|v| v.is_finite())
    }
}

impl EncDecGrads {
    pub fn zeros_like(e: &EncDec) -> EncDecGrads {
        EncDecGrads {
            l1: DenseGrads::zeros_like(&e.l1),
            gamma: alloc::vec![0.0; e.bn.dim()],
            beta: alloc::vec![0.0; e.bn.dim()],
            l2: DenseGrads::zeros_like(&e.l2),
        }
    }

    pub fn zero(&mut self) {
        self.l1.zero();
        self.gamma.fill(0.0);
        self.beta.fill(0.0);
        self.l2.zero();
    }

    /// Same order as `EncDec::tensors`.
    pub fn tensors(&self) -> [&[f64]; 6] {
        [
            self.l1.w.as_slice(),
            &self.l1.b,
            &self.gamma,
            &self.beta,
            self.l2.w.as_slice(),
            &self.l2.b,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shapes_flow_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut block = EncDec::init(7, 5, 3, &mut rng);
        let x = Mat::zeros(4, 7);
        let (y, _) = block.forward_train(&x).unwrap();
        assert_eq!((y.rows(), y.cols()), (4, 3));
        let y = block.forward_eval(&x);
        assert_eq!((y.rows(), y.cols()), (4, 3));
    }

    #[test]
    fn train_batch_of_one_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut block = EncDec::init(4, 3, 2, &mut rng);
        let x = Mat::zeros(1, 4);
        assert!(matches!(
            block.forward_train(&x),
            Err(NnError::BatchTooSmall { got: 1 })
        ));
    }

    #[test]
    fn tensor_views_cover_all_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let block = EncDec::init(6, 5, 2, &mut rng);
        let lens = block.tensor_lens();
        assert_eq!(lens, [30, 5, 5, 5, 10, 2]);
        assert_eq!(EncDec::TENSOR_NAMES.len(), lens.len());
    }

    #[test]
    fn init_is_reproducible() {
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(
            EncDec::init(8, 4, 2, &mut a),
            EncDec::init(8, 4, 2, &mut b)
        );
    }
}
