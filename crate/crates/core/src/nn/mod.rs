//! Minimal differentiable-network engine for the entrainment models: dense
//! layers, batch normalization, ReLU, smooth-L1 loss, gradient reversal and
//! Adam, with hand-written backward passes validated against finite
//! differences (see `gradcheck`).

pub mod adam;
pub mod batchnorm;
pub mod block;
pub mod dense;
pub mod gradcheck;
pub mod loss;
pub mod ops;

pub use adam::{Adam, AdamConfig};
pub use batchnorm::{BatchNorm, BnCache};
pub use block::{EncDec, EncDecCache, EncDecGrads};
pub use dense::{Dense, DenseGrads};
pub use gradcheck::GradReport;
pub use loss::{batch_smooth_l1, per_sample_smooth_l1, smooth_l1_loss};
pub use ops::{grad_reverse_backward, grad_reverse_forward, relu, relu_backward};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("batch normalization needs a batch of at least 2 in train mode, got {got}")]
    BatchTooSmall { got: usize },
}
