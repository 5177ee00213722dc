//! Smooth-L1 reconstruction loss.
//!
//! Per sample the loss is the plain sum over feature dimensions of
//! smooth_L1(d) = 0.5 d^2 for |d| < 1 and |d| - 0.5 otherwise; measure
//! values are reported on this per-sample scale. For optimization the batch
//! gradient uses the mean over samples so step sizes are batch-invariant.

use alloc::vec::Vec;

use crate::mat::Mat;

#[inline]
pub fn smooth_l1(d: f64) -> f64 {
    if d.abs() < 1.0 {
        0.5 * d * d
    } else {
        d.abs() - 0.5
    }
}

#[inline]
fn smooth_l1_grad(d: f64) -> f64 {
    if d.abs() < 1.0 {
        d
    } else if d > 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Per-sample loss: sum of smooth_L1 over components.
pub fn smooth_l1_loss(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "loss length mismatch");
    x.iter().zip(y).map(|(a, b)| smooth_l1(a - b)).sum()
}

/// Per-row losses of a batch.
pub fn per_sample_smooth_l1(pred: &Mat, target: &Mat) -> Vec<f64> {
    assert_eq!((pred.rows(), pred.cols()), (target.rows(), target.cols()));
    (0..pred.rows())
        .map(|i| smooth_l1_loss(pred.row(i), target.row(i)))
        .collect()
}

/// Mean per-sample loss and its gradient with respect to `pred`
/// (the 1/batch factor of the mean reduction is folded in).
pub fn batch_smooth_l1(pred: &Mat, target: &Mat) -> (f64, Mat) {
    assert_eq!((pred.rows(), pred.cols()), (target.rows(), target.cols()));
    let b = pred.rows() as f64;
    let mut total = 0.0;
    let mut grad = Mat::zeros(pred.rows(), pred.cols());
    for i in 0..pred.rows() {
        let p = pred.row(i);
        let t = target.row(i);
        let g = grad.row_mut(i);
        for j in 0..p.len() {
            let d = p[j] - t[j];
            total += smooth_l1(d);
            g[j] = smooth_l1_grad(d) / b;
        }
    }
    (total / b, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_on_equal_inputs() {
        assert_eq!(smooth_l1_loss(&[1.0, -2.0], &[1.0, -2.0]), 0.0);
    }

    #[test]
    fn linear_branch_at_unit_diffs() {
        assert_eq!(smooth_l1_loss(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
    }

    #[test]
    fn mixed_branches() {
        // diffs 0.5 and 2: 0.125 + 1.5
        assert_eq!(smooth_l1_loss(&[0.5, 2.0], &[0.0, 0.0]), 1.625);
    }

    #[test]
    fn continuous_at_the_kink() {
        let below = smooth_l1(1.0 - 1e-12);
        let at = smooth_l1(1.0);
        assert_eq!(at, 0.5);
        assert!((below - at).abs() < 1e-9);
    }

    #[test]
    fn nonnegative_and_zero_iff_equal() {
        let xs = [-3.0, -0.4, 0.0, 0.7, 5.0];
        for &a in &xs {
            for &b in &xs {
                let l = smooth_l1_loss(&[a], &[b]);
                assert!(l >= 0.0);
                assert_eq!(l == 0.0, a == b);
            }
        }
    }

    #[test]
    fn batch_gradient_scales_with_batch_size() {
        let pred = Mat::from_rows(&[&[0.5], &[3.0]]);
        let target = Mat::zeros(2, 1);
        let (loss, grad) = batch_smooth_l1(&pred, &target);
        assert!((loss - (0.125 + 2.5) / 2.0).abs() < 1e-12);
        assert_eq!(grad.get(0, 0), 0.25);
        assert_eq!(grad.get(1, 0), 0.5);
    }
}
