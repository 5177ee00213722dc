//! Elementwise pieces: ReLU and the gradient-reversal pseudo-layer.

use crate::mat::Mat;

pub fn relu(x: &Mat) -> Mat {
    let mut y = x.clone();
    for v in y.as_mut_slice() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    y
}

/// dL/dx given the ReLU *input* and upstream gradient; the kink at 0 takes
/// the zero branch.
pub fn relu_backward(pre: &Mat, dy: &Mat) -> Mat {
    assert_eq!((pre.rows(), pre.cols()), (dy.rows(), dy.cols()));
    let mut dx = dy.clone();
    for (g, p) in dx.as_mut_slice().iter_mut().zip(pre.as_slice()) {
        if *p <= 0.0 {
            *g = 0.0;
        }
    }
    dx
}

/// Forward side of gradient reversal: exactly the identity.
pub fn grad_reverse_forward(x: &Mat) -> Mat {
    x.clone()
}

/// Backward side: upstream gradient scaled by -lambda.
pub fn grad_reverse_backward(dy: &Mat, lambda: f64) -> Mat {
    let mut dx = dy.clone();
    for v in dx.as_mut_slice() {
        *v = -lambda * *v;
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_clamps_negatives() {
        let x = Mat::from_rows(&[&[-1.0, 0.0, 2.5]]);
        assert_eq!(relu(&x).row(0), &[0.0, 0.0, 2.5]);
    }

    #[test]
    fn relu_backward_masks_by_preactivation() {
        let pre = Mat::from_rows(&[&[-1.0, 0.0, 2.5]]);
        let dy = Mat::from_rows(&[&[1.0, 1.0, 1.0]]);
        assert_eq!(relu_backward(&pre, &dy).row(0), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn reversal_forward_is_exact_identity() {
        let x = Mat::from_rows(&[&[0.1, -0.2], &[3.0, 4.0]]);
        assert_eq!(grad_reverse_forward(&x), x);
    }

    #[test]
    fn reversal_backward_scales_by_minus_lambda() {
        let g = Mat::from_rows(&[&[1.0, -2.0]]);
        assert_eq!(grad_reverse_backward(&g, 1.0).row(0), &[-1.0, 2.0]);
        assert_eq!(grad_reverse_backward(&g, 2.0).row(0), &[-2.0, 4.0]);
    }
}
