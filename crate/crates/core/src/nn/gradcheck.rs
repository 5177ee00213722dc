//! Finite-difference validation of every hand-written backward pass.
//!
//! Central differences with h = 1e-5 against the analytic gradients, on
//! small randomly sampled instances. Sampling rejects configurations near
//! the two non-smooth points (the smooth-L1 elbow at |d| = 1 and the ReLU
//! corner at 0) so the comparison is made where the loss is differentiable.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::mat::Mat;
use crate::nn::batchnorm::BatchNorm;
use crate::nn::block::{EncDec, EncDecGrads};
use crate::nn::dense::{Dense, DenseGrads};
use crate::nn::loss::batch_smooth_l1;
use crate::nn::ops::grad_reverse_backward;

pub const FD_H: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub component: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl GradReport {
    fn from_errors(component: &str, errors: &[f64], tolerance: f64) -> GradReport {
        let max_rel_error = errors.iter().fold(0.0f64, |a, &b| a.max(b));
        GradReport {
            component: component.into(),
            checked: errors.len(),
            max_rel_error,
            tolerance,
            pass: max_rel_error < tolerance,
        }
    }
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff < 1e-8 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs()).max(1e-12)
}

fn fill_uniform<R: Rng>(m: &mut Mat, rng: &mut R, scale: f64) {
    for v in m.as_mut_slice() {
        *v = (rng.gen::<f64>() * 2.0 - 1.0) * scale;
    }
}

/// True when any |pred - target| falls within 1e-3 of the smooth-L1 elbow.
fn near_loss_kink(pred: &Mat, target: &Mat) -> bool {
    pred.as_slice()
        .iter()
        .zip(target.as_slice())
        .any(|(p, t)| ((p - t).abs() - 1.0).abs() < 1e-3)
}

fn near_relu_kink(pre: &Mat) -> bool {
    pre.as_slice().iter().any(|v| v.abs() < 1e-3)
}

fn dense_entry(d: &mut Dense, slot: usize, k: usize) -> &mut f64 {
    if slot == 0 {
        &mut d.w.as_mut_slice()[k]
    } else {
        &mut d.b[k]
    }
}

fn bn_entry(bn: &mut BatchNorm, slot: usize, k: usize) -> &mut f64 {
    if slot == 0 {
        &mut bn.gamma[k]
    } else {
        &mut bn.beta[k]
    }
}

pub fn check_dense(seed: u64, tolerance: f64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (batch, in_dim, out_dim) = (4, 7, 5);
    let dense = Dense::init(out_dim, in_dim, &mut rng);
    let mut x = Mat::zeros(batch, in_dim);
    let mut target = Mat::zeros(batch, out_dim);
    let mut dense = dense;
    loop {
        fill_uniform(&mut x, &mut rng, 2.0);
        fill_uniform(&mut target, &mut rng, 2.0);
        if !near_loss_kink(&dense.forward(&x), &target) {
            break;
        }
    }

    let pred = dense.forward(&x);
    let (_, dpred) = batch_smooth_l1(&pred, &target);
    let mut grads = DenseGrads::zeros_like(&dense);
    let dx = dense.backward(&x, &dpred, &mut grads);

    let loss_of =
        |d: &Dense, x: &Mat| -> f64 { batch_smooth_l1(&d.forward(x), &target).0 };

    let mut errors = Vec::new();
    // weight and bias entries
    for slot in 0..2 {
        let len = if slot == 0 {
            dense.w.as_slice().len()
        } else {
            dense.b.len()
        };
        for k in 0..len {
            let analytic = if slot == 0 {
                grads.w.as_slice()[k]
            } else {
                grads.b[k]
            };
            let orig = *dense_entry(&mut dense, slot, k);
            *dense_entry(&mut dense, slot, k) = orig + FD_H;
            let lp = loss_of(&dense, &x);
            *dense_entry(&mut dense, slot, k) = orig - FD_H;
            let lm = loss_of(&dense, &x);
            *dense_entry(&mut dense, slot, k) = orig;
            errors.push(rel_err(analytic, (lp - lm) / (2.0 * FD_H)));
        }
    }
    // input entries
    for k in 0..x.as_slice().len() {
        let orig = x.as_slice()[k];
        x.as_mut_slice()[k] = orig + FD_H;
        let lp = loss_of(&dense, &x);
        x.as_mut_slice()[k] = orig - FD_H;
        let lm = loss_of(&dense, &x);
        x.as_mut_slice()[k] = orig;
        errors.push(rel_err(dx.as_slice()[k], (lp - lm) / (2.0 * FD_H)));
    }
    GradReport::from_errors("dense", &errors, tolerance)
}

pub fn check_batchnorm(seed: u64, tolerance: f64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (batch, dim) = (5, 4);
    let mut bn = BatchNorm::new(dim);
    for v in bn.gamma.iter_mut() {
        *v = 0.5 + rng.gen::<f64>();
    }
    for v in bn.beta.iter_mut() {
        *v = rng.gen::<f64>() - 0.5;
    }
    let mut x = Mat::zeros(batch, dim);
    let mut target = Mat::zeros(batch, dim);
    loop {
        fill_uniform(&mut x, &mut rng, 2.0);
        fill_uniform(&mut target, &mut rng, 2.0);
        let (pred, _) = bn.clone().forward_train(&x).unwrap();
        if !near_loss_kink(&pred, &target) {
            break;
        }
    }

    let (pred, cache) = bn.clone().forward_train(&x).unwrap();
    let (_, dpred) = batch_smooth_l1(&pred, &target);
    let mut dgamma = alloc::vec![0.0; dim];
    let mut dbeta = alloc::vec![0.0; dim];
    let dx = bn.backward(&cache, &dpred, &mut dgamma, &mut dbeta);

    let loss_of = |bn: &BatchNorm, x: &Mat| -> f64 {
        let (pred, _) = bn.clone().forward_train(x).unwrap();
        batch_smooth_l1(&pred, &target).0
    };

    let mut errors = Vec::new();
    for slot in 0..2 {
        for k in 0..dim {
            let analytic = if slot == 0 { dgamma[k] } else { dbeta[k] };
            let orig = *bn_entry(&mut bn, slot, k);
            *bn_entry(&mut bn, slot, k) = orig + FD_H;
            let lp = loss_of(&bn, &x);
            *bn_entry(&mut bn, slot, k) = orig - FD_H;
            let lm = loss_of(&bn, &x);
            *bn_entry(&mut bn, slot, k) = orig;
            errors.push(rel_err(analytic, (lp - lm) / (2.0 * FD_H)));
        }
    }
    for k in 0..x.as_slice().len() {
        let orig = x.as_slice()[k];
        x.as_mut_slice()[k] = orig + FD_H;
        let lp = loss_of(&bn, &x);
        x.as_mut_slice()[k] = orig - FD_H;
        let lm = loss_of(&bn, &x);
        x.as_mut_slice()[k] = orig;
        errors.push(rel_err(dx.as_slice()[k], (lp - lm) / (2.0 * FD_H)));
    }
    GradReport::from_errors("batchnorm", &errors, tolerance)
}

pub(crate) fn encdec_entry(e: &mut EncDec, slot: usize, k: usize) -> &mut f64 {
    match slot {
        0 => &mut e.l1.w.as_mut_slice()[k],
        1 => &mut e.l1.b[k],
        2 => &mut e.bn.gamma[k],
        3 => &mut e.bn.beta[k],
        4 => &mut e.l2.w.as_mut_slice()[k],
        _ => &mut e.l2.b[k],
    }
}

/// FD check of one encoder-decoder block (or a chain of two when `dec` is
/// given), including input gradients.
fn check_blocks(
    component: &str,
    seed: u64,
    tolerance: f64,
    with_chain: bool,
) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch = 4;
    let mut enc = EncDec::init(6, 5, 3, &mut rng);
    let mut dec = EncDec::init(3, 4, 6, &mut rng);
    let out_dim = if with_chain { 6 } else { 3 };

    let forward = |enc: &EncDec, dec: &EncDec, x: &Mat| -> (Mat, Mat) {
        // clones: train-mode forwards update running stats
        let (code, _) = enc.clone().forward_train(x).unwrap();
        if with_chain {
            let (pred, _) = dec.clone().forward_train(&code).unwrap();
            (code, pred)
        } else {
            let p = code.clone();
            (code, p)
        }
    };

    let mut x = Mat::zeros(batch, 6);
    let mut target = Mat::zeros(batch, out_dim);
    loop {
        fill_uniform(&mut x, &mut rng, 2.0);
        fill_uniform(&mut target, &mut rng, 2.0);
        // reject ReLU inputs near the corner, in both blocks
        let h1 = enc.bn.clone().forward_train(&enc.l1.forward(&x)).unwrap().0;
        let (code, pred) = forward(&enc, &dec, &x);
        let near_relu = if with_chain {
            let h2 = dec.bn.clone().forward_train(&dec.l1.forward(&code)).unwrap().0;
            near_relu_kink(&h1) || near_relu_kink(&h2)
        } else {
            near_relu_kink(&h1)
        };
        if !near_relu && !near_loss_kink(&pred, &target) {
            break;
        }
    }

    // analytic pass on clones so the FD baseline sees identical models
    let mut enc_t = enc.clone();
    let mut dec_t = dec.clone();
    let (code, enc_cache) = enc_t.forward_train(&x).unwrap();
    let mut enc_grads = EncDecGrads::zeros_like(&enc);
    let mut dec_grads = EncDecGrads::zeros_like(&dec);
    let dx = if with_chain {
        let (pred, dec_cache) = dec_t.forward_train(&code).unwrap();
        let (_, dpred) = batch_smooth_l1(&pred, &target);
        let dcode = dec_t.backward(&dec_cache, &dpred, &mut dec_grads);
        enc_t.backward(&enc_cache, &dcode, &mut enc_grads)
    } else {
        let (_, dpred) = batch_smooth_l1(&code, &target);
        enc_t.backward(&enc_cache, &dpred, &mut enc_grads)
    };

    let loss_of = |enc: &EncDec, dec: &EncDec, x: &Mat| -> f64 {
        let (_, pred) = forward(enc, dec, x);
        batch_smooth_l1(&pred, &target).0
    };

    let mut errors = Vec::new();
    let blocks: &[usize] = if with_chain { &[0, 1] } else { &[0] };
    for &which in blocks {
        for slot in 0..6 {
            let len = if which == 0 {
                enc.tensor_lens()[slot]
            } else {
                dec.tensor_lens()[slot]
            };
            for k in 0..len {
                let analytic = if which == 0 {
                    enc_grads.tensors()[slot][k]
                } else {
                    dec_grads.tensors()[slot][k]
                };
                let target_block = if which == 0 { &mut enc } else { &mut dec };
                let orig = *encdec_entry(target_block, slot, k);
                *encdec_entry(target_block, slot, k) = orig + FD_H;
                let lp = loss_of(&enc, &dec, &x);
                let target_block = if which == 0 { &mut enc } else { &mut dec };
                *encdec_entry(target_block, slot, k) = orig - FD_H;
                let lm = loss_of(&enc, &dec, &x);
                let target_block = if which == 0 { &mut enc } else { &mut dec };
                *encdec_entry(target_block, slot, k) = orig;
                errors.push(rel_err(analytic, (lp - lm) / (2.0 * FD_H)));
            }
        }
    }
    for k in 0..x.as_slice().len() {
        let orig = x.as_slice()[k];
        x.as_mut_slice()[k] = orig + FD_H;
        let lp = loss_of(&enc, &dec, &x);
        x.as_mut_slice()[k] = orig - FD_H;
        let lm = loss_of(&enc, &dec, &x);
        x.as_mut_slice()[k] = orig;
        errors.push(rel_err(dx.as_slice()[k], (lp - lm) / (2.0 * FD_H)));
    }
    GradReport::from_errors(component, &errors, tolerance)
}

pub fn check_encdec(seed: u64, tolerance: f64) -> GradReport {
    check_blocks("encoder-decoder", seed, tolerance, false)
}

pub fn check_encdec_chain(seed: u64, tolerance: f64) -> GradReport {
    check_blocks("encoder-decoder-chain", seed, tolerance, true)
}

/// The reversal layer's backward must be the exact negation of the same
/// path without it.
pub fn check_grad_reversal(seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Mat::zeros(3, 4);
    fill_uniform(&mut g, &mut rng, 3.0);
    let reversed = grad_reverse_backward(&g, 1.0);
    let exact = g
        .as_slice()
        .iter()
        .zip(reversed.as_slice())
        .all(|(a, b)| *b == -*a);
    GradReport {
        component: "gradient-reversal".into(),
        checked: g.as_slice().len(),
        max_rel_error: if exact { 0.0 } else { f64::INFINITY },
        tolerance: 0.0,
        pass: exact,
    }
}

/// Every layer-level check at the default tolerance.
pub fn run_layer_checks(seed: u64) -> Vec<GradReport> {
    alloc::vec![
        check_dense(seed, DEFAULT_TOLERANCE),
        check_batchnorm(seed.wrapping_add(1), DEFAULT_TOLERANCE),
        check_encdec(seed.wrapping_add(2), DEFAULT_TOLERANCE),
        check_encdec_chain(seed.wrapping_add(3), DEFAULT_TOLERANCE),
        check_grad_reversal(seed.wrapping_add(4)),
    ]
}

impl core::fmt::Display for GradReport {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(
            f,
            "{}: {} ({} gradients, max rel err {:.3e}, tol {:.1e})",
            self.component,
            if self.pass { "PASS" } else { "FAIL" },
            self.checked,
            self.max_rel_error,
            self.tolerance
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_gradients_match_finite_differences() {
        let r = check_dense(11, DEFAULT_TOLERANCE);
        assert!(r.pass, "{}", format!("{r}"));
    }

    #[test]
    fn batchnorm_gradients_match_finite_differences() {
        let r = check_batchnorm(12, DEFAULT_TOLERANCE);
        assert!(r.pass, "{}", format!("{r}"));
    }

    #[test]
    fn reversal_is_exact_negation() {
        assert!(check_grad_reversal(13).pass);
    }
}
