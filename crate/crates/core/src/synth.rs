//! Synthetic conversation generator with separately tunable speaker
//! consistency and entrainment, plus a regression oracle that confirms the
//! planted entrainment is statistically detectable before any network is
//! blamed for missing it.
//!
//! Linear-Gaussian model, per session: each speaker s draws a baseline
//! b_s ~ N(0, I) and an entrainment strength lam_s = entrainment * U[0.5, 1.5]
//! (mean-preserving per-speaker jitter, so the average coupling equals the
//! `entrainment` parameter and the realized values still vary by speaker).
//! Speakers alternate turns of two IPUs each. A speaker's very first IPU is
//! b_s + eps (their uncontaminated baseline, the measure's x0); every other
//! turn-initial IPU is c*b_s + lam_s*(partner's preceding turn-final) + eps;
//! turn-final IPUs are c*b_s + eps. All noise is N(0, noise_sigma^2 I).
//! Payloads are emitted directly in feature space.

use alloc::string::ToString;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Annotation, Corpus, IpuPayload, RawIpu, Session, SocialVar};
use crate::mat::{gemm, matmul, plain, transposed, Mat};
use crate::math;
use crate::nn::smooth_l1_loss;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub n_sessions: usize,
    pub turns_per_session: usize,
    pub feature_dim: usize,
    /// c: weight of the speaker's own baseline in every IPU.
    pub consistency: f64,
    /// lambda: mean of the per-speaker prompt-coupling weight.
    pub entrainment: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            n_sessions: 100,
            turns_per_session: 20,
            feature_dim: 228,
            consistency: 0.5,
            entrainment: 0.5,
            noise_sigma: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("invalid parameter {name}: {value} ({constraint})")]
    InvalidParam {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        let checks: [(&'static str, f64, bool, &'static str); 6] = [
            ("n_sessions", self.n_sessions as f64, self.n_sessions >= 1, ">= 1"),
            (
                "turns_per_session",
                self.turns_per_session as f64,
                self.turns_per_session >= 2,
                ">= 2",
            ),
            ("feature_dim", self.feature_dim as f64, self.feature_dim >= 1, ">= 1"),
            (
                "consistency",
                self.consistency,
                (0.0..=1.0).contains(&self.consistency),
                "in [0, 1]",
            ),
            (
                "entrainment",
                self.entrainment,
                (0.0..=1.0).contains(&self.entrainment),
                "in [0, 1]",
            ),
            (
                "noise_sigma",
                self.noise_sigma,
                self.noise_sigma > 0.0 && self.noise_sigma.is_finite(),
                "> 0",
            ),
        ];
        for (name, value, ok, constraint) in checks {
            if !ok {
                return Err(SynthError::InvalidParam {
                    name,
                    value,
                    constraint,
                });
            }
        }
        Ok(())
    }
}

/// Standard normal via Box-Muller.
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
    let u2: f64 = rng.gen();
    math::sqrt(-2.0 * math::ln(u1)) * math::cos(2.0 * core::f64::consts::PI * u2)
}

fn normal_vec(dim: usize, sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..dim).map(|_| sigma * normal(rng)).collect()
}

/// Map a strength in [0, 1] onto the 0..5 annotator-count scale with
/// equal-width bins.
fn quantize(v: f64) -> u8 {
    let v = v.clamp(0.0, 1.0);
    (math::floor(v * 6.0) as u8).min(5)
}

/// Per-speaker realized coupling: mean-preserving jitter around the
/// `entrainment` parameter (zero stays exactly zero).
fn draw_lambda(entrainment: f64, rng: &mut ChaCha8Rng) -> f64 {
    entrainment * (0.8 + 0.4 * rng.gen::<f64>())
}

struct SpeakerState {
    baseline: Vec<f64>,
    lambda: f64,
}

/// Generate the corpus and its pseudo-annotations.
///
/// Annotations mimic the annotator-count scale per (session, task, speaker):
/// `dom` is the speaker's realized entrainment strength quantized to 0..5,
/// `lik` the same with perturbation before quantizing (a weaker correlate),
/// and `enc` pure noise (no relationship, the null control).
pub fn generate_corpus(params: &SynthParams) -> Result<(Corpus, Vec<Annotation>), SynthError> {
    params.validate()?;
    let mut sessions = Vec::with_capacity(params.n_sessions);
    let mut annotations = Vec::new();

    for i in 0..params.n_sessions {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(i as u64 + 1);
        let session_id = alloc::format!("s{i:04}");
        let task_id = "t0".to_string();

        let speakers: [SpeakerState; 2] = core::array::from_fn(|_| SpeakerState {
            baseline: normal_vec(params.feature_dim, 1.0, &mut rng),
            lambda: draw_lambda(params.entrainment, &mut rng),
        });

        let mut raws = Vec::with_capacity(2 * params.turns_per_session);
        let mut prev_final: Option<Vec<f64>> = None;
        let mut first_seen = [false; 2];
        for turn in 0..params.turns_per_session {
            let who = turn % 2;
            let st = &speakers[who];
            let c = params.consistency;

            let initial: Vec<f64> = if !first_seen[who] {
                // the speaker's session-first IPU: pure baseline plus noise
                st.baseline
                    .iter()
                    .map(|b| b + params.noise_sigma * normal(&mut rng))
                    .collect()
            } else {
                let prompt = prev_final.as_ref().expect("turn > 0 has a predecessor");
                st.baseline
                    .iter()
                    .zip(prompt)
                    .map(|(b, p)| c * b + st.lambda * p + params.noise_sigma * normal(&mut rng))
                    .collect()
            };
            first_seen[who] = true;

            let fin: Vec<f64> = st
                .baseline
                .iter()
                .map(|b| c * b + params.noise_sigma * normal(&mut rng))
                .collect();
            prev_final = Some(fin.clone());

            let name = if who == 0 { "A" } else { "B" };
            raws.push(RawIpu {
                speaker: name.to_string(),
                index: (2 * turn) as u64,
                task_id: Some(task_id.clone()),
                payload: IpuPayload::Features(initial),
            });
            raws.push(RawIpu {
                speaker: name.to_string(),
                index: (2 * turn + 1) as u64,
                task_id: Some(task_id.clone()),
                payload: IpuPayload::Features(fin),
            });
        }

        for (who, st) in speakers.iter().enumerate() {
            let name = if who == 0 { "A" } else { "B" };
            let noisy = st.lambda + 0.15 * (2.0 * rng.gen::<f64>() - 1.0);
            for (variable, count) in [
                (SocialVar::Dom, quantize(st.lambda)),
                (SocialVar::Lik, quantize(noisy)),
                (SocialVar::Enc, (rng.gen::<f64>() * 6.0) as u8),
            ] {
                annotations.push(Annotation {
                    session_id: session_id.clone(),
                    task_id: task_id.clone(),
                    speaker: name.to_string(),
                    variable,
                    count: count.min(5),
                });
            }
        }

        let session = Session::new(session_id, raws).expect("generated session is valid");
        sessions.push(session);
    }

    let corpus = Corpus::new(sessions).expect("generated corpus is valid");
    Ok((corpus, annotations))
}

/// Monte-Carlo estimate of the real-vs-fake loss gap under the planted
/// model, using a ridge-regressed linear predictor of x2 from [1, x0, x1]
/// instead of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleGap {
    /// E[L(fake)] - E[L(real)]; positive when shuffling the prompt hurts.
    pub gap: f64,
    /// Standard error of the paired difference.
    pub std_err: f64,
    /// gap / std_err.
    pub z: f64,
    pub n_eval: usize,
}

pub fn oracle_gap(params: &SynthParams, n_mc: usize) -> Result<OracleGap, SynthError> {
    params.validate()?;
    assert!(n_mc >= 10_000, "oracle needs at least 10^4 Monte-Carlo draws");
    let dim = params.feature_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(u64::MAX); // distinct from the per-session streams

    // One triplet per draw plus a paired alternate prompt from the same
    // partner (an in-session shuffle replaces the prompt with another of the
    // partner's turn-finals: same baseline, fresh noise).
    let n = n_mc;
    let mut x0 = Mat::zeros(n, dim);
    let mut x1 = Mat::zeros(n, dim);
    let mut x1_alt = Mat::zeros(n, dim);
    let mut x2 = Mat::zeros(n, dim);
    for i in 0..n {
        let lambda = draw_lambda(params.entrainment, &mut rng);
        let c = params.consistency;
        for j in 0..dim {
            let b_resp = normal(&mut rng);
            let b_part = normal(&mut rng);
            let x1v = c * b_part + params.noise_sigma * normal(&mut rng);
            let x1a = c * b_part + params.noise_sigma * normal(&mut rng);
            let x2v = c * b_resp + lambda * x1v + params.noise_sigma * normal(&mut rng);
            let x0v = b_resp + params.noise_sigma * normal(&mut rng);
            x0.set(i, j, x0v);
            x1.set(i, j, x1v);
            x1_alt.set(i, j, x1a);
            x2.set(i, j, x2v);
        }
    }

    // design matrix [1, x0, x1]
    let design = |x0: &Mat, x1: &Mat, rows: core::ops::Range<usize>| -> Mat {
        let mut d = Mat::zeros(rows.len(), 1 + 2 * dim);
        for (k, i) in rows.enumerate() {
            let row = d.row_mut(k);
            row[0] = 1.0;
            row[1..1 + dim].copy_from_slice(x0.row(i));
            row[1 + dim..].copy_from_slice(x1.row(i));
        }
        d
    };

    let n_fit = n / 2;
    let x_fit = design(&x0, &x1, 0..n_fit);
    let y_fit = {
        let mut y = Mat::zeros(n_fit, dim);
        for i in 0..n_fit {
            y.row_mut(i).copy_from_slice(x2.row(i));
        }
        y
    };
    let w = ridge_fit(&x_fit, &y_fit, 1e-3);

    let x_real = design(&x0, &x1, n_fit..n);
    let x_fake = design(&x0, &x1_alt, n_fit..n);
    let pred_real = matmul(plain(&x_real), plain(&w));
    let pred_fake = matmul(plain(&x_fake), plain(&w));

    let n_eval = n - n_fit;
    let mut diffs = Vec::with_capacity(n_eval);
    for k in 0..n_eval {
        let target = x2.row(n_fit + k);
        let l_real = smooth_l1_loss(pred_real.row(k), target);
        let l_fake = smooth_l1_loss(pred_fake.row(k), target);
        diffs.push(l_fake - l_real);
    }
    let gap = stats::mean(&diffs);
    let std_err = stats::sample_std(&diffs) / math::sqrt(n_eval as f64);
    let z = if std_err > 0.0 { gap / std_err } else { 0.0 };
    Ok(OracleGap {
        gap,
        std_err,
        z,
        n_eval,
    })
}

/// Ridge regression W solving (X^T X + alpha I) W = X^T Y; returns W with
/// shape (design_dim x out_dim) so predictions are X * W.
fn ridge_fit(x: &Mat, y: &Mat, alpha: f64) -> Mat {
    let d = x.cols();
    let mut gram = Mat::zeros(d, d);
    gemm(1.0, transposed(x), plain(x), 0.0, &mut gram);
    for i in 0..d {
        let v = gram.get(i, i) + alpha;
        gram.set(i, i, v);
    }
    let mut rhs = Mat::zeros(d, y.cols());
    gemm(1.0, transposed(x), plain(y), 0.0, &mut rhs);
    let chol = cholesky(&gram);
    solve_cholesky(&chol, &rhs)
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
fn cholesky(a: &Mat) -> Mat {
    let n = a.rows();
    assert_eq!(n, a.cols());
    let mut l = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a.get(i, j);
            for k in 0..j {
                sum -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                assert!(sum > 0.0, "matrix not positive definite");
                l.set(i, j, math::sqrt(sum));
            } else {
                l.set(i, j, sum / l.get(j, j));
            }
        }
    }
    l
}

/// Solve (L L^T) W = B column-block-wise via forward then back substitution.
fn solve_cholesky(l: &Mat, b: &Mat) -> Mat {
    let n = l.rows();
    let m = b.cols();
    // forward: L z = b
    let mut z = b.clone();
    for i in 0..n {
        for k in 0..i {
            let lik = l.get(i, k);
            if lik != 0.0 {
                for c in 0..m {
                    let v = z.get(i, c) - lik * z.get(k, c);
                    z.set(i, c, v);
                }
            }
        }
        let d = l.get(i, i);
        for c in 0..m {
            let v = z.get(i, c) / d;
            z.set(i, c, v);
        }
    }
    // backward: L^T w = z
    let mut w = z;
    for i in (0..n).rev() {
        for k in i + 1..n {
            let lki = l.get(k, i);
            if lki != 0.0 {
                for c in 0..m {
                    let v = w.get(i, c) - lki * w.get(k, c);
                    w.set(i, c, v);
                }
            }
        }
        let d = l.get(i, i);
        for c in 0..m {
            let v = w.get(i, c) / d;
            w.set(i, c, v);
        }
    }
    w
}
