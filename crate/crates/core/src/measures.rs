//! The two neural entrainment measures over turn-exchange triplets.
//!
//! Deep residualization (DR) trains a consistency baseline DEC0(ENC0(x0))
//! predicting the response x2 from the responder's session-first IPU x0
//! alone, freezes it, then trains DEC1(ENC1([x̂2', x1])) to improve that
//! prediction using the partner's prompt x1. DR(x0,x1,x2) =
//! L(x2, x̂2) - L(x2, x̂2'): negative when the prompt helps, so lower means
//! more entrainment.
//!
//! The adversarial measure (A) encodes the prompt once, e = ENC0(x1), and
//! decodes it two ways: DEC1(e) predicts x2 while DEC2(e), behind a
//! gradient-reversal layer, predicts x0. The encoder is pushed to keep what
//! predicts the response and shed what predicts the responder's baseline.
//! A(x0,x1,x2) = L(x2, x̂2) - L(x0, x̂0); again lower = more entrainment.
//!
//! Both losses are the summed smooth-L1 of the loss module; training
//! minimizes their batch means with Adam, mini-batches of 128, shuffled
//! per epoch, early-stopped on validation loss.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::TripletSample;
use crate::mat::Mat;
use crate::nn::gradcheck::GradReport;
use crate::nn::{
    batch_smooth_l1, grad_reverse_backward, per_sample_smooth_l1, Adam, AdamConfig, EncDec,
    EncDecGrads, NnError,
};

/// Which entrainment measure a model implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    Dr,
    Adv,
}

impl Measure {
    pub fn as_str(self) -> &'static str {
        match self {
            Measure::Dr => "dr",
            Measure::Adv => "adv",
        }
    }
}

impl core::str::FromStr for Measure {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, TrainError> {
        match s {
            "dr" => Ok(Measure::Dr),
            "adv" => Ok(Measure::Adv),
            _ => Err(TrainError::UnknownMeasure { name: s.into() }),
        }
    }
}

/// Layer widths. The published architecture is 228-dim features, 128-dim
/// hidden layers and a 30-dim code; tests shrink these to keep
/// finite-difference sweeps cheap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub feat: usize,
    pub hidden: usize,
    pub code: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            feat: 228,
            hidden: 128,
            code: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub adam: AdamConfig,
    /// Scale on the reversed gradient into the adversarial encoder.
    pub grl_lambda: f64,
    pub seed: u64,
    pub dims: ModelDims,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            max_epochs: 100,
            patience: 5,
            adam: AdamConfig::default(),
            grl_lambda: 1.0,
            seed: 0,
            dims: ModelDims::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("empty training set")]
    EmptyTrain,
    #[error("empty validation set")]
    EmptyVal,
    #[error("empty sample list")]
    EmptySamples,
    #[error("sample feature width {got} does not match configured width {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("{stage}: no usable mini-batch (need at least 2 samples)")]
    NoUsableBatch { stage: &'static str },
    #[error("{stage}: loss diverged to a non-finite value at epoch {epoch}")]
    Diverged { stage: &'static str, epoch: usize },
    #[error("unknown measure {name:?}, expected \"dr\" or \"adv\"")]
    UnknownMeasure { name: String },
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub stage: &'static str,
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageSummary {
    pub stage: &'static str,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub records: Vec<EpochRecord>,
    pub stages: Vec<StageSummary>,
}

/// Deep-residualization model: frozen stage-1 consistency pair (enc0/dec0,
/// x0 -> x2) and stage-2 entrainment pair (enc1/dec1, [x̂2', x1] -> x2).
#[derive(Debug, Clone, PartialEq)]
pub struct DrModel {
    pub enc0: EncDec,
    pub dec0: EncDec,
    pub enc1: EncDec,
    pub dec1: EncDec,
    pub cfg: TrainConfig,
}

/// Adversarial model: shared prompt encoder enc0 (over x1), response
/// decoder dec1 (-> x̂2) and reversed consistency decoder dec2 (-> x̂0).
#[derive(Debug, Clone, PartialEq)]
pub struct AdvModel {
    pub enc0: EncDec,
    pub dec1: EncDec,
    pub dec2: EncDec,
    pub cfg: TrainConfig,
}

/// RNG substreams of the training seed, so initialization and the per-stage
/// shuffles are independent yet all reproducible from one seed.
mod stream {
    pub const INIT: u64 = 0;
    pub const STAGE1: u64 = 1;
    pub const STAGE2: u64 = 2;
    pub const ADV: u64 = 3;
}

fn stack(samples: &[TripletSample], pick: impl Fn(&TripletSample) -> &[f64]) -> Mat {
    let rows: Vec<&[f64]> = samples.iter().map(pick).collect();
    Mat::from_rows(&rows)
}

fn validate_samples(samples: &[TripletSample], feat: usize) -> Result<(), TrainError> {
    for s in samples {
        for part in [&s.x0, &s.x1, &s.x2] {
            if part.len() != feat {
                return Err(TrainError::DimMismatch {
                    expected: feat,
                    got: part.len(),
                });
            }
        }
    }
    Ok(())
}

/// Epoch-shuffled mini-batch index lists; a trailing batch of size 1 is
/// dropped (batch normalization cannot see a single sample in train mode).
fn batches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch_size)
        .filter(|c| c.len() >= 2)
        .map(|c| c.to_vec())
        .collect()
}

struct EarlyStop {
    patience: usize,
    best_val: f64,
    best_epoch: usize,
    since_best: usize,
}

impl EarlyStop {
    fn new(patience: usize) -> EarlyStop {
        EarlyStop {
            patience,
            best_val: f64::INFINITY,
            best_epoch: 0,
            since_best: 0,
        }
    }

    /// Returns true when this epoch is a new best.
    fn observe(&mut self, epoch: usize, val_loss: f64) -> bool {
        if val_loss < self.best_val {
            self.best_val = val_loss;
            self.best_epoch = epoch;
            self.since_best = 0;
            true
        } else {
            self.since_best += 1;
            false
        }
    }

    fn exhausted(&self) -> bool {
        self.since_best >= self.patience
    }
}

/// Mean per-sample loss of dec(enc(x)) vs y in eval mode.
fn pair_eval_loss(enc: &EncDec, dec: &EncDec, x: &Mat, y: &Mat) -> f64 {
    let pred = dec.forward_eval(&enc.forward_eval(x));
    per_sample_smooth_l1(&pred, y).iter().sum::<f64>() / y.rows() as f64
}

/// Train one encoder/decoder pair to map x -> y, early-stopped on the
/// validation loss, restoring the best checkpoint.
#[allow(clippy::too_many_arguments)]
fn train_pair(
    enc: &mut EncDec,
    dec: &mut EncDec,
    x_train: &Mat,
    y_train: &Mat,
    x_val: &Mat,
    y_val: &Mat,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    stage: &'static str,
    log: &mut TrainingLog,
) -> Result<(), TrainError> {
    let lens: Vec<usize> = enc
        .tensor_lens()
        .into_iter()
        .chain(dec.tensor_lens())
        .collect();
    let mut opt = Adam::new(cfg.adam, &lens);
    let mut enc_grads = EncDecGrads::zeros_like(enc);
    let mut dec_grads = EncDecGrads::zeros_like(dec);

    let mut stopper = EarlyStop::new(cfg.patience);
    let mut best: Option<(EncDec, EncDec)> = None;
    let mut epochs_run = 0;

    for epoch in 0..cfg.max_epochs {
        let batch_list = batches(x_train.rows(), cfg.batch_size, rng);
        if batch_list.is_empty() {
            return Err(TrainError::NoUsableBatch { stage });
        }
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for batch in &batch_list {
            let xb = x_train.gather_rows(batch);
            let yb = y_train.gather_rows(batch);
            let (code, enc_cache) = enc.forward_train(&xb)?;
            let (pred, dec_cache) = dec.forward_train(&code)?;
            let (loss, dpred) = batch_smooth_l1(&pred, &yb);
            if !loss.is_finite() {
                return Err(TrainError::Diverged { stage, epoch });
            }
            enc_grads.zero();
            dec_grads.zero();
            let dcode = dec.backward(&dec_cache, &dpred, &mut dec_grads);
            enc.backward(&enc_cache, &dcode, &mut enc_grads);

            let mut params: Vec<&mut [f64]> = Vec::with_capacity(12);
            params.extend(enc.tensors_mut());
            params.extend(dec.tensors_mut());
            let grads: Vec<&[f64]> = enc_grads
                .tensors()
                .into_iter()
                .chain(dec_grads.tensors())
                .collect();
            opt.step(&mut params, &grads);

            loss_sum += loss * batch.len() as f64;
            seen += batch.len();
        }
        let train_loss = loss_sum / seen as f64;
        let val_loss = pair_eval_loss(enc, dec, x_val, y_val);
        if !val_loss.is_finite() {
            return Err(TrainError::Diverged { stage, epoch });
        }
        log.records.push(EpochRecord {
            stage,
            epoch,
            train_loss,
            val_loss,
        });
        epochs_run = epoch + 1;
        if stopper.observe(epoch, val_loss) {
            best = Some((enc.clone(), dec.clone()));
        }
        if stopper.exhausted() {
            break;
        }
    }

    let (be, bd) = best.expect("at least one epoch ran");
    *enc = be;
    *dec = bd;
    log.stages.push(StageSummary {
        stage,
        epochs_run,
        best_epoch: stopper.best_epoch,
        best_val_loss: stopper.best_val,
    });
    Ok(())
}

/// Two-stage DR training: consistency pair first, then the entrainment pair
/// over the frozen stage's residual input.
pub fn train_dr(
    train: &[TripletSample],
    val: &[TripletSample],
    cfg: &TrainConfig,
) -> Result<(DrModel, TrainingLog), TrainError> {
    if train.is_empty() {
        return Err(TrainError::EmptyTrain);
    }
    if val.is_empty() {
        return Err(TrainError::EmptyVal);
    }
    let dims = cfg.dims;
    validate_samples(train, dims.feat)?;
    validate_samples(val, dims.feat)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream::INIT);
    let mut enc0 = EncDec::init(dims.feat, dims.hidden, dims.code, &mut rng);
    let mut dec0 = EncDec::init(dims.code, dims.hidden, dims.feat, &mut rng);
    let mut enc1 = EncDec::init(2 * dims.feat, dims.hidden, dims.code, &mut rng);
    let mut dec1 = EncDec::init(dims.code, dims.hidden, dims.feat, &mut rng);

    let x0_train = stack(train, |s| &s.x0);
    let x1_train = stack(train, |s| &s.x1);
    let x2_train = stack(train, |s| &s.x2);
    let x0_val = stack(val, |s| &s.x0);
    let x1_val = stack(val, |s| &s.x1);
    let x2_val = stack(val, |s| &s.x2);

    let mut log = TrainingLog::default();

    rng.set_stream(stream::STAGE1);
    train_pair(
        &mut enc0, &mut dec0, &x0_train, &x2_train, &x0_val, &x2_val, cfg, &mut rng,
        "stage1-consistency", &mut log,
    )?;

    #[cfg(debug_assertions)]
    let frozen = (enc0.clone(), dec0.clone());

    // Stage 1 is frozen now; its eval-mode prediction x̂2' is a fixed
    // function of x0, so compute it once per set.
    let x2p_train = dec0.forward_eval(&enc0.forward_eval(&x0_train));
    let x2p_val = dec0.forward_eval(&enc0.forward_eval(&x0_val));
    let in_train = x2p_train.hcat(&x1_train);
    let in_val = x2p_val.hcat(&x1_val);

    rng.set_stream(stream::STAGE2);
    train_pair(
        &mut enc1, &mut dec1, &in_train, &x2_train, &in_val, &x2_val, cfg, &mut rng,
        "stage2-entrainment", &mut log,
    )?;

    #[cfg(debug_assertions)]
    debug_assert!(
        enc0 == frozen.0 && dec0 == frozen.1,
        "stage-1 parameters must stay frozen through stage 2"
    );

    Ok((
        DrModel {
            enc0,
            dec0,
            enc1,
            dec1,
            cfg: *cfg,
        },
        log,
    ))
}

/// One adversarial forward/backward over a batch. Returns (mean response
/// loss, mean consistency loss); gradients are accumulated into the three
/// grad buffers with the consistency branch reversed and scaled by lambda
/// before it reaches the encoder.
#[allow(clippy::too_many_arguments)]
fn adv_train_batch(
    enc0: &mut EncDec,
    dec1: &mut EncDec,
    dec2: &mut EncDec,
    x1: &Mat,
    x2: &Mat,
    x0: &Mat,
    lambda: f64,
    g_enc: &mut EncDecGrads,
    g_dec1: &mut EncDecGrads,
    g_dec2: &mut EncDecGrads,
) -> Result<(f64, f64), NnError> {
    let (code, enc_cache) = enc0.forward_train(x1)?;
    let (pred2, dec1_cache) = dec1.forward_train(&code)?;
    // gradient reversal forward is the identity, so dec2 sees `code` as-is
    let (pred0, dec2_cache) = dec2.forward_train(&code)?;
    let (loss2, dpred2) = batch_smooth_l1(&pred2, x2);
    let (loss0, dpred0) = batch_smooth_l1(&pred0, x0);

    let dcode_response = dec1.backward(&dec1_cache, &dpred2, g_dec1);
    let dcode_consistency = dec2.backward(&dec2_cache, &dpred0, g_dec2);
    let mut dcode = dcode_response;
    let reversed = grad_reverse_backward(&dcode_consistency, lambda);
    for (a, b) in dcode.as_mut_slice().iter_mut().zip(reversed.as_slice()) {
        *a += b;
    }
    enc0.backward(&enc_cache, &dcode, g_enc);
    Ok((loss2, loss0))
}

/// Eval-mode total adversarial loss (response + consistency terms).
fn adv_eval_loss(m: &AdvModel, x1: &Mat, x2: &Mat, x0: &Mat) -> f64 {
    let code = m.enc0.forward_eval(x1);
    let pred2 = m.dec1.forward_eval(&code);
    let pred0 = m.dec2.forward_eval(&code);
    let n = x1.rows() as f64;
    (per_sample_smooth_l1(&pred2, x2).iter().sum::<f64>()
        + per_sample_smooth_l1(&pred0, x0).iter().sum::<f64>())
        / n
}

/// Single-phase adversarial training of the summed objective
/// mean[L(x2, DEC1(e)) + L(x0, DEC2(reverse(e)))], e = ENC0(x1).
pub fn train_adv(
    train: &[TripletSample],
    val: &[TripletSample],
    cfg: &TrainConfig,
) -> Result<(AdvModel, TrainingLog), TrainError> {
    if train.is_empty() {
        return Err(TrainError::EmptyTrain);
    }
    if val.is_empty() {
        return Err(TrainError::EmptyVal);
    }
    let dims = cfg.dims;
    validate_samples(train, dims.feat)?;
    validate_samples(val, dims.feat)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream::INIT);
    let mut model = AdvModel {
        enc0: EncDec::init(dims.feat, dims.hidden, dims.code, &mut rng),
        dec1: EncDec::init(dims.code, dims.hidden, dims.feat, &mut rng),
        dec2: EncDec::init(dims.code, dims.hidden, dims.feat, &mut rng),
        cfg: *cfg,
    };

    let x0_train = stack(train, |s| &s.x0);
    let x1_train = stack(train, |s| &s.x1);
    let x2_train = stack(train, |s| &s.x2);
    let x0_val = stack(val, |s| &s.x0);
    let x1_val = stack(val, |s| &s.x1);
    let x2_val = stack(val, |s| &s.x2);

    let stage = "adversarial";
    let lens: Vec<usize> = model
        .enc0
        .tensor_lens()
        .into_iter()
        .chain(model.dec1.tensor_lens())
        .chain(model.dec2.tensor_lens())
        .collect();
    let mut opt = Adam::new(cfg.adam, &lens);
    let mut g_enc = EncDecGrads::zeros_like(&model.enc0);
    let mut g_dec1 = EncDecGrads::zeros_like(&model.dec1);
    let mut g_dec2 = EncDecGrads::zeros_like(&model.dec2);

    let mut log = TrainingLog::default();
    let mut stopper = EarlyStop::new(cfg.patience);
    let mut best: Option<AdvModel> = None;
    let mut epochs_run = 0;

    rng.set_stream(stream::ADV);
    for epoch in 0..cfg.max_epochs {
        let batch_list = batches(x1_train.rows(), cfg.batch_size, &mut rng);
        if batch_list.is_empty() {
            return Err(TrainError::NoUsableBatch { stage });
        }
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for batch in &batch_list {
            let x1b = x1_train.gather_rows(batch);
            let x2b = x2_train.gather_rows(batch);
            let x0b = x0_train.gather_rows(batch);
            g_enc.zero();
            g_dec1.zero();
            g_dec2.zero();
            let (loss2, loss0) = adv_train_batch(
                &mut model.enc0, &mut model.dec1, &mut model.dec2,
                &x1b, &x2b, &x0b, cfg.grl_lambda,
                &mut g_enc, &mut g_dec1, &mut g_dec2,
            )?;
            let total = loss2 + loss0;
            if !total.is_finite() {
                return Err(TrainError::Diverged { stage, epoch });
            }

            let mut params: Vec<&mut [f64]> = Vec::with_capacity(18);
            params.extend(model.enc0.tensors_mut());
            params.extend(model.dec1.tensors_mut());
            params.extend(model.dec2.tensors_mut());
            let grads: Vec<&[f64]> = g_enc
                .tensors()
                .into_iter()
                .chain(g_dec1.tensors())
                .chain(g_dec2.tensors())
                .collect();
            opt.step(&mut params, &grads);

            loss_sum += total * batch.len() as f64;
            seen += batch.len();
        }
        let train_loss = loss_sum / seen as f64;
        let val_loss = adv_eval_loss(&model, &x1_val, &x2_val, &x0_val);
        if !val_loss.is_finite() {
            return Err(TrainError::Diverged { stage, epoch });
        }
        log.records.push(EpochRecord {
            stage,
            epoch,
            train_loss,
            val_loss,
        });
        epochs_run = epoch + 1;
        if stopper.observe(epoch, val_loss) {
            best = Some(model.clone());
        }
        if stopper.exhausted() {
            break;
        }
    }

    let mut model = best.expect("at least one epoch ran");
    model.cfg = *cfg;
    log.stages.push(StageSummary {
        stage,
        epochs_run,
        best_epoch: stopper.best_epoch,
        best_val_loss: stopper.best_val,
    });
    Ok((model, log))
}

/// Anything that turns triplet samples into per-sample entrainment scores.
pub trait Scorer {
    fn measure(&self) -> Measure;
    /// Per-sample scores, in input order. Pure: never mutates the model.
    fn score_batch(&self, samples: &[TripletSample]) -> Result<Vec<f64>, TrainError>;
    fn score(&self, sample: &TripletSample) -> Result<f64, TrainError> {
        Ok(self.score_batch(core::slice::from_ref(sample))?[0])
    }
}

impl DrModel {
    /// Stage-1 consistency prediction x̂2' and stage-2 prediction x̂2 for a
    /// batch, both in eval mode.
    fn predict(&self, x0: &Mat, x1: &Mat) -> (Mat, Mat) {
        let x2p = self.dec0.forward_eval(&self.enc0.forward_eval(x0));
        let input = x2p.hcat(x1);
        let x2h = self.dec1.forward_eval(&self.enc1.forward_eval(&input));
        (x2p, x2h)
    }

    /// Per-sample (stage-2 loss, stage-1 baseline loss) pairs; the DR score
    /// is their difference, and the baseline term is the consistency-only
    /// loss scale used to normalize deconfounding checks.
    pub fn loss_components(
        &self,
        samples: &[TripletSample],
    ) -> Result<(Vec<f64>, Vec<f64>), TrainError> {
        if samples.is_empty() {
            return Err(TrainError::EmptySamples);
        }
        validate_samples(samples, self.cfg.dims.feat)?;
        let x0 = stack(samples, |s| &s.x0);
        let x1 = stack(samples, |s| &s.x1);
        let x2 = stack(samples, |s| &s.x2);
        let (x2p, x2h) = self.predict(&x0, &x1);
        Ok((
            per_sample_smooth_l1(&x2h, &x2),
            per_sample_smooth_l1(&x2p, &x2),
        ))
    }
}

impl Scorer for DrModel {
    fn measure(&self) -> Measure {
        Measure::Dr
    }

    fn score_batch(&self, samples: &[TripletSample]) -> Result<Vec<f64>, TrainError> {
        let (with_prompt, baseline) = self.loss_components(samples)?;
        Ok(with_prompt
            .iter()
            .zip(&baseline)
            .map(|(a, b)| a - b)
            .collect())
    }
}

impl AdvModel {
    /// Per-sample (response loss, consistency loss) pairs; the measure is
    /// their difference.
    pub fn loss_components(
        &self,
        samples: &[TripletSample],
    ) -> Result<(Vec<f64>, Vec<f64>), TrainError> {
        if samples.is_empty() {
            return Err(TrainError::EmptySamples);
        }
        validate_samples(samples, self.cfg.dims.feat)?;
        let x0 = stack(samples, |s| &s.x0);
        let x1 = stack(samples, |s| &s.x1);
        let x2 = stack(samples, |s| &s.x2);
        let code = self.enc0.forward_eval(&x1);
        let pred2 = self.dec1.forward_eval(&code);
        let pred0 = self.dec2.forward_eval(&code);
        Ok((
            per_sample_smooth_l1(&pred2, &x2),
            per_sample_smooth_l1(&pred0, &x0),
        ))
    }
}

impl Scorer for AdvModel {
    fn measure(&self) -> Measure {
        Measure::Adv
    }

    fn score_batch(&self, samples: &[TripletSample]) -> Result<Vec<f64>, TrainError> {
        let (response, consistency) = self.loss_components(samples)?;
        Ok(response
            .iter()
            .zip(&consistency)
            .map(|(a, b)| a - b)
            .collect())
    }
}

/// Mean per-sample score over a session's samples.
pub fn session_score<S: Scorer + ?Sized>(
    model: &S,
    samples: &[TripletSample],
) -> Result<f64, TrainError> {
    let scores = model.score_batch(samples)?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Finite-difference check of the adversarial gradient routing: with the
/// consistency branch reversed, the encoder's analytic gradient must match
/// the finite difference of L(x2) - lambda * L(x0), while both decoders
/// match the plain total L(x2) + L(x0).
pub fn grad_check_adversarial(seed: u64, tolerance: f64) -> GradReport {
    use crate::nn::gradcheck::FD_H;
    use rand::Rng;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = ModelDims {
        feat: 6,
        hidden: 5,
        code: 3,
    };
    let lambda = 1.0;
    let batch = 4;
    let mut enc0 = EncDec::init(dims.feat, dims.hidden, dims.code, &mut rng);
    let mut dec1 = EncDec::init(dims.code, dims.hidden, dims.feat, &mut rng);
    let mut dec2 = EncDec::init(dims.code, dims.hidden, dims.feat, &mut rng);

    let fill = |m: &mut Mat, rng: &mut ChaCha8Rng| {
        for v in m.as_mut_slice() {
            *v = (rng.gen::<f64>() * 2.0 - 1.0) * 2.0;
        }
    };
    let mut x1 = Mat::zeros(batch, dims.feat);
    let mut x2 = Mat::zeros(batch, dims.feat);
    let mut x0 = Mat::zeros(batch, dims.feat);

    let losses = |enc0: &EncDec, dec1: &EncDec, dec2: &EncDec, x1: &Mat, x2: &Mat, x0: &Mat| {
        let (code, _) = enc0.clone().forward_train(x1).unwrap();
        let (p2, _) = dec1.clone().forward_train(&code).unwrap();
        let (p0, _) = dec2.clone().forward_train(&code).unwrap();
        let l2 = batch_smooth_l1(&p2, x2).0;
        let l0 = batch_smooth_l1(&p0, x0).0;
        (l2, l0, p2, p0, code)
    };

    loop {
        fill(&mut x1, &mut rng);
        fill(&mut x2, &mut rng);
        fill(&mut x0, &mut rng);
        let (_, _, p2, p0, code) = losses(&enc0, &dec1, &dec2, &x1, &x2, &x0);
        let h_enc = enc0.bn.clone().forward_train(&enc0.l1.forward(&x1)).unwrap().0;
        let h_d1 = dec1.bn.clone().forward_train(&dec1.l1.forward(&code)).unwrap().0;
        let h_d2 = dec2.bn.clone().forward_train(&dec2.l1.forward(&code)).unwrap().0;
        let near_relu = [&h_enc, &h_d1, &h_d2]
            .iter()
            .any(|m| m.as_slice().iter().any(|v| v.abs() < 1e-3));
        let near_kink = |p: &Mat, t: &Mat| {
            p.as_slice()
                .iter()
                .zip(t.as_slice())
                .any(|(a, b)| ((a - b).abs() - 1.0).abs() < 1e-3)
        };
        if !near_relu && !near_kink(&p2, &x2) && !near_kink(&p0, &x0) {
            break;
        }
    }

    let mut g_enc = EncDecGrads::zeros_like(&enc0);
    let mut g_dec1 = EncDecGrads::zeros_like(&dec1);
    let mut g_dec2 = EncDecGrads::zeros_like(&dec2);
    adv_train_batch(
        &mut enc0.clone(), &mut dec1.clone(), &mut dec2.clone(),
        &x1, &x2, &x0, lambda,
        &mut g_enc, &mut g_dec1, &mut g_dec2,
    )
    .unwrap();

    let mut errors = Vec::new();
    let mut check_block = |which: usize| {
        let lens = match which {
            0 => enc0.tensor_lens(),
            1 => dec1.tensor_lens(),
            _ => dec2.tensor_lens(),
        };
        for slot in 0..6 {
            for k in 0..lens[slot] {
                let analytic = match which {
                    0 => g_enc.tensors()[slot][k],
                    1 => g_dec1.tensors()[slot][k],
                    _ => g_dec2.tensors()[slot][k],
                };
                let objective = |enc0: &EncDec, dec1: &EncDec, dec2: &EncDec| -> f64 {
                    let (l2, l0, ..) = losses(enc0, dec1, dec2, &x1, &x2, &x0);
                    if which == 0 {
                        l2 - lambda * l0
                    } else {
                        l2 + l0
                    }
                };
                let entry = crate::nn::gradcheck::encdec_entry;
                let block = match which {
                    0 => &mut enc0,
                    1 => &mut dec1,
                    _ => &mut dec2,
                };
                let orig = *entry(block, slot, k);
                *entry(block, slot, k) = orig + FD_H;
                let lp = objective(&enc0, &dec1, &dec2);
                let block = match which {
                    0 => &mut enc0,
                    1 => &mut dec1,
                    _ => &mut dec2,
                };
                *entry(block, slot, k) = orig - FD_H;
                let lm = objective(&enc0, &dec1, &dec2);
                let block = match which {
                    0 => &mut enc0,
                    1 => &mut dec1,
                    _ => &mut dec2,
                };
                *entry(block, slot, k) = orig;
                let numeric = (lp - lm) / (2.0 * FD_H);
                let diff = (analytic - numeric).abs();
                let err = if diff < 1e-8 {
                    0.0
                } else {
                    diff / analytic.abs().max(numeric.abs()).max(1e-12)
                };
                errors.push(err);
            }
        }
    };
    check_block(0);
    check_block(1);
    check_block(2);

    let max_rel_error = errors.iter().fold(0.0f64, |a, &b| a.max(b));
    GradReport {
        component: "adversarial-routing".into(),
        checked: errors.len(),
        max_rel_error,
        tolerance,
        pass: max_rel_error < tolerance,
    }
}
