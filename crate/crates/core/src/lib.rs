//! Measuring vocal entrainment in dyadic conversations while controlling for
//! speaker consistency.
//!
//! A conversation is ingested as sessions of inter-pausal units (IPUs), turned
//! into `(x0, x1, x2)` triplets — the responder's first IPU, the partner's
//! turn-final IPU, and the responder's following turn-initial IPU — and scored
//! by two trained measures:
//!
//! * **DR**: a two-stage residualizing predictor. Stage one predicts `x2` from
//!   `x0` alone (consistency); stage two is trained on top of the frozen first
//!   stage with `x1` added. The measure is the loss improvement of the second
//!   prediction over the first, so lower values mean more entrainment.
//! * **A**: a shared encoder over `x1` feeding two decoders, one predicting
//!   `x2` and one predicting `x0` behind a gradient reversal layer, so the
//!   encoding is pushed to be informative about the response but not about the
//!   responder's baseline style. The measure is the difference of the two
//!   decoder losses.
//!
//! The crate is `no_std`-compatible (with `alloc`); everything that touches
//! files, processes, or threads lives in the companion CLI crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod corpus;
pub mod eval;
pub mod featurize;
pub mod mat;
mod math;
pub mod measures;
pub mod nn;
pub mod stats;
pub mod synth;

pub use corpus::{Annotation, Corpus, CorpusError, CorpusSplit, Ipu, Session, SocialVar, TripletSample};
pub use measures::{AdvModel, DrModel, Measure, ModelDims, Scorer, TrainConfig, TrainError};
pub use synth::SynthParams;
