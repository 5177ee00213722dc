//! Per-speaker z-normalization of LLD frames and the six-functional summary
//! that turns each qualifying IPU into one fixed-width feature vector.
//!
//! Normalization statistics pool the frames of a speaker's turn-initial and
//! turn-final IPUs within one session; turn-medial IPUs neither contribute
//! to the statistics nor receive feature vectors.

use alloc::string::String;
use alloc::vec::Vec;

use crate::corpus::{Corpus, CorpusError, IpuPayload, RawIpu, Session};
use crate::mat::Mat;
use crate::math;

/// Number of functionals computed per LLD channel, in the fixed order
/// [mean, median, std, p1, p99, p99 - p1].
pub const FUNCTIONALS_PER_LLD: usize = 6;

/// Per-speaker, per-session normalization statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerStats {
    pub session_id: String,
    pub speaker: String,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Mean and population std per LLD over the pooled frames of the speaker's
/// turn-initial and turn-final IPUs.
pub fn speaker_stats(session: &Session, speaker: &str) -> Result<SpeakerStats, CorpusError> {
    let speaker_idx = session
        .speaker_index(speaker)
        .ok_or_else(|| CorpusError::UnknownSpeaker {
            session_id: session.id().into(),
            speaker: speaker.into(),
        })?;

    let mut width = 0;
    let mut count = 0usize;
    let mut sum: Vec<f64> = Vec::new();
    let mut sum_sq: Vec<f64> = Vec::new();
    for ipu in session.ipus() {
        if ipu.speaker != speaker_idx || !ipu.position.qualifies() {
            continue;
        }
        let frames = match &ipu.payload {
            IpuPayload::Frames(m) => m,
            IpuPayload::Features(_) => {
                return Err(CorpusError::MixedPayload {
                    session_id: session.id().into(),
                })
            }
        };
        if sum.is_empty() {
            width = frames.cols();
            sum = alloc::vec![0.0; width];
            sum_sq = alloc::vec![0.0; width];
        }
        for r in 0..frames.rows() {
            let row = frames.row(r);
            for (c, &x) in row.iter().enumerate() {
                sum[c] += x;
                sum_sq[c] += x * x;
            }
        }
        count += frames.rows();
    }
    if count == 0 {
        return Err(CorpusError::NoQualifyingFrames {
            session_id: session.id().into(),
            speaker: speaker.into(),
        });
    }

    let n = count as f64;
    let mu: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let sigma: Vec<f64> = (0..width)
        .map(|c| {
            let var = (sum_sq[c] / n - mu[c] * mu[c]).max(0.0);
            math::sqrt(var)
        })
        .collect();
    Ok(SpeakerStats {
        session_id: session.id().into(),
        speaker: speaker.into(),
        mu,
        sigma,
    })
}

/// Elementwise (x - mu) / sigma; channels with sigma = 0 map to 0.
pub fn zscore(frames: &Mat, stats: &SpeakerStats) -> Mat {
    let mut out = Mat::zeros(frames.rows(), frames.cols());
    for r in 0..frames.rows() {
        let src = frames.row(r);
        let dst = out.row_mut(r);
        for c in 0..src.len() {
            if stats.sigma[c] > 0.0 {
                dst[c] = (src[c] - stats.mu[c]) / stats.sigma[c];
            }
        }
    }
    out
}

/// Percentile by linear interpolation between closest ranks: the p-th
/// percentile sits at zero-indexed position p/100 * (N-1) in sorted order.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = math::floor(pos) as usize;
    let hi = math::ceil(pos) as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Summarize one IPU's (normalized) frames: per LLD column, the six
/// functionals [mean, median, std, p1, p99, p99 - p1], LLD-major so that
/// feature index f(lld i, functional j) = 6i + j.
pub fn apply_functionals(frames: &Mat) -> Result<Vec<f64>, CorpusError> {
    if frames.rows() == 0 {
        return Err(CorpusError::EmptyFrames {
            session_id: String::new(),
            index: 0,
        });
    }
    let n = frames.rows() as f64;
    let mut out = Vec::with_capacity(frames.cols() * FUNCTIONALS_PER_LLD);
    let mut column = alloc::vec![0.0; frames.rows()];
    for c in 0..frames.cols() {
        for r in 0..frames.rows() {
            column[r] = frames.get(r, c);
        }
        let mean = column.iter().sum::<f64>() / n;
        let var = column.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        column.sort_by(|a, b| a.partial_cmp(b).expect("non-finite frame value"));
        let p1 = percentile(&column, 1.0);
        let p50 = percentile(&column, 50.0);
        let p99 = percentile(&column, 99.0);
        out.extend_from_slice(&[mean, p50, math::sqrt(var), p1, p99, p99 - p1]);
    }
    Ok(out)
}

/// Featurize one session: z-normalize each turn-initial/turn-final IPU with
/// its speaker's statistics and summarize it with the six functionals.
/// Turn-medial IPUs are dropped. Already-featurized sessions pass through
/// unchanged.
pub fn featurize_session(session: &Session) -> Result<Session, CorpusError> {
    if session.has_feature_payloads() {
        return Ok(session.clone());
    }

    let stats: Vec<SpeakerStats> = session
        .speakers()
        .iter()
        .map(|s| speaker_stats(session, s))
        .collect::<Result<_, _>>()?;

    let mut raws = Vec::new();
    for ipu in session.ipus() {
        if !ipu.position.qualifies() {
            continue;
        }
        let frames = match &ipu.payload {
            IpuPayload::Frames(m) => m,
            IpuPayload::Features(_) => unreachable!("mixed payloads rejected at construction"),
        };
        if frames.rows() == 0 {
            return Err(CorpusError::EmptyFrames {
                session_id: session.id().into(),
                index: ipu.index,
            });
        }
        let z = zscore(frames, &stats[ipu.speaker as usize]);
        let features = apply_functionals(&z)?;
        raws.push(RawIpu {
            speaker: session.speakers()[ipu.speaker as usize].clone(),
            index: ipu.index,
            task_id: ipu.task_id.clone(),
            payload: IpuPayload::Features(features),
        });
    }
    Session::new(session.id().into(), raws)
}

/// Featurize every session of a corpus.
pub fn featurize_corpus(corpus: &Corpus) -> Result<Corpus, CorpusError> {
    let sessions = corpus
        .sessions()
        .iter()
        .map(featurize_session)
        .collect::<Result<Vec<_>, _>>()?;
    Corpus::new(sessions)
}
