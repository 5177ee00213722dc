//! Session data model: inter-pausal units, turns, triplet samples, splits.
//!
//! A session is the recording of one two-speaker conversation. Its IPUs are
//! kept sorted by their index in the session; turns are maximal runs of
//! consecutive same-speaker IPUs and are derived once at construction. The
//! first IPU of a run is turn-initial, the last is turn-final, and a
//! single-IPU run is both at once.

use alloc::string::String;
use alloc::vec::Vec;

use crate::mat::Mat;

/// Per-IPU payload: either raw per-frame low-level descriptors (frames x
/// LLDs) or the finished functional feature vector.
#[derive(Debug, Clone, PartialEq)]
pub enum IpuPayload {
    Frames(Mat),
    Features(Vec<f64>),
}

impl IpuPayload {
    pub fn width(&self) -> usize {
        match self {
            IpuPayload::Frames(m) => m.cols(),
            IpuPayload::Features(v) => v.len(),
        }
    }

    pub fn is_features(&self) -> bool {
        matches!(self, IpuPayload::Features(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TurnPosition {
    Initial,
    Medial,
    Final,
    /// Single-IPU turn: simultaneously turn-initial and turn-final.
    Both,
}

impl TurnPosition {
    pub fn is_turn_initial(self) -> bool {
        matches!(self, TurnPosition::Initial | TurnPosition::Both)
    }

    pub fn is_turn_final(self) -> bool {
        matches!(self, TurnPosition::Final | TurnPosition::Both)
    }

    /// Turn-initial or turn-final; only these IPUs enter normalization stats
    /// and receive feature vectors.
    pub fn qualifies(self) -> bool {
        self.is_turn_initial() || self.is_turn_final()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ipu {
    /// Index into the session's speaker table (0 or 1).
    pub speaker: u8,
    /// Position of this IPU in the session; strictly increasing, not
    /// necessarily contiguous.
    pub index: u64,
    pub task_id: Option<String>,
    pub payload: IpuPayload,
    pub turn_index: usize,
    pub position: TurnPosition,
}

/// Maximal run of consecutive same-speaker IPUs, as slot range into
/// `Session::ipus`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Turn {
    pub speaker: u8,
    pub start: usize,
    pub end: usize,
}

/// Input record for building a session, before validation and segmentation.
#[derive(Debug, Clone)]
pub struct RawIpu {
    pub speaker: String,
    pub index: u64,
    pub task_id: Option<String>,
    pub payload: IpuPayload,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    id: String,
    speakers: Vec<String>,
    ipus: Vec<Ipu>,
    turns: Vec<Turn>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    sessions: Vec<Session>,
}

/// One turn exchange: the partner's turn-final IPU (`x1`), the responder's
/// immediately following turn-initial IPU (`x2`), and the responder's very
/// first IPU in the session (`x0`).
#[derive(Debug, Clone, PartialEq)]
pub struct TripletSample {
    pub session_id: String,
    pub task_id: Option<String>,
    pub responder: String,
    pub x0: Vec<f64>,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub x0_index: u64,
    pub x1_index: u64,
    pub x2_index: u64,
}

/// Result of triplet construction over one session.
#[derive(Debug, Clone, Default)]
pub struct TripletBatch {
    pub samples: Vec<TripletSample>,
    /// Number of turn exchanges seen.
    pub exchanges: usize,
    /// Exchanges dropped because `x2` was the responder's very first IPU
    /// (the prediction target would equal its own confound).
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusSplit {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

/// The three crowd-annotated social variables: perceived encouragement,
/// liking, and dominance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SocialVar {
    Enc,
    Lik,
    Dom,
}

impl SocialVar {
    pub const ALL: [SocialVar; 3] = [SocialVar::Enc, SocialVar::Lik, SocialVar::Dom];

    pub fn as_str(self) -> &'static str {
        match self {
            SocialVar::Enc => "enc",
            SocialVar::Lik => "lik",
            SocialVar::Dom => "dom",
        }
    }

    pub fn parse(s: &str) -> Option<SocialVar> {
        match s {
            "enc" => Some(SocialVar::Enc),
            "lik" => Some(SocialVar::Lik),
            "dom" => Some(SocialVar::Dom),
            _ => None,
        }
    }
}

/// One annotation row: how many of the five annotators perceived the
/// variable for this speaker in this task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Annotation {
    pub session_id: String,
    pub task_id: String,
    pub speaker: String,
    pub variable: SocialVar,
    pub count: u8,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorpusError {
    #[error("no sessions")]
    Empty,
    #[error("session {session_id}: no IPUs")]
    EmptySession { session_id: String },
    #[error("session {session_id}: found {found} speakers, expected exactly two")]
    SpeakerCount { session_id: String, found: usize },
    #[error("session {session_id}: duplicate IPU index {index}")]
    DuplicateIndex { session_id: String, index: u64 },
    #[error("session {session_id}: mixed frame and feature payloads")]
    MixedPayload { session_id: String },
    #[error("session {session_id}: payload width {found} does not match {expected}")]
    InconsistentWidth {
        session_id: String,
        expected: usize,
        found: usize,
    },
    #[error("session {session_id}: IPU {index} has no feature vector")]
    MissingFeatures { session_id: String, index: u64 },
    #[error("corpus has {found} sessions, need at least 10 to split")]
    TooFewSessions { found: usize },
    #[error("unknown session {session_id}")]
    UnknownSession { session_id: String },
    #[error("session {session_id}: speaker {speaker} not present")]
    UnknownSpeaker {
        session_id: String,
        speaker: String,
    },
    #[error("session {session_id}: speaker {speaker} has no turn-initial or turn-final frames")]
    NoQualifyingFrames {
        session_id: String,
        speaker: String,
    },
    #[error("session {session_id}: empty frame matrix at IPU {index}")]
    EmptyFrames { session_id: String, index: u64 },
}

impl Session {
    /// Validate raw IPUs, sort them by index, and segment turns.
    ///
    /// Sessions with a single speaker are representable (turn segmentation
    /// is well defined for them); corpus-level loading separately enforces
    /// the exactly-two-speakers rule.
    pub fn new(id: String, raw: Vec<RawIpu>) -> Result<Session, CorpusError> {
        if raw.is_empty() {
            return Err(CorpusError::EmptySession { session_id: id });
        }
        let mut raw = raw;
        raw.sort_by_key(|r| r.index);
        for w in raw.windows(2) {
            if w[0].index == w[1].index {
                return Err(CorpusError::DuplicateIndex {
                    session_id: id,
                    index: w[0].index,
                });
            }
        }

        let mut speakers: Vec<String> = Vec::new();
        let features = raw[0].payload.is_features();
        let width = raw[0].payload.width();
        let mut ipus = Vec::with_capacity(raw.len());
        for r in raw {
            if r.payload.is_features() != features {
                return Err(CorpusError::MixedPayload { session_id: id });
            }
            if r.payload.width() != width {
                return Err(CorpusError::InconsistentWidth {
                    session_id: id,
                    expected: width,
                    found: r.payload.width(),
                });
            }
            let speaker = match speakers.iter().position(|s| *s == r.speaker) {
                Some(i) => i as u8,
                None => {
                    speakers.push(r.speaker);
                    (speakers.len() - 1) as u8
                }
            };
            ipus.push(Ipu {
                speaker,
                index: r.index,
                task_id: r.task_id,
                payload: r.payload,
                turn_index: 0,
                position: TurnPosition::Both,
            });
        }
        if speakers.len() > 2 {
            return Err(CorpusError::SpeakerCount {
                session_id: id,
                found: speakers.len(),
            });
        }

        let turns = segment_turns(&mut ipus);
        Ok(Session {
            id,
            speakers,
            ipus,
            turns,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn speakers(&self) -> &[String] {
        &self.speakers
    }

    pub fn ipus(&self) -> &[Ipu] {
        &self.ipus
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    pub fn speaker_index(&self, name: &str) -> Option<u8> {
        self.speakers.iter().position(|s| s == name).map(|i| i as u8)
    }

    pub fn has_feature_payloads(&self) -> bool {
        self.ipus.iter().all(|i| i.payload.is_features())
    }

    /// Feature vector of the IPU at the given slot, or an error if the
    /// session has not been featurized.
    fn features_at(&self, slot: usize) -> Result<&[f64], CorpusError> {
        match &self.ipus[slot].payload {
            IpuPayload::Features(v) => Ok(v),
            IpuPayload::Frames(_) => Err(CorpusError::MissingFeatures {
                session_id: self.id.clone(),
                index: self.ipus[slot].index,
            }),
        }
    }

    /// Construct one sample per usable turn exchange.
    ///
    /// An exchange whose `x2` is the responder's very first IPU is dropped:
    /// there the confound `x0` and the target `x2` would be the same vector
    /// and the sample would carry its own label.
    pub fn build_triplets(&self) -> Result<TripletBatch, CorpusError> {
        let mut first_slot = [usize::MAX; 2];
        for (slot, ipu) in self.ipus.iter().enumerate() {
            let s = ipu.speaker as usize;
            if first_slot[s] == usize::MAX {
                first_slot[s] = slot;
            }
        }

        let mut batch = TripletBatch::default();
        for pair in self.turns.windows(2) {
            let (prev, next) = (pair[0], pair[1]);
            batch.exchanges += 1;
            let x1_slot = prev.end - 1;
            let x2_slot = next.start;
            let responder = next.speaker as usize;
            let x0_slot = first_slot[responder];
            if x0_slot == x2_slot {
                batch.excluded += 1;
                continue;
            }
            let x2_ipu = &self.ipus[x2_slot];
            batch.samples.push(TripletSample {
                session_id: self.id.clone(),
                task_id: x2_ipu.task_id.clone(),
                responder: self.speakers[responder].clone(),
                x0: self.features_at(x0_slot)?.into(),
                x1: self.features_at(x1_slot)?.into(),
                x2: self.features_at(x2_slot)?.into(),
                x0_index: self.ipus[x0_slot].index,
                x1_index: self.ipus[x1_slot].index,
                x2_index: x2_ipu.index,
            });
        }
        Ok(batch)
    }
}

/// Assign turn indices and positions over IPUs already sorted by index;
/// returns the turn table.
fn segment_turns(ipus: &mut [Ipu]) -> Vec<Turn> {
    let mut turns = Vec::new();
    let mut start = 0;
    while start < ipus.len() {
        let speaker = ipus[start].speaker;
        let mut end = start + 1;
        while end < ipus.len() && ipus[end].speaker == speaker {
            end += 1;
        }
        let turn_index = turns.len();
        for (offset, ipu) in ipus[start..end].iter_mut().enumerate() {
            ipu.turn_index = turn_index;
            ipu.position = match (offset == 0, offset == end - start - 1) {
                (true, true) => TurnPosition::Both,
                (true, false) => TurnPosition::Initial,
                (false, true) => TurnPosition::Final,
                (false, false) => TurnPosition::Medial,
            };
        }
        turns.push(Turn {
            speaker,
            start,
            end,
        });
        start = end;
    }
    turns
}

impl Corpus {
    /// Wrap validated sessions; enforces the two-speaker rule and rejects an
    /// empty corpus. Session order is preserved (it defines the split).
    pub fn new(sessions: Vec<Session>) -> Result<Corpus, CorpusError> {
        if sessions.is_empty() {
            return Err(CorpusError::Empty);
        }
        for s in &sessions {
            if s.speakers.len() != 2 {
                return Err(CorpusError::SpeakerCount {
                    session_id: s.id.clone(),
                    found: s.speakers.len(),
                });
            }
        }
        Ok(Corpus { sessions })
    }

    pub fn sessions(&self) -> &[Session] {
        &self.sessions
    }

    pub fn session(&self, id: &str) -> Option<&Session> {
        self.sessions.iter().find(|s| s.id == id)
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    /// Contiguous 80/10/10 split in corpus order: first ⌊0.8n⌋ sessions for
    /// training, next ⌊0.1n⌋ for validation, remainder for testing.
    pub fn split(&self) -> Result<CorpusSplit, CorpusError> {
        let n = self.sessions.len();
        if n < 10 {
            return Err(CorpusError::TooFewSessions { found: n });
        }
        let n_train = n * 8 / 10;
        let n_val = n / 10;
        let ids = |range: core::ops::Range<usize>| {
            self.sessions[range]
                .iter()
                .map(|s| s.id.clone())
                .collect::<Vec<_>>()
        };
        Ok(CorpusSplit {
            train: ids(0..n_train),
            validation: ids(n_train..n_train + n_val),
            test: ids(n_train + n_val..n),
        })
    }

    /// Triplet samples for every listed session, in session order.
    pub fn triplets_for(&self, ids: &[String]) -> Result<Vec<TripletSample>, CorpusError> {
        let mut out = Vec::new();
        for id in ids {
            let session = self.session(id).ok_or_else(|| CorpusError::UnknownSession {
                session_id: id.clone(),
            })?;
            out.extend(session.build_triplets()?.samples);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::borrow::ToOwned;
    use alloc::{format, vec};

    fn feat_ipu(speaker: &str, index: u64, tag: f64) -> RawIpu {
        RawIpu {
            speaker: speaker.to_owned(),
            index,
            task_id: None,
            payload: IpuPayload::Features(vec![tag, tag + 0.5]),
        }
    }

    fn session_from(speakers: &[&str]) -> Session {
        let raw = speakers
            .iter()
            .enumerate()
            .map(|(i, s)| feat_ipu(s, i as u64, i as f64))
            .collect();
        Session::new("s".to_owned(), raw).unwrap()
    }

    #[test]
    fn segments_runs_into_turns() {
        let s = session_from(&["A", "A", "B", "A"]);
        let turns = s.turns();
        assert_eq!(turns.len(), 3);
        assert_eq!((turns[0].start, turns[0].end), (0, 2));
        assert_eq!(s.ipus()[0].position, TurnPosition::Initial);
        assert_eq!(s.ipus()[1].position, TurnPosition::Final);
        assert_eq!(s.ipus()[2].position, TurnPosition::Both);
        assert_eq!(s.ipus()[3].position, TurnPosition::Both);
        assert_eq!(s.ipus()[3].turn_index, 2);
    }

    #[test]
    fn single_ipu_session_is_one_turn_both() {
        let s = session_from(&["A"]);
        assert_eq!(s.turns().len(), 1);
        assert_eq!(s.ipus()[0].position, TurnPosition::Both);
    }

    #[test]
    fn alternating_speakers_give_single_ipu_turns() {
        let s = session_from(&["A", "B", "A", "B"]);
        assert_eq!(s.turns().len(), 4);
        assert!(s.ipus().iter().all(|i| i.position == TurnPosition::Both));
    }

    #[test]
    fn triplets_exclude_responders_first_ipu() {
        // Turns A:[i1], B:[i2], A:[i3]: the i1->i2 exchange has x2 = B's
        // first IPU and is dropped; the i2->i3 exchange is kept.
        let s = session_from(&["A", "B", "A"]);
        let batch = s.build_triplets().unwrap();
        assert_eq!(batch.exchanges, 2);
        assert_eq!(batch.excluded, 1);
        assert_eq!(batch.samples.len(), 1);
        let sample = &batch.samples[0];
        assert_eq!(sample.responder, "A");
        assert_eq!(sample.x0_index, 0);
        assert_eq!(sample.x1_index, 1);
        assert_eq!(sample.x2_index, 2);
    }

    #[test]
    fn triplets_on_single_turn_session_are_empty() {
        let s = session_from(&["A", "A"]);
        let batch = s.build_triplets().unwrap();
        assert_eq!(batch.exchanges, 0);
        assert!(batch.samples.is_empty());
    }

    #[test]
    fn fourteen_alternating_turns_yield_twelve_samples() {
        // 13 exchanges; only the exchange into the second speaker's first
        // turn has x0 = x2, so exactly one is excluded.
        let speakers: Vec<&str> = (0..14).map(|i| if i % 2 == 0 { "A" } else { "B" }).collect();
        let s = session_from(&speakers);
        let batch = s.build_triplets().unwrap();
        assert_eq!(batch.exchanges, 13);
        assert_eq!(batch.excluded, 1);
        assert_eq!(batch.samples.len(), 12);
        assert_eq!(batch.samples.len(), batch.exchanges - batch.excluded);
    }

    #[test]
    fn duplicate_index_rejected() {
        let raw = vec![feat_ipu("A", 3, 0.0), feat_ipu("B", 3, 1.0)];
        let err = Session::new("s".to_owned(), raw).unwrap_err();
        assert_eq!(
            err,
            CorpusError::DuplicateIndex {
                session_id: "s".to_owned(),
                index: 3
            }
        );
    }

    #[test]
    fn ipus_sorted_by_index() {
        // B's IPU has the lower index, so after sorting B speaks first and
        // gets speaker id 0 (ids are assigned in temporal encounter order).
        let raw = vec![feat_ipu("A", 5, 1.0), feat_ipu("B", 2, 0.0)];
        let s = Session::new("s".to_owned(), raw).unwrap();
        assert_eq!(s.ipus()[0].index, 2);
        assert_eq!(s.speakers(), &["B".to_owned(), "A".to_owned()]);
        assert_eq!(s.ipus()[0].speaker, 0);
    }

    #[test]
    fn corpus_rejects_three_speakers() {
        let raw = vec![
            feat_ipu("A", 0, 0.0),
            feat_ipu("B", 1, 1.0),
            feat_ipu("C", 2, 2.0),
        ];
        let err = Session::new("s".to_owned(), raw).unwrap_err();
        assert!(matches!(err, CorpusError::SpeakerCount { found: 3, .. }));
    }

    #[test]
    fn corpus_rejects_single_speaker_session() {
        let s = session_from(&["A", "A"]);
        let err = Corpus::new(vec![s]).unwrap_err();
        assert!(matches!(err, CorpusError::SpeakerCount { found: 1, .. }));
    }

    #[test]
    fn mixed_payload_rejected() {
        let raw = vec![
            feat_ipu("A", 0, 0.0),
            RawIpu {
                speaker: "B".to_owned(),
                index: 1,
                task_id: None,
                payload: IpuPayload::Frames(Mat::zeros(2, 2)),
            },
        ];
        let err = Session::new("s".to_owned(), raw).unwrap_err();
        assert!(matches!(err, CorpusError::MixedPayload { .. }));
    }

    fn n_session_corpus(n: usize) -> Corpus {
        let sessions = (0..n)
            .map(|i| {
                let raw = vec![feat_ipu("A", 0, 0.0), feat_ipu("B", 1, 1.0)];
                Session::new(format!("s{i:03}"), raw).unwrap()
            })
            .collect();
        Corpus::new(sessions).unwrap()
    }

    #[test]
    fn split_10_sessions_is_8_1_1() {
        let split = n_session_corpus(10).split().unwrap();
        assert_eq!(split.train.len(), 8);
        assert_eq!(split.validation.len(), 1);
        assert_eq!(split.test.len(), 1);
        assert_eq!(split.train[0], "s000");
        assert_eq!(split.test[0], "s009");
    }

    #[test]
    fn split_25_sessions_is_20_2_3() {
        let split = n_session_corpus(25).split().unwrap();
        assert_eq!(
            (split.train.len(), split.validation.len(), split.test.len()),
            (20, 2, 3)
        );
    }

    #[test]
    fn split_9_sessions_errors() {
        let err = n_session_corpus(9).split().unwrap_err();
        assert_eq!(err, CorpusError::TooFewSessions { found: 9 });
    }

    #[test]
    fn triplet_construction_is_deterministic() {
        let s = session_from(&["A", "B", "A", "B", "A"]);
        let a = s.build_triplets().unwrap();
        let b = s.build_triplets().unwrap();
        assert_eq!(a.samples, b.samples);
    }
}
