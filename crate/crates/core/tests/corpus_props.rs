//! Property tests for turn segmentation, triplet construction and corpus
//! splitting over randomly generated speaker sequences.

use entrain_core::corpus::{Corpus, IpuPayload, RawIpu, Session, TurnPosition};
use proptest::prelude::*;

/// Random dyadic speaker sequence with both speakers present.
fn speaker_seq() -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..2, 2..40).prop_filter("need both speakers", |seq| {
        seq.contains(&0) && seq.contains(&1)
    })
}

/// Payload encodes (index, speaker) so samples can be traced back.
fn session_from_seq(seq: &[u8]) -> Session {
    let raws: Vec<RawIpu> = seq
        .iter()
        .enumerate()
        .map(|(i, &spk)| RawIpu {
            speaker: if spk == 0 { "A".into() } else { "B".into() },
            index: i as u64,
            task_id: None,
            payload: IpuPayload::Features(vec![i as f64, spk as f64]),
        })
        .collect();
    Session::new("s".into(), raws).expect("two-speaker session")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn turns_are_maximal_same_speaker_runs(seq in speaker_seq()) {
        let session = session_from_seq(&seq);
        let turns = session.turns();
        // turns tile the IPU list and alternate speakers
        let mut covered = 0usize;
        for (t, turn) in turns.iter().enumerate() {
            prop_assert_eq!(turn.start, covered);
            prop_assert!(turn.end > turn.start);
            let spk = session.ipus()[turn.start].speaker;
            for i in turn.start..turn.end {
                prop_assert_eq!(session.ipus()[i].speaker, spk);
                prop_assert_eq!(session.ipus()[i].turn_index as usize, t);
            }
            if t > 0 {
                let prev = session.ipus()[turns[t - 1].start].speaker;
                prop_assert_ne!(prev, spk, "adjacent turns must switch speaker");
            }
            covered = turn.end;
        }
        prop_assert_eq!(covered, session.ipus().len());

        // positions: first IPU of a run initial, last final, singleton both
        for turn in turns {
            let len = turn.end - turn.start;
            for i in turn.start..turn.end {
                let pos = session.ipus()[i].position;
                let want = if len == 1 {
                    TurnPosition::Both
                } else if i == turn.start {
                    TurnPosition::Initial
                } else if i == turn.end - 1 {
                    TurnPosition::Final
                } else {
                    TurnPosition::Medial
                };
                prop_assert_eq!(pos, want);
            }
        }
    }

    #[test]
    fn triplet_invariants_hold(seq in speaker_seq()) {
        let session = session_from_seq(&seq);
        let batch = session.build_triplets().unwrap();

        // exchange bookkeeping
        prop_assert_eq!(batch.exchanges, session.turns().len().saturating_sub(1));
        prop_assert_eq!(batch.samples.len(), batch.exchanges - batch.excluded);

        // first IPU index per speaker name
        let first_index = |name: &str| -> u64 {
            let spk = session.speaker_index(name).unwrap();
            session.ipus().iter().filter(|i| i.speaker == spk).map(|i| i.index).min().unwrap()
        };

        for s in &batch.samples {
            // x0 is the responder's very first IPU in the session
            prop_assert_eq!(s.x0_index, first_index(&s.responder));
            prop_assert!(s.x0_index <= s.x2_index);
            prop_assert!(s.x1_index < s.x2_index);
            // payloads encode (index, name-based speaker number): trace back
            let responder_name_id: u8 = if s.responder == "A" { 0 } else { 1 };
            prop_assert_eq!(s.x0[0] as u64, s.x0_index);
            prop_assert_eq!(s.x0[1] as u8, responder_name_id);
            prop_assert_eq!(s.x2[0] as u64, s.x2_index);
            prop_assert_eq!(s.x2[1] as u8, responder_name_id);
            prop_assert_eq!(s.x1[0] as u64, s.x1_index);
            prop_assert_eq!(s.x1[1] as u8, 1 - responder_name_id);
            // x2 is the smallest responder index greater than x1's
            let responder_spk = session.speaker_index(&s.responder).unwrap();
            let next = session.ipus().iter()
                .filter(|i| i.speaker == responder_spk && i.index > s.x1_index)
                .map(|i| i.index)
                .min()
                .unwrap();
            prop_assert_eq!(s.x2_index, next);
            // the exclusion rule: x2 is never the responder's first IPU
            prop_assert_ne!(s.x2_index, s.x0_index);
        }

        // excluded counts exactly the exchanges whose x2 is a session-first IPU
        let excluded_by_rule = session.turns().windows(2).filter(|w| {
            let responder_spk = session.ipus()[w[1].start].speaker;
            let first = session.ipus().iter()
                .filter(|i| i.speaker == responder_spk)
                .map(|i| i.index)
                .min()
                .unwrap();
            session.ipus()[w[1].start].index == first
        }).count();
        prop_assert_eq!(batch.excluded, excluded_by_rule);
    }

    #[test]
    fn triplets_are_order_stable(seq in speaker_seq()) {
        let session = session_from_seq(&seq);
        let a = session.build_triplets().unwrap();
        let b = session.build_triplets().unwrap();
        prop_assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn split_partitions_sessions(n in 10usize..60) {
        let sessions: Vec<Session> = (0..n)
            .map(|i| {
                let raws = (0..4)
                    .map(|j| RawIpu {
                        speaker: if j % 2 == 0 { "A".into() } else { "B".into() },
                        index: j as u64,
                        task_id: None,
                        payload: IpuPayload::Features(vec![0.0, 0.0]),
                    })
                    .collect();
                Session::new(format!("s{i:03}"), raws).unwrap()
            })
            .collect();
        let corpus = Corpus::new(sessions).unwrap();
        let split = corpus.split().unwrap();
        prop_assert_eq!(split.train.len(), n * 8 / 10);
        prop_assert_eq!(split.validation.len(), n / 10);
        prop_assert_eq!(
            split.train.len() + split.validation.len() + split.test.len(),
            n
        );
        // disjoint, union = all, corpus order preserved
        let all: Vec<String> = split
            .train
            .iter()
            .chain(&split.validation)
            .chain(&split.test)
            .cloned()
            .collect();
        let want: Vec<String> = (0..n).map(|i| format!("s{i:03}")).collect();
        prop_assert_eq!(all, want);
    }
}
