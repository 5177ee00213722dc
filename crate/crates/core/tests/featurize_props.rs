//! Property tests for featurization: per-speaker affine equivariance and
//! pooled-normalization correctness on randomly generated frame sessions.

use entrain_core::corpus::{IpuPayload, RawIpu, Session};
use entrain_core::featurize::{featurize_session, speaker_stats, zscore};
use entrain_core::mat::Mat;
use proptest::prelude::*;

const LLD: usize = 4;

#[derive(Debug, Clone)]
struct FrameSpec {
    speaker: usize,
    frames: Vec<Vec<f64>>,
}

fn frame_strategy() -> impl Strategy<Value = Vec<FrameSpec>> {
    // alternating speakers, 2..6 turns, 1..4 IPUs per turn, 1..5 frames
    let frame = prop::collection::vec(-50.0f64..50.0, LLD);
    let ipu = prop::collection::vec(frame, 1..5);
    let turn = prop::collection::vec(ipu, 1..4);
    prop::collection::vec(turn, 2..6).prop_map(|turns| {
        let mut out = Vec::new();
        for (t, ipus) in turns.into_iter().enumerate() {
            for frames in ipus {
                out.push(FrameSpec {
                    speaker: t % 2,
                    frames,
                });
            }
        }
        out
    })
}

fn build_session(specs: &[FrameSpec], transform: impl Fn(usize, f64) -> f64) -> Session {
    let raws: Vec<RawIpu> = specs
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let rows: Vec<Vec<f64>> = spec
                .frames
                .iter()
                .map(|f| f.iter().map(|&v| transform(spec.speaker, v)).collect())
                .collect();
            let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
            RawIpu {
                speaker: if spec.speaker == 0 { "A".into() } else { "B".into() },
                index: i as u64,
                task_id: None,
                payload: IpuPayload::Frames(Mat::from_rows(&refs)),
            }
        })
        .collect();
    Session::new("s".into(), raws).expect("valid synthetic session")
}

fn feature_vectors(session: &Session) -> Vec<Vec<f64>> {
    featurize_session(session)
        .expect("featurizable")
        .ipus()
        .iter()
        .map(|ipu| match &ipu.payload {
            IpuPayload::Features(v) => v.clone(),
            IpuPayload::Frames(_) => panic!("featurized session still has frames"),
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Scaling and shifting one speaker's raw frames (a > 0, uniform over
    /// that speaker) must not change their normalized features.
    #[test]
    fn affine_equivariance(specs in frame_strategy(),
                           a0 in 0.1f64..10.0, b0 in -20.0f64..20.0,
                           a1 in 0.1f64..10.0, b1 in -20.0f64..20.0) {
        let plain = build_session(&specs, |_, v| v);
        let scaled = build_session(&specs, |spk, v| {
            if spk == 0 { a0 * v + b0 } else { a1 * v + b1 }
        });
        let f_plain = feature_vectors(&plain);
        let f_scaled = feature_vectors(&scaled);
        prop_assert_eq!(f_plain.len(), f_scaled.len());
        for (p, s) in f_plain.iter().zip(&f_scaled) {
            for (x, y) in p.iter().zip(s) {
                prop_assert!((x - y).abs() < 1e-9,
                    "feature moved under affine transform: {} vs {}", x, y);
            }
        }
    }

    /// Pooling all qualifying normalized frames of one speaker gives mean 0
    /// and population std 1 per channel whenever sigma > 0.
    #[test]
    fn pooled_normalization_is_standard(specs in frame_strategy()) {
        let session = build_session(&specs, |_, v| v);
        for name in ["A", "B"] {
            if session.speaker_index(name).is_none() {
                continue;
            }
            let stats = speaker_stats(&session, name).expect("speaker present");
            let mut pooled: Vec<Vec<f64>> = vec![Vec::new(); LLD];
            let spk = session.speaker_index(name).unwrap();
            for ipu in session.ipus() {
                if ipu.speaker != spk || !ipu.position.qualifies() {
                    continue;
                }
                if let IpuPayload::Frames(m) = &ipu.payload {
                    let z = zscore(m, &stats);
                    for r in 0..z.rows() {
                        for (c, pool) in pooled.iter_mut().enumerate() {
                            pool.push(z.get(r, c));
                        }
                    }
                }
            }
            for (c, pool) in pooled.iter().enumerate() {
                let n = pool.len() as f64;
                let mean = pool.iter().sum::<f64>() / n;
                let var = pool.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                prop_assert!(mean.abs() < 1e-9, "channel {} mean {}", c, mean);
                if stats.sigma[c] > 1e-12 {
                    prop_assert!((var.sqrt() - 1.0).abs() < 1e-9,
                        "channel {} std {}", c, var.sqrt());
                }
            }
        }
    }

    /// Re-featurizing an already featurized session is the identity.
    #[test]
    fn featurize_is_idempotent(specs in frame_strategy()) {
        let session = build_session(&specs, |_, v| v);
        let once = featurize_session(&session).unwrap();
        let twice = featurize_session(&once).unwrap();
        prop_assert_eq!(once.ipus().len(), twice.ipus().len());
        for (a, b) in once.ipus().iter().zip(twice.ipus()) {
            prop_assert_eq!(&a.payload, &b.payload);
        }
    }
}

#[test]
fn percentile_interpolates_and_is_monotone() {
    use entrain_core::featurize::percentile;
    let sorted = [1.0, 2.0, 4.0, 8.0];
    assert_eq!(percentile(&sorted, 0.0), 1.0);
    assert_eq!(percentile(&sorted, 100.0), 8.0);
    assert!((percentile(&sorted, 50.0) - 3.0).abs() < 1e-12);
    let mut last = f64::NEG_INFINITY;
    for step in 0..=1000 {
        let p = step as f64 / 10.0;
        let v = percentile(&sorted, p);
        assert!(v >= last, "percentile not monotone at p={p}");
        last = v;
    }
}
