//! Scratch diagnostic: 30-run mean accuracy, both measures, corpus seeds 1-8.

use entrain_core::eval::discrimination_run;
use entrain_core::measures::{Measure, TrainConfig};
use entrain_core::synth::{generate_corpus, SynthParams};

fn main() {
    for corpus_seed in 1u64..=8 {
        let params = SynthParams {
            n_sessions: 100,
            turns_per_session: 51,
            feature_dim: 24,
            consistency: 0.5,
            entrainment: 0.5,
            noise_sigma: 0.5,
            seed: corpus_seed,
        };
        let (corpus, _) = generate_corpus(&params).unwrap();
        let mut line = format!("corpus_seed={corpus_seed}:");
        for measure in [Measure::Dr, Measure::Adv] {
            let mut sum = 0.0;
            for run in 0..30u64 {
                let mut cfg = TrainConfig { seed: 1000 + run, ..TrainConfig::default() };
                cfg.dims.feat = 24;
                sum += discrimination_run(&corpus, measure, &cfg).unwrap().accuracy;
            }
            line.push_str(&format!("  {measure:?} {:.3}", sum / 30.0));
        }
        println!("{line}");
    }
}
