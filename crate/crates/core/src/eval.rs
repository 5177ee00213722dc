//! The two validation experiments: real-vs-fake session discrimination and
//! correlation of session-level entrainment with social-variable
//! annotations under two-level false-discovery control.
//!
//! Discrimination: per retraining run, a model is trained on the corpus's
//! train/validation splits and applied to each test session twice — once as
//! recorded and once with the prompt vectors (x1) shuffled across the
//! session's exchanges. The run succeeds on a session when the real version
//! scores strictly lower (both measures are lower-is-more-entrainment).
//!
//! Correlation: per run, the trained model scores a held-out corpus; scores
//! are averaged per (session, task, responder) unit and correlated with the
//! unit's annotation counts. P-values are corrected within the run across
//! the three variables, and run-level outcomes across runs, both with
//! Benjamini-Hochberg.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Annotation, Corpus, CorpusError, SocialVar, TripletSample};
use crate::measures::{
    session_score, train_adv, train_dr, Measure, Scorer, TrainConfig, TrainError, TrainingLog,
};
use crate::stats::{self, StatsError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("variable {variable}: only {got} annotated units, need at least 3")]
    TooFewUnits { variable: &'static str, got: usize },
    #[error("no runs requested")]
    NoRuns,
}

/// One session's real-vs-fake comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionDecision {
    pub session_id: String,
    pub real_score: f64,
    pub fake_score: f64,
    pub success: bool,
}

/// One retraining run of the discrimination experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminationRun {
    pub seed: u64,
    pub decisions: Vec<SessionDecision>,
    /// Test sessions with fewer than 2 samples (a shuffle cannot change
    /// them); excluded from the accuracy denominator.
    pub excluded: usize,
    pub accuracy: f64,
}

/// Aggregate over retraining runs.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminationResult {
    pub measure: Measure,
    pub runs: Vec<DiscriminationRun>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

/// Correlation outcome for one social variable in one run.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableResult {
    pub variable: SocialVar,
    pub r: f64,
    pub p: f64,
    pub n: usize,
    pub significant: bool,
}

/// One retraining run of the correlation experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationRun {
    pub seed: u64,
    pub variables: Vec<VariableResult>,
    /// Smallest alpha at which the run's within-run correction passes at
    /// least one variable; the run's summary statistic for the across-run
    /// correction.
    pub min_alpha: f64,
    /// (unit, variable) pairs without an annotation, dropped.
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    pub measure: Measure,
    pub runs: Vec<CorrelationRun>,
    /// Number of runs declared significant by the across-run correction.
    pub significant_runs: usize,
    /// Per-run significance flags, run order.
    pub run_significant: Vec<bool>,
}

/// Shuffle the prompt vectors across a session's samples (uniform
/// permutation; x0, x2 and all metadata stay put). Returns None for
/// sessions with fewer than 2 samples, which discrimination excludes.
pub fn make_fake_session<R: Rng>(
    samples: &[TripletSample],
    rng: &mut R,
) -> Option<Vec<TripletSample>> {
    if samples.len() < 2 {
        return None;
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(rng);
    Some(
        samples
            .iter()
            .zip(&order)
            .map(|(s, &j)| {
                let mut fake = s.clone();
                fake.x1 = samples[j].x1.clone();
                fake.x1_index = samples[j].x1_index;
                fake
            })
            .collect(),
    )
}

/// True when the real session scores strictly lower than its fake
/// counterpart; ties count as failure.
pub fn discriminate_session<S: Scorer + ?Sized>(
    model: &S,
    real: &[TripletSample],
    fake: &[TripletSample],
) -> Result<(f64, f64, bool), TrainError> {
    let real_score = session_score(model, real)?;
    let fake_score = session_score(model, fake)?;
    Ok((real_score, fake_score, real_score < fake_score))
}

/// Train one model per `cfg` on the corpus's train/validation splits.
pub fn train_measure(
    corpus: &Corpus,
    measure: Measure,
    cfg: &TrainConfig,
) -> Result<(alloc::boxed::Box<dyn Scorer>, TrainingLog), EvalError> {
    let split = corpus.split()?;
    let train = corpus.triplets_for(&split.train)?;
    let val = corpus.triplets_for(&split.validation)?;
    Ok(match measure {
        Measure::Dr => {
            let (m, log) = train_dr(&train, &val, cfg)?;
            (alloc::boxed::Box::new(m), log)
        }
        Measure::Adv => {
            let (m, log) = train_adv(&train, &val, cfg)?;
            (alloc::boxed::Box::new(m), log)
        }
    })
}

/// RNG substream for the fake-session shuffles of a run (training uses the
/// lower substreams of the same seed).
const SHUFFLE_STREAM: u64 = 100;

/// One full discrimination run: retrain, then compare each test session
/// against its freshly shuffled counterpart.
pub fn discrimination_run(
    corpus: &Corpus,
    measure: Measure,
    cfg: &TrainConfig,
) -> Result<DiscriminationRun, EvalError> {
    let (model, _) = train_measure(corpus, measure, cfg)?;
    let split = corpus.split()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(SHUFFLE_STREAM);

    let mut decisions = Vec::new();
    let mut excluded = 0usize;
    for id in &split.test {
        let session = corpus.session(id).expect("split ids come from corpus");
        let real = session.build_triplets()?.samples;
        let Some(fake) = make_fake_session(&real, &mut rng) else {
            excluded += 1;
            continue;
        };
        let (real_score, fake_score, success) =
            discriminate_session(model.as_ref(), &real, &fake)?;
        decisions.push(SessionDecision {
            session_id: id.clone(),
            real_score,
            fake_score,
            success,
        });
    }
    let successes = decisions.iter().filter(|d| d.success).count();
    let accuracy = if decisions.is_empty() {
        0.0
    } else {
        successes as f64 / decisions.len() as f64
    };
    Ok(DiscriminationRun {
        seed: cfg.seed,
        decisions,
        excluded,
        accuracy,
    })
}

/// The discrimination experiment: `n_runs` independent retrainings with
/// seeds base_seed, base_seed+1, ...; reports per-run accuracies and their
/// mean/standard deviation.
pub fn discrimination_experiment(
    corpus: &Corpus,
    measure: Measure,
    n_runs: usize,
    base_cfg: &TrainConfig,
) -> Result<DiscriminationResult, EvalError> {
    if n_runs == 0 {
        return Err(EvalError::NoRuns);
    }
    let runs: Vec<DiscriminationRun> = (0..n_runs)
        .map(|i| {
            let cfg = TrainConfig {
                seed: base_cfg.seed + i as u64,
                ..*base_cfg
            };
            discrimination_run(corpus, measure, &cfg)
        })
        .collect::<Result<_, _>>()?;
    Ok(aggregate_discrimination(measure, runs))
}

/// Deterministic fold of independent runs (used by both the sequential path
/// and parallel callers that computed runs out of order).
pub fn aggregate_discrimination(
    measure: Measure,
    mut runs: Vec<DiscriminationRun>,
) -> DiscriminationResult {
    runs.sort_by_key(|r| r.seed);
    let accs: Vec<f64> = runs.iter().map(|r| r.accuracy).collect();
    DiscriminationResult {
        measure,
        mean_accuracy: stats::mean(&accs),
        std_accuracy: stats::sample_std(&accs),
        runs,
    }
}

/// Mean score per (session, task, responder) unit over a corpus.
pub fn unit_scores<S: Scorer + ?Sized>(
    model: &S,
    corpus: &Corpus,
) -> Result<BTreeMap<(String, String, String), f64>, EvalError> {
    let mut groups: BTreeMap<(String, String, String), Vec<f64>> = BTreeMap::new();
    for session in corpus.sessions() {
        let samples = session.build_triplets()?.samples;
        if samples.is_empty() {
            continue;
        }
        let scores = model.score_batch(&samples)?;
        for (s, score) in samples.iter().zip(scores) {
            let key = (
                s.session_id.clone(),
                s.task_id.clone().unwrap_or_default(),
                s.responder.clone(),
            );
            groups.entry(key).or_default().push(score);
        }
    }
    Ok(groups
        .into_iter()
        .map(|(k, v)| {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            (k, mean)
        })
        .collect())
}

/// Correlate unit-level mean scores against each social variable's
/// annotation counts; within-run BH at alpha = 0.05.
pub fn correlate_social<S: Scorer + ?Sized>(
    model: &S,
    corpus: &Corpus,
    annotations: &[Annotation],
    seed: u64,
) -> Result<CorrelationRun, EvalError> {
    let units = unit_scores(model, corpus)?;

    let mut lookup: BTreeMap<(&str, &str, &str, SocialVar), u8> = BTreeMap::new();
    for a in annotations {
        lookup.insert(
            (
                a.session_id.as_str(),
                a.task_id.as_str(),
                a.speaker.as_str(),
                a.variable,
            ),
            a.count,
        );
    }

    let mut dropped = 0usize;
    let mut results = Vec::with_capacity(SocialVar::ALL.len());
    let mut pvals = Vec::with_capacity(SocialVar::ALL.len());
    for variable in SocialVar::ALL {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for ((sid, tid, speaker), score) in &units {
            match lookup.get(&(sid.as_str(), tid.as_str(), speaker.as_str(), variable)) {
                Some(&count) => {
                    xs.push(count as f64);
                    ys.push(*score);
                }
                None => dropped += 1,
            }
        }
        if xs.len() < 3 {
            return Err(EvalError::TooFewUnits {
                variable: variable.as_str(),
                got: xs.len(),
            });
        }
        let (r, p) = stats::pearson(&xs, &ys)?;
        results.push(VariableResult {
            variable,
            r,
            p,
            n: xs.len(),
            significant: false,
        });
        pvals.push(p);
    }

    let within = stats::bh_within_run(&pvals, 0.05)?;
    for (res, sig) in results.iter_mut().zip(&within.significant) {
        res.significant = *sig;
    }
    Ok(CorrelationRun {
        seed,
        variables: results,
        min_alpha: within.min_alpha,
        dropped,
    })
}

/// The full correlation experiment: retrain `n_runs` times on
/// `train_corpus`, score `eval_corpus` each time, correlate, then apply the
/// across-run correction to the per-run minimal alphas.
#[allow(clippy::too_many_arguments)]
pub fn correlation_experiment(
    train_corpus: &Corpus,
    eval_corpus: &Corpus,
    annotations: &[Annotation],
    measure: Measure,
    n_runs: usize,
    base_cfg: &TrainConfig,
) -> Result<CorrelationReport, EvalError> {
    if n_runs == 0 {
        return Err(EvalError::NoRuns);
    }
    let runs: Vec<CorrelationRun> = (0..n_runs)
        .map(|i| {
            let cfg = TrainConfig {
                seed: base_cfg.seed + i as u64,
                ..*base_cfg
            };
            let (model, _) = train_measure(train_corpus, measure, &cfg)?;
            correlate_social(model.as_ref(), eval_corpus, annotations, cfg.seed)
        })
        .collect::<Result<_, _>>()?;
    aggregate_correlation(measure, runs)
}

/// Deterministic aggregation: sort runs by seed and apply the across-run
/// Benjamini-Hochberg correction over their minimal alphas.
pub fn aggregate_correlation(
    measure: Measure,
    mut runs: Vec<CorrelationRun>,
) -> Result<CorrelationReport, EvalError> {
    runs.sort_by_key(|r| r.seed);
    let min_alphas: Vec<f64> = runs.iter().map(|r| r.min_alpha.min(1.0)).collect();
    let (k, flags) = stats::multi_run_significance(&min_alphas, 0.05)?;
    Ok(CorrelationReport {
        measure,
        runs,
        significant_runs: k,
        run_significant: flags,
    })
}
