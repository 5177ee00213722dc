//! On-disk formats: JSONL corpora, annotation CSVs, training-log CSVs and
//! the JSON/CSV result files of the two experiments.
//!
//! Float fields round-trip bitwise: JSON numbers are emitted in shortest
//! round-trip form and CSVs use the same rendering, so re-reading a file
//! recovers identical f64 bits.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use entrain_core::corpus::{Annotation, Corpus, IpuPayload, RawIpu, Session, SocialVar};
use entrain_core::eval::{CorrelationReport, DiscriminationResult};
use entrain_core::mat::Mat;
use entrain_core::measures::TrainingLog;
use entrain_core::nn::GradReport;

/// One corpus line: exactly one of `lld_frames` / `features` must be set.
#[derive(Debug, Serialize, Deserialize)]
struct IpuLine {
    session_id: String,
    task_id: Option<String>,
    speaker: String,
    index: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    lld_frames: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    features: Option<Vec<f64>>,
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let file = fs::File::open(path).with_context(|| format!("opening corpus {}", path.display()))?;
    let reader = BufReader::new(file);

    // group lines into sessions, preserving first-appearance order
    let mut order: Vec<String> = Vec::new();
    let mut grouped: std::collections::HashMap<String, Vec<RawIpu>> =
        std::collections::HashMap::new();

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.with_context(|| format!("{}:{lineno}: read error", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: IpuLine = serde_json::from_str(&line)
            .with_context(|| format!("{}:{lineno}: malformed IPU record", path.display()))?;
        let payload = match (parsed.lld_frames, parsed.features) {
            (Some(frames), None) => {
                if frames.is_empty() {
                    bail!("{}:{lineno}: lld_frames is empty", path.display());
                }
                let width = frames[0].len();
                if width == 0 || frames.iter().any(|r| r.len() != width) {
                    bail!(
                        "{}:{lineno}: lld_frames rows must be non-empty and rectangular",
                        path.display()
                    );
                }
                let refs: Vec<&[f64]> = frames.iter().map(|r| r.as_slice()).collect();
                IpuPayload::Frames(Mat::from_rows(&refs))
            }
            (None, Some(features)) => {
                if features.is_empty() {
                    bail!("{}:{lineno}: features is empty", path.display());
                }
                IpuPayload::Features(features)
            }
            (Some(_), Some(_)) => bail!(
                "{}:{lineno}: both lld_frames and features present",
                path.display()
            ),
            (None, None) => bail!(
                "{}:{lineno}: neither lld_frames nor features present",
                path.display()
            ),
        };
        if !grouped.contains_key(&parsed.session_id) {
            order.push(parsed.session_id.clone());
        }
        grouped.entry(parsed.session_id).or_default().push(RawIpu {
            speaker: parsed.speaker,
            index: parsed.index,
            task_id: parsed.task_id,
            payload,
        });
    }

    if order.is_empty() {
        bail!("{}: no sessions", path.display());
    }
    let sessions: Vec<Session> = order
        .into_iter()
        .map(|id| {
            let raws = grouped.remove(&id).expect("grouped by construction");
            Session::new(id.clone(), raws).with_context(|| format!("session {id}"))
        })
        .collect::<Result<_>>()?;
    Ok(Corpus::new(sessions)?)
}

pub fn write_corpus(path: &Path, corpus: &Corpus) -> Result<()> {
    let file =
        fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    for session in corpus.sessions() {
        for ipu in session.ipus() {
            let (lld_frames, features) = match &ipu.payload {
                IpuPayload::Frames(m) => {
                    let rows: Vec<Vec<f64>> = (0..m.rows()).map(|r| m.row(r).to_vec()).collect();
                    (Some(rows), None)
                }
                IpuPayload::Features(v) => (None, Some(v.clone())),
            };
            let line = IpuLine {
                session_id: session.id().to_owned(),
                task_id: ipu.task_id.clone(),
                speaker: session.speakers()[ipu.speaker as usize].clone(),
                index: ipu.index,
                lld_frames,
                features,
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
    }
    Ok(w.flush()?)
}

pub fn read_annotations(path: &Path) -> Result<Vec<Annotation>> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("opening annotations {}", path.display()))?;
    {
        let headers = reader.headers()?;
        let want = ["session_id", "task_id", "speaker", "variable", "count"];
        if headers.iter().ne(want) {
            bail!(
                "{}: expected header {}, found {}",
                path.display(),
                want.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            );
        }
    }
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 2; // header is line 1
        let field = |j: usize| record.get(j).unwrap_or_default().to_owned();
        let variable = SocialVar::parse(&field(3))
            .with_context(|| format!("{}:{row}: unknown variable {:?}", path.display(), field(3)))?;
        let count: u8 = field(4)
            .parse()
            .with_context(|| format!("{}:{row}: bad count {:?}", path.display(), field(4)))?;
        if count > 5 {
            bail!("{}:{row}: count {count} out of range 0..=5", path.display());
        }
        out.push(Annotation {
            session_id: field(0),
            task_id: field(1),
            speaker: field(2),
            variable,
            count,
        });
    }
    Ok(out)
}

pub fn write_annotations(path: &Path, annotations: &[Annotation]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["session_id", "task_id", "speaker", "variable", "count"])?;
    for a in annotations {
        w.write_record([
            a.session_id.as_str(),
            a.task_id.as_str(),
            a.speaker.as_str(),
            a.variable.as_str(),
            &a.count.to_string(),
        ])?;
    }
    Ok(w.flush()?)
}

/// Per-epoch losses plus a flag on each stage's chosen (restored) epoch.
pub fn write_training_log(path: &Path, log: &TrainingLog) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["stage", "epoch", "train_loss", "val_loss", "is_best"])?;
    for r in &log.records {
        let is_best = log
            .stages
            .iter()
            .any(|s| s.stage == r.stage && s.best_epoch == r.epoch);
        w.write_record([
            r.stage,
            &r.epoch.to_string(),
            &r.train_loss.to_string(),
            &r.val_loss.to_string(),
            if is_best { "1" } else { "0" },
        ])?;
    }
    Ok(w.flush()?)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DiscriminationSummary {
    pub measure: String,
    pub runs: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub per_run: Vec<RunAccuracy>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunAccuracy {
    pub seed: u64,
    pub accuracy: f64,
    pub sessions: usize,
    pub excluded: usize,
}

pub fn discrimination_summary(result: &DiscriminationResult) -> DiscriminationSummary {
    DiscriminationSummary {
        measure: result.measure.as_str().to_owned(),
        runs: result.runs.len(),
        accuracy_mean: result.mean_accuracy,
        accuracy_std: result.std_accuracy,
        per_run: result
            .runs
            .iter()
            .map(|r| RunAccuracy {
                seed: r.seed,
                accuracy: r.accuracy,
                sessions: r.decisions.len(),
                excluded: r.excluded,
            })
            .collect(),
    }
}

pub fn write_discrimination_files(
    summary_path: &Path,
    decisions_path: &Path,
    result: &DiscriminationResult,
) -> Result<()> {
    write_json(summary_path, &discrimination_summary(result))?;
    let mut w = csv::Writer::from_path(decisions_path)
        .with_context(|| format!("creating {}", decisions_path.display()))?;
    w.write_record(["seed", "session_id", "real_score", "fake_score", "success"])?;
    for run in &result.runs {
        for d in &run.decisions {
            w.write_record([
                run.seed.to_string().as_str(),
                &d.session_id,
                &d.real_score.to_string(),
                &d.fake_score.to_string(),
                if d.success { "1" } else { "0" },
            ])?;
        }
    }
    Ok(w.flush()?)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CorrelationSummary {
    pub measure: String,
    pub runs: usize,
    pub significant_runs: usize,
    pub run_significant: Vec<bool>,
    pub per_run: Vec<CorrelationRunOut>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CorrelationRunOut {
    pub seed: u64,
    pub min_alpha: f64,
    pub dropped: usize,
    pub variables: Vec<VariableOut>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VariableOut {
    pub variable: String,
    pub r: f64,
    pub p: f64,
    pub n: usize,
    pub significant: bool,
}

pub fn correlation_summary(report: &CorrelationReport) -> CorrelationSummary {
    CorrelationSummary {
        measure: report.measure.as_str().to_owned(),
        runs: report.runs.len(),
        significant_runs: report.significant_runs,
        run_significant: report.run_significant.clone(),
        per_run: report
            .runs
            .iter()
            .map(|r| CorrelationRunOut {
                seed: r.seed,
                min_alpha: r.min_alpha,
                dropped: r.dropped,
                variables: r
                    .variables
                    .iter()
                    .map(|v| VariableOut {
                        variable: v.variable.as_str().to_owned(),
                        r: v.r,
                        p: v.p,
                        n: v.n,
                        significant: v.significant,
                    })
                    .collect(),
            })
            .collect(),
    }
}

/// Per-sample scores with their loss components, one row per triplet.
pub struct ScoreRow {
    pub session_id: String,
    pub task_id: String,
    pub responder: String,
    pub x2_index: u64,
    pub score: f64,
    pub response_loss: f64,
    pub baseline_loss: f64,
}

pub fn write_scores(path: &Path, rows: &[ScoreRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    w.write_record([
        "session_id",
        "task_id",
        "responder",
        "x2_index",
        "score",
        "response_loss",
        "baseline_loss",
    ])?;
    for r in rows {
        w.write_record([
            r.session_id.as_str(),
            r.task_id.as_str(),
            r.responder.as_str(),
            &r.x2_index.to_string(),
            &r.score.to_string(),
            &r.response_loss.to_string(),
            &r.baseline_loss.to_string(),
        ])?;
    }
    Ok(w.flush()?)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GradReportOut {
    pub component: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub fn gradcheck_summary(reports: &[GradReport]) -> Vec<GradReportOut> {
    reports
        .iter()
        .map(|r| GradReportOut {
            component: r.component.clone(),
            checked: r.checked,
            max_rel_error: r.max_rel_error,
            tolerance: r.tolerance,
            pass: r.pass,
        })
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file =
        fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(w.flush()?)
}
