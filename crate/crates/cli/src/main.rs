//! `entrain`: synthesize corpora, featurize, train the residual and
//! adversarial entrainment measures, score, and run the shuffle and
//! correlation experiments. Every command writes a manifest with input and
//! output digests; `rerun` re-executes a manifest and verifies the outputs
//! reproduce bitwise.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use entrain_cli::config::{ConfigFile, SynthFlags, TrainFlags};
use entrain_cli::manifest::{default_manifest_path, RunManifest};
use entrain_cli::model_file::{self, AnyModel};
use entrain_cli::formats;
use entrain_core::eval::{
    aggregate_correlation, aggregate_discrimination, correlate_social, discrimination_run,
    train_measure,
};
use entrain_core::featurize::featurize_corpus;
use entrain_core::measures::{
    grad_check_adversarial, train_adv, train_dr, Measure, TrainConfig,
};
use entrain_core::nn::gradcheck::{run_layer_checks, DEFAULT_TOLERANCE};
use entrain_core::synth::generate_corpus;

#[derive(Parser)]
#[command(
    name = "entrain",
    version,
    about = "Vocal entrainment measures that deconfound speaker consistency"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dyadic corpus with planted entrainment
    Synth(SynthCmd),
    /// Convert frame-level descriptors to fixed-width turn features
    Featurize(FeaturizeCmd),
    /// Train one measure on a featurized corpus
    Train(TrainCmd),
    /// Score every exchange of a corpus with a trained model
    Score(ScoreCmd),
    /// Real-vs-shuffled discrimination experiment over repeated retrainings
    ShuffleTest(ShuffleTestCmd),
    /// Correlate per-unit scores with social annotations over retrainings
    Correlate(CorrelateCmd),
    /// Finite-difference audit of every gradient path
    Gradcheck(GradcheckCmd),
    /// Re-execute a recorded run and verify outputs reproduce bitwise
    Rerun(RerunCmd),
}

#[derive(Args)]
struct SynthCmd {
    /// Corpus JSONL output path
    #[arg(long)]
    corpus_out: PathBuf,
    /// Annotations CSV output path
    #[arg(long)]
    annotations_out: PathBuf,
    /// Key=value config file
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    params: SynthFlags,
    /// Manifest path (default: <corpus-out>.manifest.json)
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct FeaturizeCmd {
    /// Input corpus JSONL (frames or features)
    #[arg(long)]
    input: PathBuf,
    /// Featurized corpus JSONL output path
    #[arg(long)]
    output: PathBuf,
    /// Manifest path (default: <output>.manifest.json)
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct TrainCmd {
    /// Featurized corpus JSONL
    #[arg(long)]
    corpus: PathBuf,
    /// Which measure to train: dr | adv
    #[arg(long, value_parser = parse_measure)]
    measure: Measure,
    /// Model container output path
    #[arg(long)]
    model_out: PathBuf,
    /// Training-log CSV output path
    #[arg(long)]
    log_out: PathBuf,
    /// Key=value config file
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    train: TrainFlags,
    /// Manifest path (default: <model-out>.manifest.json)
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreCmd {
    /// Featurized corpus JSONL
    #[arg(long)]
    corpus: PathBuf,
    /// Trained model container
    #[arg(long)]
    model: PathBuf,
    /// Per-exchange scores CSV output path
    #[arg(long)]
    output: PathBuf,
    /// Manifest path (default: <output>.manifest.json)
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct ShuffleTestCmd {
    /// Featurized corpus JSONL
    #[arg(long)]
    corpus: PathBuf,
    /// Which measure to train: dr | adv
    #[arg(long, value_parser = parse_measure)]
    measure: Measure,
    /// Number of independent retraining runs (seeds seed, seed+1, ...)
    #[arg(long, default_value_t = 30)]
    runs: usize,
    /// Worker threads for concurrent runs
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    /// Key=value config file
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    train: TrainFlags,
    /// Summary JSON output path
    #[arg(long)]
    summary_out: PathBuf,
    /// Per-session decisions CSV output path
    #[arg(long)]
    decisions_out: PathBuf,
    /// Manifest path (default: <summary-out>.manifest.json)
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct CorrelateCmd {
    /// Featurized corpus the models are trained on
    #[arg(long)]
    train_corpus: PathBuf,
    /// Featurized corpus whose units are scored (default: the train corpus)
    #[arg(long)]
    eval_corpus: Option<PathBuf>,
    /// Annotations CSV with per-unit social variable counts
    #[arg(long)]
    annotations: PathBuf,
    /// Which measure to train: dr | adv
    #[arg(long, value_parser = parse_measure)]
    measure: Measure,
    /// Number of independent retraining runs (seeds seed, seed+1, ...)
    #[arg(long, default_value_t = 100)]
    runs: usize,
    /// Worker threads for concurrent runs
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    /// Key=value config file
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    train: TrainFlags,
    /// Report JSON output path
    #[arg(long)]
    report_out: PathBuf,
    /// Manifest path (default: <report-out>.manifest.json)
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckCmd {
    /// RNG seed for the sampled check points
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Gradient report JSON output path
    #[arg(long, default_value = "gradcheck.json")]
    output: PathBuf,
    /// Manifest path (default: <output>.manifest.json)
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct RerunCmd {
    /// Manifest of the run to reproduce
    #[arg(long)]
    manifest: PathBuf,
}

fn parse_measure(s: &str) -> Result<Measure, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn main() {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            // usage errors: machine-readable report, like every other failure
            emit_error(&anyhow::anyhow!(e.to_string()).context("invalid command line"), 2)
        }
        Err(e) => e.exit(), // --help / --version
    };
    if let Err(e) = dispatch(cli.command, &argv) {
        emit_error(&e, 1);
    }
}

fn emit_error(err: &anyhow::Error, code: i32) -> ! {
    let causes: Vec<String> = err.chain().skip(1).map(|c| c.to_string()).collect();
    let report = serde_json::json!({ "error": err.to_string(), "causes": causes });
    eprintln!("{report}");
    std::process::exit(code);
}

fn dispatch(command: Command, argv: &[String]) -> Result<()> {
    match command {
        Command::Synth(cmd) => cmd_synth(cmd, argv),
        Command::Featurize(cmd) => cmd_featurize(cmd, argv),
        Command::Train(cmd) => cmd_train(cmd, argv),
        Command::Score(cmd) => cmd_score(cmd, argv),
        Command::ShuffleTest(cmd) => cmd_shuffle_test(cmd, argv),
        Command::Correlate(cmd) => cmd_correlate(cmd, argv),
        Command::Gradcheck(cmd) => cmd_gradcheck(cmd, argv),
        Command::Rerun(cmd) => cmd_rerun(cmd),
    }
}

fn write_manifest(
    explicit: Option<&PathBuf>,
    primary_output: &Path,
    argv: &[String],
    seeds: Vec<u64>,
    inputs: &[&Path],
    outputs: &[&Path],
) -> Result<PathBuf> {
    let path = explicit
        .cloned()
        .unwrap_or_else(|| default_manifest_path(primary_output));
    RunManifest::new(argv.to_vec(), seeds, inputs, outputs)?.write(&path)?;
    Ok(path)
}

fn optional_input(config: Option<&PathBuf>) -> Vec<&Path> {
    config.into_iter().map(PathBuf::as_path).collect()
}

fn cmd_synth(cmd: SynthCmd, argv: &[String]) -> Result<()> {
    let file = ConfigFile::load(cmd.config.as_ref())?;
    let params = cmd.params.resolve(&file)?;
    let (corpus, annotations) = generate_corpus(&params)?;
    formats::write_corpus(&cmd.corpus_out, &corpus)?;
    formats::write_annotations(&cmd.annotations_out, &annotations)?;
    let manifest_path = write_manifest(
        cmd.manifest.as_ref(),
        &cmd.corpus_out,
        argv,
        vec![params.seed],
        &optional_input(cmd.config.as_ref()),
        &[&cmd.corpus_out, &cmd.annotations_out],
    )?;
    println!(
        "synth: {} sessions -> {}, {} annotations -> {} (manifest {})",
        corpus.len(),
        cmd.corpus_out.display(),
        annotations.len(),
        cmd.annotations_out.display(),
        manifest_path.display()
    );
    Ok(())
}

fn cmd_featurize(cmd: FeaturizeCmd, argv: &[String]) -> Result<()> {
    let corpus = formats::load_corpus(&cmd.input)?;
    let featurized = featurize_corpus(&corpus)?;
    formats::write_corpus(&cmd.output, &featurized)?;
    let manifest_path = write_manifest(
        cmd.manifest.as_ref(),
        &cmd.output,
        argv,
        vec![],
        &[&cmd.input],
        &[&cmd.output],
    )?;
    println!(
        "featurize: {} sessions -> {} (manifest {})",
        featurized.len(),
        cmd.output.display(),
        manifest_path.display()
    );
    Ok(())
}

fn cmd_train(cmd: TrainCmd, argv: &[String]) -> Result<()> {
    let file = ConfigFile::load(cmd.config.as_ref())?;
    let cfg = cmd.train.resolve(&file)?;
    let corpus = formats::load_corpus(&cmd.corpus)?;
    let split = corpus.split()?;
    let train = corpus.triplets_for(&split.train)?;
    let val = corpus.triplets_for(&split.validation)?;
    let (model, log) = match cmd.measure {
        Measure::Dr => {
            let (m, log) = train_dr(&train, &val, &cfg)?;
            (AnyModel::Dr(m), log)
        }
        Measure::Adv => {
            let (m, log) = train_adv(&train, &val, &cfg)?;
            (AnyModel::Adv(m), log)
        }
    };
    model_file::save_model(&cmd.model_out, &model)?;
    formats::write_training_log(&cmd.log_out, &log)?;
    let manifest_path = write_manifest(
        cmd.manifest.as_ref(),
        &cmd.model_out,
        argv,
        vec![cfg.seed],
        &[
            &[cmd.corpus.as_path()][..],
            &optional_input(cmd.config.as_ref()),
        ]
        .concat(),
        &[&cmd.model_out, &cmd.log_out],
    )?;
    for s in &log.stages {
        println!(
            "train {}: stage {} ran {} epochs, best validation loss {:.6} at epoch {}",
            cmd.measure.as_str(),
            s.stage,
            s.epochs_run,
            s.best_val_loss,
            s.best_epoch
        );
    }
    println!(
        "train {}: model -> {}, log -> {} (manifest {})",
        cmd.measure.as_str(),
        cmd.model_out.display(),
        cmd.log_out.display(),
        manifest_path.display()
    );
    Ok(())
}

fn cmd_score(cmd: ScoreCmd, argv: &[String]) -> Result<()> {
    let model = model_file::load_model(&cmd.model)?;
    let corpus = formats::load_corpus(&cmd.corpus)?;
    let mut rows = Vec::new();
    for session in corpus.sessions() {
        let samples = session.build_triplets()?.samples;
        if samples.is_empty() {
            continue;
        }
        let (response, baseline) = model.loss_components(&samples)?;
        for ((sample, resp), base) in samples.iter().zip(&response).zip(&baseline) {
            rows.push(formats::ScoreRow {
                session_id: sample.session_id.clone(),
                task_id: sample.task_id.clone().unwrap_or_default(),
                responder: sample.responder.clone(),
                x2_index: sample.x2_index,
                score: resp - base,
                response_loss: *resp,
                baseline_loss: *base,
            });
        }
    }
    formats::write_scores(&cmd.output, &rows)?;
    let manifest_path = write_manifest(
        cmd.manifest.as_ref(),
        &cmd.output,
        argv,
        vec![],
        &[&cmd.corpus, &cmd.model],
        &[&cmd.output],
    )?;
    println!(
        "score {}: {} exchanges -> {} (manifest {})",
        model.measure().as_str(),
        rows.len(),
        cmd.output.display(),
        manifest_path.display()
    );
    Ok(())
}

/// Run `n` seeded jobs, optionally across `parallel` worker threads. The
/// per-run seed fully determines each result, so ordering cannot matter;
/// aggregation sorts by seed regardless.
fn run_seeded<T: Send>(
    n: usize,
    parallel: usize,
    job: impl Fn(usize) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    if n == 0 {
        bail!("--runs must be at least 1");
    }
    if parallel <= 1 {
        (0..n).map(job).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallel)
            .build()
            .context("building worker pool")?;
        pool.install(|| (0..n).into_par_iter().map(job).collect())
    }
}

fn seeded_cfg(base: &TrainConfig, i: usize) -> TrainConfig {
    TrainConfig {
        seed: base.seed + i as u64,
        ..*base
    }
}

fn cmd_shuffle_test(cmd: ShuffleTestCmd, argv: &[String]) -> Result<()> {
    let file = ConfigFile::load(cmd.config.as_ref())?;
    let base_cfg = cmd.train.resolve(&file)?;
    let corpus = formats::load_corpus(&cmd.corpus)?;
    let runs = run_seeded(cmd.runs, cmd.parallel, |i| {
        Ok(discrimination_run(&corpus, cmd.measure, &seeded_cfg(&base_cfg, i))?)
    })?;
    let result = aggregate_discrimination(cmd.measure, runs);
    formats::write_discrimination_files(&cmd.summary_out, &cmd.decisions_out, &result)?;
    let manifest_path = write_manifest(
        cmd.manifest.as_ref(),
        &cmd.summary_out,
        argv,
        (0..cmd.runs).map(|i| base_cfg.seed + i as u64).collect(),
        &[
            &[cmd.corpus.as_path()][..],
            &optional_input(cmd.config.as_ref()),
        ]
        .concat(),
        &[&cmd.summary_out, &cmd.decisions_out],
    )?;
    println!(
        "shuffle-test {}: mean accuracy {:.4} (std {:.4}) over {} runs -> {} (manifest {})",
        cmd.measure.as_str(),
        result.mean_accuracy,
        result.std_accuracy,
        result.runs.len(),
        cmd.summary_out.display(),
        manifest_path.display()
    );
    Ok(())
}

fn cmd_correlate(cmd: CorrelateCmd, argv: &[String]) -> Result<()> {
    let file = ConfigFile::load(cmd.config.as_ref())?;
    let base_cfg = cmd.train.resolve(&file)?;
    let train_corpus = formats::load_corpus(&cmd.train_corpus)?;
    let eval_corpus = match &cmd.eval_corpus {
        Some(path) => formats::load_corpus(path)?,
        None => train_corpus.clone(),
    };
    let annotations = formats::read_annotations(&cmd.annotations)?;
    let runs = run_seeded(cmd.runs, cmd.parallel, |i| {
        let cfg = seeded_cfg(&base_cfg, i);
        let (model, _) = train_measure(&train_corpus, cmd.measure, &cfg)?;
        Ok(correlate_social(
            model.as_ref(),
            &eval_corpus,
            &annotations,
            cfg.seed,
        )?)
    })?;
    let report = aggregate_correlation(cmd.measure, runs)?;
    formats::write_json(&cmd.report_out, &formats::correlation_summary(&report))?;
    let mut inputs: Vec<&Path> = vec![&cmd.train_corpus];
    if let Some(p) = &cmd.eval_corpus {
        inputs.push(p);
    }
    inputs.push(&cmd.annotations);
    inputs.extend(optional_input(cmd.config.as_ref()));
    let manifest_path = write_manifest(
        cmd.manifest.as_ref(),
        &cmd.report_out,
        argv,
        (0..cmd.runs).map(|i| base_cfg.seed + i as u64).collect(),
        &inputs,
        &[&cmd.report_out],
    )?;
    println!(
        "correlate {}: {} of {} runs significant -> {} (manifest {})",
        cmd.measure.as_str(),
        report.significant_runs,
        report.runs.len(),
        cmd.report_out.display(),
        manifest_path.display()
    );
    Ok(())
}

fn cmd_gradcheck(cmd: GradcheckCmd, argv: &[String]) -> Result<()> {
    let mut reports = run_layer_checks(cmd.seed);
    reports.push(grad_check_adversarial(cmd.seed, DEFAULT_TOLERANCE));
    for r in &reports {
        println!("{r}");
    }
    formats::write_json(&cmd.output, &formats::gradcheck_summary(&reports))?;
    write_manifest(
        cmd.manifest.as_ref(),
        &cmd.output,
        argv,
        vec![cmd.seed],
        &[],
        &[&cmd.output],
    )?;
    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| !r.pass)
        .map(|r| r.component.as_str())
        .collect();
    if !failed.is_empty() {
        bail!("gradient checks failed: {}", failed.join(", "));
    }
    Ok(())
}

fn cmd_rerun(cmd: RerunCmd) -> Result<()> {
    let recorded = RunManifest::read(&cmd.manifest)?;
    if recorded.command.first().map(String::as_str) == Some("rerun") {
        bail!("manifest records a rerun; nothing to reproduce");
    }
    recorded.verify(&recorded.inputs, "input")?;

    let mut full = vec!["entrain".to_owned()];
    full.extend(recorded.command.iter().cloned());
    let cli = Cli::try_parse_from(&full)
        .with_context(|| format!("manifest command not parseable: {:?}", recorded.command))?;
    dispatch(cli.command, &recorded.command)?;

    recorded
        .verify(&recorded.outputs, "output")
        .context("rerun outputs differ from the recorded run")?;
    println!(
        "rerun: {} outputs reproduced bitwise from {}",
        recorded.outputs.len(),
        cmd.manifest.display()
    );
    Ok(())
}
