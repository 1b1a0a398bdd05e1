//! Command-line surface. Every invocation writes a `.manifest.json` beside its
//! primary output recording flags, seeds, inputs, outputs, SHA-256 checksums
//! and wall-clock time. Exit codes: 0 success, 2 usage or validation,
//! 3 runtime failure (divergence, too few surviving runs).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::architectures::{train_into, transfer, ArchKind, StyleModel, TrainConfig, TrainingLog, TransferBatch};
use crate::classifier::{classifier_accuracy, train_classifier, ClassifierModel};
use crate::corpus::{load_corpus, load_references, save_references, synth_corpus, synth_references, NUM_SPECIALS};
use crate::error::{Error, Result};
use crate::manipulation::{save_sweep, sweep_groups};
use crate::metrics::evaluate_batch;
use crate::rigor::{run_ensemble, EnsembleSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "styleval", version, about = "Desk-scale style transfer training, evaluation and metric audits")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded synthetic sentiment corpus as `<label>\t<text>` TSV.
    Synth(SynthArgs),
    /// Train the logistic-regression style classifier.
    Classifier(ClassifierArgs),
    /// Train one architecture; writes a checkpoint and a per-epoch log.
    Train(TrainArgs),
    /// Transfer a corpus (or score a precomputed batch) and report metrics.
    Eval(EvalArgs),
    /// Run the eleven-point duplicate-replacement sweep on a batch.
    Manipulate(ManipulateArgs),
    /// Retrain an architecture under several seeds and aggregate the metrics.
    Ensemble(EnsembleArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the gold opposite-style rewrite of every line.
    #[arg(long)]
    pub refs_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClassifierArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Training flags shared by `train` and `ensemble`; flags win over `--config`.
#[derive(Debug, Args)]
pub struct TrainFlags {
    #[arg(long)]
    pub arch: String,
    #[arg(long)]
    pub corpus: PathBuf,
    /// `key = value` overrides of the desk-scale defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub flags: TrainFlags,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Checkpoint path; the log goes to `<out>.log.csv` unless `--log` is set.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, required_unless_present = "precomputed")]
    pub model: Option<PathBuf>,
    #[arg(long, required_unless_present = "precomputed")]
    pub corpus: Option<PathBuf>,
    /// Score an existing `<input>\t<output>\t<source_label>` batch instead.
    #[arg(long, conflicts_with_all = ["model", "corpus"])]
    pub precomputed: Option<PathBuf>,
    #[arg(long)]
    pub refs: Option<PathBuf>,
    #[arg(long)]
    pub classifier: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Where to write the transferred batch (model mode only).
    #[arg(long)]
    pub batch_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ManipulateArgs {
    #[arg(long = "model-output")]
    pub model_output: PathBuf,
    #[arg(long = "classifier-internal")]
    pub classifier_internal: PathBuf,
    #[arg(long = "classifier-external")]
    pub classifier_external: PathBuf,
    #[arg(long)]
    pub refs: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub groups: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    #[command(flatten)]
    pub flags: TrainFlags,
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
    #[arg(long = "seed-base", default_value_t = 0)]
    pub seed_base: u64,
    /// Sentences to transfer and score; defaults to the training corpus.
    #[arg(long)]
    pub eval_corpus: Option<PathBuf>,
    #[arg(long)]
    pub refs: Option<PathBuf>,
    /// External classifier; trained on the corpus when absent.
    #[arg(long)]
    pub classifier: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Output directory: one `run-<seed>` subdirectory per run plus `ensemble.json`.
    #[arg(long)]
    pub out: PathBuf,
}

/// Per-invocation provenance record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config: Option<serde_json::Value>,
    pub seeds: Vec<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub checksums: BTreeMap<String, String>,
    pub duration_secs: f64,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn manifest_path(primary: &Path) -> PathBuf {
    let mut name = primary.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

impl RunManifest {
    /// Whether every recorded checksum matches the file on disk.
    pub fn verify(&self) -> Result<bool> {
        for (path, sum) in &self.checksums {
            if &sha256_file(Path::new(path))? != sum {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

struct Recorder {
    command: &'static str,
    args: Vec<String>,
    started: Instant,
    config: Option<serde_json::Value>,
    seeds: Vec<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Recorder {
    fn new(command: &'static str, args: &[OsString]) -> Self {
        Recorder {
            command,
            args: args.iter().map(|a| a.to_string_lossy().into_owned()).collect(),
            started: Instant::now(),
            config: None,
            seeds: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn input(&mut self, p: &Path) {
        self.inputs.push(p.to_path_buf());
    }

    fn output(&mut self, p: &Path) {
        self.outputs.push(p.to_path_buf());
    }

    fn finish(self, primary: &Path, failure: Option<&Error>) -> Result<PathBuf> {
        let mut checksums = BTreeMap::new();
        for p in &self.outputs {
            checksums.insert(p.to_string_lossy().into_owned(), sha256_file(p)?);
        }
        let m = RunManifest {
            command: self.command.to_string(),
            args: self.args,
            config: self.config,
            seeds: self.seeds,
            inputs: self.inputs,
            outputs: self.outputs,
            checksums,
            duration_secs: self.started.elapsed().as_secs_f64(),
            exit_code: failure.map_or(EXIT_OK, exit_code),
            error: failure.map(ToString::to_string),
        };
        let path = manifest_path(primary);
        fs::write(&path, serde_json::to_string_pretty(&m)?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
        }
        _ => Ok(()),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn build_config(flags: &TrainFlags, seed: Option<u64>, rec: &mut Recorder) -> Result<TrainConfig> {
    let arch: ArchKind = flags.arch.parse()?;
    let mut cfg = TrainConfig::desk(arch);
    if let Some(path) = &flags.config {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        cfg.apply_overrides(&text)?;
        rec.input(path);
        if cfg.arch != arch {
            return Err(Error::Config(format!(
                "config file sets arch {}, flag says {arch}",
                cfg.arch
            )));
        }
    }
    if let Some(e) = flags.epochs {
        cfg.epochs = e;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    rec.config = Some(serde_json::to_value(&cfg)?);
    Ok(cfg)
}

/// Errors unless the classifier knows at least one word of the model vocabulary.
fn check_vocab(model: &StyleModel, clf: &ClassifierModel) -> Result<()> {
    let words = &model.vocab.words()[NUM_SPECIALS..];
    if words.iter().any(|w| clf.weights.contains_key(w)) {
        Ok(())
    } else {
        Err(Error::VocabMismatch(
            "the classifier knows none of the model's vocabulary".into(),
        ))
    }
}

fn log_path(args: &TrainArgs) -> PathBuf {
    args.log.clone().unwrap_or_else(|| {
        let mut p = args.out.as_os_str().to_owned();
        p.push(".log.csv");
        PathBuf::from(p)
    })
}

fn cmd_synth(a: &SynthArgs, rec: &mut Recorder) -> Result<()> {
    rec.seeds.push(a.seed);
    let corpus = synth_corpus(a.seed, a.n)?;
    ensure_parent(&a.out)?;
    corpus.save(&a.out)?;
    rec.output(&a.out);
    if let Some(r) = &a.refs_out {
        ensure_parent(r)?;
        save_references(&synth_references(&corpus), r)?;
        rec.output(r);
    }
    println!("wrote {} sentences to {}", corpus.len(), a.out.display());
    Ok(())
}

fn cmd_classifier(a: &ClassifierArgs, rec: &mut Recorder) -> Result<()> {
    rec.seeds.push(a.seed);
    rec.input(&a.corpus);
    let corpus = load_corpus(&a.corpus)?;
    let clf = train_classifier(&corpus, a.epochs, a.lr, a.seed)?;
    ensure_parent(&a.out)?;
    clf.save(&a.out)?;
    rec.output(&a.out);
    println!("training accuracy {:.4}", classifier_accuracy(&clf, &corpus)?);
    Ok(())
}

fn cmd_train(a: &TrainArgs, rec: &mut Recorder) -> Result<()> {
    let cfg = build_config(&a.flags, a.seed, rec)?;
    rec.seeds.push(cfg.seed);
    rec.input(&a.flags.corpus);
    let corpus = load_corpus(&a.flags.corpus)?;
    let log_path = log_path(a);
    ensure_parent(&a.out)?;
    ensure_parent(&log_path)?;
    let mut log = TrainingLog::default();
    let result = train_into(&corpus, &cfg, &mut log);
    // the log is kept even when training diverges
    log.save(&log_path)?;
    rec.output(&log_path);
    let model = result?;
    model.save(&a.out)?;
    rec.output(&a.out);
    if let Some(last) = log.epochs.last() {
        println!("epoch {}: {} (objective {:.4})", last.epoch, last.parts, last.objective);
    }
    Ok(())
}

fn load_refs(path: Option<&PathBuf>, rec: &mut Recorder) -> Result<Option<Vec<crate::corpus::Sentence>>> {
    path.map(|p| {
        rec.input(p);
        load_references(p)
    })
    .transpose()
}

fn cmd_eval(a: &EvalArgs, rec: &mut Recorder) -> Result<()> {
    rec.input(&a.classifier);
    let clf = ClassifierModel::load(&a.classifier)?;
    let batch = match (&a.precomputed, &a.model, &a.corpus) {
        (Some(p), _, _) => {
            rec.input(p);
            TransferBatch::load(p)?
        }
        (None, Some(m), Some(c)) => {
            rec.input(m);
            rec.input(c);
            let model = StyleModel::load(m)?;
            check_vocab(&model, &clf)?;
            rec.seeds.push(model.config.seed);
            transfer(&model, &load_corpus(c)?)?
        }
        _ => return Err(Error::Config("need --model and --corpus, or --precomputed".into())),
    };
    let refs = load_refs(a.refs.as_ref(), rec)?;
    let metrics = evaluate_batch(&batch, &clf, refs.as_deref())?;
    write_json(&a.out, &metrics)?;
    rec.output(&a.out);
    if let Some(b) = &a.batch_out {
        ensure_parent(b)?;
        batch.save(b)?;
        rec.output(b);
    }
    println!("{}", serde_json::to_string(&metrics)?);
    Ok(())
}

fn cmd_manipulate(a: &ManipulateArgs, rec: &mut Recorder) -> Result<()> {
    for p in [&a.model_output, &a.classifier_internal, &a.classifier_external] {
        rec.input(p);
    }
    let batch = TransferBatch::load(&a.model_output)?;
    let internal = ClassifierModel::load(&a.classifier_internal)?;
    let external = ClassifierModel::load(&a.classifier_external)?;
    let refs = load_refs(a.refs.as_ref(), rec)?;
    let points = sweep_groups(&batch, refs.as_deref(), &internal, &external, a.groups)?;
    ensure_parent(&a.out)?;
    save_sweep(&points, &a.out)?;
    rec.output(&a.out);
    let (first, last) = (points[0], points[points.len() - 1]);
    println!(
        "accuracy {:.4} -> {:.4}, self-BLEU {:.2} -> {:.2}",
        first.accuracy, last.accuracy, first.self_bleu, last.self_bleu
    );
    Ok(())
}

fn cmd_ensemble(a: &EnsembleArgs, rec: &mut Recorder) -> Result<()> {
    if a.runs < 2 {
        return Err(Error::Config(format!("--runs must be >= 2, got {}", a.runs)));
    }
    if a.jobs == 0 {
        return Err(Error::Config("--jobs must be >= 1".into()));
    }
    let cfg = build_config(&a.flags, None, rec)?;
    rec.seeds = (0..a.runs as u64).map(|i| a.seed_base + i).collect();
    rec.input(&a.flags.corpus);
    let train_corpus = load_corpus(&a.flags.corpus)?;
    let eval_corpus = match &a.eval_corpus {
        Some(p) => {
            rec.input(p);
            load_corpus(p)?
        }
        None => train_corpus.clone(),
    };
    let refs = load_refs(a.refs.as_ref(), rec)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let clf = match &a.classifier {
        Some(p) => {
            rec.input(p);
            ClassifierModel::load(p)?
        }
        None => {
            let clf = train_classifier(&train_corpus, 50, 0.1, a.seed_base)?;
            let p = a.out.join("classifier.json");
            clf.save(&p)?;
            rec.output(&p);
            clf
        }
    };
    let spec = EnsembleSpec {
        train: &train_corpus,
        eval: &eval_corpus,
        refs: refs.as_deref(),
        classifier: &clf,
        config: &cfg,
    };
    let outcome = run_ensemble(&spec, a.runs, a.seed_base, a.jobs)?;
    for out in &outcome.outputs {
        let dir = a.out.join(format!("run-{}", out.record.seed));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let files = [
            dir.join("model.json"),
            dir.join("train_log.csv"),
            dir.join("batch.tsv"),
            dir.join("metrics.json"),
        ];
        out.model.save(&files[0])?;
        out.log.save(&files[1])?;
        out.batch.save(&files[2])?;
        write_json(&files[3], &out.record)?;
        for f in &files {
            rec.output(f);
        }
    }
    let report = a.out.join("ensemble.json");
    outcome.ensemble.save(&report)?;
    rec.output(&report);
    print!("{}", outcome.ensemble.render());
    Ok(())
}

/// Maps an error to its exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Divergence { .. }
        | Error::InsufficientRuns { .. }
        | Error::Shape(_)
        | Error::NonFinite
        | Error::ZeroVector => EXIT_RUNTIME,
        _ => EXIT_VALIDATION,
    }
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    let rest = &args[1..];
    let (name, primary): (&'static str, PathBuf) = match &cli.command {
        Command::Synth(a) => ("synth", a.out.clone()),
        Command::Classifier(a) => ("classifier", a.out.clone()),
        Command::Train(a) => ("train", a.out.clone()),
        Command::Eval(a) => ("eval", a.out.clone()),
        Command::Manipulate(a) => ("manipulate", a.out.clone()),
        Command::Ensemble(a) => ("ensemble", a.out.join("ensemble.json")),
    };
    let mut rec = Recorder::new(name, rest);
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a, &mut rec),
        Command::Classifier(a) => cmd_classifier(a, &mut rec),
        Command::Train(a) => cmd_train(a, &mut rec),
        Command::Eval(a) => cmd_eval(a, &mut rec),
        Command::Manipulate(a) => cmd_manipulate(a, &mut rec),
        Command::Ensemble(a) => cmd_ensemble(a, &mut rec),
    };
    let failure = result.err();
    let written = rec.finish(&primary, failure.as_ref());
    match (failure, written) {
        (None, Ok(_)) => EXIT_OK,
        (Some(e), _) | (None, Err(e)) => {
            eprintln!("styleval {name}: error: {e}");
            exit_code(&e)
        }
    }
}
