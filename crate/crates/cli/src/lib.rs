//! `umurl` command line: synthetic data, pre-training, probes, diagnostics,
//! gradient checks and embedding export.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use umurl::data::{
    generate_synthetic, parse_modalities, read_dataset, write_dataset, Dataset, Modality, Scenario, SplitKind,
};
use umurl::evaluation::{
    extract_representations, knn_retrieve, linear_probe_with, ContributionReport, EvaluationReport, ProbeConfig,
    RepresentationSet,
};
use umurl::fidelity::{loss_checks_with_step, model_checks_with_step, FD_STEP};
use umurl::model::FusionStrategy;
use umurl::training::{trace_to_csv, Checkpoint, TrainConfig, TrainMode, Trainer};
use umurl::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FORMAT: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_GRADCHECK: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "umurl", version, about = "Multi-modal self-supervised skeleton representation learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic labelled dataset.
    Synth(SynthArgs),
    /// Pre-train a baseline or UmURL model.
    Pretrain(PretrainArgs),
    /// Linear probe on frozen representations (train split fits, test split scores).
    Probe(ProbeArgs),
    /// Cosine nearest-neighbour retrieval, test queries against the train gallery.
    Retrieve(EvalArgs),
    /// Per-modality distance correlation between inputs and representations.
    Diagnose(DiagnoseArgs),
    /// Finite-difference check of every loss gradient.
    Gradcheck(GradcheckArgs),
    /// Write representations as CSV.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "balanced")]
    pub scenario: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 6)]
    pub classes: usize,
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    #[arg(long, default_value_t = 64)]
    pub frames: usize,
    #[arg(long, default_value_t = 8)]
    pub joints: usize,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON file with training-configuration keys; flags win over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Continue from this checkpoint instead of initialising.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Loss trace CSV (`epoch,component,value`).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long, default_value = "train")]
    pub split: String,
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub decay_epoch: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub modalities: Option<String>,
    #[arg(long)]
    pub fusion: Option<String>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub encoder_dim: Option<usize>,
    #[arg(long)]
    pub proj_dim: Option<usize>,
    /// Same augmentation draw for every modality of a view.
    #[arg(long)]
    pub shared_aug: bool,
    /// Disable the variance-covariance regulariser.
    #[arg(long)]
    pub no_vc: bool,
    #[arg(long)]
    pub shared_embedding: bool,
    #[arg(long)]
    pub shared_projector: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Comma-separated subset of the trained modalities; defaults to all of them.
    #[arg(long)]
    pub modalities: Option<String>,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    #[arg(long, default_value_t = 1.0)]
    pub fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    /// CSV report (`metric,modality,value`).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// JSON summary.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also check the full tiny-model objectives (slow).
    #[arg(long)]
    pub model: bool,
    #[arg(long, default_value_t = FD_STEP)]
    pub step: f64,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "all")]
    pub split: String,
}

/// Errors surfaced to the shell, each with its exit code.
#[derive(Debug)]
pub enum Failure {
    Core(Error),
    GradCheck(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(Error::Io(e))
    }
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Core(Error::DataFormat { .. }) => EXIT_FORMAT,
            Failure::Core(Error::Numeric(_)) => EXIT_NUMERIC,
            Failure::Core(_) => EXIT_USAGE,
            Failure::GradCheck(_) => EXIT_GRADCHECK,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Core(e) => write!(f, "{e}"),
            Failure::GradCheck(m) => write!(f, "gradient check failed: {m}"),
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Core(Error::Usage(msg.into()))
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<T, Failure> {
    s.parse().map_err(Failure::Core)
}

/// Loads a dataset, prefixing I/O failures with the path.
fn load_data(path: &Path) -> Result<Dataset, Failure> {
    read_dataset(path).map_err(|e| match e {
        Error::Io(io) => usage(format!("cannot read {}: {io}", path.display())),
        other => Failure::Core(other),
    })
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, Failure> {
    Checkpoint::load(path).map_err(|e| match e {
        Error::Io(io) => usage(format!("cannot read {}: {io}", path.display())),
        other => Failure::Core(other),
    })
}

/// Config file first, then every flag that was given.
pub fn merged_config(args: &PretrainArgs) -> Result<TrainConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str::<TrainConfig>(&text)
                .map_err(|e| usage(format!("config {}: {e}", path.display())))?
        }
        None => TrainConfig::default(),
    };
    if let Some(m) = &args.mode {
        cfg.mode = parse::<TrainMode>(m)?;
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.lr {
        cfg.optimizer.lr = v;
    }
    if let Some(v) = args.decay_epoch {
        cfg.decay_epoch = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(m) = &args.modalities {
        cfg.model.modalities = parse_modalities(m)?;
    }
    if let Some(f) = &args.fusion {
        cfg.model.fusion = parse::<FusionStrategy>(f)?;
    }
    if let Some(v) = args.embed_dim {
        cfg.model.embed_dim = v;
    }
    if let Some(v) = args.encoder_dim {
        cfg.model.encoder_dim = v;
    }
    if let Some(v) = args.proj_dim {
        cfg.model.proj_dim = v;
    }
    cfg.shared_aug |= args.shared_aug;
    cfg.model.shared_embedding |= args.shared_embedding;
    cfg.model.shared_projector |= args.shared_projector;
    if args.no_vc {
        cfg.loss = cfg.loss.without_vc();
    }
    Ok(cfg)
}

fn write_text(path: &Path, text: &str) -> Outcome {
    fs::write(path, text).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
}

fn synth(args: &SynthArgs, out: &mut dyn std::io::Write) -> Outcome {
    let scenario: Scenario = parse(&args.scenario)?;
    let data = generate_synthetic(scenario, args.classes, args.per_class, args.frames, args.joints, args.seed)?;
    write_dataset(&data, &args.out)?;
    writeln!(
        out,
        "wrote {} samples ({} classes, T={}, V={}) to {}",
        data.len(),
        data.num_classes,
        data.frames,
        data.joints,
        args.out.display()
    )?;
    Ok(())
}

fn pretrain(args: &PretrainArgs, out: &mut dyn std::io::Write) -> Outcome {
    let split: SplitKind = parse(&args.split)?;
    let data = load_data(&args.data)?.split(split);
    let cfg = merged_config(args)?;
    let mut trainer = match &args.resume {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            let mut fresh = cfg.clone();
            fresh.model.frames = data.frames;
            fresh.model.channels = data.channels;
            fresh.model.joints = data.joints;
            if ckpt.fingerprint() != fresh.model.fingerprint() {
                return Err(usage(format!(
                    "checkpoint {} was trained with a different model configuration",
                    path.display()
                )));
            }
            let mut t = Trainer::from_checkpoint(ckpt)?;
            t.config.epochs = cfg.epochs;
            t
        }
        None => Trainer::new(cfg, &data)?,
    };
    let trace = trainer.fit(&data)?;
    trainer.checkpoint().save(&args.out)?;
    if let Some(path) = &args.trace {
        write_text(path, &trace_to_csv(&trace))?;
    }
    let last = trace.iter().rev().find(|r| r.component == "total");
    writeln!(
        out,
        "trained {:?} for {} epochs ({} steps), final loss {}, checkpoint {}",
        trainer.config.mode,
        trainer.epochs_completed,
        trainer.steps,
        last.map_or("n/a".to_string(), |r| format!("{:.6}", r.value)),
        args.out.display()
    )?;
    Ok(())
}

struct Loaded {
    data: Dataset,
    ckpt: Checkpoint,
    modalities: Vec<Modality>,
}

fn load_eval(args: &EvalArgs) -> Result<Loaded, Failure> {
    let data = load_data(&args.data)?;
    let ckpt = load_checkpoint(&args.ckpt)?;
    let modalities = match &args.modalities {
        Some(m) => parse_modalities(m)?,
        None => ckpt.config.model.modalities.clone(),
    };
    Ok(Loaded { data, ckpt, modalities })
}

fn split_reps(l: &Loaded) -> Result<(RepresentationSet, RepresentationSet), Failure> {
    let model = l.ckpt.model()?;
    let train = extract_representations(&l.data.split(SplitKind::Train), &model, &l.modalities)?;
    let test = extract_representations(&l.data.split(SplitKind::Test), &model, &l.modalities)?;
    Ok((train, test))
}

fn write_reports(report: &EvaluationReport, csv: &Option<PathBuf>, json: &Option<PathBuf>) -> Outcome {
    if let Some(p) = csv {
        write_text(p, &report.to_csv())?;
    }
    if let Some(p) = json {
        write_text(p, &report.to_json())?;
    }
    Ok(())
}

fn probe(args: &ProbeArgs, out: &mut dyn std::io::Write) -> Outcome {
    let l = load_eval(&args.eval)?;
    let (train, test) = split_reps(&l)?;
    let config = ProbeConfig {
        epochs: args.epochs,
        lr: args.lr,
    };
    let top1 = linear_probe_with(&train, &test, args.fraction, args.seed, config)?;
    writeln!(out, "top1={top1:.4}")?;
    let report = EvaluationReport {
        top1: Some((l.modalities.clone(), top1)),
        contribution: None,
    };
    write_reports(&report, &args.report, &args.json)
}

fn retrieve(args: &EvalArgs, out: &mut dyn std::io::Write) -> Outcome {
    let l = load_eval(args)?;
    let (gallery, queries) = split_reps(&l)?;
    writeln!(out, "top1={:.4}", knn_retrieve(&queries, &gallery)?)?;
    Ok(())
}

fn diagnose(args: &DiagnoseArgs, out: &mut dyn std::io::Write) -> Outcome {
    let l = load_eval(&args.eval)?;
    let split: SplitKind = parse(&args.split)?;
    let data = l.data.split(split);
    let reps = extract_representations(&data, &l.ckpt.model()?, &l.modalities)?;
    let c = ContributionReport::measure(&data, &reps.values, &reps.modalities)?;
    for (m, v) in &c.per_modality {
        writeln!(out, "dcor {m}={v:.4}")?;
    }
    writeln!(out, "gap={:.4}", c.gap)?;
    let report = EvaluationReport {
        top1: None,
        contribution: Some(c),
    };
    write_reports(&report, &args.report, &args.json)
}

fn gradcheck(args: &GradcheckArgs, out: &mut dyn std::io::Write) -> Outcome {
    if !(args.step > 0.0 && args.step.is_finite()) {
        return Err(usage("--step must be positive"));
    }
    let mut checks = loss_checks_with_step(args.seed, args.step)?;
    if args.model {
        checks.extend(model_checks_with_step(args.seed, args.step)?);
    }
    let mut failed = Vec::new();
    for c in &checks {
        let r = &c.report;
        writeln!(
            out,
            "{:<22} max_rel_err={:.3e} checked={} skipped_at_kinks={} {}",
            c.term,
            r.max_error(),
            r.checked,
            r.skipped_at_kinks,
            if c.passed() { "ok" } else { "FAIL" }
        )?;
        if !c.passed() {
            failed.push(c.term.clone());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::GradCheck(failed.join(", ")))
    }
}

/// `label,dim_0,…` rows at nine significant digits.
pub fn embeddings_csv(reps: &RepresentationSet) -> String {
    let mut s = String::from("label");
    for j in 0..reps.dim() {
        write!(s, ",dim_{j}").unwrap();
    }
    s.push('\n');
    for i in 0..reps.len() {
        write!(s, "{}", reps.labels[i]).unwrap();
        for v in reps.row(i) {
            write!(s, ",{v:.8e}").unwrap();
        }
        s.push('\n');
    }
    s
}

fn export(args: &ExportArgs, out: &mut dyn std::io::Write) -> Outcome {
    let l = load_eval(&args.eval)?;
    let split: SplitKind = parse(&args.split)?;
    let reps = extract_representations(&l.data.split(split), &l.ckpt.model()?, &l.modalities)?;
    write_text(&args.out, &embeddings_csv(&reps))?;
    writeln!(out, "wrote {} rows of width {} to {}", reps.len(), reps.dim(), args.out.display())?;
    Ok(())
}

pub fn execute(cli: &Cli, out: &mut dyn std::io::Write) -> Outcome {
    match &cli.command {
        Command::Synth(a) => synth(a, out),
        Command::Pretrain(a) => pretrain(a, out),
        Command::Probe(a) => probe(a, out),
        Command::Retrieve(a) => retrieve(a, out),
        Command::Diagnose(a) => diagnose(a, out),
        Command::Gradcheck(a) => gradcheck(a, out),
        Command::Export(a) => export(a, out),
    }
}

/// Parses `argv`, runs the verb and returns the process exit code.
pub fn run<I, S>(argv: I, out: &mut dyn std::io::Write, err: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = write!(err, "{e}");
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match execute(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {f}");
            f.exit_code()
        }
    }
}
