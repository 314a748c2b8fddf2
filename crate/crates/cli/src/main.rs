//! Command-line front end for phantom generation, ADC maps, classifier
//! training and evaluation, and the baseline and noise-sweep experiments.
//!
//! Exit codes: 0 on success, 2 on invalid input or usage, 1 on internal
//! failures. Diagnostics go to stderr; results go to files only.

mod provenance;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dwspectral::adc::{adc_map, save_adc, AdcConfig};
use dwspectral::classifiers::{classify_stack, Method, TrainedModel};
use dwspectral::harness::{run_baseline, run_sweep, train_model, ExperimentConfig};
use dwspectral::image::{load_label_map, load_stack, read_json, save_label_map, save_stack, write_json, LabelMap};
use dwspectral::metrics::{confusion_volume, csv_row, volumes, MetricsReport, CSV_HEADER};
use dwspectral::physics::{add_noise_to_stack, render_phantom, AcquisitionParams, NoiseConfig, PhantomSpec};
use serde::Serialize;

use provenance::RunRecord;

#[derive(Debug, Parser)]
#[command(name = "dwspectral", version, about = "Multispectral classification of diffusion-weighted MR images")]
struct Cli {
    /// Seed for every seeded step of the subcommand (noise, MLP and SOM training).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for outputs without an explicit --out, and for run.json.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a phantom volume: one stack manifest, band images and truth map per slice.
    Phantom(PhantomArgs),
    /// Add Gaussian noise to every band of a stack.
    Noise(NoiseArgs),
    /// Compute the ADC map of a stack.
    Adc(AdcArgs),
    /// Train a classifier on a stack and its label map.
    Train(TrainArgs),
    /// Apply a trained model to a stack.
    Classify(ClassifyArgs),
    /// Compare predicted label maps with reference maps.
    Eval(EvalArgs),
    /// Train every classifier on the phantom and evaluate the noiseless volume.
    Baseline(ExperimentArgs),
    /// Evaluate trained classifiers over noise levels and seeds.
    Sweep(ExperimentArgs),
}

#[derive(Debug, Args, Serialize)]
struct PhantomArgs {
    /// Phantom description (JSON); the built-in head phantom when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Acquisition parameters (JSON); K = 1, TE = 100 ms, b = 0/500/1000 when omitted.
    #[arg(long)]
    acq: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct NoiseArgs {
    /// Stack manifest.
    #[arg(long)]
    stack: PathBuf,
    /// Noise standard deviation as a fraction of full scale, in [0, 0.20].
    #[arg(long, allow_negative_numbers = true)]
    xi: f64,
    /// Output directory for the noisy stack.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct AdcArgs {
    #[arg(long)]
    stack: PathBuf,
    /// Proportionality constant C.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    c: f64,
    /// Divide the sum over bands by the number of terms.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    normalize: bool,
    /// Signal floor applied before the logarithm.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    epsilon: f64,
    /// Output base path; writes <out>.pgm, <out>.json and <out>.f64.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    /// po, mlp, ko or ko-adc.
    #[arg(long)]
    method: String,
    #[arg(long)]
    stack: PathBuf,
    /// Label map (8-bit PGM, codes 1..3) giving the class of every pixel.
    #[arg(long)]
    labels: PathBuf,
    /// Classifier settings (an experiment config; only mlp, som and adc are used).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output model file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct ClassifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    stack: PathBuf,
    /// Output label map.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct EvalArgs {
    /// Predicted label maps, paired in order with --truth.
    #[arg(long, required = true, num_args = 1..)]
    pred: Vec<PathBuf>,
    #[arg(long, required = true, num_args = 1..)]
    truth: Vec<PathBuf>,
    /// Output directory for metrics.json and metrics.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct ExperimentArgs {
    /// Experiment config (JSON); defaults for every missing field.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Invalid user input detected by the front end itself.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct Usage(String);

struct RunContext {
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
}

impl RunContext {
    fn output(&self, explicit: &Option<PathBuf>, default: &str) -> PathBuf {
        match explicit {
            Some(p) => p.clone(),
            None => self.out_dir.clone().unwrap_or_else(|| PathBuf::from(".")).join(default),
        }
    }

    /// Where run.json goes: --out-dir, else the output directory itself.
    fn record_dir(&self, output_dir: &Path) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| output_dir.to_path_buf())
    }
}

fn parent_dir(file: &Path) -> PathBuf {
    match file.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn stem_of(manifest: &Path) -> String {
    manifest.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "stack".into())
}

fn load_config(path: &Option<PathBuf>, rec: &mut RunRecord) -> Result<ExperimentConfig> {
    match path {
        Some(p) => {
            rec.input(p)?;
            let cfg = ExperimentConfig::load(p)?;
            if let Some(spec) = &cfg.phantom_spec {
                rec.input(spec)?;
            }
            Ok(cfg)
        }
        None => Ok(ExperimentConfig::default()),
    }
}

fn phantom(ctx: &RunContext, args: &PhantomArgs) -> Result<()> {
    let mut rec = RunRecord::new("phantom", args)?;
    let spec: PhantomSpec = match &args.spec {
        Some(p) => {
            let s = read_json(p)?;
            rec.input(p)?;
            s
        }
        None => PhantomSpec::default(),
    };
    let acq: AcquisitionParams = match &args.acq {
        Some(p) => {
            let a = read_json(p)?;
            rec.input(p)?;
            a
        }
        None => AcquisitionParams::default(),
    };
    let ph = render_phantom(&spec, &acq)?;
    let out = ctx.output(&args.out, "phantom");
    create_dir(&out)?;
    for (stack, truth) in ph.stacks.iter().zip(&ph.truth) {
        let stem = format!("slice_{:02}", stack.slice_index());
        save_stack(stack, &out, &stem)?;
        save_label_map(truth, out.join(format!("{stem}_truth.pgm")))?;
    }
    write_json(&spec, out.join("phantom_spec.json"))?;
    write_json(&acq, out.join("acquisition.json"))?;
    rec.write(&ctx.record_dir(&out))
}

fn noise(ctx: &RunContext, args: &NoiseArgs) -> Result<()> {
    let mut rec = RunRecord::new("noise", args)?;
    let seed = ctx.seed.unwrap_or(1);
    rec.seed("noise", seed);
    let cfg = NoiseConfig::new(args.xi, seed)?;
    rec.stack_input(&args.stack)?;
    let stack = load_stack::<f64>(&args.stack)?;
    let noisy = add_noise_to_stack(&stack, &cfg)?;
    let out = ctx.output(&args.out, "noisy");
    create_dir(&out)?;
    save_stack(&noisy, &out, &stem_of(&args.stack))?;
    rec.write(&ctx.record_dir(&out))
}

fn adc(ctx: &RunContext, args: &AdcArgs) -> Result<()> {
    let mut rec = RunRecord::new("adc", args)?;
    let cfg = AdcConfig { c_const: args.c, normalize_by_terms: args.normalize, epsilon: args.epsilon };
    cfg.validate()?;
    rec.stack_input(&args.stack)?;
    let stack = load_stack::<f64>(&args.stack)?;
    let map = adc_map(&stack, &cfg)?;
    let out = ctx.output(&args.out, "adc");
    let dir = parent_dir(&out);
    create_dir(&dir)?;
    save_adc(&map, &out)?;
    rec.write(&ctx.record_dir(&dir))
}

fn train(ctx: &RunContext, args: &TrainArgs) -> Result<()> {
    let mut rec = RunRecord::new("train", args)?;
    let method: Method = args.method.parse()?;
    let mut cfg = load_config(&args.config, &mut rec)?;
    if let Some(s) = ctx.seed {
        cfg.mlp.seed = s;
        cfg.som.seed = s;
    }
    match method {
        Method::Mlp => rec.seed("mlp", cfg.mlp.seed),
        Method::Ko | Method::KoAdc => rec.seed("som", cfg.som.seed),
        Method::Po => {}
    }
    rec.stack_input(&args.stack)?;
    rec.input(&args.labels)?;
    let stack = load_stack::<f64>(&args.stack)?;
    let labels = load_label_map(&args.labels)?;
    let model = train_model(method, &stack, &labels, &cfg)?;
    let out = ctx.output(&args.out, "model.json");
    let dir = parent_dir(&out);
    create_dir(&dir)?;
    write_json(&model, &out)?;
    rec.write(&ctx.record_dir(&dir))
}

fn classify(ctx: &RunContext, args: &ClassifyArgs) -> Result<()> {
    let mut rec = RunRecord::new("classify", args)?;
    rec.input(&args.model)?;
    rec.stack_input(&args.stack)?;
    let model: TrainedModel = read_json(&args.model)?;
    let stack = load_stack::<f64>(&args.stack)?;
    let labels = classify_stack(&model, &stack)?;
    let out = ctx.output(&args.out, "labels.pgm");
    let dir = parent_dir(&out);
    create_dir(&dir)?;
    save_label_map(&labels, &out)?;
    rec.write(&ctx.record_dir(&dir))
}

#[derive(Serialize)]
struct EvalFile {
    metrics: MetricsReport,
    volumes: dwspectral::metrics::VolumeReport,
}

fn eval(ctx: &RunContext, args: &EvalArgs) -> Result<()> {
    let mut rec = RunRecord::new("eval", args)?;
    if args.pred.len() != args.truth.len() {
        return Err(Usage(format!("{} --pred maps but {} --truth maps", args.pred.len(), args.truth.len())).into());
    }
    let mut load = |paths: &[PathBuf]| -> Result<Vec<LabelMap>> {
        paths
            .iter()
            .map(|p| {
                rec.input(p)?;
                Ok(load_label_map(p)?)
            })
            .collect()
    };
    let preds = load(&args.pred)?;
    let truths = load(&args.truth)?;
    let metrics = MetricsReport::from_matrix(confusion_volume(&preds, &truths)?)?;
    let vols = volumes(&preds)?;
    let out = ctx.output(&args.out, "eval");
    create_dir(&out)?;
    write_json(&EvalFile { metrics, volumes: vols }, out.join("metrics.json"))?;
    let csv = format!("{CSV_HEADER}\n{}\n", csv_row(&metrics, &vols));
    fs::write(out.join("metrics.csv"), csv).with_context(|| format!("writing {}", out.display()))?;
    rec.write(&ctx.record_dir(&out))
}

fn experiment_config(ctx: &RunContext, args: &ExperimentArgs, rec: &mut RunRecord) -> Result<ExperimentConfig> {
    let mut cfg = load_config(&args.config, rec)?;
    if let Some(s) = ctx.seed {
        cfg.mlp.seed = s;
        cfg.som.seed = s;
    }
    rec.seed("mlp", cfg.mlp.seed);
    rec.seed("som", cfg.som.seed);
    Ok(cfg)
}

fn baseline(ctx: &RunContext, args: &ExperimentArgs) -> Result<()> {
    let mut rec = RunRecord::new("baseline", args)?;
    let cfg = experiment_config(ctx, args, &mut rec)?;
    let result = run_baseline(&cfg)?;
    let out = ctx.output(&args.out, "baseline");
    result.write(&out)?;
    write_json(&cfg, out.join("config.json"))?;
    rec.write(&ctx.record_dir(&out))
}

fn sweep(ctx: &RunContext, args: &ExperimentArgs) -> Result<()> {
    let mut rec = RunRecord::new("sweep", args)?;
    let cfg = experiment_config(ctx, args, &mut rec)?;
    let result = run_sweep(&cfg)?;
    let out = ctx.output(&args.out, "sweep");
    result.write(&out)?;
    write_json(&cfg, out.join("config.json"))?;
    rec.write(&ctx.record_dir(&out))
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("DWSPECTRAL_THREADS") {
        let n: usize = v.parse().map_err(|_| Usage(format!("DWSPECTRAL_THREADS={v:?} is not a thread count")))?;
        if n == 0 {
            bail!(Usage("DWSPECTRAL_THREADS must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let ctx = RunContext { seed: cli.seed, out_dir: cli.out_dir };
    match &cli.command {
        Command::Phantom(a) => phantom(&ctx, a),
        Command::Noise(a) => noise(&ctx, a),
        Command::Adc(a) => adc(&ctx, a),
        Command::Train(a) => train(&ctx, a),
        Command::Classify(a) => classify(&ctx, a),
        Command::Eval(a) => eval(&ctx, a),
        Command::Baseline(a) => baseline(&ctx, a),
        Command::Sweep(a) => sweep(&ctx, a),
    }
}

/// 2 for anything caused by the user's input, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<dwspectral::Error>() {
            return if e.is_validation() { 2 } else { 1 };
        }
        if cause.is::<Usage>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<std::io::Error>() {
            use std::io::ErrorKind::*;
            return if matches!(e.kind(), NotFound | InvalidData | InvalidInput | UnexpectedEof) { 2 } else { 1 };
        }
    }
    1
}

/// The error and its causes, skipping causes already spelled out by the
/// message that wraps them.
fn describe(err: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !msg.ends_with(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    msg
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
