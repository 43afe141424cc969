//! Command-line front end: synthetic dataset generation, training,
//! enhancement, benchmarking and metric evaluation.
//!
//! Exit codes: 0 success, 1 I/O or unreadable data, 2 usage or configuration,
//! 3 training divergence.

pub mod benchmark;
pub mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use aquaclear::dataops::{list_images, make_pairs, synthetic_scene, PairManifest, MANIFEST_FILE};
use aquaclear::image::{to_float, to_u8};
use aquaclear::io::{load_image, save_image};
use aquaclear::metrics::{csv_row, evaluate_pair, CSV_HEADER};
use aquaclear::pipeline::{Enhancer, Method, MethodContext, Stage, StageOrder};
use aquaclear::resize::upscale;
use aquaclear::srcnn::{load_model, save_model, srcnn_init, train_from, TrainingSet};
use aquaclear::{Error, ImageF, SrcnnModelF};
use clap::{Parser, Subcommand};

use crate::config::{load_config, PipelineConfig};

pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

pub const MODEL_FILE: &str = "model.srcnn";
pub const LOSS_FILE: &str = "loss.csv";
pub const THREADS_ENV: &str = "AQUACLEAR_THREADS";

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self { code: EXIT_IO, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io { .. } | Error::Format { .. } | Error::Version { .. } | Error::Empty(_) => EXIT_IO,
            Error::Divergence { .. } => EXIT_DIVERGENCE,
            Error::Shape(_) | Error::Parameter(_) | Error::Numeric(_) | Error::Domain(_) => EXIT_USAGE,
        };
        Self { code, message: e.to_string() }
    }
}

#[derive(Debug, Parser)]
#[command(name = "aquaclear", version, about = "Underwater image enhancement: SRCNN super-resolution + multi-scale Retinex")]
pub struct Cli {
    /// JSON configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a degraded/ground-truth pair set with a manifest.
    Degrade {
        /// Directory of clean source images.
        #[arg(long, required_unless_present = "synthetic", conflicts_with = "synthetic")]
        input: Option<PathBuf>,
        /// Generate this many synthetic scenes instead of reading --input.
        #[arg(long)]
        synthetic: Option<usize>,
        /// Side length of synthetic scenes.
        #[arg(long, default_value_t = 96)]
        size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an SRCNN model on a manifest.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        iterations: Option<usize>,
        /// Continue from an existing model instead of a fresh initialization.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Enhance one image or every image in a directory.
    Enhance {
        #[arg(long)]
        input: PathBuf,
        /// Output directory; files keep their stem and are written as PNG.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        /// full, srcnn_only or msr_only.
        #[arg(long, value_parser = parse_stage)]
        stage: Option<Stage>,
        /// Run Retinex before super-resolution.
        #[arg(long)]
        reverse_order: bool,
    },
    /// Compare enhancement methods over a manifest.
    Benchmark {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Comma-separated method names.
        #[arg(long, value_delimiter = ',', value_parser = parse_method)]
        methods: Option<Vec<Method>>,
        /// Timing repetitions per method and image; 0 disables timing.
        #[arg(long)]
        timing_reps: Option<usize>,
    },
    /// Full-reference metrics of one image against another.
    Metrics {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        candidate: PathBuf,
        /// Also write metrics.csv into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_stage(s: &str) -> Result<Stage, String> {
    serde_json::from_value(serde_json::Value::String(s.into()))
        .map_err(|_| format!("unknown stage {s:?} (expected full, srcnn_only or msr_only)"))
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Sizes the global worker pool from `AQUACLEAR_THREADS`, if set.
pub fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::config(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
    // A pool that is already initialized keeps its size.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses arguments and runs the command, returning the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match init_threads().and_then(|_| execute(&cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn effective_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut cfg = load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.degradation.seed = seed;
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = effective_config(cli)?;
    match &cli.command {
        Command::Degrade { input, synthetic, size, out } => cmd_degrade(&cfg, input.as_deref(), *synthetic, *size, out),
        Command::Train { manifest, out, iterations, init } => {
            cmd_train(&cfg, manifest, out, *iterations, init.as_deref())
        }
        Command::Enhance { input, out, model, stage, reverse_order } => {
            cmd_enhance(&cfg, input, out, model.as_deref(), *stage, *reverse_order)
        }
        Command::Benchmark { manifest, out, model, methods, timing_reps } => {
            cmd_benchmark(&cfg, manifest, out, model.as_deref(), methods.as_deref(), *timing_reps)
        }
        Command::Metrics { reference, candidate, out } => cmd_metrics(&cfg, reference, candidate, out.as_deref()),
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("{}: {e}", dir.display())))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

pub fn cmd_degrade(
    cfg: &PipelineConfig,
    input: Option<&Path>,
    synthetic: Option<usize>,
    size: usize,
    out: &Path,
) -> Result<(), CliError> {
    let source = match (input, synthetic) {
        (Some(dir), _) => dir.to_path_buf(),
        (None, Some(n)) => {
            if n == 0 || size < 8 {
                return Err(CliError::config("--synthetic needs at least one scene of size >= 8"));
            }
            let dir = out.join("source");
            create_dir(&dir)?;
            for i in 0..n {
                let img: ImageF = synthetic_scene(size, size, cfg.degradation.seed.wrapping_add(i as u64))?;
                save_image(&to_u8(&img)?, dir.join(format!("scene_{i:03}.png")))?;
            }
            dir
        }
        (None, None) => return Err(CliError::config("degrade needs --input or --synthetic")),
    };
    if !source.is_dir() {
        return Err(CliError::io(format!("input directory {} does not exist", source.display())));
    }
    let manifest = make_pairs(&source, out, &cfg.degradation)?;
    println!("wrote {} pairs to {}", manifest.pairs.len(), out.join(MANIFEST_FILE).display());
    Ok(())
}

fn load_training_set(manifest: &PairManifest, factor: usize) -> Result<TrainingSet<f64>, CliError> {
    let mut pairs = Vec::with_capacity(manifest.pairs.len());
    for i in 0..manifest.pairs.len() {
        let (degraded, gt) = manifest.load_pair::<f64>(i)?;
        let lr_up = upscale(&degraded, factor)?;
        if !lr_up.same_shape(&gt) {
            return Err(CliError::io(format!(
                "pair {}: upscaled input {:?} does not match ground truth {:?}",
                manifest.name(i),
                lr_up.shape(),
                gt.shape()
            )));
        }
        pairs.push((lr_up, gt));
    }
    Ok(TrainingSet::new(pairs)?)
}

pub fn cmd_train(
    cfg: &PipelineConfig,
    manifest_path: &Path,
    out: &Path,
    iterations: Option<usize>,
    init: Option<&Path>,
) -> Result<(), CliError> {
    let mut tcfg = cfg.train.clone();
    if let Some(n) = iterations {
        tcfg.iterations = n;
    }
    tcfg.validate().map_err(|e| CliError::config(format!("train: {e}")))?;
    let manifest = PairManifest::load(manifest_path)?;
    let factor = manifest.config.downsample_factor;
    if factor != tcfg.scale_factor {
        return Err(CliError::config(format!(
            "train.scale_factor is {} but the manifest was degraded by {factor}",
            tcfg.scale_factor
        )));
    }
    let set = load_training_set(&manifest, factor)?;
    let model: SrcnnModelF = match init {
        Some(p) => load_model(p)?,
        None => srcnn_init(&tcfg.architecture, set.channels(), tcfg.seed)?,
    };
    let (model, history) = train_from(model, &set, &tcfg, |_, _| {})?;
    create_dir(out)?;
    save_model(&model, out.join(MODEL_FILE))?;
    let mut csv = String::from("iteration,loss\n");
    for (i, l) in history.iter().enumerate() {
        let _ = writeln!(csv, "{i},{l:e}");
    }
    write_file(&out.join(LOSS_FILE), csv)?;
    match (history.first(), history.last()) {
        (Some(first), Some(last)) => println!("trained {} iterations: loss {first:e} -> {last:e}", history.len()),
        _ => println!("wrote initialized model (0 iterations)"),
    }
    Ok(())
}

fn model_for(cfg: &PipelineConfig, flag: Option<&Path>, needed: bool, what: &str) -> Result<Option<SrcnnModelF>, CliError> {
    match flag.or(cfg.model.as_deref()) {
        Some(p) => Ok(Some(load_model(p)?)),
        None if needed => Err(CliError::config(format!("{what} needs an SRCNN model (--model or config \"model\")"))),
        None => Ok(None),
    }
}

pub fn cmd_enhance(
    cfg: &PipelineConfig,
    input: &Path,
    out: &Path,
    model_flag: Option<&Path>,
    stage: Option<Stage>,
    reverse_order: bool,
) -> Result<(), CliError> {
    let stage = stage.unwrap_or(cfg.stage);
    let order = if reverse_order { StageOrder::MsrFirst } else { cfg.order };
    let model = model_for(cfg, model_flag, stage.needs_model(), &format!("stage {stage:?}"))?;
    let files = if input.is_dir() { list_images(input)? } else { vec![input.to_path_buf()] };
    let enhancer = Enhancer { model: model.as_ref(), scale_factor: cfg.scale_factor, msr: &cfg.msr, stage, order };
    create_dir(out)?;
    for file in &files {
        let mut img: ImageF = to_float(&load_image(file)?);
        if model.as_ref().is_some_and(|m| m.channels() == 3) {
            img = img.gray_to_rgb()?;
        }
        let result = enhancer.enhance(&img)?;
        let stem = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "image".into());
        let dest = out.join(format!("{stem}.png"));
        save_image(&to_u8(&result)?, &dest)?;
        println!("{}", dest.display());
    }
    Ok(())
}

pub fn cmd_benchmark(
    cfg: &PipelineConfig,
    manifest_path: &Path,
    out: &Path,
    model_flag: Option<&Path>,
    methods: Option<&[Method]>,
    timing_reps: Option<usize>,
) -> Result<(), CliError> {
    let methods = methods.unwrap_or(&cfg.benchmark.methods);
    if methods.is_empty() {
        return Err(CliError::config("no methods selected"));
    }
    let reps = timing_reps.unwrap_or(cfg.benchmark.timing_reps);
    let needs_model = methods.iter().any(|m| m.needs_model());
    let model = model_for(cfg, model_flag, needs_model, "the srcnn and proposed methods")?;
    let manifest = PairManifest::load(manifest_path)?;
    let mut ctx = MethodContext::new(model.as_ref(), cfg.scale_factor);
    ctx.msr = cfg.msr.clone();
    ctx.clahe = cfg.clahe.clone();
    ctx.ssr_sigma = cfg.ssr_sigma;
    let outcome = benchmark::run_benchmark(&manifest, methods, &ctx, &cfg.ssim, reps);
    benchmark::write_outputs(out, &outcome)?;
    print!("{}", outcome.table.to_markdown());
    for f in &outcome.failures {
        eprintln!("failed: {} on {}: {}", f.method, f.image, f.error);
    }
    if outcome.results.is_empty() {
        return Err(CliError::io("every method failed on every image"));
    }
    Ok(())
}

pub fn cmd_metrics(cfg: &PipelineConfig, reference: &Path, candidate: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let a: ImageF = to_float(&load_image(reference)?);
    let b: ImageF = to_float(&load_image(candidate)?);
    let report = evaluate_pair(&a, &b, &cfg.ssim)?;
    let name = candidate.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let text = format!("{CSV_HEADER}\n{}\n", csv_row("candidate", &name, &report));
    print!("{text}");
    if let Some(dir) = out {
        create_dir(dir)?;
        write_file(&dir.join("metrics.csv"), text)?;
    }
    Ok(())
}
