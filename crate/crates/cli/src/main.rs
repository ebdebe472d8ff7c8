//! `seamforge` command-line tool.
//!
//! Exit codes: 0 success, 2 bad parameters, 3 I/O or data format failure,
//! 4 internal invariant violation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use seamforge::carver::{carve_to, mark_seams, remove_object, CarveOutcome};
use seamforge::forge::{forge, DatasetManifest, ForgeOptions, DEFAULT_RATES, MANIFEST_FILE};
use seamforge::imaging::{read_image, write_image, write_png};
use seamforge::nn::{build_detector, read_checkpoint, HeadKind, NormKind};
use seamforge::rng::substream_seed;
use seamforge::shallow::{
    evaluate_svm, extract_features, features_csv, parse_features_csv, project_2d, projection_csv,
    SvmConfig,
};
use seamforge::synth::procedural_image;
use seamforge::trainer::{
    evaluate, load_training_checkpoint, log_csv, train, LoadedDataset, LAST_CHECKPOINT,
};
use seamforge::{
    Axis, DetectorConfig, Error, InsertMode, Network, ObjectMask, SgdrSchedule, TamperSpec,
    TapPoint, TrainConfig,
};

const RUN_FILE: &str = "run.json";
const METRICS_FILE: &str = "metrics.csv";

#[derive(Parser)]
#[command(
    name = "seamforge",
    version,
    about = "Seam carving and seam-carving tamper detection"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
struct Global {
    /// Master seed; every random stream derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads [default: available parallelism].
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Resize by removing (negative) or inserting (positive) seams.
    Carve(Resize),
    /// Enlarge by seam insertion.
    Expand(Expand),
    /// Remove the masked region with seams, optionally restoring the width.
    RemoveObject(RemoveObject),
    /// Paint the first N optimal vertical seams.
    MarkSeams(MarkSeams),
    /// Build a tamper dataset: crops, carved variants, folds, manifest.
    ForgeDataset(ForgeDataset),
    /// Train a detector with SGDR on a forged dataset.
    Train(Train),
    /// Per-rate accuracy of a checkpoint (or the SVM on its features).
    Eval(Eval),
    /// Export tapped network features as CSV.
    ExtractFeatures(ExtractFeatures),
    /// PCA projection of a feature CSV onto two dimensions.
    Project(Project),
    /// Write procedurally textured images.
    Synth(Synth),
    /// Re-run the command recorded in a run.json.
    #[serde(skip)]
    Replay { run_json: PathBuf },
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
struct Resize {
    /// Width change in pixels.
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    width: i64,
    /// Height change in pixels.
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    height: i64,
    /// average | duplicate
    #[arg(long, default_value = "average")]
    insert_mode: InsertMode,
    input: PathBuf,
    output: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
struct Expand {
    /// Columns to add.
    #[arg(long, default_value_t = 0)]
    width: usize,
    /// Rows to add.
    #[arg(long, default_value_t = 0)]
    height: usize,
    /// average | duplicate
    #[arg(long, default_value = "average")]
    insert_mode: InsertMode,
    input: PathBuf,
    output: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
struct RemoveObject {
    /// Image of the input's size; pixels with any sample above 127 are removed.
    #[arg(long)]
    mask: PathBuf,
    /// Re-insert seams to get back to the original width.
    #[arg(long)]
    restore: bool,
    /// average | duplicate
    #[arg(long, default_value = "average")]
    insert_mode: InsertMode,
    input: PathBuf,
    output: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
struct MarkSeams {
    #[arg(long, default_value_t = 1)]
    n: usize,
    input: PathBuf,
    output: PathBuf,
}

/// `W` or `WxH`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct Size {
    width: usize,
    height: usize,
}

impl std::str::FromStr for Size {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| format!("bad size `{s}`"))
        };
        match s.split_once(['x', 'X']) {
            Some((w, h)) => Ok(Size {
                width: parse(w)?,
                height: parse(h)?,
            }),
            None => {
                let n = parse(s)?;
                Ok(Size {
                    width: n,
                    height: n,
                })
            }
        }
    }
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
struct ForgeDataset {
    /// Output directory; gets the images and manifest.jsonl.
    #[arg(long)]
    out: PathBuf,
    /// Tamper rates in percent.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_RATES)]
    rates: Vec<u32>,
    /// Center crop, `W` or `WxH`.
    #[arg(long, default_value = "224")]
    crop: Size,
    #[arg(long, default_value_t = 75)]
    quality: u8,
    /// vertical | horizontal
    #[arg(long, default_value = "vertical")]
    axis: Axis,
    /// Store variants re-enlarged to the crop size.
    #[arg(long)]
    restore_size: bool,
    /// Cross-validation folds.
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Source images, or directories of them.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
struct Model {
    /// desk | full
    #[arg(long, default_value = "desk")]
    config: DetectorConfig,
    /// sigmoid | softmax
    #[arg(long, default_value = "sigmoid")]
    head: HeadKind,
    /// affine | batch
    #[arg(long, default_value = "affine")]
    norm: NormKind,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
struct Train {
    /// Dataset directory holding manifest.jsonl.
    #[arg(long)]
    data: PathBuf,
    /// Receives best.ckpt, last.ckpt and metrics.csv.
    #[arg(long)]
    checkpoint_dir: PathBuf,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-2)]
    lr_max: f64,
    #[arg(long, default_value_t = 1e-5)]
    lr_min: f64,
    /// Fraction the peak learning rate loses after each cycle.
    #[arg(long, default_value_t = 0.3)]
    decay: f64,
    /// Epochs in the first cycle.
    #[arg(long, default_value_t = 10.0)]
    period: f64,
    #[arg(long, default_value_t = 1.0)]
    period_mult: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    /// Validation fold, excluded from training.
    #[arg(long, default_value_t = 0, conflicts_with = "all_folds")]
    held_out: usize,
    /// Train on every fold; no validation.
    #[arg(long)]
    all_folds: bool,
    #[arg(long)]
    no_augment: bool,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[command(flatten)]
    model: Model,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
struct Eval {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Accuracy CSV.
    #[arg(long)]
    out: PathBuf,
    /// Fold to score; the SVM trains on the others.
    #[arg(long, default_value_t = 0, conflicts_with = "all_folds")]
    fold: usize,
    /// Score every record with the network head.
    #[arg(long, conflicts_with = "svm")]
    all_folds: bool,
    /// Classify with a linear SVM on tapped features instead of the head.
    #[arg(long)]
    svm: bool,
    /// backbone | fc1
    #[arg(long, default_value = "fc1")]
    tap: TapPoint,
    #[arg(long, default_value_t = 1.0)]
    svm_c: f64,
    #[arg(long, default_value_t = 50)]
    svm_epochs: usize,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
struct ExtractFeatures {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// backbone | fc1
    #[arg(long, default_value = "fc1")]
    tap: TapPoint,
    /// Only records of this fold.
    #[arg(long)]
    fold: Option<usize>,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
struct Project {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
struct Synth {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    count: usize,
    #[arg(long, default_value = "64")]
    size: Size,
}

/// The resolved invocation echoed to `run.json`.
#[derive(Debug, Serialize, Deserialize)]
struct RunRecord {
    tool: String,
    version: String,
    seed: u64,
    jobs: usize,
    command: Command,
}

#[derive(Debug)]
enum Failure {
    Core(Error),
    Usage(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Io(_) => 3,
            Failure::Core(e) if e.is_usage() => 2,
            Failure::Core(e) if e.is_internal() => 4,
            Failure::Core(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Usage(m) | Failure::Io(m) => f.write_str(m),
        }
    }
}

type Outcome = Result<(), Failure>;

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Outcome {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn report(outcome: &CarveOutcome) {
    println!(
        "removed {} seams, inserted {} seams, total seam energy {:.6}",
        outcome.removed(),
        outcome.inserted(),
        outcome.total_energy()
    );
    println!(
        "output {}x{}",
        outcome.image.width(),
        outcome.image.height()
    );
}

fn resized(len: usize, delta: i64, what: &str) -> Result<usize, Failure> {
    let target = len as i64 + delta;
    if target < 1 {
        return Err(Failure::Usage(format!(
            "{what} change {delta} leaves nothing of {len} pixels"
        )));
    }
    Ok(target as usize)
}

fn run_resize(input: &Path, output: &Path, dw: i64, dh: i64, mode: InsertMode) -> Outcome {
    let img = read_image(input)?;
    let w = resized(img.width(), dw, "width")?;
    let h = resized(img.height(), dh, "height")?;
    let outcome = carve_to(&img, w, h, mode)?;
    write_image(output, &outcome.image)?;
    report(&outcome);
    Ok(())
}

fn image_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let entries = std::fs::read_dir(p).map_err(|e| io_err(p, e))?;
            for entry in entries {
                let path = entry.map_err(|e| io_err(p, e))?.path();
                let ext = path
                    .extension()
                    .and_then(|e| e.to_str())
                    .map(str::to_ascii_lowercase);
                if matches!(ext.as_deref(), Some("png" | "jpg" | "jpeg")) {
                    files.push(path);
                }
            }
        } else {
            files.push(p.clone());
        }
    }
    files.sort();
    Ok(files)
}

fn load_data(dir: &Path, jobs: usize) -> Result<LoadedDataset, Failure> {
    let manifest = DatasetManifest::read(&dir.join(MANIFEST_FILE))?;
    Ok(LoadedDataset::load(manifest, dir, jobs)?)
}

fn load_network(path: &Path) -> Result<Network<f32>, Failure> {
    Ok(read_checkpoint::<f32>(path)?.to_network()?)
}

fn run_train(t: &Train, g: &Global, jobs: usize) -> Outcome {
    let cfg = TrainConfig {
        epochs: t.epochs,
        batch_size: t.batch_size,
        momentum: t.momentum,
        schedule: SgdrSchedule {
            lr_max0: t.lr_max,
            lr_min: t.lr_min,
            decay: t.decay,
            period0: t.period,
            period_mult: t.period_mult,
        },
        seed: g.seed,
        held_out: (!t.all_folds).then_some(t.held_out),
        augment: if t.no_augment {
            seamforge::augment::AugmentConfig::none()
        } else {
            Default::default()
        },
        checkpoint_dir: Some(t.checkpoint_dir.clone()),
        jobs,
    };
    cfg.validate()?;
    std::fs::create_dir_all(&t.checkpoint_dir).map_err(|e| io_err(&t.checkpoint_dir, e))?;
    let data = load_data(&t.data, jobs)?;
    let (net, resume) = match &t.resume {
        Some(path) => {
            let (net, velocity, state) = load_training_checkpoint(path)?;
            (net, Some((velocity, state)))
        }
        None => {
            let spec = build_detector(t.model.config, t.model.head, t.model.norm);
            (Network::new(spec, g.seed)?, None)
        }
    };
    let out = train(&data, net, &cfg, resume)?;
    write_text(
        &t.checkpoint_dir.join(METRICS_FILE),
        &log_csv(&out.state.log),
    )?;
    if let Some(last) = out.state.log.last() {
        println!(
            "epoch {} loss {:.6} train_acc {:.4} val_acc {}",
            last.epoch,
            last.train_loss,
            last.train_acc,
            last.val_acc.map_or("-".into(), |v| format!("{v:.4}"))
        );
    }
    println!(
        "checkpoint {}",
        t.checkpoint_dir.join(LAST_CHECKPOINT).display()
    );
    Ok(())
}

fn run_eval(e: &Eval, g: &Global, jobs: usize) -> Outcome {
    let data = load_data(&e.data, jobs)?;
    let net = load_network(&e.checkpoint)?;
    let report = if e.svm {
        let cfg = SvmConfig {
            c: e.svm_c,
            epochs: e.svm_epochs,
            seed: g.seed,
            ..SvmConfig::default()
        };
        evaluate_svm(&data, &net, e.tap, e.fold, &cfg, jobs)?.1
    } else {
        evaluate(&data, &net, (!e.all_folds).then_some(e.fold), jobs)?
    };
    let csv = report.to_csv();
    write_text(&e.out, &csv)?;
    print!("{csv}");
    Ok(())
}

fn execute(cmd: &Command, g: &Global) -> Outcome {
    let jobs = g
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1);
    match cmd {
        Command::Carve(r) => run_resize(&r.input, &r.output, r.width, r.height, r.insert_mode)?,
        Command::Expand(x) => run_resize(
            &x.input,
            &x.output,
            x.width as i64,
            x.height as i64,
            x.insert_mode,
        )?,
        Command::RemoveObject(r) => {
            let img = read_image(&r.input)?;
            let mask = ObjectMask::from_image(&read_image(&r.mask)?);
            let outcome = remove_object(&img, &mask, r.restore.then_some(r.insert_mode))?;
            write_image(&r.output, &outcome.image)?;
            report(&outcome);
        }
        Command::MarkSeams(m) => {
            let img = read_image(&m.input)?;
            write_image(&m.output, &mark_seams(&img, m.n)?)?;
            println!("marked {} seams", m.n);
        }
        Command::ForgeDataset(f) => {
            let spec = TamperSpec {
                rates: f.rates.clone(),
                crop: (f.crop.width, f.crop.height),
                jpeg_quality: f.quality,
                axis: f.axis,
                restore_size: f.restore_size,
            };
            let opts = ForgeOptions {
                k: f.folds,
                seed: g.seed,
                jobs,
            };
            let sources = image_files(&f.inputs)?;
            let rep = forge(&spec, &sources, &f.out, &opts)?;
            for (path, err) in &rep.failures {
                eprintln!("skipped {}: {err}", path.display());
            }
            println!(
                "{} records from {} sources ({} skipped)",
                rep.manifest.records.len(),
                sources.len() - rep.failures.len(),
                rep.failures.len()
            );
        }
        Command::Train(t) => run_train(t, g, jobs)?,
        Command::Eval(e) => run_eval(e, g, jobs)?,
        Command::ExtractFeatures(x) => {
            let data = load_data(&x.data, jobs)?;
            let net = load_network(&x.checkpoint)?;
            let subset = data.indices_in(x.fold);
            let table = extract_features(&data, &net, x.tap, &subset, jobs)?;
            write_text(&x.out, &features_csv(&data, &table))?;
            println!("{} rows, {} features", table.matrix.n, table.matrix.d);
        }
        Command::Project(p) => {
            let text = std::fs::read_to_string(&p.features).map_err(|e| io_err(&p.features, e))?;
            let (meta, x) = parse_features_csv(&text)?;
            let proj = project_2d(&x)?;
            write_text(&p.out, &projection_csv(&meta, &proj))?;
            println!(
                "explained variance {:.6} {:.6}",
                proj.variances[0], proj.variances[1]
            );
        }
        Command::Synth(s) => {
            if s.size.width == 0 || s.size.height == 0 {
                return Err(Failure::Usage("image size must be at least 1x1".into()));
            }
            std::fs::create_dir_all(&s.out).map_err(|e| io_err(&s.out, e))?;
            for i in 0..s.count {
                let img = procedural_image(
                    substream_seed(g.seed, "synth", i as u64),
                    s.size.width,
                    s.size.height,
                );
                write_png(&s.out.join(format!("synth_{i:04}.png")), &img)?;
            }
            println!("{} images in {}", s.count, s.out.display());
        }
        Command::Replay { run_json } => {
            let text = std::fs::read_to_string(run_json).map_err(|e| io_err(run_json, e))?;
            let rec: RunRecord = serde_json::from_str(&text)
                .map_err(|e| Failure::Usage(format!("{}: {e}", run_json.display())))?;
            let g = Global {
                seed: rec.seed,
                jobs: Some(rec.jobs),
            };
            return run(&rec.command, &g);
        }
    }
    Ok(())
}

/// Where a command's `run.json` goes: next to its main output.
fn run_dir(cmd: &Command) -> Option<PathBuf> {
    Some(match cmd {
        Command::Carve(r) => parent_dir(&r.output),
        Command::Expand(x) => parent_dir(&x.output),
        Command::RemoveObject(r) => parent_dir(&r.output),
        Command::MarkSeams(m) => parent_dir(&m.output),
        Command::ForgeDataset(f) => f.out.clone(),
        Command::Train(t) => t.checkpoint_dir.clone(),
        Command::Eval(e) => parent_dir(&e.out),
        Command::ExtractFeatures(x) => parent_dir(&x.out),
        Command::Project(p) => parent_dir(&p.out),
        Command::Synth(s) => s.out.clone(),
        Command::Replay { .. } => return None,
    })
}

fn run(cmd: &Command, g: &Global) -> Outcome {
    execute(cmd, g)?;
    if let Some(dir) = run_dir(cmd) {
        let rec = RunRecord {
            tool: "seamforge".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: g.seed,
            jobs: g
                .jobs
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())),
            command: cmd.clone(),
        };
        let json = serde_json::to_string_pretty(&rec)
            .map_err(|e| Failure::Core(Error::Invariant(format!("run record: {e}"))))?;
        write_text(&dir.join(RUN_FILE), &(json + "\n"))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(&cli.command, &cli.global) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
