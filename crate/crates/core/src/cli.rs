//! The `shl` command line: `train`, `encode`, `eval`, `lsh` and `segment`.
//!
//! Every command writes a JSON run manifest next to its outputs. Exit codes:
//! 0 success, 2 usage, 3 data or format error, 4 numerical failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::dataio::{self, LabelColumn, LabeledDataset};
use crate::evalkit::{pr_curve, topk_precision};
use crate::kernels::KernelSpec;
use crate::trainer::{self, TrainConfig};
use crate::{CodeDatabase, Error, LshModel, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

/// Environment variable that overrides `--threads`.
pub const THREADS_ENV: &str = "SHL_THREADS";

#[derive(Parser, Debug)]
#[command(name = "shl", version, about = "Kernel hash learning through codewords")]
pub struct Cli {
    /// Worker threads (0 = all cores). SHL_THREADS overrides this flag.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a hash model; writes model.json, loss_trace.csv, train_codes.csv and manifest.json.
    Train(TrainArgs),
    /// Hash a feature CSV with a trained model.
    Encode(EncodeArgs),
    /// Top-k precision and precision/recall over Hamming radius for labeled code files.
    Eval(EvalArgs),
    /// Hash a feature CSV with the random projection LSH baseline.
    Lsh(LshArgs),
    /// Foreground/background segmentation of a PPM image from scribbles.
    Segment(SegmentArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct HyperArgs {
    /// Code length B.
    #[arg(long, default_value_t = 16)]
    pub bits: usize,
    /// Codewords per class S.
    #[arg(long, default_value_t = 1)]
    pub codewords: usize,
    #[arg(long, default_value_t = 1000.0)]
    pub lambda1: f64,
    /// Codeword distance weight; 6000 suits larger image datasets.
    #[arg(long, default_value_t = 2000.0)]
    pub lambda2: f64,
    /// MKL norm, must exceed 1.
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    /// Kernel list such as `linear,poly:2:1,gauss:0.5`, or `default` for the 11-kernel bank.
    #[arg(long, default_value = "default")]
    pub kernels: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub max_outer: usize,
    /// Relative change of the surrogate loss that stops training.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// SMO stopping tolerance.
    #[arg(long, default_value_t = 1e-3)]
    pub svm_tol: f64,
    /// z-score features using training statistics.
    #[arg(long)]
    pub standardize: bool,
}

impl HyperArgs {
    fn config(&self, classes: usize) -> Result<TrainConfig> {
        let mut c = TrainConfig::new(self.bits, classes);
        c.codewords = self.codewords;
        c.lambda1 = self.lambda1;
        c.lambda2 = self.lambda2;
        c.p = self.p;
        c.kernels = KernelSpec::parse_list(&self.kernels)?;
        c.seed = self.seed;
        c.max_outer = self.max_outer;
        c.outer_tol = self.tol;
        c.svm_tol = self.svm_tol;
        c.standardize = self.standardize;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Feature CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Label column: `last`, a zero-based index, or `none`.
    #[arg(long, default_value = "last")]
    pub labels_col: String,
    /// Extra unlabeled feature CSV (no label column) for transductive training.
    #[arg(long)]
    pub unlabeled: Option<PathBuf>,
    /// Number of classes; defaults to the largest label + 1.
    #[arg(long)]
    pub classes: Option<usize>,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Label column: `last`, a zero-based index, or `none`. Labels are copied to the output.
    #[arg(long, default_value = "none")]
    pub labels_col: String,
    /// Output code CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Query code CSV with a trailing label column.
    #[arg(long)]
    pub queries: PathBuf,
    /// Database code CSV with a trailing label column.
    #[arg(long)]
    pub db: PathBuf,
    /// Comma separated k values for top-k precision.
    #[arg(long, value_delimiter = ',', default_values_t = [10usize, 15, 20, 25, 30, 35, 40, 45, 50])]
    pub k: Vec<usize>,
    /// Skip database rows whose row index equals the query row index
    /// (use when queries and database are the same file).
    #[arg(long)]
    pub exclude_self: bool,
    /// Output metrics CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct LshArgs {
    /// Feature CSV to hash.
    #[arg(long)]
    pub data: PathBuf,
    /// Label column of --data: `last`, a zero-based index, or `none`.
    #[arg(long, default_value = "none")]
    pub labels_col: String,
    /// Feature CSV whose mean sets the thresholds (defaults to --data).
    #[arg(long)]
    pub fit_data: Option<PathBuf>,
    /// Label column of --fit-data.
    #[arg(long, default_value = "none")]
    pub fit_labels_col: String,
    #[arg(long, default_value_t = 16)]
    pub bits: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SegmentArgs {
    /// Binary PPM (P6) image.
    #[arg(long)]
    pub image: PathBuf,
    /// Binary PGM (P5) scribbles of the same size: 254/255 foreground,
    /// 127/128 background, 0 unlabeled.
    #[arg(long)]
    pub scribbles: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub bits: usize,
    #[arg(long, default_value_t = 1000.0)]
    pub lambda1: f64,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    #[arg(long, default_value = "default")]
    pub kernels: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub max_outer: usize,
    /// Cap on training pixels; unlabeled pixels are subsampled above it.
    #[arg(long, default_value_t = 4096)]
    pub max_train: usize,
    /// Output mask PGM: 255 foreground, 0 background.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct RunManifest {
    tool: &'static str,
    version: &'static str,
    command: String,
    arguments: Vec<String>,
    config: serde_json::Value,
    seed: u64,
    threads: usize,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
    wall_time_secs: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    details: Option<serde_json::Value>,
}

fn digest(path: &Path) -> Result<FileDigest> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

struct Run {
    command: &'static str,
    arguments: Vec<String>,
    threads: usize,
    start: Instant,
}

impl Run {
    fn finish(
        &self,
        manifest_path: &Path,
        config: serde_json::Value,
        seed: u64,
        inputs: &[&Path],
        outputs: &[&Path],
        details: Option<serde_json::Value>,
    ) -> Result<()> {
        let manifest = RunManifest {
            tool: "shl",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command.to_string(),
            arguments: self.arguments.clone(),
            config,
            seed,
            threads: self.threads,
            inputs: inputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
            outputs: outputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
            wall_time_secs: self.start.elapsed().as_secs_f64(),
            details,
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Numerical(e.to_string()))?;
        std::fs::write(manifest_path, text + "\n").map_err(|e| Error::io(manifest_path, e))
    }
}

fn to_json(v: &impl Serialize) -> serde_json::Value {
    serde_json::to_value(v).expect("plain data serializes")
}

fn sidecar(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(OsString::from).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn label_column(s: &str) -> Result<Option<LabelColumn>> {
    if s == "none" {
        Ok(None)
    } else {
        s.parse().map(Some)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cmd_train(args: &TrainArgs, run: &Run) -> Result<()> {
    let data = dataio::load_csv(&args.data, label_column(&args.labels_col)?)?;
    let classes = match args.classes {
        Some(c) => c,
        None => data.labels.iter().flatten().max().map_or(1, |m| m + 1),
    };
    let config = args.hyper.config(classes)?;
    let unlabeled = args
        .unlabeled
        .as_ref()
        .map(|p| dataio::load_csv(p, None))
        .transpose()?;
    let outcome = match &unlabeled {
        Some(u) => trainer::transductive_train_detailed(&config, &data, u.features.view())?,
        None => trainer::train_detailed(&config, &data)?,
    };

    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let model_path = args.out.join("model.json");
    let trace_path = args.out.join("loss_trace.csv");
    let codes_path = args.out.join("train_codes.csv");
    dataio::save_model(&outcome.model, &model_path)?;
    let mut trace = String::from("iteration,surrogate_loss\n");
    for (t, v) in outcome.model.loss_trace.iter().enumerate() {
        writeln!(trace, "{t},{v:?}").expect("string write");
    }
    write_text(&trace_path, &trace)?;
    let codes = outcome.decisions.codes();
    let raw = data.raw_labels();
    let labeled_rows = label_column(&args.labels_col)?.is_some();
    dataio::save_codes(&codes_path, &codes[..data.len()], labeled_rows.then_some(&raw[..]))?;

    #[derive(Serialize)]
    struct Distance {
        class: usize,
        slot_a: usize,
        slot_b: usize,
        distance: f64,
    }
    let distances: Vec<Distance> = outcome
        .model
        .codebook
        .within_class_distances()
        .into_iter()
        .map(|(class, slot_a, slot_b, distance)| Distance {
            class,
            slot_a,
            slot_b,
            distance,
        })
        .collect();
    let details = serde_json::json!({
        "outer_iterations": outcome.iterations,
        "final_surrogate_loss": outcome.model.loss_trace.last(),
        "support_vectors": outcome.model.support_features.nrows(),
        "within_class_codeword_distances": to_json(&distances),
    });
    let mut inputs = vec![args.data.as_path()];
    if let Some(p) = &args.unlabeled {
        inputs.push(p);
    }
    run.finish(
        &args.out.join("manifest.json"),
        to_json(&config),
        config.seed,
        &inputs,
        &[&model_path, &trace_path, &codes_path],
        Some(details),
    )
}

fn cmd_encode(args: &EncodeArgs, run: &Run) -> Result<()> {
    let model = dataio::load_model(&args.model)?;
    let labels_col = label_column(&args.labels_col)?;
    let data = dataio::load_csv(&args.data, labels_col)?;
    let codes = model.encode_batch(data.features.view())?;
    let raw = data.raw_labels();
    dataio::save_codes(&args.out, &codes, labels_col.is_some().then_some(&raw[..]))?;
    run.finish(
        &sidecar(&args.out),
        serde_json::json!({ "bits": model.config.bits }),
        model.config.seed,
        &[&args.model, &args.data],
        &[&args.out],
        None,
    )
}

fn labeled_codes(path: &Path) -> Result<CodeDatabase> {
    let (codes, labels) = dataio::load_codes(path, true)?;
    let labels = labels
        .expect("labeled load")
        .into_iter()
        .map(|l| {
            usize::try_from(l).map_err(|_| Error::format(path, format!("label {l} is not a class index")))
        })
        .collect::<Result<_>>()?;
    Ok(CodeDatabase::new(codes, labels)?.with_row_ids())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:?}"))
}

fn cmd_eval(args: &EvalArgs, run: &Run) -> Result<()> {
    let queries = labeled_codes(&args.queries)?;
    let db = labeled_codes(&args.db)?;
    if args.k.is_empty() {
        return Err(Error::config("at least one k is required"));
    }
    let mut out = String::from("metric,param,precision,recall\n");
    for &k in &args.k {
        let p = topk_precision(&queries, &db, k, args.exclude_self)?;
        writeln!(out, "topk,{k},{p:?},").expect("string write");
    }
    for point in pr_curve(&queries, &db, args.exclude_self)? {
        writeln!(
            out,
            "pr,{},{},{:?}",
            point.radius,
            fmt_opt(point.precision),
            point.recall
        )
        .expect("string write");
    }
    write_text(&args.out, &out)?;
    run.finish(
        &sidecar(&args.out),
        serde_json::json!({ "k": args.k, "exclude_self": args.exclude_self }),
        0,
        &[&args.queries, &args.db],
        &[&args.out],
        None,
    )
}

fn cmd_lsh(args: &LshArgs, run: &Run) -> Result<()> {
    let labels_col = label_column(&args.labels_col)?;
    let data = dataio::load_csv(&args.data, labels_col)?;
    let fit = match &args.fit_data {
        Some(p) => dataio::load_csv(p, label_column(&args.fit_labels_col)?)?,
        None => data.clone(),
    };
    let model = LshModel::fit(fit.features.view(), args.bits, args.seed)?;
    let codes = model.encode_batch(data.features.view())?;
    let raw = data.raw_labels();
    dataio::save_codes(&args.out, &codes, labels_col.is_some().then_some(&raw[..]))?;
    let mut inputs = vec![args.data.as_path()];
    if let Some(p) = &args.fit_data {
        inputs.push(p);
    }
    run.finish(
        &sidecar(&args.out),
        serde_json::json!({ "bits": args.bits }),
        args.seed,
        &inputs,
        &[&args.out],
        None,
    )
}

/// Pixels used for training: every scribbled pixel plus a seeded sample of
/// unscribbled ones, at most `cap` in total (scribbles are sampled too if
/// they alone exceed the cap). Returned in ascending pixel order.
pub fn segmentation_training_rows(labels: &[Option<usize>], cap: usize, seed: u64) -> Vec<usize> {
    let scribbled: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].is_some()).collect();
    let free: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].is_none()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pick = |pool: &[usize], k: usize| -> Vec<usize> {
        if k >= pool.len() {
            pool.to_vec()
        } else {
            sample(&mut rng, pool.len(), k).into_iter().map(|i| pool[i]).collect()
        }
    };
    let mut rows = pick(&scribbled, cap);
    let room = cap.saturating_sub(rows.len());
    rows.extend(pick(&free, room));
    rows.sort_unstable();
    rows
}

fn cmd_segment(args: &SegmentArgs, run: &Run) -> Result<()> {
    let image = dataio::load_ppm(&args.image)?;
    let scribbles = dataio::load_pgm(&args.scribbles)?;
    if (image.width, image.height) != (scribbles.width, scribbles.height) {
        return Err(Error::input(format!(
            "image is {}x{} but scribbles are {}x{}",
            image.width, image.height, scribbles.width, scribbles.height
        )));
    }
    let labels = dataio::scribble_labels(&scribbles, &args.scribbles)?;
    for (class, name) in [(dataio::FOREGROUND, "foreground"), (dataio::BACKGROUND, "background")] {
        if !labels.contains(&Some(class)) {
            return Err(Error::config(format!("scribbles contain no {name} pixels")));
        }
    }
    if args.max_train < 2 {
        return Err(Error::config("--max-train must be at least 2"));
    }
    let mut config = TrainConfig::new(args.bits, 2);
    config.lambda1 = args.lambda1;
    config.p = args.p;
    config.kernels = KernelSpec::parse_list(&args.kernels)?;
    config.seed = args.seed;
    config.max_outer = args.max_outer;
    config.validate()?;

    let features = image.features();
    let all = LabeledDataset::new(features, labels.clone())?;
    let rows = segmentation_training_rows(&labels, args.max_train, args.seed);
    let train = all.select(&rows);
    if !train.labels.contains(&Some(dataio::FOREGROUND)) || !train.labels.contains(&Some(dataio::BACKGROUND)) {
        return Err(Error::config("pixel cap leaves one class without scribbles; raise --max-train"));
    }
    let model = trainer::train(&config, &train)?;
    let predicted = model.classify_batch(all.features.view())?;
    let mask: Vec<usize> = predicted
        .iter()
        .zip(&labels)
        .map(|(p, l)| l.unwrap_or(*p))
        .collect();
    dataio::save_mask_pgm(&mask, image.width, image.height, &args.out)?;
    let foreground = mask.iter().filter(|&&c| c == dataio::FOREGROUND).count();
    run.finish(
        &sidecar(&args.out),
        to_json(&config),
        args.seed,
        &[&args.image, &args.scribbles],
        &[&args.out],
        Some(serde_json::json!({
            "training_pixels": rows.len(),
            "foreground_pixels": foreground,
            "pixels": mask.len(),
        })),
    )
}

/// Exit code for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_USAGE,
        Error::Numerical(_) => EXIT_NUMERICAL,
        Error::Input(_) | Error::Format { .. } | Error::Parse { .. } | Error::Io { .. } => EXIT_DATA,
    }
}

fn resolve_threads(flag: usize) -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::config(format!("{THREADS_ENV} must be a non-negative integer, got '{v}'"))),
        Err(_) => Ok(flag),
    }
}

fn dispatch(cli: &Cli, arguments: Vec<String>) -> Result<()> {
    let threads = resolve_threads(cli.threads)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::config(e.to_string()))?;
    let command = match &cli.command {
        Command::Train(_) => "train",
        Command::Encode(_) => "encode",
        Command::Eval(_) => "eval",
        Command::Lsh(_) => "lsh",
        Command::Segment(_) => "segment",
    };
    let run = Run {
        command,
        arguments,
        threads: pool.current_num_threads(),
        start: Instant::now(),
    };
    pool.install(|| match &cli.command {
        Command::Train(a) => cmd_train(a, &run),
        Command::Encode(a) => cmd_encode(a, &run),
        Command::Eval(a) => cmd_eval(a, &run),
        Command::Lsh(a) => cmd_lsh(a, &run),
        Command::Segment(a) => cmd_segment(a, &run),
    })
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Messages go to stderr (stdout for help/version).
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let arguments = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match dispatch(&cli, arguments) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
