mod exit;
mod run;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use iris_core::calibration::{self, DistanceInterval};
use iris_core::codec::IrisTemplate;
use iris_core::data::synth::{write_corpus, CorpusParams};
use iris_core::data::{augment_rotate, load_image, resolve_config_path, Config, Manifest};
use iris_core::eval::{self, benchmark};
use iris_core::par::{self, Execution};
use iris_core::pipeline::{self, manifest_samples, Pipeline, PipelineConfig, PipelineError, DEFAULT_MATCH_THRESHOLD};
use iris_core::tensor::save_weights;
use iris_core::unet::{self, segment, OptimizerKind, Sample, Task, TrainOptions, UnetXxs, UnetXxsConfig};
use iris_core::GrayImage;

use exit::InvalidInput;

#[derive(Parser)]
#[command(name = "iris", version, about = "Iris segmentation, encoding, matching and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic two-eye corpus with ground truth.
    Synth(SynthArgs),
    /// Train one task network.
    Train(TrainArgs),
    /// Process one image (or a saved crop) into iris templates.
    Run(run::RunArgs),
    /// Compare two templates.
    Match(MatchArgs),
    /// Score every comparison of a manifest and write error-rate reports.
    Evaluate(EvaluateArgs),
    /// Time one pipeline stage single-threaded.
    Benchmark(BenchmarkArgs),
    /// Sensor calibration analyses.
    #[command(subcommand)]
    Calibrate(CalibrateCommand),
    /// Print the layer table and parameter count of a task network.
    ModelInfo(ModelInfoArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    identities: usize,
    #[arg(long)]
    samples: usize,
    #[arg(long)]
    out: PathBuf,
    /// Additive Gaussian noise σ (grey levels).
    #[arg(long, default_value_t = 10.0)]
    noise: f64,
    /// Maximum eyelid occlusion; each sample draws from [0, max].
    #[arg(long, default_value_t = 0.2)]
    occlusion: f64,
    /// Nominal iris radius in pixels.
    #[arg(long, default_value_t = 60.0)]
    radius: f64,
    /// Number of the first identity (keeps corpora person-disjoint).
    #[arg(long, default_value_t = 0)]
    first_identity: usize,
    #[arg(long)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    FindEyes,
    SegmentIris,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::FindEyes => Task::FindEyes,
            TaskArg::SegmentIris => Task::SegmentIris,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    task: TaskArg,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 0.005)]
    lr: f32,
    #[arg(long)]
    seed: u64,
    /// Weight file to write.
    #[arg(long)]
    out: PathBuf,
    /// Training log CSV; defaults to the weight path with a `.csv` extension.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Fraction of subjects held out for validation (person-disjoint).
    #[arg(long, default_value_t = 0.2)]
    val_fraction: f64,
    #[arg(long, default_value_t = 4)]
    batch_size: usize,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Adam)]
    optimizer: OptimizerArg,
    #[arg(long, default_value_t = 0.9)]
    momentum: f32,
    /// Add a rotated copy of every training sample (degrees, repeatable).
    #[arg(long = "rotate", allow_negative_numbers = true)]
    rotations: Vec<f64>,
}

#[derive(Args)]
struct MatchArgs {
    /// Exactly two template files.
    #[arg(long = "template", num_args = 1, required = true)]
    templates: Vec<PathBuf>,
    #[arg(long, default_value_t = 0)]
    max_shift: usize,
    /// Match iff HD <= threshold.
    #[arg(long, default_value_t = DEFAULT_MATCH_THRESHOLD)]
    threshold: f64,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for report.txt, metrics.csv, det.csv, scores.csv.
    #[arg(long)]
    report: PathBuf,
    /// Worker threads (default: logical cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Stage {
    FindEyes,
    SegmentIris,
    /// Segment-iris input through the 4×-parameter control network.
    Control,
    Pipeline,
    Match,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long, value_enum)]
    stage: Stage,
    #[arg(long)]
    manifest: PathBuf,
    /// Needed for `pipeline` and `match`; network stages fall back to
    /// seeded weights, which time the same.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    iterations: usize,
    #[arg(long, default_value_t = 3)]
    warmup: usize,
    /// Report file; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum CalibrateCommand {
    /// Evaluate at decreasing image widths.
    Sweep(SweepArgs),
    /// Fit r = k/d to (distance, radius) samples.
    Distance(DistanceArgs),
    /// Intersect distance criteria.
    Interval(IntervalArgs),
    /// Tabulate SNR by distance from mask sidecars.
    Snr(SnrArgs),
    /// Mean Dy/Dx over eyes.
    Gaze(GazeArgs),
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Descending widths, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    widths: Vec<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Keep the configured minimum iris radius (by default the sweep
    /// measures every step instead of rejecting small irises).
    #[arg(long)]
    keep_radius_gate: bool,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct DistanceArgs {
    /// `distance_cm:radius_px`, repeatable.
    #[arg(long = "sample")]
    samples: Vec<String>,
    /// CSV with `distance_cm,radius_px` columns.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Minimum usable radius; reports the matching maximum distance.
    #[arg(long)]
    min_radius: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IntervalArgs {
    /// `label=lo:hi` with an empty side for unbounded, e.g. `radius=:35`.
    #[arg(long = "criterion", required = true)]
    criteria: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SnrArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GazeArgs {
    /// `dx:dy` per eye, repeatable.
    #[arg(long = "eye", required = true)]
    eyes: Vec<String>,
}

#[derive(Args)]
struct ModelInfoArgs {
    #[arg(long, value_enum)]
    task: TaskArg,
    /// Show the 4×-parameter control network instead.
    #[arg(long)]
    control: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::INVALID_INPUT } else { exit::OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("error: {}", render_chain(&e));
            ExitCode::from(exit::classify(&e))
        }
    }
}

/// Error chain joined by `: `, skipping causes already spelled out by the
/// message above them.
fn render_chain(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.ends_with(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Run(a) => run::run(a),
        Command::Match(a) => match_templates(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Benchmark(a) => bench(a),
        Command::Calibrate(c) => calibrate(c),
        Command::ModelInfo(a) => model_info(a),
    }
}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    InvalidInput(msg.into()).into()
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Pipeline from `--config`, `$IRIS_CONFIG` or `./iris.conf`.
pub(crate) fn load_pipeline_config(explicit: Option<&Path>) -> Result<PipelineConfig> {
    let path = resolve_config_path(explicit)
        .ok_or_else(|| PipelineError::Config("none found; pass --config, set IRIS_CONFIG or add ./iris.conf".into()))?;
    let cfg = Config::load(&path).with_context(|| format!("loading config {}", path.display()))?;
    Ok(PipelineConfig::from_config(&cfg)?)
}

pub(crate) fn load_pipeline(explicit: Option<&Path>) -> Result<Pipeline> {
    Ok(Pipeline::load(load_pipeline_config(explicit)?)?)
}

fn synth(a: SynthArgs) -> Result<()> {
    if a.identities == 0 || a.samples == 0 {
        return Err(invalid("--identities and --samples must be at least 1"));
    }
    let p = CorpusParams {
        identities: a.identities,
        samples: a.samples,
        noise_sigma: a.noise,
        occlusion_max: a.occlusion,
        iris_radius: a.radius,
        seed: a.seed,
        first_identity: a.first_identity,
    };
    let manifest = write_corpus(&a.out, &p, Execution::Parallel)?;
    println!("wrote {} scenes to {} (seed {})", manifest.len(), a.out.display(), a.seed);
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    if !(0.0..1.0).contains(&a.val_fraction) {
        return Err(invalid("--val-fraction must be in [0, 1)"));
    }
    let task = Task::from(a.task);
    let manifest = Manifest::load(&a.manifest)?;
    let split = manifest.split(a.seed, (1.0 - a.val_fraction, a.val_fraction, 0.0))?;
    let mut train_set = manifest_samples(task, &split.train)?;
    let val_set = manifest_samples(task, &split.val)?;
    let originals = train_set.len();
    for &deg in &a.rotations {
        if deg.abs() > 30.0 {
            return Err(invalid(format!("rotation {deg} outside ±30 degrees")));
        }
        for i in 0..originals {
            let (image, mask) = augment_rotate(&train_set[i].image, &train_set[i].mask, deg);
            train_set.push(Sample { image, mask });
        }
    }
    let cfg = UnetXxsConfig { seed: a.seed, ..UnetXxsConfig::for_task(task) };
    let mut model = UnetXxs::new(&cfg)?;
    log::info!("{}", model.model_info());
    eprintln!(
        "training {} on {} samples ({} validation), {} parameters",
        task.name(),
        train_set.len(),
        val_set.len(),
        model.model_info().total_params
    );
    let opts = TrainOptions {
        optimizer: match a.optimizer {
            OptimizerArg::Adam => OptimizerKind::Adam,
            OptimizerArg::Sgd => OptimizerKind::Sgd,
        },
        epochs: a.epochs,
        lr: a.lr,
        momentum: a.momentum,
        batch_size: a.batch_size,
        seed: a.seed,
    };
    let mut log_csv = format!("# seed={}\nepoch,loss,val_iou\n", a.seed);
    let result = unet::train(&mut model, &train_set, &val_set, &opts, |e| {
        let iou = e.val_iou.map(|v| format!("{v:.6}")).unwrap_or_default();
        eprintln!("epoch {:>3}  loss {:.6}  val IoU {}", e.epoch, e.loss, if iou.is_empty() { "-" } else { &iou });
        let _ = writeln!(log_csv, "{},{:.8},{}", e.epoch, e.loss, iou);
    });
    let log_path = a.log.unwrap_or_else(|| a.out.with_extension("csv"));
    write_file(&log_path, &log_csv)?;
    result?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    save_weights(model.params(), &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    println!("wrote {} and {}", a.out.display(), log_path.display());
    Ok(())
}

fn match_templates(a: MatchArgs) -> Result<()> {
    if a.templates.len() != 2 {
        return Err(invalid(format!("need exactly two --template arguments, got {}", a.templates.len())));
    }
    if !(0.0..=1.0).contains(&a.threshold) {
        return Err(invalid("--threshold must be in [0, 1]"));
    }
    let ta = IrisTemplate::load(&a.templates[0])?;
    let tb = IrisTemplate::load(&a.templates[1])?;
    let hd = ta.hamming_distance(&tb, a.max_shift)?;
    let decision = if hd <= a.threshold { "MATCH" } else { "NO MATCH" };
    println!("HD {hd:.6} {decision} (threshold {}, max shift {})", a.threshold, a.max_shift);
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let pipeline = load_pipeline(a.config.as_deref())?;
    let manifest = Manifest::load(&a.manifest)?;
    let ev = par::with_workers(a.workers, || pipeline::evaluate_manifest(&pipeline, &manifest, Execution::Parallel))?;
    let det = eval::det_curve(&ev.scores)?;
    let dir = &a.report;
    write_file(&dir.join("report.txt"), format!("{}\nfailed acquisitions: {}\n", ev.report, ev.failures))?;
    write_file(&dir.join("metrics.csv"), ev.report.to_csv())?;
    write_file(&dir.join("det.csv"), det.to_csv())?;
    let mut scores = String::from("mated,score\n");
    for &s in &ev.scores.mated {
        let _ = writeln!(scores, "1,{s:.6}");
    }
    for &s in &ev.scores.non_mated {
        let _ = writeln!(scores, "0,{s:.6}");
    }
    write_file(&dir.join("scores.csv"), scores)?;
    let mut acq = String::from("path,iris_radius_px,error\n");
    for (row, a) in manifest.rows().iter().zip(&ev.acquisitions) {
        let r = a.iris_radius.map(|r| format!("{r:.3}")).unwrap_or_default();
        let _ = writeln!(acq, "{},{},{}", row.path, r, a.error.as_deref().unwrap_or("").replace(',', ";"));
    }
    write_file(&dir.join("acquisitions.csv"), acq)?;
    println!("{}", ev.report);
    Ok(())
}

fn bench(a: BenchmarkArgs) -> Result<()> {
    let manifest = Manifest::load(&a.manifest)?;
    let images: Vec<GrayImage> = manifest.rows().iter().map(|r| load_image(manifest.resolve(r))).collect::<Result<_, _>>()?;
    if images.is_empty() {
        return Err(invalid("manifest has no images"));
    }
    let report = par::with_workers(Some(1), || -> Result<eval::BenchReport> {
        let seeded = |task: Task, control: bool| -> Result<UnetXxs> {
            let cfg = UnetXxsConfig::for_task(task);
            Ok(UnetXxs::new(&if control { cfg.control() } else { cfg })?)
        };
        let name = Stage::value_variants()
            .iter()
            .find(|s| **s == a.stage)
            .and_then(|s| s.to_possible_value())
            .map(|v| v.get_name().to_string())
            .unwrap_or_default();
        let needs_config = matches!(a.stage, Stage::Pipeline | Stage::Match);
        let pipeline = if needs_config || a.config.is_some() { Some(load_pipeline(a.config.as_deref())?) } else { None };
        let report = match a.stage {
            Stage::FindEyes | Stage::SegmentIris | Stage::Control => {
                let model = match (&pipeline, a.stage) {
                    (Some(p), Stage::FindEyes) => p.find_eyes.clone(),
                    (Some(p), Stage::SegmentIris) => p.segment_iris.clone(),
                    (_, Stage::FindEyes) => seeded(Task::FindEyes, false)?,
                    (_, Stage::SegmentIris) => seeded(Task::SegmentIris, false)?,
                    _ => seeded(Task::SegmentIris, true)?,
                };
                benchmark(&name, &images, a.warmup, a.iterations, |img| {
                    let _ = segment(&model, img);
                })?
            }
            Stage::Pipeline => {
                let p = pipeline.as_ref().expect("loaded above");
                benchmark(&name, &images, a.warmup, a.iterations, |img| {
                    let _ = p.process(img, "bench");
                })?
            }
            Stage::Match => {
                let p = pipeline.as_ref().expect("loaded above");
                let templates: Vec<IrisTemplate> = images
                    .iter()
                    .zip(manifest.rows())
                    .filter_map(|(img, row)| p.acquire(img, row.eye_side, &row.subject_id).ok().map(|r| r.template))
                    .collect();
                if templates.len() < 2 {
                    bail!(PipelineError::Config("fewer than two templates could be acquired for matching".into()));
                }
                let pairs: Vec<(usize, usize)> = (0..templates.len()).map(|i| (i, (i + 1) % templates.len())).collect();
                let shift = p.config.max_shift;
                benchmark(&name, &pairs, a.warmup, a.iterations, |&(i, j)| {
                    let _ = templates[i].hamming_distance(&templates[j], shift);
                })?
            }
        };
        Ok(report)
    })?;
    let text = format!("{report}\n");
    match &a.out {
        Some(p) => write_file(p, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn calibrate(cmd: CalibrateCommand) -> Result<()> {
    match cmd {
        CalibrateCommand::Sweep(a) => {
            let mut cfg = load_pipeline_config(a.config.as_deref())?;
            if !a.keep_radius_gate {
                cfg.min_iris_radius = 0.0;
            }
            let pipeline = Pipeline::load(cfg)?;
            let manifest = Manifest::load(&a.manifest)?;
            let images: Vec<GrayImage> =
                manifest.rows().iter().map(|r| load_image(manifest.resolve(r))).collect::<Result<_, _>>()?;
            let rows = par::with_workers(a.workers, || {
                calibration::resolution_sweep(&pipeline, &manifest, &images, &a.widths, Execution::Parallel)
            })?;
            let rows: Vec<_> = rows.into_iter().map(|(r, _)| r).collect();
            let csv = calibration::sweep_csv(&rows);
            write_file(&a.out, &csv)?;
            print!("{csv}");
        }
        CalibrateCommand::Distance(a) => {
            let mut samples = Vec::new();
            for s in &a.samples {
                samples.push(parse_pair(s, "--sample", "distance_cm:radius_px")?);
            }
            if let Some(path) = &a.csv {
                samples.extend(read_distance_csv(path)?);
            }
            let model = calibration::fit_radius_model(&samples)?;
            let mut text = model.to_text();
            let min_r = calibration::min_radius_threshold(a.min_radius);
            let _ = writeln!(text, "min_radius_px,{min_r}\nmax_distance_cm,{}", model.invert(min_r));
            if let Some(out) = &a.out {
                write_file(out, &text)?;
            }
            print!("{text}");
        }
        CalibrateCommand::Interval(a) => {
            let mut criteria = Vec::new();
            for c in &a.criteria {
                let (label, range) =
                    c.split_once('=').ok_or_else(|| invalid(format!("criterion {c:?} must look like label=lo:hi")))?;
                criteria.push(DistanceInterval::parse(range, label.trim())?);
            }
            let text = calibration::interval_report(&criteria)?;
            if let Some(out) = &a.out {
                write_file(out, &text)?;
            }
            print!("{text}");
        }
        CalibrateCommand::Snr(a) => {
            let manifest = Manifest::load(&a.manifest)?;
            let csv = calibration::snr_csv(&calibration::snr_vs_distance(&manifest)?);
            if let Some(out) = &a.out {
                write_file(out, &csv)?;
            }
            print!("{csv}");
        }
        CalibrateCommand::Gaze(a) => {
            let eyes = a.eyes.iter().map(|e| parse_pair(e, "--eye", "dx:dy")).collect::<Result<Vec<_>>>()?;
            println!("{:.6}", calibration::gaze_aperture_ratio(&eyes)?);
        }
    }
    Ok(())
}

fn parse_pair(s: &str, flag: &str, shape: &str) -> Result<(f64, f64)> {
    let bad = || invalid(format!("{flag} {s:?} must look like {shape}"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn read_distance_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#')) {
        if i == 0 && line.starts_with("distance") {
            continue;
        }
        let (d, r) = line.split_once(',').ok_or_else(|| invalid(format!("{}:{}: expected two columns", path.display(), i + 1)))?;
        let parse = |v: &str| v.trim().parse::<f64>().map_err(|_| invalid(format!("{}:{}: bad number {v:?}", path.display(), i + 1)));
        out.push((parse(d)?, parse(r)?));
    }
    Ok(out)
}

fn model_info(a: ModelInfoArgs) -> Result<()> {
    let cfg = UnetXxsConfig::for_task(a.task.into());
    let model = UnetXxs::<f32>::new(&if a.control { cfg.control() } else { cfg })?;
    println!("{}", model.model_info());
    Ok(())
}
