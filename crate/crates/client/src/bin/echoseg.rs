use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use echoseg_client::{Client, ClientError};
use echoseg_core::api::{
    self, corpus_recordings, evaluate_dirs, DatasetSpec, EvaluateRecording, EvaluateRequest, InferRequest, JobState,
    SynthRequest, TrainRequest,
};
use echoseg_core::augment::AugmentConfig;
use echoseg_core::baseline::{run_baseline, AirMethod, BaselineConfig};
use echoseg_core::formats::write_shards;
use echoseg_core::infer::{infer_recording, InferenceConfig};
use echoseg_core::metrics::{aggregate, AggregateMode, ErrorCdf, MetricsReport};
use echoseg_core::nnet::{load_checkpoint, ModelConfig, ModelKind, UNet};
use echoseg_core::pipeline::{
    export_stem, load_annotated, load_echogram, read_annotation, segmentation_from_texts, segmentation_texts,
    write_annotation, AnnotationTexts,
};
use echoseg_core::plot::{render_error_cdf, render_overlay, save_png};
use echoseg_core::preprocess::{Orientation, Segmentation};
use echoseg_core::synth::{config_series, write_corpus, SynthConfig};
use echoseg_core::train::{ScheduleConfig, TrainConfig};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] echoseg_core::Error),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("{0}")]
    Usage(String),
    #[error("training job failed: {0}")]
    Job(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

type Result<T> = std::result::Result<T, CliError>;

/// Segment entrained air, seafloor and bad data in echosounder recordings.
#[derive(Parser)]
#[command(name = "echoseg", version, arg_required_else_help = true)]
struct Cli {
    /// Delegate inference, baselines, evaluation, synthesis and training to
    /// a running service.
    #[arg(long, global = true, env = "ECHOSEG_SERVER")]
    server: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic annotated corpus.
    Synth(SynthArgs),
    /// Convert annotated recordings into training shards.
    GenerateShards(ShardArgs),
    /// Train a model on shard stores.
    Train(TrainArgs),
    /// Annotate recordings with a trained model.
    Infer(InferArgs),
    /// Annotate recordings with a rule-based picker.
    Baseline(BaselineArgs),
    /// Score predicted annotations against a corpus.
    Evaluate(EvaluateArgs),
    /// Render figures.
    #[command(subcommand)]
    Plot(PlotCommand),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Alternate downfacing and upfacing recordings.
    #[arg(long)]
    mixed: bool,
    #[arg(long)]
    n_pings: Option<usize>,
    #[arg(long)]
    empty_fraction: Option<f64>,
}

#[derive(Args)]
struct ShardArgs {
    /// Corpus directory holding a corpus.json index.
    #[arg(long)]
    corpus: PathBuf,
    /// One shard store per recording is written below this directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// NAME:DIR[:UPSAMPLE]; repeat for more datasets.
    #[arg(long = "dataset", required = true, value_parser = parse_dataset)]
    datasets: Vec<DatasetSpec>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 32)]
    width: usize,
    #[arg(long, default_value_t = 6)]
    depth: usize,
    #[arg(long, default_value = "bifacing")]
    kind: ModelKind,
    /// Input pings.
    #[arg(long, default_value_t = 128)]
    input_pings: usize,
    /// Input depth bins.
    #[arg(long, default_value_t = 512)]
    input_depth: usize,
    #[arg(long, default_value_t = 12)]
    batch_size: usize,
    #[arg(long, default_value_t = 1)]
    cycles: usize,
    /// Epochs of the first cycle.
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long)]
    steps_per_epoch: Option<usize>,
    #[arg(long, default_value_t = 0.012)]
    max_lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct InferArgs {
    /// Sv CSV exports.
    #[arg(required = true)]
    files: Vec<PathBuf>,
    #[arg(long, env = "ECHOSEG_MODEL")]
    model: Option<PathBuf>,
    #[arg(long, default_value = "downfacing")]
    orientation: Orientation,
    #[arg(long, default_value_t = 0.35)]
    autozoom_threshold: f64,
    /// Margin (m) moved away from each boundary.
    #[arg(long, default_value_t = 1.0)]
    offset: f64,
    /// Gaussian smoothing (pings) of the logits; 0 disables it.
    #[arg(long, default_value_t = 0.0)]
    smoothing_sigma: f64,
    #[arg(long)]
    drop_bad_data: bool,
    /// Defaults to each input's directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(required = true)]
    files: Vec<PathBuf>,
    #[arg(long, default_value = "threshold-offset")]
    method: AirMethod,
    #[arg(long, default_value = "downfacing")]
    orientation: Orientation,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Directory of predicted annotations named after the corpus stems.
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long, default_value = "pooled")]
    mode: AggregateMode,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum PlotCommand {
    /// Echogram with predicted and optional reference annotations.
    Overlay {
        csv: PathBuf,
        /// Directory with the predicted annotation files.
        #[arg(long)]
        predictions: PathBuf,
        /// Directory with reference annotation files.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, default_value = "downfacing")]
        orientation: Orientation,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cumulative entrained-air error curves, one per prediction set.
    Cdf {
        #[arg(long)]
        corpus: PathBuf,
        /// NAME=DIR; repeat per method.
        #[arg(long = "predictions", required = true, value_parser = parse_named_dir)]
        predictions: Vec<(String, PathBuf)>,
        /// Largest error shown (m).
        #[arg(long, default_value_t = 5.0)]
        max_error: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_dataset(s: &str) -> std::result::Result<DatasetSpec, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let (name, dir, upsample) = match parts.as_slice() {
        [name, dir] => (name, dir, "1"),
        [name, dir, up] => (name, dir, *up),
        _ => return Err(format!("expected NAME:DIR[:UPSAMPLE], got '{s}'")),
    };
    let upsample = upsample.parse().map_err(|_| format!("bad upsample factor '{upsample}'"))?;
    Ok(DatasetSpec { name: name.to_string(), dirs: vec![dir.to_string()], upsample })
}

fn parse_named_dir(s: &str) -> std::result::Result<(String, PathBuf), String> {
    s.split_once('=')
        .map(|(n, d)| (n.to_string(), PathBuf::from(d)))
        .ok_or_else(|| format!("expected NAME=DIR, got '{s}'"))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn out_dir_for(file: &Path, out_dir: &Option<PathBuf>) -> PathBuf {
    out_dir.clone().unwrap_or_else(|| file.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf))
}

fn write_result(file: &Path, out_dir: &Option<PathBuf>, texts: &AnnotationTexts) -> Result<()> {
    for p in write_annotation(&out_dir_for(file, out_dir), &export_stem(file), texts)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Runtime::new().map_err(|source| CliError::Io { path: PathBuf::from("<runtime>"), source })
}

fn synth(args: SynthArgs, server: Option<&str>) -> Result<()> {
    let mut base = SynthConfig::default();
    if let Some(n) = args.n_pings {
        base.n_pings = n;
    }
    if let Some(f) = args.empty_fraction {
        base.empty_fraction = f;
    }
    let configs = config_series(&base, args.seed, args.count, args.mixed);
    let Some(server) = server else {
        let index = write_corpus(&args.out, &configs)?;
        println!("wrote {} recordings to {}", index.recordings.len(), args.out.display());
        return Ok(());
    };
    let client = Client::new(server);
    let rt = runtime()?;
    for c in configs {
        let res = rt.block_on(client.synth(&SynthRequest { config: c.clone() }))?;
        let stem = format!("synth_{:05}", c.seed);
        let dir = &args.out;
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.clone(), source })?;
        for (suffix, text) in [(".raw.csv", &res.raw_csv), (".clean.csv", &res.clean_csv)] {
            let p = dir.join(format!("{stem}{suffix}"));
            std::fs::write(&p, text).map_err(|source| CliError::Io { path: p.clone(), source })?;
        }
        write_annotation(dir, &stem, &res.reference)?;
        println!("{}", dir.join(&stem).display());
    }
    Ok(())
}

fn generate_shards(args: ShardArgs) -> Result<()> {
    for r in corpus_recordings(&args.corpus)? {
        let rec = load_annotated(&r.files, r.orientation, None)?;
        let m = write_shards(&rec.echogram, &rec.targets, args.out.join(&r.stem), &r.stem)?;
        println!("{}: {} shards", r.stem, m.shard_count);
    }
    Ok(())
}

fn train(args: TrainArgs, server: Option<&str>) -> Result<()> {
    let input = (args.input_pings, args.input_depth);
    let req = TrainRequest {
        datasets: args.datasets,
        out_dir: args.out.display().to_string(),
        model: ModelConfig { width: args.width, depth: args.depth, kind: args.kind, input, ..ModelConfig::default() },
        train: TrainConfig {
            batch_size: args.batch_size,
            cycles: args.cycles,
            steps_per_epoch: args.steps_per_epoch,
            schedule: ScheduleConfig { max_lr: args.max_lr, base_epochs: args.epochs, ..ScheduleConfig::default() },
            augment: AugmentConfig { shape: input, ..AugmentConfig::default() },
            seed: args.seed,
            ..TrainConfig::default()
        },
        init_seed: args.seed,
    };
    let res = match server {
        None => api::handle_train(&req)?,
        Some(server) => {
            let client = Client::new(server);
            let rt = runtime()?;
            let job = rt.block_on(client.train(&req))?;
            log::info!("training job {} submitted", job.id);
            let done = rt.block_on(client.wait_job(job.id, Duration::from_secs(2)))?;
            match (done.state, done.result) {
                (JobState::Succeeded, Some(r)) => r,
                _ => return Err(CliError::Job(done.error.unwrap_or_else(|| "training failed".into()))),
            }
        }
    };
    println!("{} ({} parameters)", res.checkpoint, res.param_count);
    Ok(())
}

fn infer(args: InferArgs, server: Option<&str>) -> Result<()> {
    let config = InferenceConfig {
        autozoom_threshold: args.autozoom_threshold,
        offset: args.offset,
        smoothing_sigma: args.smoothing_sigma,
        drop_bad_data: args.drop_bad_data,
        ..InferenceConfig::default()
    };
    config.validate()?;
    if let Some(server) = server {
        let client = Client::new(server);
        let rt = runtime()?;
        for file in &args.files {
            let req = InferRequest {
                csv: read_text(file)?,
                orientation: args.orientation,
                config: config.clone(),
                model_path: args.model.as_ref().map(|p| p.display().to_string()),
            };
            let res = rt.block_on(client.infer(&req))?;
            write_result(file, &args.out_dir, &res.files)?;
        }
        return Ok(());
    }
    let path = args.model.ok_or_else(|| CliError::Usage("no model given; pass --model or set ECHOSEG_MODEL".into()))?;
    let (model, _): (UNet<f32>, _) = load_checkpoint(&path)?;
    let id = api::model_id(&path);
    for file in &args.files {
        let e = load_echogram(file, args.orientation)?;
        let out = infer_recording(&e, &model, &config, &id)?;
        log::info!("{}: {} pass(es), window {:?}", file.display(), out.passes, out.window);
        let mut seg = out.segmentation;
        seg.air = out.offset_lines.air;
        seg.seafloor = out.offset_lines.seafloor;
        seg.surface = out.offset_lines.surface;
        write_result(file, &args.out_dir, &segmentation_texts(&seg, &e)?)?;
    }
    Ok(())
}

fn baseline(args: BaselineArgs, server: Option<&str>) -> Result<()> {
    let config = BaselineConfig::default();
    let client = server.map(Client::new);
    let rt = client.as_ref().map(|_| runtime()).transpose()?;
    for file in &args.files {
        let texts = match (&client, &rt) {
            (Some(c), Some(rt)) => {
                let req = api::BaselineRequest {
                    csv: read_text(file)?,
                    orientation: args.orientation,
                    method: args.method,
                    config: config.clone(),
                };
                rt.block_on(c.baseline(&req))?.files
            }
            _ => {
                let e = load_echogram(file, args.orientation)?;
                segmentation_texts(&run_baseline(&e, &config, args.method)?, &e)?
            }
        };
        write_result(file, &args.out_dir, &texts)?;
    }
    Ok(())
}

fn evaluate(args: EvaluateArgs, server: Option<&str>) -> Result<()> {
    let report: MetricsReport = match server {
        None => aggregate(&evaluate_dirs(&args.corpus, &args.predictions)?, args.mode)?,
        Some(server) => {
            let recordings = corpus_recordings(&args.corpus)?
                .into_iter()
                .map(|r| {
                    let clean = r.files.clean_csv.clone().ok_or_else(|| CliError::Usage(format!("{} has no clean export", r.stem)))?;
                    Ok(EvaluateRecording {
                        raw_csv: read_text(&r.files.raw_csv)?,
                        clean_csv: read_text(&clean)?,
                        orientation: r.orientation,
                        reference: read_annotation(&args.corpus, &r.stem)?,
                        predicted: read_annotation(&args.predictions, &r.stem)?,
                        name: r.stem,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            runtime()?.block_on(Client::new(server).evaluate(&EvaluateRequest { recordings, mode: args.mode }))?
        }
    };
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    match args.out {
        Some(p) => std::fs::write(&p, text).map_err(|source| CliError::Io { path: p, source })?,
        None => println!("{text}"),
    }
    Ok(())
}

fn plot(cmd: PlotCommand) -> Result<()> {
    let out = match cmd {
        PlotCommand::Overlay { csv, predictions, reference, orientation, out } => {
            let e = load_echogram(&csv, orientation)?;
            let stem = export_stem(&csv);
            let seg = segmentation_from_texts(&read_annotation(&predictions, &stem)?, &e)?;
            let reference: Option<Segmentation> = reference
                .map(|dir| segmentation_from_texts(&read_annotation(&dir, &stem)?, &e))
                .transpose()?;
            save_png(&render_overlay(&e, &seg, reference.as_ref())?, &out)?;
            out
        }
        PlotCommand::Cdf { corpus, predictions, max_error, out } => {
            let curves = predictions
                .into_iter()
                .map(|(name, dir)| {
                    let errors: Vec<f64> = evaluate_dirs(&corpus, &dir)?
                        .into_iter()
                        .flat_map(|f| f.lines.get("entrained_air").map(|l| l.errors.clone()).unwrap_or_default())
                        .collect();
                    Ok((name, ErrorCdf::new(&errors)?))
                })
                .collect::<Result<Vec<_>>>()?;
            save_png(&render_error_cdf(&curves, max_error, (640, 400))?, &out)?;
            out
        }
    };
    println!("{}", out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let server = cli.server.as_deref();
    match cli.command {
        Command::Synth(a) => synth(a, server),
        Command::GenerateShards(a) => generate_shards(a),
        Command::Train(a) => train(a, server),
        Command::Infer(a) => infer(a, server),
        Command::Baseline(a) => baseline(a, server),
        Command::Evaluate(a) => evaluate(a, server),
        Command::Plot(c) => plot(c),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
