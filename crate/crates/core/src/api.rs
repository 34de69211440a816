//! Request and response types shared by the HTTP service and its client,
//! with synchronous handlers that both the service and the local CLI call.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baseline::{run_baseline, AirMethod, BaselineConfig};
use crate::formats::{read_all_shards, read_manifest, render_evl, render_evr, render_sv_csv};
use crate::infer::{infer_recording, InferenceConfig};
use crate::metrics::{aggregate, evaluate_file, AggregateMode, FileStats, MetricsReport};
use crate::nnet::{ModelConfig, UNet};
use crate::pipeline::{
    annotated_from_texts, echogram_to_csv, load_annotated, read_annotation, line_to_export_file, parse_echogram, regions_to_file, segmentation_from_texts,
    segmentation_texts, AnnotatedRecording, AnnotationTexts,
};
use crate::preprocess::{Orientation, Segmentation};
use crate::synth::{generate_recording, read_corpus_index, RecordingFiles, SynthConfig};
use crate::train::{train_to_dir, ScheduleConfig, TrainConfig, TrainDataset};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub id: String,
    pub path: String,
    pub param_count: usize,
    pub config: ModelConfig,
}

impl ModelInfo {
    pub fn describe(model: &UNet<f32>, path: &Path) -> Self {
        Self {
            id: model_id(path),
            path: path.display().to_string(),
            param_count: model.param_count(),
            config: model.config.clone(),
        }
    }
}

/// Identifier of a model: its file stem.
pub fn model_id(path: &Path) -> String {
    path.file_stem().map_or_else(|| "model".to_string(), |s| s.to_string_lossy().into_owned())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferRequest {
    /// Sv CSV export.
    pub csv: String,
    pub orientation: Orientation,
    #[serde(default)]
    pub config: InferenceConfig,
    /// Checkpoint to use instead of the server's default model.
    #[serde(default)]
    pub model_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferResponse {
    pub files: AnnotationTexts,
    pub passes: usize,
    pub window: (f64, f64),
    pub cropped_fraction: f64,
    pub model_id: String,
}

pub fn handle_infer(req: &InferRequest, model: &UNet<f32>, model_id: &str) -> Result<InferResponse> {
    let e = parse_echogram(&req.csv, req.orientation)?;
    let out = infer_recording(&e, model, &req.config, model_id)?;
    let mut seg = out.segmentation.clone();
    seg.air = out.offset_lines.air.clone();
    seg.seafloor = out.offset_lines.seafloor.clone();
    seg.surface = out.offset_lines.surface.clone();
    Ok(InferResponse {
        files: segmentation_texts(&seg, &e)?,
        passes: out.passes,
        window: out.window,
        cropped_fraction: out.cropped_fraction,
        model_id: out.model_id,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRequest {
    pub csv: String,
    pub orientation: Orientation,
    pub method: AirMethod,
    #[serde(default)]
    pub config: BaselineConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResponse {
    pub files: AnnotationTexts,
    pub method: AirMethod,
}

pub fn handle_baseline(req: &BaselineRequest) -> Result<BaselineResponse> {
    let e = parse_echogram(&req.csv, req.orientation)?;
    let seg = run_baseline(&e, &req.config, req.method)?;
    Ok(BaselineResponse { files: segmentation_texts(&seg, &e)?, method: req.method })
}

/// One recording to score: its exports, the reference annotation and a
/// prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateRecording {
    pub name: String,
    pub raw_csv: String,
    pub clean_csv: String,
    pub orientation: Orientation,
    pub reference: AnnotationTexts,
    pub predicted: AnnotationTexts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateRequest {
    pub recordings: Vec<EvaluateRecording>,
    pub mode: AggregateMode,
}

/// Scores a prediction against a recording's targets.
pub fn score(name: &str, reference: &AnnotatedRecording, predicted: &Segmentation) -> Result<FileStats> {
    let target = Segmentation::from_targets(&reference.targets);
    let good = target.good_mask(&reference.echogram);
    evaluate_file(name, &reference.echogram, &target, &good, predicted)
}

pub fn handle_evaluate(req: &EvaluateRequest) -> Result<MetricsReport> {
    let files = req
        .recordings
        .iter()
        .map(|r| {
            let reference = annotated_from_texts(&r.raw_csv, &r.clean_csv, &r.reference, r.orientation)?;
            let predicted = segmentation_from_texts(&r.predicted, &reference.echogram)?;
            score(&r.name, &reference, &predicted)
        })
        .collect::<Result<Vec<_>>>()?;
    aggregate(&files, req.mode)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthRequest {
    #[serde(default)]
    pub config: SynthConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthResponse {
    pub raw_csv: String,
    pub clean_csv: String,
    pub reference: AnnotationTexts,
}

pub fn handle_synth(req: &SynthRequest) -> Result<SynthResponse> {
    let r = generate_recording(&req.config)?;
    let line = |l| render_evl(&line_to_export_file(l, &r.raw)?);
    let up = req.config.orientation == Orientation::Upfacing;
    let regions = regions_to_file(&r.raw, &r.passive, &r.bad_periods, &r.patches);
    Ok(SynthResponse {
        raw_csv: render_sv_csv(&echogram_to_csv(&r.raw)),
        clean_csv: render_sv_csv(&echogram_to_csv(&r.clean)),
        reference: AnnotationTexts {
            air_evl: line(&r.lines.air)?,
            bottom_evl: r.lines.seafloor.as_ref().map(line).transpose()?,
            surface_evl: if up { r.lines.surface.as_ref().map(line).transpose()? } else { None },
            regions_evr: Some(render_evr(&regions)?),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRequest {
    pub step: usize,
    pub total: usize,
    pub cycle: usize,
    #[serde(default)]
    pub schedule: ScheduleConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleResponse {
    pub lr: f64,
    pub beta1: f64,
}

pub fn handle_schedule(req: &ScheduleRequest) -> Result<ScheduleResponse> {
    req.schedule.validate()?;
    let (lr, beta1) = req.schedule.at(req.step, req.total, req.cycle)?;
    Ok(ScheduleResponse { lr, beta1 })
}

/// Shard stores making up one dataset. Each directory is a shard store or
/// holds shard stores one level down.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    pub dirs: Vec<String>,
    #[serde(default = "one")]
    pub upsample: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRequest {
    pub datasets: Vec<DatasetSpec>,
    pub out_dir: String,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    /// Seed of the initial weights.
    #[serde(default)]
    pub init_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResponse {
    pub checkpoint: String,
    pub param_count: usize,
}

/// Shard store directories under `dir`, sorted.
pub fn shard_stores(dir: &Path) -> Result<Vec<PathBuf>> {
    if read_manifest(dir).is_ok() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && read_manifest(p).is_ok())
        .collect();
    out.sort();
    if out.is_empty() {
        return Err(Error::Config(format!("{} holds no shard stores", dir.display())));
    }
    Ok(out)
}

/// Loads every dataset, splitting mixed-orientation ones so each training
/// dataset has a single orientation.
pub fn load_datasets(specs: &[DatasetSpec], shard_len: usize) -> Result<Vec<TrainDataset>> {
    let mut out = Vec::new();
    for spec in specs {
        let mut by_orientation: [Vec<_>; 2] = [Vec::new(), Vec::new()];
        for dir in &spec.dirs {
            for store in shard_stores(Path::new(dir))? {
                let (e, t) = read_all_shards(&store)?;
                by_orientation[(e.orientation == Orientation::Upfacing) as usize].push((e, t));
            }
        }
        let mixed = by_orientation.iter().all(|v| !v.is_empty());
        for (k, recordings) in by_orientation.into_iter().enumerate() {
            if recordings.is_empty() {
                continue;
            }
            let name = if mixed {
                format!("{}-{}", spec.name, [Orientation::Downfacing, Orientation::Upfacing][k].name())
            } else {
                spec.name.clone()
            };
            out.push(TrainDataset { name, upsample: spec.upsample, shard_len, recordings });
        }
    }
    if out.is_empty() {
        return Err(Error::Config("no training data".into()));
    }
    Ok(out)
}

pub fn handle_train(req: &TrainRequest) -> Result<TrainResponse> {
    let data = load_datasets(&req.datasets, req.model.input.0)?;
    let model = UNet::new(req.model.clone(), req.init_seed)?;
    let out = PathBuf::from(&req.out_dir);
    let trained = train_to_dir(model, req.train.clone(), &data, &out)?;
    Ok(TrainResponse {
        checkpoint: out.join("model.ckpt").display().to_string(),
        param_count: trained.param_count(),
    })
}

/// A recording listed in a corpus index, with its conventional file paths.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusRecording {
    pub stem: String,
    pub orientation: Orientation,
    pub files: RecordingFiles,
}

pub fn corpus_recordings(dir: &Path) -> Result<Vec<CorpusRecording>> {
    Ok(read_corpus_index(dir)?
        .recordings
        .into_iter()
        .map(|r| CorpusRecording { files: RecordingFiles::conventional(dir, &r.stem), stem: r.stem, orientation: r.orientation })
        .collect())
}

/// Scores the annotations in `predictions` against every recording of a
/// corpus, matching by stem.
pub fn evaluate_dirs(corpus: &Path, predictions: &Path) -> Result<Vec<FileStats>> {
    corpus_recordings(corpus)?
        .iter()
        .map(|r| {
            let reference = load_annotated(&r.files, r.orientation, None)?;
            let texts = read_annotation(predictions, &r.stem)?;
            let predicted = segmentation_from_texts(&texts, &reference.echogram)?;
            score(&r.stem, &reference, &predicted)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub id: u64,
    pub state: JobState,
    #[serde(default)]
    pub result: Option<TrainResponse>,
    #[serde(default)]
    pub error: Option<String>,
}
