//! Writing synthetic recordings in the same file formats as real exports.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::formats::{write_evl, write_evr, write_sv_csv, RegionFile};
use crate::pipeline::{echogram_to_csv, line_to_export_file, regions_to_file};
use crate::preprocess::{BoundaryLine, Orientation};
use crate::{Error, Result};

use super::{generate_recording, SynthConfig, SynthRecording};

/// Paths of one recording's files. Missing annotations are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingFiles {
    pub raw_csv: PathBuf,
    pub clean_csv: Option<PathBuf>,
    pub air_evl: Option<PathBuf>,
    pub bottom_evl: Option<PathBuf>,
    pub surface_evl: Option<PathBuf>,
    pub regions_evr: Option<PathBuf>,
}

impl RecordingFiles {
    /// Conventional names beside `dir/stem`.
    pub fn conventional(dir: &Path, stem: &str) -> Self {
        let existing = |suffix: &str| {
            let p = dir.join(format!("{stem}{suffix}"));
            p.exists().then_some(p)
        };
        Self {
            raw_csv: dir.join(format!("{stem}.raw.csv")),
            clean_csv: existing(".clean.csv"),
            air_evl: existing(".air.evl"),
            bottom_evl: existing(".bottom.evl"),
            surface_evl: existing(".surface.evl"),
            regions_evr: existing(".regions.evr"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub stem: String,
    pub orientation: Orientation,
    pub seed: u64,
    pub n_pings: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusIndex {
    pub recordings: Vec<CorpusEntry>,
}

fn regions(rec: &SynthRecording) -> RegionFile {
    regions_to_file(&rec.raw, &rec.passive, &rec.bad_periods, &rec.patches)
}

/// Writes `<stem>.raw.csv`, `<stem>.clean.csv`, the line files and
/// `<stem>.regions.evr` into `dir`.
pub fn write_recording(dir: &Path, stem: &str, rec: &SynthRecording) -> Result<RecordingFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let e = &rec.raw;
    let p = |s: &str| dir.join(format!("{stem}{s}"));
    write_sv_csv(&echogram_to_csv(&rec.raw), p(".raw.csv"))?;
    write_sv_csv(&echogram_to_csv(&rec.clean), p(".clean.csv"))?;
    write_evl(&line_to_export_file(&rec.lines.air, e)?, p(".air.evl"))?;
    let bottom = match &rec.lines.seafloor {
        Some(l) => {
            write_evl(&line_to_export_file(l, e)?, p(".bottom.evl"))?;
            Some(p(".bottom.evl"))
        }
        None => None,
    };
    let surface_line = rec
        .lines
        .surface
        .clone()
        .unwrap_or_else(|| BoundaryLine::constant(0.0, e.n_pings()));
    let surface = if rec.config.orientation == Orientation::Upfacing {
        write_evl(&line_to_export_file(&surface_line, e)?, p(".surface.evl"))?;
        Some(p(".surface.evl"))
    } else {
        None
    };
    write_evr(&regions(rec), p(".regions.evr"))?;
    Ok(RecordingFiles {
        raw_csv: p(".raw.csv"),
        clean_csv: Some(p(".clean.csv")),
        air_evl: Some(p(".air.evl")),
        bottom_evl: bottom,
        surface_evl: surface,
        regions_evr: Some(p(".regions.evr")),
    })
}

/// Generates and writes every configuration as `synth_<seed>` and writes a
/// `corpus.json` index.
pub fn write_corpus(dir: &Path, configs: &[SynthConfig]) -> Result<CorpusIndex> {
    let mut index = CorpusIndex::default();
    for c in configs {
        let rec = generate_recording(c)?;
        let stem = format!("synth_{:05}", c.seed);
        write_recording(dir, &stem, &rec)?;
        index.recordings.push(CorpusEntry {
            stem,
            orientation: c.orientation,
            seed: c.seed,
            n_pings: c.n_pings,
        });
    }
    let path = dir.join("corpus.json");
    let text = serde_json::to_string_pretty(&index).map_err(|e| Error::Structure(e.to_string()))?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(index)
}

pub fn read_corpus_index(dir: &Path) -> Result<CorpusIndex> {
    let path = dir.join("corpus.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Structure(format!("{}: {e}", path.display())))
}
