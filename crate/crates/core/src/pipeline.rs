//! Glue between files on disk and the in-memory pipeline stages.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::formats::{
    parse_evl, parse_evr, parse_sv_csv, read_evl, read_evr, read_sv_csv, render_evl, render_evr, split_epoch_seconds,
    LineFile, Region, RegionClass, RegionFile, SvCsvRecording, SvPing,
};
use crate::infer::component_boxes;
use crate::preprocess::{
    build_targets, flags_to_intervals, line_from_file, line_to_file, regrid_depth, regrid_onto,
    standardize_orientation, AnnotationLines, BoundaryLine, Echogram, Orientation, PassiveSchedule, PingInterval,
    RegionSet, Segmentation, SegmentationTargets,
};
use crate::synth::RecordingFiles;
use crate::{Error, Matrix, Result};

/// Depth tolerance when rasterizing region extents onto the grid.
const REGION_DEPTH_TOL: f64 = 1e-6;

/// Reads a Sv CSV, regrids it and standardizes its orientation.
pub fn load_echogram(path: impl AsRef<Path>, orientation: Orientation) -> Result<Echogram> {
    let rec = read_sv_csv(path)?;
    Ok(standardize_orientation(&regrid_depth(&rec, orientation)?))
}

/// Reads a second export of the same recording onto the grid of an
/// already standardized echogram.
pub fn load_aligned(path: impl AsRef<Path>, like: &Echogram) -> Result<Echogram> {
    let rec = read_sv_csv(path)?;
    if rec.pings.len() != like.n_pings() {
        return Err(Error::Alignment(format!(
            "export has {} pings, expected {}",
            rec.pings.len(),
            like.n_pings()
        )));
    }
    Ok(standardize_orientation(&regrid_onto(&rec, &like.depths, like.orientation)?))
}

/// Back to the export convention: depth axis in the order it was recorded.
pub fn echogram_to_csv(e: &Echogram) -> SvCsvRecording {
    let e = if e.flipped { e.flip_depth() } else { e.clone() };
    let n = e.n_depths();
    let pings = (0..e.n_pings())
        .map(|i| {
            let (date, time, ms) = split_epoch_seconds(e.timestamps[i], 1000);
            SvPing {
                index: i as i64,
                date,
                time,
                milliseconds: ms,
                range_start: e.depths[0],
                range_stop: e.depths[n - 1],
                samples: (0..n).map(|j| e.get(i, j).map(f64::from)).collect(),
            }
        })
        .collect();
    SvCsvRecording { pings }
}

/// Standardized line to a line file in export coordinates.
pub fn line_to_export_file(line: &BoundaryLine, like: &Echogram) -> Result<LineFile> {
    let l = if like.flipped { line.map(|d| like.reflect_depth(d)) } else { line.clone() };
    line_to_file(&l, &like.timestamps)
}

/// Line file in export coordinates onto the pings of a standardized
/// echogram.
pub fn line_from_export_file(file: &LineFile, like: &Echogram) -> Result<BoundaryLine> {
    let l = line_from_file(file, &like.timestamps)?;
    Ok(if like.flipped { l.map(|d| like.reflect_depth(d)) } else { l })
}

/// Reads whichever annotation lines exist. The entrained-air line is
/// required.
pub fn load_annotations(files: &RecordingFiles, like: &Echogram) -> Result<AnnotationLines> {
    let read = |p: &Option<std::path::PathBuf>| -> Result<Option<BoundaryLine>> {
        p.as_ref().map(|p| line_from_export_file(&read_evl(p)?, like)).transpose()
    };
    let air = read(&files.air_evl)?
        .ok_or_else(|| Error::Structure("recording has no entrained-air line file".into()))?;
    Ok(AnnotationLines {
        air,
        seafloor: read(&files.bottom_evl)?,
        surface: read(&files.surface_evl)?,
    })
}

/// A recording with targets built from its clean export and annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedRecording {
    pub echogram: Echogram,
    pub targets: SegmentationTargets,
}

pub fn load_annotated(
    files: &RecordingFiles,
    orientation: Orientation,
    schedule: Option<&PassiveSchedule>,
) -> Result<AnnotatedRecording> {
    let raw = load_echogram(&files.raw_csv, orientation)?;
    let clean_path = files
        .clean_csv
        .as_ref()
        .ok_or_else(|| Error::Structure("recording has no clean export".into()))?;
    let clean = load_aligned(clean_path, &raw)?;
    let lines = load_annotations(files, &raw)?;
    let targets = build_targets(&raw, &clean, &lines, schedule)?;
    Ok(AnnotatedRecording { echogram: raw, targets })
}

/// Ping-interval and pixel annotations of a region file.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionRaster {
    pub passive: Vec<bool>,
    pub bad_period: Vec<bool>,
    pub patches: Matrix<bool>,
}

/// Rasterizes regions as inclusive bounding boxes on a standardized
/// echogram's pings and depth grid.
pub fn rasterize_regions(file: &RegionFile, like: &Echogram) -> RegionRaster {
    let n = like.n_pings();
    let mut passive = vec![false; n];
    let mut bad_period = vec![false; n];
    let mut patches = Matrix::filled(n, like.n_depths(), false);
    for r in &file.regions {
        let (t0, top, t1, bottom) = r.bounds();
        let pings = (0..n).filter(|&i| like.timestamps[i] >= t0 && like.timestamps[i] <= t1);
        match r.class {
            RegionClass::Passive => pings.for_each(|i| passive[i] = true),
            RegionClass::BadPeriod => pings.for_each(|i| bad_period[i] = true),
            RegionClass::BadPatch => {
                let (a, b) = if like.flipped {
                    (like.reflect_depth(bottom), like.reflect_depth(top))
                } else {
                    (top, bottom)
                };
                let cols: Vec<usize> = (0..like.n_depths())
                    .filter(|&j| like.depths[j] >= a - REGION_DEPTH_TOL && like.depths[j] <= b + REGION_DEPTH_TOL)
                    .collect();
                for i in pings {
                    for &j in &cols {
                        patches.row_mut(i)[j] = true;
                    }
                }
            }
        }
    }
    RegionRaster { passive, bad_period, patches }
}

pub fn load_regions(path: impl AsRef<Path>, like: &Echogram) -> Result<RegionRaster> {
    Ok(rasterize_regions(&read_evr(path)?, like))
}

/// Region file for ping intervals and a patch mask. Each 4-connected
/// patch component becomes one bounding-box region.
pub fn regions_to_file(
    like: &Echogram,
    passive: &[PingInterval],
    bad: &[PingInterval],
    patch_boxes: &[(usize, usize, usize, usize)],
) -> RegionFile {
    let ts = &like.timestamps;
    let (lo, hi) = (like.depths[0], like.depths[like.n_depths() - 1]);
    let mut out = Vec::new();
    let mut id = 1;
    for (class, ivs) in [(RegionClass::Passive, passive), (RegionClass::BadPeriod, bad)] {
        for iv in ivs {
            out.push(Region::rectangle(id, class, ts[iv.start], ts[iv.end], lo, hi));
            id += 1;
        }
    }
    for &(p0, p1, j0, j1) in patch_boxes {
        let (a, b) = (like.depths[j0], like.depths[j1]);
        let (a, b) = if like.flipped { (like.reflect_depth(b), like.reflect_depth(a)) } else { (a, b) };
        out.push(Region::rectangle(id, RegionClass::BadPatch, ts[p0], ts[p1], a, b));
        id += 1;
    }
    RegionFile::new(out)
}

/// Sv CSV text, regridded and standardized.
pub fn parse_echogram(text: &str, orientation: Orientation) -> Result<Echogram> {
    Ok(standardize_orientation(&regrid_depth(&parse_sv_csv(text)?, orientation)?))
}

/// An annotation as file contents in export coordinates. The seafloor line
/// is written for downfacing recordings and the surface line for upfacing
/// ones.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotationTexts {
    pub air_evl: String,
    pub bottom_evl: Option<String>,
    pub surface_evl: Option<String>,
    pub regions_evr: Option<String>,
}

/// Renders a segmentation of a standardized echogram as file contents.
/// Patches are written as the bounding boxes of their components.
pub fn segmentation_texts(seg: &Segmentation, like: &Echogram) -> Result<AnnotationTexts> {
    let line = |l: &BoundaryLine| render_evl(&line_to_export_file(l, like)?);
    let up = like.orientation == Orientation::Upfacing;
    let regions = regions_to_file(
        like,
        &seg.regions.passive,
        &seg.regions.bad_periods,
        &component_boxes(&seg.regions.patches),
    );
    Ok(AnnotationTexts {
        air_evl: line(&seg.air)?,
        bottom_evl: if up { None } else { Some(line(&seg.seafloor)?) },
        surface_evl: if up { Some(line(&seg.surface)?) } else { None },
        regions_evr: Some(render_evr(&regions)?),
    })
}

/// Reads an annotation back onto a standardized echogram. A missing
/// seafloor lies at the deepest sample, a missing surface at 0 m and
/// missing regions are empty.
pub fn segmentation_from_texts(texts: &AnnotationTexts, like: &Echogram) -> Result<Segmentation> {
    let n = like.n_pings();
    let line = |t: &str| line_from_export_file(&parse_evl(t)?, like);
    let deepest = like.depths[like.n_depths() - 1];
    let regions = match &texts.regions_evr {
        Some(t) => {
            let r = rasterize_regions(&parse_evr(t)?, like);
            RegionSet {
                passive: flags_to_intervals(&r.passive),
                bad_periods: flags_to_intervals(&r.bad_period),
                patches: r.patches,
            }
        }
        None => RegionSet::empty(n, like.n_depths()),
    };
    Ok(Segmentation {
        air: line(&texts.air_evl)?,
        seafloor: texts.bottom_evl.as_deref().map(line).transpose()?.unwrap_or_else(|| BoundaryLine::constant(deepest, n)),
        surface: texts.surface_evl.as_deref().map(line).transpose()?.unwrap_or_else(|| BoundaryLine::constant(0.0, n)),
        regions,
    })
}

/// Targets from in-memory exports and annotation lines.
pub fn annotated_from_texts(
    raw_csv: &str,
    clean_csv: &str,
    reference: &AnnotationTexts,
    orientation: Orientation,
) -> Result<AnnotatedRecording> {
    let raw = parse_echogram(raw_csv, orientation)?;
    let clean_rec = parse_sv_csv(clean_csv)?;
    if clean_rec.pings.len() != raw.n_pings() {
        return Err(Error::Alignment("clean export differs in ping count".into()));
    }
    let clean = standardize_orientation(&regrid_onto(&clean_rec, &raw.depths, raw.orientation)?);
    let line = |t: &str| line_from_export_file(&parse_evl(t)?, &raw);
    let lines = AnnotationLines {
        air: line(&reference.air_evl)?,
        seafloor: reference.bottom_evl.as_deref().map(line).transpose()?,
        surface: reference.surface_evl.as_deref().map(line).transpose()?,
    };
    let targets = build_targets(&raw, &clean, &lines, None)?;
    Ok(AnnotatedRecording { echogram: raw, targets })
}

/// File names an annotation of `stem` is written under.
pub fn annotation_paths(dir: &Path, stem: &str) -> RecordingFiles {
    let p = |s: &str| Some(dir.join(format!("{stem}{s}")));
    RecordingFiles {
        raw_csv: dir.join(format!("{stem}.raw.csv")),
        clean_csv: None,
        air_evl: p(".air.evl"),
        bottom_evl: p(".bottom.evl"),
        surface_evl: p(".surface.evl"),
        regions_evr: p(".regions.evr"),
    }
}

/// Writes the files of an annotation as `dir/<stem>.*`; returns the paths
/// written.
pub fn write_annotation(dir: &Path, stem: &str, texts: &AnnotationTexts) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = annotation_paths(dir, stem);
    let mut written = Vec::new();
    let items = [
        (paths.air_evl, Some(&texts.air_evl)),
        (paths.bottom_evl, texts.bottom_evl.as_ref()),
        (paths.surface_evl, texts.surface_evl.as_ref()),
        (paths.regions_evr, texts.regions_evr.as_ref()),
    ];
    for (path, text) in items {
        if let (Some(path), Some(text)) = (path, text) {
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Reads whichever annotation files exist for `dir/<stem>`.
pub fn read_annotation(dir: &Path, stem: &str) -> Result<AnnotationTexts> {
    let paths = annotation_paths(dir, stem);
    let read = |p: Option<std::path::PathBuf>| -> Result<Option<String>> {
        match p {
            Some(p) if p.exists() => std::fs::read_to_string(&p).map(Some).map_err(|e| Error::io(&p, e)),
            _ => Ok(None),
        }
    };
    let air_path = paths.air_evl.clone().unwrap_or_default();
    let air_evl = read(paths.air_evl)?.ok_or_else(|| Error::io(&air_path, std::io::ErrorKind::NotFound.into()))?;
    Ok(AnnotationTexts {
        air_evl,
        bottom_evl: read(paths.bottom_evl)?,
        surface_evl: read(paths.surface_evl)?,
        regions_evr: read(paths.regions_evr)?,
    })
}

/// Recording stem of an export path: the file name without `.raw.csv` or
/// `.csv`.
pub fn export_stem(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    for suffix in [".raw.csv", ".csv"] {
        if let Some(stem) = name.strip_suffix(suffix) {
            return stem.to_string();
        }
    }
    name
}
