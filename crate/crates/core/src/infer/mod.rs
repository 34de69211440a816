//! From network logits to an annotation: line extraction, zoom+repeat,
//! region post-processing, logit smoothing and line offsets.

mod regions;

pub use regions::{component_boxes, components, merge_intervals, postprocess_regions, RegionRules};

use serde::{Deserialize, Serialize};

use crate::augment::{bin_to_depth, depth_to_bin, inference_input, IDR_PER_SIGMA};
use crate::nnet::{
    HeadGroup, Real, Tensor, UNet, PLANES_PER_GROUP, PLANE_AIR, PLANE_BAD_PERIOD, PLANE_PASSIVE, PLANE_PATCH,
    PLANE_SEAFLOOR_ORIGINAL, PLANE_SURFACE,
};
use crate::preprocess::{flags_to_intervals, BoundaryLine, Echogram, Orientation, PatchVariant, RegionSet, Segmentation};
use crate::stats::{gaussian_kernel, idr, mean};
use crate::train::log_avg_exp;
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    /// A second, zoomed pass runs when more than this fraction of the
    /// depth range would be cropped.
    pub autozoom_threshold: f64,
    /// Margin added beyond the zoom limit (m).
    pub zoom_margin: f64,
    /// Zoom spread in robust standard deviations.
    pub zoom_spread: f64,
    pub merge_gap: usize,
    pub min_region_length: usize,
    /// Minimum patch area (ping-metres).
    pub min_patch_area: f64,
    /// Line offset (m) in the exclusion direction of each line.
    pub offset: f64,
    /// Gaussian smoothing of the logit planes in pixels; 0 disables it.
    pub smoothing_sigma: f64,
    pub drop_bad_data: bool,
    /// Head group to read; `None` conditions on the recording orientation.
    pub head: Option<HeadGroup>,
    /// Chunks evaluated per forward call.
    pub batch_chunks: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            autozoom_threshold: 0.35,
            zoom_margin: 2.0,
            zoom_spread: 4.0,
            merge_gap: 10,
            min_region_length: 10,
            min_patch_area: 25.0,
            offset: 1.0,
            smoothing_sigma: 0.0,
            drop_bad_data: false,
            head: None,
            batch_chunks: 8,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        let values = [
            self.autozoom_threshold,
            self.zoom_margin,
            self.zoom_spread,
            self.min_patch_area,
            self.offset,
            self.smoothing_sigma,
        ];
        if values.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Config("inference thresholds must be non-negative".into()));
        }
        if self.batch_chunks == 0 {
            return Err(Error::Config("at least one chunk per forward call".into()));
        }
        Ok(())
    }
}

/// Lines after shifting by the offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffsetLines {
    pub air: BoundaryLine,
    pub surface: BoundaryLine,
    pub seafloor: BoundaryLine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationResult {
    /// Raw lines and post-processed regions.
    pub segmentation: Segmentation,
    pub offset_lines: OffsetLines,
    pub passes: usize,
    /// Depth window of the final pass.
    pub window: (f64, f64),
    /// Fraction of the depth range the zoom window would crop.
    pub cropped_fraction: f64,
    pub model_id: String,
    pub config: InferenceConfig,
}

/// Per-ping boundary at the first bin whose cumulative softmax probability
/// strictly exceeds one half, placed at the bin centre.
pub fn extract_line(plane: &Matrix<f64>, extent: (f64, f64)) -> BoundaryLine {
    let (n, h) = plane.shape();
    let depths = (0..n)
        .map(|i| {
            let row = plane.row(i);
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
            let total: f64 = weights.iter().sum();
            let mut cum = 0.0;
            let k = weights
                .iter()
                .position(|w| {
                    cum += w / total;
                    cum > 0.5
                })
                .unwrap_or(h - 1);
            bin_to_depth(k as f64, extent, h)
        })
        .collect();
    BoundaryLine::new(depths)
}

/// Depth window for the second pass. The limit is the less distal of the
/// spread bound around the mean and the furthest line extent; the window
/// runs from the opposite edge of the recording to the limit plus margin.
pub fn compute_zoom_window(
    line: &BoundaryLine,
    orientation: Orientation,
    extent: (f64, f64),
    config: &InferenceConfig,
) -> (f64, f64) {
    let valid: Vec<f64> = line.valid_depths().collect();
    let (Some(mu), Some(spread)) = (mean(&valid), idr(valid.iter().copied())) else {
        return extent;
    };
    let sigma = spread / IDR_PER_SIGMA;
    let window = match orientation {
        Orientation::Downfacing => {
            let furthest = valid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let limit = (mu + config.zoom_spread * sigma).min(furthest);
            (extent.0, (limit + config.zoom_margin).min(extent.1))
        }
        Orientation::Upfacing => {
            let furthest = valid.iter().copied().fold(f64::INFINITY, f64::min);
            let limit = (mu - config.zoom_spread * sigma).max(furthest);
            ((limit - config.zoom_margin).max(extent.0), extent.1)
        }
    };
    if window.1 > window.0 {
        window
    } else {
        extent
    }
}

/// Zoom window, the fraction of the range it crops, and whether a second
/// pass runs. A zero threshold always zooms.
pub fn zoom_decision(
    guide: &BoundaryLine,
    orientation: Orientation,
    full: (f64, f64),
    config: &InferenceConfig,
) -> ((f64, f64), f64, bool) {
    let window = compute_zoom_window(guide, orientation, full, config);
    let fraction = 1.0 - (window.1 - window.0) / (full.1 - full.0);
    let zoom = config.autozoom_threshold == 0.0 || fraction > config.autozoom_threshold;
    (window, fraction, zoom)
}

/// Separable 2-D Gaussian smoothing of one plane, renormalized at the
/// edges so constants are preserved.
pub fn smooth_plane(plane: &Matrix<f64>, sigma: f64) -> Matrix<f64> {
    if sigma <= 0.0 {
        return plane.clone();
    }
    let radius = (4.0 * sigma).ceil() as usize;
    let k = gaussian_kernel(sigma, radius);
    let (n, m) = plane.shape();
    let pass = |src: &Matrix<f64>, along_rows: bool| {
        Matrix::from_fn(n, m, |i, j| {
            let (pos, len) = if along_rows { (i, n) } else { (j, m) };
            let (mut acc, mut wsum) = (0.0, 0.0);
            for (t, w) in k.iter().enumerate() {
                let p = pos as isize + t as isize - radius as isize;
                if p < 0 || p >= len as isize {
                    continue;
                }
                let v = if along_rows { src[(p as usize, j)] } else { src[(i, p as usize)] };
                acc += w * v;
                wsum += w;
            }
            acc / wsum
        })
    };
    pass(&pass(plane, true), false)
}

/// Smooths every plane; `sigma = 0` is the identity.
pub fn smooth_logits(planes: &[Matrix<f64>], sigma: f64) -> Vec<Matrix<f64>> {
    planes.iter().map(|p| smooth_plane(p, sigma)).collect()
}

/// Shifts each line by `offset` toward the data it excludes: entrained air
/// deeper, seafloor shallower, the upfacing surface deeper. Results are
/// clamped to `extent`.
pub fn apply_offsets(
    air: &BoundaryLine,
    surface: &BoundaryLine,
    seafloor: &BoundaryLine,
    offset: f64,
    orientation: Orientation,
    extent: (f64, f64),
) -> OffsetLines {
    let shift = |line: &BoundaryLine, by: f64, name: &str| {
        let out = line.map(|d| (d + by).clamp(extent.0, extent.1));
        if line.depths.iter().any(|&d| d + by < extent.0 || d + by > extent.1) {
            log::warn!("{name} line offset clamped to the recording extent");
        }
        out
    };
    let surface_shift = if orientation == Orientation::Upfacing { offset } else { 0.0 };
    OffsetLines {
        air: shift(air, offset, "entrained-air"),
        surface: if surface_shift == 0.0 { surface.clone() } else { shift(surface, surface_shift, "surface") },
        seafloor: if orientation == Orientation::Downfacing { shift(seafloor, -offset, "seafloor") } else { seafloor.clone() },
    }
}

/// Logit planes of one head group over a depth window, evaluated in chunks
/// of the model's input width. Each plane is `pings × depth bins`.
pub fn predict_planes<T: Real>(
    model: &UNet<T>,
    e: &Echogram,
    extent: (f64, f64),
    head: HeadGroup,
    batch_chunks: usize,
) -> Result<Vec<Matrix<f64>>> {
    let n = e.n_pings();
    if n == 0 {
        return Err(Error::Domain("recording has no pings".into()));
    }
    let (w, h) = model.config.input;
    let offset = head.offset(model.config.kind);
    let mut planes = vec![Matrix::filled(n, h, 0.0f64); PLANES_PER_GROUP];
    let starts: Vec<usize> = (0..n).step_by(w).collect();
    for group in starts.chunks(batch_chunks.max(1)) {
        let mut data = Vec::with_capacity(group.len() * w * h);
        for &s in group {
            let end = (s + w).min(n);
            let input = inference_input(&e.slice_pings(s, end), extent, h)?;
            // pad short chunks by repeating the last ping
            for i in 0..w {
                let row = input.row(i.min(end - s - 1));
                data.extend(row.iter().map(|&v| T::from_f32(v).unwrap_or(T::zero())));
            }
        }
        let logits = model.predict(&Tensor::from_vec(group.len(), 1, w, h, data)?)?;
        for (b, &s) in group.iter().enumerate() {
            let end = (s + w).min(n);
            for (c, plane) in planes.iter_mut().enumerate() {
                let src = logits.plane(b, offset + c);
                for i in 0..end - s {
                    for (dst, v) in plane.row_mut(s + i).iter_mut().zip(&src[i * h..(i + 1) * h]) {
                        *dst = v.to_f64().unwrap_or(0.0);
                    }
                }
            }
        }
    }
    Ok(planes)
}

/// Ping flags from a plane collapsed over depth with log-avg-exp.
fn ping_flags(plane: &Matrix<f64>) -> Vec<bool> {
    plane.iter_rows().map(|r| log_avg_exp(r).map(|s| s > 0.0).unwrap_or(false)).collect()
}

/// Annotation of one pass over a depth window, before region clean-up.
fn decode(e: &Echogram, planes: &[Matrix<f64>], extent: (f64, f64)) -> Segmentation {
    let n = e.n_pings();
    let h = planes[0].cols();
    let air = extract_line(&planes[PLANE_AIR], extent);
    let (surface, seafloor) = match e.orientation {
        Orientation::Downfacing => (BoundaryLine::constant(0.0, n), extract_line(&planes[PLANE_SEAFLOOR_ORIGINAL], extent)),
        Orientation::Upfacing => (
            extract_line(&planes[PLANE_SURFACE], extent),
            BoundaryLine::constant(e.depths[e.n_depths() - 1], n),
        ),
    };
    let passive = ping_flags(&planes[PLANE_PASSIVE]);
    let mut bad = ping_flags(&planes[PLANE_BAD_PERIOD]);
    // entrained air reaching the bottom line leaves nothing to analyse
    for i in 0..n {
        if air.depths[i] >= seafloor.depths[i] {
            bad[i] = true;
        }
    }
    let patch_plane = &planes[PLANE_PATCH + PatchVariant::OriginalSeafloorExpandedAir as usize];
    let patches = Matrix::from_fn(n, e.n_depths(), |i, j| {
        let d = e.depths[j];
        d >= extent.0 && d <= extent.1 && patch_plane[(i, depth_to_bin(d, extent, h))] > 0.0
    });
    Segmentation {
        air,
        seafloor,
        surface,
        regions: RegionSet {
            passive: flags_to_intervals(&passive),
            bad_periods: flags_to_intervals(&bad),
            patches,
        },
    }
}

/// Full inference: a pass over the whole depth range, a zoomed second pass
/// when enough would be cropped, then region clean-up and offsets.
pub fn infer_recording<T: Real>(e: &Echogram, model: &UNet<T>, config: &InferenceConfig, model_id: &str) -> Result<AnnotationResult> {
    config.validate()?;
    if e.n_pings() == 0 || e.n_depths() == 0 {
        return Err(Error::Domain("recording has no pings".into()));
    }
    let head = config.head.unwrap_or(HeadGroup::Conditioned(e.orientation));
    let full = e.depth_edges();
    let run = |extent: (f64, f64)| -> Result<Vec<Matrix<f64>>> {
        let planes = predict_planes(model, e, extent, head, config.batch_chunks)?;
        Ok(smooth_logits(&planes, config.smoothing_sigma))
    };
    let first = run(full)?;
    let guide = match e.orientation {
        Orientation::Downfacing => extract_line(&first[PLANE_SEAFLOOR_ORIGINAL], full),
        Orientation::Upfacing => extract_line(&first[PLANE_SURFACE], full),
    };
    let (window, cropped_fraction, zoom) = zoom_decision(&guide, e.orientation, full, config);
    let (planes, extent, passes) = if zoom { (run(window)?, window, 2) } else { (first, full, 1) };
    let mut seg = decode(e, &planes, extent);
    seg.regions = postprocess_regions(
        &seg.regions,
        &RegionRules {
            merge_gap: config.merge_gap,
            min_length: config.min_region_length,
            min_patch_area: config.min_patch_area,
            depth_step: e.depth_step(),
            drop_bad_data: config.drop_bad_data,
        },
    );
    let offset_lines = apply_offsets(&seg.air, &seg.surface, &seg.seafloor, config.offset, e.orientation, full);
    Ok(AnnotationResult {
        segmentation: seg,
        offset_lines,
        passes,
        window: extent,
        cropped_fraction,
        model_id: model_id.to_string(),
        config: config.clone(),
    })
}
