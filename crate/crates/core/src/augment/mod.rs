//! Normalization of echogram windows and the training-time augmentations:
//! temporal stretching, depth cropping, ping reflection, colour jitter and
//! axis-separable elastic deformation. Every stochastic choice is recorded
//! in an [`AugmentRecord`] so a view can be rebuilt bit-exactly.

mod interp;

pub use interp::{invert_monotone, lagrange_weights, nearest_index, InterpOrder};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::preprocess::{BoundaryLine, Echogram, Orientation, SegmentationTargets};
use crate::stats::{gaussian_smooth, idr, median};
use crate::{Error, Matrix, Result};

/// Value given to missing samples after normalization.
pub const MISSING_VALUE: f32 = -3.0;
/// Ratio of the interdecile range to the standard deviation of a normal.
pub const IDR_PER_SIGMA: f64 = 2.56;
/// Line targets in output-plane order.
pub const LINE_NAMES: [&str; 5] = ["air", "air_original", "seafloor", "seafloor_original", "surface"];

/// Standardizes present values by the median and `idr / 2.56`; a zero or
/// undefined spread falls back to a divisor of 1. Missing cells become
/// [`MISSING_VALUE`].
pub fn normalize_sv(e: &Echogram) -> Result<Matrix<f32>> {
    let values = || e.sv.as_slice().iter().zip(e.present.as_slice()).filter(|(_, &p)| p).map(|(&v, _)| v as f64);
    let centre = median(values()).ok_or_else(|| Error::Degenerate("no present Sv values to normalize".into()))?;
    let spread = idr(values()).unwrap_or(0.0) / IDR_PER_SIGMA;
    let divisor = if spread > 0.0 && spread.is_finite() { spread } else { 1.0 };
    let (n, m) = e.sv.shape();
    Ok(Matrix::from_fn(n, m, |i, j| {
        if e.present[(i, j)] {
            ((e.sv[(i, j)] as f64 - centre) / divisor) as f32
        } else {
            MISSING_VALUE
        }
    }))
}

/// A normalized window of a recording with its targets, on an evenly
/// spaced depth grid spanning `extent` (outer edges, metres).
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub image: Matrix<f32>,
    pub extent: (f64, f64),
    pub orientation: Orientation,
    /// Indexed as [`LINE_NAMES`]; depths in metres.
    pub lines: [BoundaryLine; 5],
    pub passive: Vec<bool>,
    pub bad_period: Vec<bool>,
    pub patches: [Matrix<bool>; 3],
}

impl View {
    pub fn from_recording(e: &Echogram, t: &SegmentationTargets) -> Result<View> {
        if t.n_pings() != e.n_pings() || t.patches[0].shape() != e.sv.shape() {
            return Err(Error::Alignment(format!(
                "targets cover {} pings, echogram {}",
                t.n_pings(),
                e.n_pings()
            )));
        }
        Ok(View {
            image: normalize_sv(e)?,
            extent: e.depth_edges(),
            orientation: e.orientation,
            lines: [
                t.air.clone(),
                t.air_original.clone(),
                t.seafloor_aggressive.clone(),
                t.seafloor.clone(),
                t.surface.clone(),
            ],
            passive: t.passive.clone(),
            bad_period: t.bad_period.clone(),
            patches: t.patches.clone(),
        })
    }

    pub fn n_pings(&self) -> usize {
        self.image.rows()
    }

    pub fn n_samples(&self) -> usize {
        self.image.cols()
    }

    fn bin_width(&self) -> f64 {
        (self.extent.1 - self.extent.0) / self.n_samples() as f64
    }

    /// Fractional sample index of a depth.
    pub fn depth_to_position(&self, d: f64) -> f64 {
        (d - self.extent.0) / self.bin_width() - 0.5
    }

    pub fn position_to_depth(&self, f: f64) -> f64 {
        self.extent.0 + (f + 0.5) * self.bin_width()
    }

    /// New view whose ping `k` is ping `src[k]` of this one.
    pub fn select_pings(&self, src: &[usize]) -> View {
        let m = self.n_samples();
        let rows = |mat: &Matrix<bool>| Matrix::from_fn(src.len(), m, |k, j| mat[(src[k], j)]);
        View {
            image: Matrix::from_fn(src.len(), m, |k, j| self.image[(src[k], j)]),
            extent: self.extent,
            orientation: self.orientation,
            lines: self.lines.clone().map(|l| BoundaryLine {
                depths: src.iter().map(|&s| l.depths[s]).collect(),
                valid: src.iter().map(|&s| l.valid[s]).collect(),
            }),
            passive: src.iter().map(|&s| self.passive[s]).collect(),
            bad_period: src.iter().map(|&s| self.bad_period[s]).collect(),
            patches: [rows(&self.patches[0]), rows(&self.patches[1]), rows(&self.patches[2])],
        }
    }
}

/// Resamples the ping axis by `factor` with nearest-neighbour mapping, so
/// ping-level targets stay exact.
pub fn stretch_time(view: &View, factor: f64) -> Result<View> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::Domain(format!("stretch factor {factor} must be positive")));
    }
    let n = view.n_pings();
    let out = ((n as f64 * factor).round() as usize).max(1);
    let src: Vec<usize> = (0..out).map(|k| nearest_index(k, n, out)).collect();
    Ok(view.select_pings(&src))
}

/// Reverses the ping axis. An involution.
pub fn reflect_time(view: &View) -> View {
    let src: Vec<usize> = (0..view.n_pings()).rev().collect();
    view.select_pings(&src)
}

/// Resamples the depth axis onto `[lo, hi]` with the same number of
/// samples. Samples outside the original extent are missing.
pub fn crop_depth(view: &View, lo: f64, hi: f64) -> Result<View> {
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Domain(format!("empty depth window [{lo}, {hi}]")));
    }
    let m = view.n_samples();
    let (old_lo, old_hi) = view.extent;
    let src: Vec<Option<usize>> = (0..m)
        .map(|j| {
            let c = lo + (j as f64 + 0.5) * (hi - lo) / m as f64;
            if c < old_lo || c > old_hi {
                None
            } else {
                Some((view.depth_to_position(c).round().max(0.0) as usize).min(m - 1))
            }
        })
        .collect();
    let n = view.n_pings();
    let patch = |mat: &Matrix<bool>| Matrix::from_fn(n, m, |i, j| src[j].is_some_and(|s| mat[(i, s)]));
    Ok(View {
        image: Matrix::from_fn(n, m, |i, j| src[j].map_or(MISSING_VALUE, |s| view.image[(i, s)])),
        extent: (lo, hi),
        patches: [patch(&view.patches[0]), patch(&view.patches[1]), patch(&view.patches[2])],
        ..view.clone()
    })
}

/// Order of the brightness and contrast jitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JitterOrder {
    BrightnessFirst,
    ContrastFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorJitter {
    pub offset: f64,
    pub gain: f64,
    pub order: JitterOrder,
}

impl ColorJitter {
    pub const IDENTITY: ColorJitter = ColorJitter {
        offset: 0.0,
        gain: 1.0,
        order: JitterOrder::BrightnessFirst,
    };

    pub fn apply(&self, x: f32) -> f32 {
        let x = x as f64;
        let y = match self.order {
            JitterOrder::BrightnessFirst => (x + self.offset) * self.gain,
            JitterOrder::ContrastFirst => x * self.gain + self.offset,
        };
        y as f32
    }
}

/// Applies one additive offset and one gain to every pixel.
pub fn color_jitter(view: &View, jitter: ColorJitter) -> View {
    View {
        image: view.image.map(|&x| jitter.apply(x)),
        ..view.clone()
    }
}

/// Per-axis displacement fields in samples: ping `i` of the output samples
/// source position `i + time[i]`, depth sample `j` samples `j + depth[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ElasticFields {
    pub time: Vec<f64>,
    pub depth: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElasticParams {
    pub sigma_time: f64,
    pub sigma_depth: f64,
    pub alpha: f64,
}

impl Default for ElasticParams {
    fn default() -> Self {
        Self {
            sigma_time: 8.0,
            sigma_depth: 16.0,
            alpha: 0.1,
        }
    }
}

impl ElasticFields {
    pub fn zero(n: usize, m: usize) -> Self {
        Self {
            time: vec![0.0; n],
            depth: vec![0.0; m],
        }
    }

    /// Unit normal noise per coordinate, Gaussian-smoothed along its axis
    /// and scaled by `alpha` times the axis length.
    pub fn draw(n: usize, m: usize, params: &ElasticParams, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut field = |len: usize, sigma: f64| -> Vec<f64> {
            let noise: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
            gaussian_smooth(&noise, sigma)
                .into_iter()
                .map(|v| v * params.alpha * len as f64)
                .collect()
        };
        let time = field(n, params.sigma_time);
        let depth = field(m, params.sigma_depth);
        Self { time, depth }
    }
}

/// Samples the image at displaced positions with separable interpolation
/// of the given order. Ping-level targets follow the time field with
/// nearest-neighbour mapping; lines follow the inverse of the depth field.
pub fn elastic_deform(view: &View, fields: &ElasticFields, order: InterpOrder) -> Result<View> {
    let (n, m) = view.image.shape();
    if fields.time.len() != n || fields.depth.len() != m {
        return Err(Error::Alignment(format!(
            "displacement fields ({}, {}) for a ({n}, {m}) view",
            fields.time.len(),
            fields.depth.len()
        )));
    }
    let tw: Vec<_> = (0..n).map(|i| lagrange_weights(i as f64 + fields.time[i], n, order)).collect();
    let dw: Vec<_> = (0..m).map(|j| lagrange_weights(j as f64 + fields.depth[j], m, order)).collect();
    let image = Matrix::from_fn(n, m, |i, j| {
        let (ta, twt, tk) = tw[i];
        let (da, dwt, dk) = dw[j];
        let mut acc = 0.0f64;
        for a in 0..tk {
            for b in 0..dk {
                acc += twt[a] * dwt[b] * view.image[(ta + a, da + b)] as f64;
            }
        }
        acc as f32
    });
    let clamp_round = |x: f64, len: usize| (x.round().max(0.0) as usize).min(len - 1);
    let tsrc: Vec<usize> = (0..n).map(|i| clamp_round(i as f64 + fields.time[i], n)).collect();
    let dsrc: Vec<usize> = (0..m).map(|j| clamp_round(j as f64 + fields.depth[j], m)).collect();
    let pinged = view.select_pings(&tsrc);
    let mut sampling: Vec<f64> = (0..m).map(|j| j as f64 + fields.depth[j]).collect();
    for j in 1..m {
        sampling[j] = sampling[j].max(sampling[j - 1]);
    }
    let lines = pinged.lines.clone().map(|l| l.map(|d| pinged.position_to_depth(invert_monotone(&sampling, pinged.depth_to_position(d)))));
    let patch = |mat: &Matrix<bool>| Matrix::from_fn(n, m, |i, j| mat[(i, dsrc[j])]);
    Ok(View {
        image,
        patches: [patch(&pinged.patches[0]), patch(&pinged.patches[1]), patch(&pinged.patches[2])],
        lines,
        ..pinged
    })
}

/// How the depth window of a training view was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CropBranch {
    /// Full original extent.
    Full,
    /// Shallowest surface to deepest seafloor.
    Optimal,
    /// Edges jittered around the optimal window.
    NearOptimal,
    /// Edges drawn between the full and optimal windows.
    Between,
}

/// Shallowest valid surface to deepest valid seafloor, falling back to the
/// full extent when either line has no valid pings.
pub fn optimal_extent(view: &View) -> (f64, f64) {
    let lo = view.lines[4].valid_depths().fold(f64::INFINITY, f64::min);
    let hi = view.lines[3].valid_depths().fold(f64::NEG_INFINITY, f64::max);
    if lo.is_finite() && hi.is_finite() && hi > lo {
        (lo, hi)
    } else {
        view.extent
    }
}

fn fraction_outside(line: &BoundaryLine, lo: f64, hi: f64) -> f64 {
    let (mut total, mut out) = (0usize, 0usize);
    for d in line.valid_depths() {
        total += 1;
        if d < lo || d > hi {
            out += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        out as f64 / total as f64
    }
}

/// Widens a window symmetrically to at least `min_width`.
fn ensure_width(lo: f64, hi: f64, min_width: f64) -> (f64, f64) {
    if hi - lo >= min_width {
        (lo, hi)
    } else {
        let c = 0.5 * (lo + hi);
        (c - 0.5 * min_width, c + 0.5 * min_width)
    }
}

fn uniform_between<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    lo + (hi - lo) * rng.random::<f64>()
}

/// Window for a given branch. Always spans at least one sample of the view.
pub fn crop_window_for<R: Rng + ?Sized>(branch: CropBranch, view: &View, cfg: &AugmentConfig, rng: &mut R) -> (f64, f64) {
    let full = view.extent;
    let opt = optimal_extent(view);
    let (lo, hi) = match branch {
        CropBranch::Full => full,
        CropBranch::Optimal => opt,
        CropBranch::NearOptimal => {
            let span = opt.1 - opt.0;
            let s = cfg.near_optimal_spread;
            let mut chosen = opt;
            for _ in 0..64 {
                let lo = opt.0 + span * uniform_between(rng, -s, s);
                let hi = opt.1 + span * uniform_between(rng, -s, s);
                let air_ok = fraction_outside(&view.lines[0], lo, hi) <= cfg.max_air_removed;
                let floor_ok = view.orientation == Orientation::Upfacing
                    || fraction_outside(&view.lines[3], lo, hi) <= cfg.max_seafloor_removed;
                if hi > lo && air_ok && floor_ok {
                    chosen = (lo, hi);
                    break;
                }
            }
            chosen
        }
        CropBranch::Between => (uniform_between(rng, full.0, opt.0), uniform_between(rng, opt.1, full.1)),
    };
    ensure_width(lo, hi, view.bin_width())
}

/// Draws a branch with the configured probabilities, then its window.
pub fn depth_crop_window<R: Rng + ?Sized>(view: &View, cfg: &AugmentConfig, rng: &mut R) -> (CropBranch, f64, f64) {
    let u: f64 = rng.random();
    let p = cfg.crop_probabilities;
    let branch = if u < p[0] {
        CropBranch::Full
    } else if u < p[0] + p[1] {
        CropBranch::Optimal
    } else if u < p[0] + p[1] + p[2] {
        CropBranch::NearOptimal
    } else {
        CropBranch::Between
    };
    let (lo, hi) = crop_window_for(branch, view, cfg, rng);
    (branch, lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    /// Model input shape (pings, depth bins).
    pub shape: (usize, usize),
    pub stretch_probability: f64,
    pub stretch_range: (f64, f64),
    /// Probabilities of the full, optimal, near-optimal and between crops.
    pub crop_probabilities: [f64; 4],
    pub near_optimal_spread: f64,
    pub max_air_removed: f64,
    pub max_seafloor_removed: f64,
    pub reflect_probability: f64,
    pub max_offset: f64,
    pub gain_range: (f64, f64),
    pub elastic_probability: f64,
    pub elastic: ElasticParams,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            shape: (128, 512),
            stretch_probability: 1.0,
            stretch_range: (0.5, 2.0),
            crop_probabilities: [0.1, 0.1, 0.4, 0.4],
            near_optimal_spread: 0.25,
            max_air_removed: 0.25,
            max_seafloor_removed: 0.5,
            reflect_probability: 0.5,
            max_offset: 0.5,
            gain_range: (0.7, 1.3),
            elastic_probability: 0.5,
            elastic: ElasticParams::default(),
        }
    }
}

impl AugmentConfig {
    /// No augmentation: full depth, unstretched, unjittered.
    pub fn identity(shape: (usize, usize)) -> Self {
        Self {
            shape,
            stretch_probability: 0.0,
            crop_probabilities: [1.0, 0.0, 0.0, 0.0],
            reflect_probability: 0.0,
            max_offset: 0.0,
            gain_range: (1.0, 1.0),
            elastic_probability: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (w, h) = self.shape;
        if w == 0 || h == 0 {
            return Err(Error::Config(format!("input shape {w}x{h} is empty")));
        }
        let (a, b) = self.stretch_range;
        if !(a > 0.0 && b >= a) {
            return Err(Error::Config(format!("stretch range [{a}, {b}] is invalid")));
        }
        let total: f64 = self.crop_probabilities.iter().sum();
        if self.crop_probabilities.iter().any(|&p| p < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config("crop probabilities must be non-negative and sum to 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElasticDraw {
    pub order: InterpOrder,
    pub seed: u64,
}

/// Every parameter drawn while building a training view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentRecord {
    /// First ping and ping count taken from the recording.
    pub window: (usize, usize),
    pub stretch: f64,
    pub crop: (CropBranch, f64, f64),
    pub reflect: bool,
    pub jitter: ColorJitter,
    pub elastic: Option<ElasticDraw>,
}

/// Stretch factor, log-uniform over the configured range, or 1 when the
/// stretch is skipped.
pub fn draw_stretch<R: Rng + ?Sized>(cfg: &AugmentConfig, rng: &mut R) -> f64 {
    if rng.random::<f64>() < cfg.stretch_probability {
        let (a, b) = cfg.stretch_range;
        uniform_between(rng, a.ln(), b.ln()).exp()
    } else {
        1.0
    }
}

/// Draws the augmentation parameters for one view of a recording.
pub fn draw_record<R: Rng + ?Sized>(
    e: &Echogram,
    t: &SegmentationTargets,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<AugmentRecord> {
    cfg.validate()?;
    let n = e.n_pings();
    if n == 0 {
        return Err(Error::Domain("recording has no pings".into()));
    }
    let stretch = draw_stretch(cfg, rng);
    let len = ((cfg.shape.0 as f64 / stretch).round() as usize).clamp(1, n);
    let start = rng.random_range(0..=n - len);
    let window = View::from_recording(&e.slice_pings(start, start + len), &t.slice_pings(start, start + len))?;
    let crop = depth_crop_window(&window, cfg, rng);
    let reflect = rng.random::<f64>() < cfg.reflect_probability;
    let offset = uniform_between(rng, -cfg.max_offset, cfg.max_offset);
    let gain = uniform_between(rng, cfg.gain_range.0, cfg.gain_range.1);
    let order = if rng.random::<bool>() {
        JitterOrder::BrightnessFirst
    } else {
        JitterOrder::ContrastFirst
    };
    let elastic = (rng.random::<f64>() < cfg.elastic_probability).then(|| ElasticDraw {
        order: InterpOrder::ALL[rng.random_range(0..3)],
        seed: rng.random(),
    });
    Ok(AugmentRecord {
        window: (start, len),
        stretch,
        crop,
        reflect,
        jitter: ColorJitter { offset, gain, order },
        elastic,
    })
}

/// Rebuilds the augmented view described by a record.
pub fn apply_record(e: &Echogram, t: &SegmentationTargets, record: &AugmentRecord, cfg: &AugmentConfig) -> Result<View> {
    let (start, len) = record.window;
    if len == 0 || start + len > e.n_pings() {
        return Err(Error::OutOfBounds {
            index: start + len,
            len: e.n_pings(),
        });
    }
    let view = View::from_recording(&e.slice_pings(start, start + len), &t.slice_pings(start, start + len))?;
    let view = stretch_time(&view, record.stretch)?;
    let (_, lo, hi) = record.crop;
    let view = crop_depth(&view, lo, hi)?;
    let view = if record.reflect { reflect_time(&view) } else { view };
    let view = color_jitter(&view, record.jitter);
    match record.elastic {
        Some(draw) => {
            let fields = ElasticFields::draw(view.n_pings(), view.n_samples(), &cfg.elastic, draw.seed);
            elastic_deform(&view, &fields, draw.order)
        }
        None => Ok(view),
    }
}

/// Fixed-size network input with per-ping and per-pixel targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingView {
    /// Shape (pings, depth bins).
    pub input: Matrix<f32>,
    /// Depth bin of each line per ping, indexed as [`LINE_NAMES`].
    pub line_index: [Vec<usize>; 5],
    /// Pings where each line contributes to the loss.
    pub line_valid: [Vec<bool>; 5],
    pub passive: Vec<bool>,
    pub bad_period: Vec<bool>,
    pub patches: [Matrix<bool>; 3],
    pub orientation: Orientation,
    pub extent: (f64, f64),
    pub record: Option<AugmentRecord>,
}

/// Depth bin of `d` on `h` bins spanning `extent`, clamped to the grid.
pub fn depth_to_bin(d: f64, extent: (f64, f64), h: usize) -> usize {
    let f = ((d - extent.0) / (extent.1 - extent.0) * h as f64).floor();
    if f.is_nan() || f < 0.0 {
        0
    } else {
        (f as usize).min(h - 1)
    }
}

/// Centre depth of bin `k` of `h` bins spanning `extent`.
pub fn bin_to_depth(k: f64, extent: (f64, f64), h: usize) -> f64 {
    extent.0 + (k + 0.5) * (extent.1 - extent.0) / h as f64
}

/// Nearest-neighbour resize of the view to `shape` and conversion of lines
/// to depth-bin indices.
pub fn finalize_view(view: &View, shape: (usize, usize)) -> Result<TrainingView> {
    let (w, h) = shape;
    let (n, m) = view.image.shape();
    if n == 0 || m == 0 || w == 0 || h == 0 {
        return Err(Error::Domain("cannot finalize an empty view".into()));
    }
    let rows: Vec<usize> = (0..w).map(|k| nearest_index(k, n, w)).collect();
    let cols: Vec<usize> = (0..h).map(|k| nearest_index(k, m, h)).collect();
    let v = view.select_pings(&rows);
    let patch = |mat: &Matrix<bool>| Matrix::from_fn(w, h, |i, j| mat[(i, cols[j])]);
    Ok(TrainingView {
        input: Matrix::from_fn(w, h, |i, j| v.image[(i, cols[j])]),
        line_index: v.lines.clone().map(|l| l.depths.iter().map(|&d| depth_to_bin(d, v.extent, h)).collect()),
        line_valid: v.lines.clone().map(|l| l.valid),
        passive: v.passive.clone(),
        bad_period: v.bad_period.clone(),
        patches: [patch(&v.patches[0]), patch(&v.patches[1]), patch(&v.patches[2])],
        orientation: v.orientation,
        extent: v.extent,
        record: None,
    })
}

/// Draws, applies and finalizes one augmented view of a recording.
pub fn training_view<R: Rng + ?Sized>(
    e: &Echogram,
    t: &SegmentationTargets,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<TrainingView> {
    let record = draw_record(e, t, cfg, rng)?;
    replay_view(e, t, &record, cfg)
}

/// Rebuilds a training view from its record.
pub fn replay_view(e: &Echogram, t: &SegmentationTargets, record: &AugmentRecord, cfg: &AugmentConfig) -> Result<TrainingView> {
    let view = apply_record(e, t, record, cfg)?;
    let mut out = finalize_view(&view, cfg.shape)?;
    out.record = Some(record.clone());
    Ok(out)
}

/// Normalized network input for inference: pings unchanged, depth resampled
/// with nearest-neighbour onto `h` bins spanning `extent`.
pub fn inference_input(e: &Echogram, extent: (f64, f64), h: usize) -> Result<Matrix<f32>> {
    if !(extent.1 > extent.0) || h == 0 {
        return Err(Error::Domain(format!("empty depth window [{}, {}]", extent.0, extent.1)));
    }
    let norm = normalize_sv(e)?;
    let (lo, hi) = e.depth_edges();
    let m = e.n_depths();
    let step = (hi - lo) / m as f64;
    let src: Vec<Option<usize>> = (0..h)
        .map(|k| {
            let c = bin_to_depth(k as f64, extent, h);
            (c >= lo && c <= hi).then(|| (((c - lo) / step - 0.5).round().max(0.0) as usize).min(m - 1))
        })
        .collect();
    Ok(Matrix::from_fn(e.n_pings(), h, |i, k| src[k].map_or(MISSING_VALUE, |s| norm[(i, s)])))
}

#[cfg(test)]
mod tests;
