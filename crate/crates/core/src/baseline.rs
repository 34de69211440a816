//! Classical line pickers used as a benchmark: a Gaussian-blurred
//! threshold crossing for entrained air, and a bottom-candidate picker for
//! seafloor, sea surface and (on an inverted echogram) entrained air.

use serde::{Deserialize, Serialize};

use crate::preprocess::{
    detect_passive_periods, intervals_to_flags, BoundaryLine, Echogram, Orientation, RegionSet, Segmentation,
};
use crate::stats::gaussian_kernel;
use crate::{Error, Matrix, Result};

/// How the blur treats the echogram border.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlurEdge {
    /// Renormalize the kernel over the cells that exist.
    Renormalize,
    /// Wrap around in both axes.
    Periodic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub blur_kernel: usize,
    pub blur_sigma: f64,
    pub threshold_db: f64,
    pub invert_gain: f64,
    pub invert_offset_db: f64,
    /// Good-pick and discrimination levels on the inverted echogram.
    pub air_good_pick_db: f64,
    pub air_discrimination_db: f64,
    pub seafloor_good_pick_db: f64,
    pub seafloor_discrimination_db: f64,
    pub seafloor_backstep_db: f64,
    pub surface_backstep_db: f64,
    /// Largest distance a backstep may move the pick.
    pub max_backstep_m: f64,
    /// Seafloor pick is raised by this much.
    pub seafloor_offset_m: f64,
    /// Consecutive samples above discrimination that make a pick.
    pub min_run: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            blur_kernel: 13,
            blur_sigma: 2.0,
            threshold_db: -80.0,
            invert_gain: -1.0,
            invert_offset_db: -150.0,
            air_good_pick_db: -70.0,
            air_discrimination_db: -70.0,
            seafloor_good_pick_db: -70.0,
            seafloor_discrimination_db: -70.0,
            seafloor_backstep_db: -50.0,
            surface_backstep_db: -25.0,
            max_backstep_m: 0.5,
            seafloor_offset_m: 0.5,
            min_run: 3,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.blur_kernel.is_multiple_of(2) {
            return Err(Error::Config(format!("blur kernel side {} must be odd", self.blur_kernel)));
        }
        if self.min_run == 0 {
            return Err(Error::Config("min_run must be positive".into()));
        }
        Ok(())
    }
}

/// Which entrained-air picker to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AirMethod {
    /// Blur, then first sample below the threshold beneath the surface.
    ThresholdOffset,
    /// Bottom-candidate picker on the inverted echogram.
    InvertedBottom,
}

impl std::str::FromStr for AirMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "threshold-offset" | "threshold" => Ok(Self::ThresholdOffset),
            "inverted-bottom" | "best-bottom" => Ok(Self::InvertedBottom),
            _ => Err(Error::Config(format!("unknown baseline method '{s}'"))),
        }
    }
}

/// 2-D Gaussian blur over (ping, depth) with missing cells excluded by
/// mask-weighted normalization. Missing cells stay missing.
pub fn gaussian_blur_2d(e: &Echogram, kernel: usize, sigma: f64, edge: BlurEdge) -> Result<Echogram> {
    if kernel.is_multiple_of(2) {
        return Err(Error::Config(format!("blur kernel side {kernel} must be odd")));
    }
    let radius = kernel / 2;
    let k = gaussian_kernel(sigma, radius);
    let (n, d) = e.sv.shape();
    let weight = Matrix::from_fn(n, d, |i, j| if e.present[(i, j)] { 1.0 } else { 0.0 });
    let value = Matrix::from_fn(n, d, |i, j| if e.present[(i, j)] { e.sv[(i, j)] as f64 } else { 0.0 });
    let conv = |m: &Matrix<f64>| convolve_cols(&convolve_rows(m, &k, edge), &k, edge);
    let num = conv(&value);
    let den = conv(&weight);
    let sv = Matrix::from_fn(n, d, |i, j| {
        if e.present[(i, j)] && den[(i, j)] > 0.0 {
            (num[(i, j)] / den[(i, j)]) as f32
        } else {
            f32::NAN
        }
    });
    Ok(Echogram { sv, ..e.clone() })
}

fn tap(i: usize, k: usize, radius: usize, len: usize, edge: BlurEdge) -> Option<usize> {
    let pos = i as isize + k as isize - radius as isize;
    match edge {
        BlurEdge::Renormalize => (0..len as isize).contains(&pos).then_some(pos as usize),
        BlurEdge::Periodic => Some(pos.rem_euclid(len as isize) as usize),
    }
}

/// Along pings (rows).
fn convolve_rows(m: &Matrix<f64>, k: &[f64], edge: BlurEdge) -> Matrix<f64> {
    let (n, d) = m.shape();
    let radius = k.len() / 2;
    Matrix::from_fn(n, d, |i, j| {
        k.iter()
            .enumerate()
            .filter_map(|(t, w)| tap(i, t, radius, n, edge).map(|r| w * m[(r, j)]))
            .sum()
    })
}

/// Along depth (columns).
fn convolve_cols(m: &Matrix<f64>, k: &[f64], edge: BlurEdge) -> Matrix<f64> {
    let (n, d) = m.shape();
    let radius = k.len() / 2;
    Matrix::from_fn(n, d, |i, j| {
        k.iter()
            .enumerate()
            .filter_map(|(t, w)| tap(j, t, radius, d, edge).map(|c| w * m[(i, c)]))
            .sum()
    })
}

/// Per ping, the depth of the first present sample deeper than the surface
/// line whose value is below `min_db`. Pings without a crossing get the
/// deepest sample and are flagged invalid.
pub fn threshold_offset_pick(blurred: &Echogram, surface: &BoundaryLine, min_db: f64) -> Result<BoundaryLine> {
    let n = blurred.n_pings();
    if surface.len() != n {
        return Err(Error::Alignment(format!("surface has {} pings, echogram {n}", surface.len())));
    }
    let deepest = blurred.depths[blurred.n_depths() - 1];
    let mut line = BoundaryLine::constant(deepest, n);
    for i in 0..n {
        let start = blurred.depths.partition_point(|&d| d <= surface.depths[i]);
        let hit = (start..blurred.n_depths()).find(|&j| blurred.get(i, j).is_some_and(|v| (v as f64) < min_db));
        match hit {
            Some(j) => line.depths[i] = blurred.depths[j],
            None => line.valid[i] = false,
        }
    }
    Ok(line)
}

/// How the picker chooses among qualifying candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CandidateChoice {
    /// Nearest the transducer.
    First,
    /// Highest peak; ties go to the nearest.
    Strongest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BottomPickParams {
    pub good_pick_db: f64,
    pub discrimination_db: f64,
    pub backstep_db: Option<f64>,
    pub max_backstep_m: f64,
    pub invert: Option<(f64, f64)>,
    pub min_run: usize,
    pub choice: CandidateChoice,
}

/// Bottom-candidate picker. Walking away from the transducer, a candidate
/// is the onset of a run of at least `min_run` samples above the
/// discrimination level (or a run reaching the end of the ping) that
/// follows a weaker sample or the start of the ping, and whose peak exceeds
/// the good-pick level. With a backstep level, the pick then moves back
/// toward the transducer while samples stay at or above that level, up to
/// `max_backstep_m`. With `invert = Some((gain, offset))` values are first
/// mapped to `gain * sv + offset`. Pings without a candidate get the far
/// end of the search and are flagged invalid.
pub fn best_bottom_candidate(e: &Echogram, p: &BottomPickParams) -> BoundaryLine {
    let n = e.n_pings();
    let nd = e.n_depths();
    let order: Vec<usize> = if e.transducer_at_top() { (0..nd).collect() } else { (0..nd).rev().collect() };
    let step = e.depth_step();
    let far = e.depths[order[nd - 1]];
    let mut line = BoundaryLine::constant(far, n);
    for i in 0..n {
        let vals: Vec<f64> = order
            .iter()
            .map(|&j| match e.get(i, j) {
                Some(v) => match p.invert {
                    Some((g, o)) => g * v as f64 + o,
                    None => v as f64,
                },
                None => f64::NEG_INFINITY,
            })
            .collect();
        let mut best: Option<(usize, f64)> = None;
        let mut k = 0;
        while k < nd {
            if vals[k] > p.discrimination_db && (k == 0 || vals[k - 1] <= p.discrimination_db) {
                let end = (k..nd).find(|&m| vals[m] <= p.discrimination_db).unwrap_or(nd);
                let long_enough = end - k >= p.min_run || end == nd;
                let peak = vals[k..end].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if long_enough && peak > p.good_pick_db {
                    match p.choice {
                        CandidateChoice::First => {
                            best = Some((k, peak));
                            break;
                        }
                        CandidateChoice::Strongest => {
                            if best.is_none_or(|(_, bp)| peak > bp) {
                                best = Some((k, peak));
                            }
                        }
                    }
                }
                k = end;
            } else {
                k += 1;
            }
        }
        match best {
            Some((mut onset, _)) => {
                if let Some(level) = p.backstep_db {
                    let max_steps = if step > 0.0 { (p.max_backstep_m / step + 1e-9).floor() as usize } else { 0 };
                    let mut steps = 0;
                    while onset > 0 && steps < max_steps && vals[onset - 1] >= level {
                        onset -= 1;
                        steps += 1;
                    }
                }
                line.depths[i] = e.depths[order[onset]];
            }
            None => line.valid[i] = false,
        }
    }
    line
}

impl BaselineConfig {
    pub fn seafloor_params(&self) -> BottomPickParams {
        BottomPickParams {
            good_pick_db: self.seafloor_good_pick_db,
            discrimination_db: self.seafloor_discrimination_db,
            backstep_db: Some(self.seafloor_backstep_db),
            max_backstep_m: self.max_backstep_m,
            invert: None,
            min_run: self.min_run,
            choice: CandidateChoice::Strongest,
        }
    }

    pub fn surface_params(&self) -> BottomPickParams {
        BottomPickParams {
            backstep_db: Some(self.surface_backstep_db),
            ..self.seafloor_params()
        }
    }

    pub fn inverted_air_params(&self) -> BottomPickParams {
        BottomPickParams {
            good_pick_db: self.air_good_pick_db,
            discrimination_db: self.air_discrimination_db,
            backstep_db: None,
            max_backstep_m: 0.0,
            invert: Some((self.invert_gain, self.invert_offset_db)),
            min_run: self.min_run,
            choice: CandidateChoice::First,
        }
    }
}

/// Echogram with passive pings removed from consideration.
fn without_pings(e: &Echogram, flags: &[bool]) -> Echogram {
    let mut out = e.clone();
    for (i, &f) in flags.iter().enumerate() {
        if f {
            out.present.row_mut(i).iter_mut().for_each(|p| *p = false);
            out.sv.row_mut(i).iter_mut().for_each(|v| *v = f32::NAN);
        }
    }
    out
}

/// Full classical annotation of a standardized echogram: passive periods
/// by detection, surface (upfacing) and seafloor (downfacing) by the
/// bottom-candidate picker, entrained air by `method`. No bad-data regions
/// are produced.
pub fn run_baseline(e: &Echogram, config: &BaselineConfig, method: AirMethod) -> Result<Segmentation> {
    config.validate()?;
    let n = e.n_pings();
    let passive = if n >= 2 { detect_passive_periods(e)? } else { Vec::new() };
    let flags = intervals_to_flags(&passive, n);
    let active = without_pings(e, &flags);
    let deepest = e.depths[e.n_depths() - 1];
    let (surface, seafloor) = match e.orientation {
        Orientation::Downfacing => {
            let mut sea = best_bottom_candidate(&active, &config.seafloor_params());
            for d in sea.depths.iter_mut() {
                *d -= config.seafloor_offset_m;
            }
            (BoundaryLine::constant(0.0, n), sea)
        }
        Orientation::Upfacing => (
            best_bottom_candidate(&active, &config.surface_params()),
            BoundaryLine::constant(deepest, n),
        ),
    };
    let air = match method {
        AirMethod::ThresholdOffset => {
            let blurred = gaussian_blur_2d(&active, config.blur_kernel, config.blur_sigma, BlurEdge::Renormalize)?;
            threshold_offset_pick(&blurred, &surface, config.threshold_db)?
        }
        AirMethod::InvertedBottom => {
            // air is searched from the surface downward in both orientations
            let mut from_top = active.clone();
            from_top.flipped = false;
            let mut line = best_bottom_candidate(&blank_above(&from_top, &surface), &config.inverted_air_params());
            for (i, d) in line.depths.iter_mut().enumerate() {
                if !line.valid[i] {
                    *d = deepest.max(surface.depths[i]);
                }
            }
            line
        }
    };
    Ok(Segmentation {
        air,
        seafloor,
        surface,
        regions: RegionSet {
            passive,
            bad_periods: Vec::new(),
            patches: Matrix::filled(n, e.n_depths(), false),
        },
    })
}

/// Marks samples at or above the surface line as missing.
fn blank_above(e: &Echogram, surface: &BoundaryLine) -> Echogram {
    let mut out = e.clone();
    for i in 0..e.n_pings() {
        for j in 0..e.n_depths() {
            if surface.valid[i] && e.depths[j] <= surface.depths[i] {
                out.present.row_mut(i)[j] = false;
            }
        }
    }
    out
}
