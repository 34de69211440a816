//! Turns raw exports into model-ready echograms and segmentation targets.
//!
//! Coordinate convention: after [`standardize_orientation`] the depth axis
//! of every echogram runs from the far side of the water column (index 0)
//! towards larger water-column depth, for both orientations. Depth values
//! form a uniform ascending grid. For upfacing recordings, positions read
//! from line files are mapped onto this grid with
//! [`Echogram::reflect_depth`].
//!
//! Pixel rules shared by every module: a sample at depth `d` is *above* a
//! line at depth `l` when `d < l`, and *below* it when `d > l`.

mod bad;
mod lines;
mod passive;
mod regrid;
mod surface;
mod targets;

pub use bad::{detect_bad_regions, explained_mask, reconstruct_good_mask, BadRegions};
pub use lines::{line_from_file, line_to_file};
pub use passive::{
    detect_passive_periods, detect_passive_with_schedule, transducer_differences, PassiveSchedule,
    PASSIVE_SAMPLES, PASSIVE_THRESHOLD_DB,
};
pub use regrid::{regrid_depth, regrid_onto};
pub use surface::clean_surface_line;
pub use targets::{build_targets, mask_extents, AnnotationLines};

use serde::{Deserialize, Serialize};

use crate::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Downfacing,
    Upfacing,
}

impl Orientation {
    pub fn name(self) -> &'static str {
        match self {
            Self::Downfacing => "downfacing",
            Self::Upfacing => "upfacing",
        }
    }
}

impl std::str::FromStr for Orientation {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "downfacing" | "down" => Ok(Self::Downfacing),
            "upfacing" | "up" => Ok(Self::Upfacing),
            other => Err(crate::Error::Config(format!("unknown orientation '{other}'"))),
        }
    }
}

/// Ping-by-depth Sv image. Missing cells hold NaN in `sv` and `false` in
/// `present`; code must consult `present` rather than the value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Echogram {
    pub timestamps: Vec<f64>,
    pub depths: Vec<f64>,
    pub sv: Matrix<f32>,
    pub present: Matrix<bool>,
    pub orientation: Orientation,
    /// Depth axis is reversed relative to the export, i.e. the transducer
    /// sits at the last depth index.
    pub flipped: bool,
}

impl PartialEq for Echogram {
    fn eq(&self, other: &Self) -> bool {
        self.timestamps == other.timestamps
            && self.depths == other.depths
            && self.present == other.present
            && self.orientation == other.orientation
            && self.flipped == other.flipped
            && self.sv.shape() == other.sv.shape()
            && self
                .sv
                .as_slice()
                .iter()
                .zip(other.sv.as_slice())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl Echogram {
    pub fn n_pings(&self) -> usize {
        self.timestamps.len()
    }

    pub fn n_depths(&self) -> usize {
        self.depths.len()
    }

    /// Grid spacing; zero for single-sample grids.
    pub fn depth_step(&self) -> f64 {
        if self.depths.len() < 2 {
            0.0
        } else {
            (self.depths[self.depths.len() - 1] - self.depths[0]) / (self.depths.len() - 1) as f64
        }
    }

    /// Outer edges of the depth grid (half a step beyond the first and last
    /// sample centres).
    pub fn depth_edges(&self) -> (f64, f64) {
        let half = 0.5 * self.depth_step();
        (self.depths[0] - half, self.depths[self.depths.len() - 1] + half)
    }

    /// Maps a position between the export convention and the standardized
    /// convention. Self-inverse up to rounding.
    pub fn reflect_depth(&self, d: f64) -> f64 {
        self.depths[0] + self.depths[self.depths.len() - 1] - d
    }

    /// Whether the transducer is at depth index 0.
    pub fn transducer_at_top(&self) -> bool {
        !self.flipped
    }

    /// Value at a cell if present.
    pub fn get(&self, ping: usize, depth: usize) -> Option<f32> {
        self.present[(ping, depth)].then(|| self.sv[(ping, depth)])
    }

    pub fn slice_pings(&self, start: usize, end: usize) -> Echogram {
        Echogram {
            timestamps: self.timestamps[start..end].to_vec(),
            depths: self.depths.clone(),
            sv: self.sv.row_slice(start, end),
            present: self.present.row_slice(start, end),
            orientation: self.orientation,
            flipped: self.flipped,
        }
    }

    /// Reverses the depth axis. An involution.
    pub fn flip_depth(&self) -> Echogram {
        Echogram {
            timestamps: self.timestamps.clone(),
            depths: self.depths.clone(),
            sv: self.sv.flip_cols(),
            present: self.present.flip_cols(),
            orientation: self.orientation,
            flipped: !self.flipped,
        }
    }

    /// Present values in the first `count` samples nearest the transducer
    /// of a ping, in order of increasing range.
    pub fn near_transducer(&self, ping: usize, count: usize) -> impl Iterator<Item = (usize, Option<f32>)> + '_ {
        let n = self.n_depths();
        let count = count.min(n);
        (0..count).map(move |k| {
            let j = if self.flipped { n - 1 - k } else { k };
            (j, self.get(ping, j))
        })
    }
}

/// Makes increasing depth index correspond to increasing water-column depth.
/// Downfacing data is returned unchanged; upfacing data has its depth axis
/// reversed, so applying this twice to upfacing data restores the original.
pub fn standardize_orientation(echogram: &Echogram) -> Echogram {
    match echogram.orientation {
        Orientation::Downfacing => echogram.clone(),
        Orientation::Upfacing => echogram.flip_depth(),
    }
}

/// Per-ping depth trace with validity flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryLine {
    pub depths: Vec<f64>,
    pub valid: Vec<bool>,
}

impl BoundaryLine {
    pub fn new(depths: Vec<f64>) -> Self {
        let valid = vec![true; depths.len()];
        Self { depths, valid }
    }

    pub fn constant(value: f64, n: usize) -> Self {
        Self::new(vec![value; n])
    }

    pub fn len(&self) -> usize {
        self.depths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depths.is_empty()
    }

    pub fn valid_depths(&self) -> impl Iterator<Item = f64> + '_ {
        self.depths
            .iter()
            .zip(&self.valid)
            .filter(|(_, &v)| v)
            .map(|(&d, _)| d)
    }

    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            depths: self.depths[start..end].to_vec(),
            valid: self.valid[start..end].to_vec(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            depths: self.depths.iter().map(|&d| f(d)).collect(),
            valid: self.valid.clone(),
        }
    }
}

/// Inclusive ping interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PingInterval {
    pub start: usize,
    pub end: usize,
}

impl PingInterval {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, ping: usize) -> bool {
        (self.start..=self.end).contains(&ping)
    }
}

/// Maximal runs of `true`.
pub fn flags_to_intervals(flags: &[bool]) -> Vec<PingInterval> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &f) in flags.iter().enumerate() {
        match (f, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push(PingInterval::new(s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(PingInterval::new(s, flags.len() - 1));
    }
    out
}

pub fn intervals_to_flags(intervals: &[PingInterval], n: usize) -> Vec<bool> {
    let mut flags = vec![false; n];
    for iv in intervals {
        for f in flags.iter_mut().take(iv.end.min(n.saturating_sub(1)) + 1).skip(iv.start) {
            *f = true;
        }
    }
    flags
}

/// Which line variants a patch mask accompanies, in output-plane order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatchVariant {
    /// Expanded entrained-air and aggressive seafloor lines.
    Expanded = 0,
    /// Original annotated lines.
    Original = 1,
    /// Original seafloor with expanded entrained air.
    OriginalSeafloorExpandedAir = 2,
}

impl PatchVariant {
    pub const ALL: [PatchVariant; 3] = [Self::Expanded, Self::Original, Self::OriginalSeafloorExpandedAir];
}

/// Training targets aligned ping-for-ping (and pixel-for-pixel) with a
/// standardized echogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationTargets {
    /// Deeper of the annotated line and the upper extent of the mask.
    pub air: BoundaryLine,
    pub air_original: BoundaryLine,
    pub seafloor: BoundaryLine,
    /// Seafloor raised to cover masked area adjacent to it.
    pub seafloor_aggressive: BoundaryLine,
    /// Invalid entries are anomalous and excluded from training.
    pub surface: BoundaryLine,
    pub passive: Vec<bool>,
    pub bad_period: Vec<bool>,
    /// Indexed by [`PatchVariant`].
    pub patches: [Matrix<bool>; 3],
    pub good: Matrix<bool>,
}

impl SegmentationTargets {
    pub fn n_pings(&self) -> usize {
        self.passive.len()
    }

    /// `(air, seafloor)` lines a patch variant is defined against.
    pub fn lines_for(&self, variant: PatchVariant) -> (&BoundaryLine, &BoundaryLine) {
        match variant {
            PatchVariant::Expanded => (&self.air, &self.seafloor_aggressive),
            PatchVariant::Original => (&self.air_original, &self.seafloor),
            PatchVariant::OriginalSeafloorExpandedAir => (&self.air, &self.seafloor),
        }
    }

    pub fn slice_pings(&self, start: usize, end: usize) -> Self {
        Self {
            air: self.air.slice(start, end),
            air_original: self.air_original.slice(start, end),
            seafloor: self.seafloor.slice(start, end),
            seafloor_aggressive: self.seafloor_aggressive.slice(start, end),
            surface: self.surface.slice(start, end),
            passive: self.passive[start..end].to_vec(),
            bad_period: self.bad_period[start..end].to_vec(),
            patches: [
                self.patches[0].row_slice(start, end),
                self.patches[1].row_slice(start, end),
                self.patches[2].row_slice(start, end),
            ],
            good: self.good.row_slice(start, end),
        }
    }

    pub fn passive_intervals(&self) -> Vec<PingInterval> {
        flags_to_intervals(&self.passive)
    }

    pub fn bad_intervals(&self) -> Vec<PingInterval> {
        flags_to_intervals(&self.bad_period)
    }
}

/// Ping intervals and a pixel mask of excluded data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSet {
    pub passive: Vec<PingInterval>,
    pub bad_periods: Vec<PingInterval>,
    pub patches: Matrix<bool>,
}

impl RegionSet {
    pub fn empty(n_pings: usize, n_depths: usize) -> Self {
        Self {
            passive: Vec::new(),
            bad_periods: Vec::new(),
            patches: Matrix::filled(n_pings, n_depths, false),
        }
    }
}

/// A complete annotation of a standardized echogram: lines plus regions.
/// Produced by the model, by the classical pickers, or from targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    pub air: BoundaryLine,
    pub seafloor: BoundaryLine,
    pub surface: BoundaryLine,
    pub regions: RegionSet,
}

impl Segmentation {
    /// Reference annotation from targets: the deepest-extent entrained-air
    /// line with the original seafloor, and the matching patch mask.
    pub fn from_targets(t: &SegmentationTargets) -> Self {
        let v = PatchVariant::OriginalSeafloorExpandedAir;
        let (air, seafloor) = t.lines_for(v);
        Self {
            air: air.clone(),
            seafloor: seafloor.clone(),
            surface: t.surface.clone(),
            regions: RegionSet {
                passive: t.passive_intervals(),
                bad_periods: t.bad_intervals(),
                patches: t.patches[v as usize].clone(),
            },
        }
    }

    pub fn n_pings(&self) -> usize {
        self.air.len()
    }

    pub fn passive_flags(&self) -> Vec<bool> {
        intervals_to_flags(&self.regions.passive, self.n_pings())
    }

    pub fn bad_period_flags(&self) -> Vec<bool> {
        intervals_to_flags(&self.regions.bad_periods, self.n_pings())
    }

    /// Good-data mask implied by the annotation.
    pub fn good_mask(&self, echogram: &Echogram) -> Matrix<bool> {
        let explained = explained_mask(
            &echogram.depths,
            &self.air,
            &self.seafloor,
            echogram.orientation,
            &self.passive_flags(),
            &self.bad_period_flags(),
        );
        Matrix::from_fn(explained.rows(), explained.cols(), |i, j| {
            !explained[(i, j)] && !self.regions.patches[(i, j)]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(orientation: Orientation) -> Echogram {
        Echogram {
            timestamps: vec![0.0, 1.0],
            depths: vec![0.0, 1.0, 2.0],
            sv: Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap(),
            present: Matrix::filled(2, 3, true),
            orientation,
            flipped: false,
        }
    }

    #[test]
    fn downfacing_is_unchanged() {
        let e = tiny(Orientation::Downfacing);
        assert_eq!(standardize_orientation(&e), e);
    }

    #[test]
    fn upfacing_reverses_depth_axis() {
        let e = tiny(Orientation::Upfacing);
        let s = standardize_orientation(&e);
        assert_eq!(s.sv.row(0), &[3.0, 2.0, 1.0]);
        assert!(s.flipped);
        assert_eq!(standardize_orientation(&s), e);
    }

    #[test]
    fn intervals_from_flags() {
        let f = [false, true, true, false, true];
        let iv = flags_to_intervals(&f);
        assert_eq!(iv, vec![PingInterval::new(1, 2), PingInterval::new(4, 4)]);
        assert_eq!(intervals_to_flags(&iv, 5), f.to_vec());
    }
}
