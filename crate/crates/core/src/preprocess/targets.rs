//! Target construction from raw and clean exports plus line annotations.

use crate::{Error, Matrix, Result};

use super::bad::detect_bad_regions;
use super::passive::{detect_passive_with_schedule, PassiveSchedule};
use super::surface::clean_surface_line;
use super::{intervals_to_flags, BoundaryLine, Echogram, Orientation, SegmentationTargets};

/// Annotated lines already interpolated onto the ping timestamps and
/// expressed in standardized coordinates. Seafloor is ignored for
/// upfacing data; surface is ignored for downfacing data.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationLines {
    pub air: BoundaryLine,
    pub seafloor: Option<BoundaryLine>,
    pub surface: Option<BoundaryLine>,
}

fn check_aligned(raw: &Echogram, clean: &Echogram) -> Result<()> {
    if raw.sv.shape() != clean.sv.shape() {
        return Err(Error::Alignment(format!(
            "raw shape {:?} differs from clean shape {:?}",
            raw.sv.shape(),
            clean.sv.shape()
        )));
    }
    if raw.depths.iter().zip(&clean.depths).any(|(a, b)| (a - b).abs() > 1e-9) {
        return Err(Error::Alignment("raw and clean depth grids differ".into()));
    }
    if raw.orientation != clean.orientation || raw.flipped != clean.flipped {
        return Err(Error::Alignment("raw and clean orientations differ".into()));
    }
    Ok(())
}

fn check_line(line: &BoundaryLine, n: usize, what: &str) -> Result<()> {
    if line.len() != n {
        return Err(Error::Alignment(format!("{what} line has {} pings, echogram {n}", line.len())));
    }
    Ok(())
}

/// Depth of the first good sample per ping (the bottom of the top masked
/// run), and of the last good sample (the top of the bottom masked run).
/// Pings without good samples yield `None`.
pub fn mask_extents(good: &Matrix<bool>, depths: &[f64]) -> Vec<Option<(f64, f64)>> {
    good.iter_rows()
        .map(|row| {
            let first = row.iter().position(|&g| g)?;
            let last = row.iter().rposition(|&g| g)?;
            Some((depths[first], depths[last]))
        })
        .collect()
}

/// Builds segmentation targets for a standardized recording pair.
///
/// The good-data mask is where the clean export has a value. The
/// entrained-air target is the deeper of the annotation and the first good
/// sample; pings without good data keep the annotation. The aggressive
/// seafloor is the shallower of the annotation and the last good sample.
/// Passive periods come from `schedule` or are detected on `raw`.
pub fn build_targets(
    raw: &Echogram,
    clean: &Echogram,
    lines: &AnnotationLines,
    schedule: Option<&PassiveSchedule>,
) -> Result<SegmentationTargets> {
    check_aligned(raw, clean)?;
    let n = raw.n_pings();
    check_line(&lines.air, n, "entrained-air")?;
    let good = clean.present.clone();
    let extents = mask_extents(&good, &clean.depths);
    let deepest = *raw.depths.last().ok_or_else(|| Error::Structure("empty depth grid".into()))?;

    let air_original = lines.air.clone();
    let mut air = air_original.clone();
    for (i, ext) in extents.iter().enumerate() {
        if let Some((top, _)) = ext {
            air.depths[i] = if air.valid[i] { air.depths[i].max(*top) } else { *top };
            air.valid[i] = true;
        }
    }

    let (seafloor, seafloor_aggressive) = match raw.orientation {
        Orientation::Upfacing => {
            let l = BoundaryLine::constant(deepest, n);
            (l.clone(), l)
        }
        Orientation::Downfacing => {
            let original = match &lines.seafloor {
                Some(s) => {
                    check_line(s, n, "seafloor")?;
                    s.clone()
                }
                None => BoundaryLine {
                    depths: extents.iter().map(|e| e.map_or(deepest, |(_, b)| b)).collect(),
                    valid: extents.iter().map(Option::is_some).collect(),
                },
            };
            let mut aggressive = original.clone();
            for (i, ext) in extents.iter().enumerate() {
                if let Some((_, bottom)) = ext {
                    aggressive.depths[i] = if aggressive.valid[i] {
                        aggressive.depths[i].min(*bottom)
                    } else {
                        *bottom
                    };
                    aggressive.valid[i] = true;
                }
            }
            (original, aggressive)
        }
    };

    let surface = match (raw.orientation, &lines.surface) {
        (Orientation::Downfacing, _) => BoundaryLine::constant(0.0, n),
        (Orientation::Upfacing, Some(s)) => {
            check_line(s, n, "surface")?;
            match clean_surface_line(s, Some(&air), Orientation::Upfacing) {
                Ok(l) => l,
                Err(Error::Degenerate(msg)) => {
                    log::warn!("surface line discarded: {msg}");
                    BoundaryLine { depths: s.depths.clone(), valid: vec![false; n] }
                }
                Err(e) => return Err(e),
            }
        }
        (Orientation::Upfacing, None) => BoundaryLine { depths: vec![0.0; n], valid: vec![false; n] },
    };

    let passive = if n >= 2 || schedule.is_some() {
        intervals_to_flags(&detect_passive_with_schedule(raw, schedule)?, n)
    } else {
        vec![false; n]
    };

    let empty = Matrix::filled(n, raw.n_depths(), false);
    let mut targets = SegmentationTargets {
        air,
        air_original,
        seafloor,
        seafloor_aggressive,
        surface,
        passive,
        bad_period: vec![false; n],
        patches: [empty.clone(), empty.clone(), empty],
        good,
    };
    let bad = detect_bad_regions(&targets, clean);
    targets.bad_period = bad.periods;
    targets.patches = bad.patches;
    Ok(targets)
}
