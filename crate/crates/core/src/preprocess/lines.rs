//! Conversion between line files and per-ping boundary lines.

use crate::formats::{LineFile, LinePoint, LineStatus};
use crate::{Error, Result};

use super::BoundaryLine;

/// Linearly interpolates a line file onto ping timestamps. Points with
/// status `None` or `Bad` are ignored. Outside the annotated time span the
/// nearest usable point is held.
pub fn line_from_file(file: &LineFile, timestamps: &[f64]) -> Result<BoundaryLine> {
    let knots: Vec<(f64, f64)> = file
        .points
        .iter()
        .filter(|p| matches!(p.status, LineStatus::Good | LineStatus::Unverified))
        .filter(|p| p.depth.is_finite())
        .map(|p| (p.timestamp, p.depth))
        .collect();
    if knots.is_empty() {
        return Err(Error::Degenerate("line file has no usable points".into()));
    }
    Ok(BoundaryLine::new(timestamps.iter().map(|&t| interp(&knots, t)).collect()))
}

fn interp(knots: &[(f64, f64)], t: f64) -> f64 {
    let first = knots[0];
    let last = knots[knots.len() - 1];
    if t <= first.0 {
        return first.1;
    }
    if t >= last.0 {
        return last.1;
    }
    // first index with knot time > t; exists because t < last.0
    let hi = knots.partition_point(|k| k.0 <= t);
    let (t0, d0) = knots[hi - 1];
    let (t1, d1) = knots[hi];
    if t == t0 || t1 <= t0 {
        return d0;
    }
    d0 + (d1 - d0) * (t - t0) / (t1 - t0)
}

/// One point per valid ping, status good.
pub fn line_to_file(line: &BoundaryLine, timestamps: &[f64]) -> Result<LineFile> {
    if line.len() != timestamps.len() {
        return Err(Error::Alignment(format!(
            "line has {} pings, timestamps {}",
            line.len(),
            timestamps.len()
        )));
    }
    let points = timestamps
        .iter()
        .zip(&line.depths)
        .zip(&line.valid)
        .filter(|(_, &v)| v)
        .map(|((&timestamp, &depth), _)| LinePoint {
            timestamp,
            depth,
            status: LineStatus::Good,
        })
        .collect();
    Ok(LineFile::new(points))
}
