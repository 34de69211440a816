//! Depth regridding onto the modal sample spacing.

use std::collections::HashMap;

use crate::formats::{sample_depths, SvCsvRecording, SvPing};
use crate::{Error, Matrix, Result};

use super::{Echogram, Orientation};

const GRID_TOL: f64 = 1e-9;

fn ping_step(ping: &SvPing, row: usize) -> Result<f64> {
    let n = ping.samples.len();
    if n < 2 {
        return Err(Error::Domain(format!(
            "ping {row} has {n} sample(s); interpolation needs at least 2"
        )));
    }
    Ok((ping.range_stop - ping.range_start) / (n - 1) as f64)
}

/// Most common per-ping sample spacing. Ties go to the finest spacing.
fn modal_step(steps: &[f64]) -> f64 {
    let mut counts: HashMap<i64, (usize, f64)> = HashMap::new();
    for &s in steps {
        let key = (s / GRID_TOL).round() as i64;
        counts.entry(key).or_insert((0, s)).0 += 1;
    }
    let mut best: Option<(usize, f64)> = None;
    for &(count, step) in counts.values() {
        best = match best {
            Some((c, s)) if c > count || (c == count && s <= step) => Some((c, s)),
            _ => Some((count, step)),
        };
    }
    best.map(|(_, s)| s).unwrap_or(f64::NAN)
}

/// Linearly interpolates every ping onto a common grid whose spacing is the
/// modal spacing across pings and which spans the union of ping ranges.
/// The result keeps the export's depth direction; see
/// [`super::standardize_orientation`].
pub fn regrid_depth(recording: &SvCsvRecording, orientation: Orientation) -> Result<Echogram> {
    if recording.pings.is_empty() {
        return Err(Error::Structure("recording has no pings".into()));
    }
    let steps = recording
        .pings
        .iter()
        .enumerate()
        .map(|(i, p)| ping_step(p, i))
        .collect::<Result<Vec<_>>>()?;
    let step = modal_step(&steps);
    let start = recording.pings.iter().map(|p| p.range_start).fold(f64::INFINITY, f64::min);
    let stop = recording.pings.iter().map(|p| p.range_stop).fold(f64::NEG_INFINITY, f64::max);
    let span = (stop - start) / step;
    let (intervals, stop) = if (span - span.round()).abs() < 1e-6 {
        (span.round() as usize, stop)
    } else {
        let k = span.ceil() as usize;
        (k, start + step * k as f64)
    };
    let depths = sample_depths(start, stop, intervals + 1);
    regrid_onto(recording, &depths, orientation)
}

/// Interpolates every ping onto the given ascending depth grid. Grid
/// points outside a ping's range, or whose bracketing samples are not both
/// present, are missing.
pub fn regrid_onto(recording: &SvCsvRecording, depths: &[f64], orientation: Orientation) -> Result<Echogram> {
    if recording.pings.is_empty() {
        return Err(Error::Structure("recording has no pings".into()));
    }
    if depths.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("target depth grid must be strictly increasing".into()));
    }
    let n_pings = recording.pings.len();
    let n_depths = depths.len();
    let mut sv = Matrix::filled(n_pings, n_depths, f32::NAN);
    let mut present = Matrix::filled(n_pings, n_depths, false);
    let mut timestamps = Vec::with_capacity(n_pings);
    for (i, ping) in recording.pings.iter().enumerate() {
        timestamps.push(ping.timestamp());
        let step = ping_step(ping, i)?;
        let own = ping.sample_depths();
        let on_grid = own.len() == n_depths
            && own.iter().zip(depths).all(|(a, b)| (a - b).abs() <= GRID_TOL);
        let row_sv = sv.row_mut(i);
        if on_grid {
            for (j, s) in ping.samples.iter().enumerate() {
                if let Some(v) = s {
                    row_sv[j] = *v as f32;
                }
            }
            let row_p = present.row_mut(i);
            for (j, s) in ping.samples.iter().enumerate() {
                row_p[j] = s.is_some();
            }
            continue;
        }
        let last = ping.samples.len() - 1;
        let mut values = vec![None; n_depths];
        for (j, &d) in depths.iter().enumerate() {
            let x = (d - ping.range_start) / step;
            if x < -GRID_TOL || x > last as f64 + GRID_TOL {
                continue;
            }
            let x = x.clamp(0.0, last as f64);
            let lo = (x.floor() as usize).min(last);
            let t = x - lo as f64;
            values[j] = if t <= GRID_TOL {
                ping.samples[lo]
            } else if t >= 1.0 - GRID_TOL {
                ping.samples[(lo + 1).min(last)]
            } else {
                match (ping.samples[lo], ping.samples[lo + 1]) {
                    (Some(a), Some(b)) => Some(lerp(a, b, t)),
                    _ => None,
                }
            };
        }
        for (j, v) in values.into_iter().enumerate() {
            if let Some(v) = v {
                sv.row_mut(i)[j] = v as f32;
                present.row_mut(i)[j] = true;
            }
        }
    }
    Ok(Echogram {
        timestamps,
        depths: depths.to_vec(),
        sv,
        present,
        orientation,
        flipped: false,
    })
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    (a + (b - a) * t).clamp(a.min(b), a.max(b))
}
