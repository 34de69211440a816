//! Rejection of jumps in annotated surface lines.

use crate::stats::{iqr, idr, median_filter};
use crate::{Error, Result};

use super::{BoundaryLine, Orientation};

const COARSE_WINDOW: usize = 201;
const COARSE_SIGMAS: f64 = 5.0;
const FINE_WINDOW: usize = 31;
const FINE_SIGMAS: f64 = 4.0;
const MAX_ROUNDS: usize = 64;

/// Cleans a surface line.
///
/// Downfacing recordings get a constant 0 m line (the transducer face).
/// Otherwise: values far from a 201-point running median are replaced by
/// that median; then values far from a 31-point running median are marked
/// invalid until none are; finally the line is clamped to be no deeper than
/// `air`. The whole sequence repeats until nothing changes, which makes the
/// operation idempotent.
///
/// Anomalies are residuals with `|r| > k * sigma`, so a line whose residuals
/// are all zero has none.
pub fn clean_surface_line(
    surface: &BoundaryLine,
    air: Option<&BoundaryLine>,
    orientation: Orientation,
) -> Result<BoundaryLine> {
    if orientation == Orientation::Downfacing {
        return Ok(BoundaryLine::constant(0.0, surface.len()));
    }
    if let Some(air) = air {
        if air.len() != surface.len() {
            return Err(Error::Alignment(format!(
                "surface has {} pings, entrained-air line {}",
                surface.len(),
                air.len()
            )));
        }
    }
    if surface.valid_depths().next().is_none() {
        return Err(Error::Degenerate("surface line has no valid points".into()));
    }
    let mut line = surface.clone();
    for _ in 0..MAX_ROUNDS {
        let before = line.clone();
        replace_coarse_outliers(&mut line);
        while remove_fine_outliers(&mut line) {}
        if let Some(air) = air {
            for i in 0..line.len() {
                if line.valid[i] && air.valid[i] && line.depths[i] > air.depths[i] {
                    line.depths[i] = air.depths[i];
                }
            }
        }
        if line.valid_depths().next().is_none() {
            return Err(Error::Degenerate("every surface point was anomalous".into()));
        }
        if line == before {
            break;
        }
    }
    Ok(line)
}

fn valid_indices(line: &BoundaryLine) -> Vec<usize> {
    (0..line.len()).filter(|&i| line.valid[i]).collect()
}

fn replace_coarse_outliers(line: &mut BoundaryLine) {
    let idx = valid_indices(line);
    let values: Vec<f64> = idx.iter().map(|&i| line.depths[i]).collect();
    let med = median_filter(&values, COARSE_WINDOW);
    let resid: Vec<f64> = values.iter().zip(&med).map(|(v, m)| v - m).collect();
    let Some(sigma) = iqr(resid.iter().copied()).map(|r| r / 1.35) else {
        return;
    };
    for (k, &i) in idx.iter().enumerate() {
        if resid[k].abs() > COARSE_SIGMAS * sigma {
            line.depths[i] = med[k];
        }
    }
}

fn remove_fine_outliers(line: &mut BoundaryLine) -> bool {
    let idx = valid_indices(line);
    let values: Vec<f64> = idx.iter().map(|&i| line.depths[i]).collect();
    let med = median_filter(&values, FINE_WINDOW);
    let resid: Vec<f64> = values.iter().zip(&med).map(|(v, m)| v - m).collect();
    let Some(sigma) = idr(resid.iter().copied()).map(|r| r / 2.56) else {
        return false;
    };
    let mut removed = false;
    for (k, &i) in idx.iter().enumerate() {
        if resid[k].abs() > FINE_SIGMAS * sigma {
            line.valid[i] = false;
            removed = true;
        }
    }
    removed
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_line_unchanged() {
        let l = BoundaryLine::constant(5.0, 50);
        assert_eq!(clean_surface_line(&l, None, Orientation::Upfacing).unwrap(), l);
    }

    #[test]
    fn spike_is_replaced() {
        let mut l = BoundaryLine::constant(5.0, 300);
        l.depths[120] = 55.0;
        let c = clean_surface_line(&l, None, Orientation::Upfacing).unwrap();
        assert_eq!(c.depths[120], 5.0);
        assert!(c.valid.iter().all(|&v| v));
    }

    #[test]
    fn clamped_to_air() {
        let l = BoundaryLine::constant(6.0, 10);
        let mut air = BoundaryLine::constant(8.0, 10);
        air.depths[3] = 4.0;
        let c = clean_surface_line(&l, Some(&air), Orientation::Upfacing).unwrap();
        assert_eq!(c.depths[3], 4.0);
        assert_eq!(c.depths[4], 6.0);
    }

    #[test]
    fn downfacing_is_transducer_face() {
        let l = BoundaryLine::constant(3.0, 4);
        let c = clean_surface_line(&l, None, Orientation::Downfacing).unwrap();
        assert_eq!(c.depths, vec![0.0; 4]);
    }

    #[test]
    fn no_valid_points_is_degenerate() {
        let mut l = BoundaryLine::constant(3.0, 4);
        l.valid = vec![false; 4];
        assert!(matches!(
            clean_surface_line(&l, None, Orientation::Upfacing),
            Err(Error::Degenerate(_))
        ));
    }

    proptest! {
        #[test]
        fn idempotent(
            base in prop::collection::vec(-1.0f64..1.0, 20..250),
            spikes in prop::collection::vec((0usize..250, -30.0f64..30.0), 0..8),
        ) {
            let mut depths: Vec<f64> = base.iter().enumerate().map(|(i, n)| 10.0 + 0.01 * i as f64 + n).collect();
            for (i, s) in spikes {
                if i < depths.len() {
                    depths[i] += s;
                }
            }
            let l = BoundaryLine::new(depths);
            if let Ok(once) = clean_surface_line(&l, None, Orientation::Upfacing) {
                let twice = clean_surface_line(&once, None, Orientation::Upfacing).unwrap();
                prop_assert_eq!(once, twice);
            }
        }
    }
}
