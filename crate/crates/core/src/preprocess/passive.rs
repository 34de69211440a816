//! Passive (listen-only) period detection.

use serde::{Deserialize, Serialize};

use crate::stats::median;
use crate::{Error, Result};

use super::{flags_to_intervals, Echogram, PingInterval};

/// Samples nearest the transducer inspected per ping.
pub const PASSIVE_SAMPLES: usize = 38;
/// Median ping-to-ping change (dB) that marks a switch of mode.
pub const PASSIVE_THRESHOLD_DB: f64 = 25.0;

/// Known passive windows, as inclusive timestamp ranges. When supplied it
/// replaces detection.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PassiveSchedule {
    pub windows: Vec<(f64, f64)>,
}

impl PassiveSchedule {
    /// A repeating cycle: passive for `passive_s` seconds at the start of
    /// every `period_s`, anchored at `origin`.
    pub fn cyclic(origin: f64, period_s: f64, passive_s: f64, until: f64) -> Self {
        let mut windows = Vec::new();
        let mut t = origin;
        while t <= until && period_s > 0.0 {
            windows.push((t, t + passive_s));
            t += period_s;
        }
        Self { windows }
    }

    pub fn flags(&self, timestamps: &[f64]) -> Vec<bool> {
        timestamps
            .iter()
            .map(|&t| self.windows.iter().any(|&(a, b)| t >= a && t <= b))
            .collect()
    }
}

/// Median change between consecutive pings over the samples nearest the
/// transducer, one value per ping pair (`out[i]` compares ping `i + 1`
/// with ping `i`). Pairs with no commonly present samples give 0.
pub fn transducer_differences(echogram: &Echogram) -> Vec<f64> {
    let n = echogram.n_pings();
    if echogram.n_depths() < PASSIVE_SAMPLES {
        log::warn!(
            "only {} depth samples; passive detection uses all of them",
            echogram.n_depths()
        );
    }
    (1..n)
        .map(|i| {
            let diffs = echogram
                .near_transducer(i, PASSIVE_SAMPLES)
                .zip(echogram.near_transducer(i - 1, PASSIVE_SAMPLES))
                .filter_map(|((_, b), (_, a))| Some(b? as f64 - a? as f64));
            median(diffs).unwrap_or(0.0)
        })
        .collect()
}

/// Inclusive ping intervals during which the echosounder was listening
/// only. A drop beyond the threshold starts a passive period at the later
/// ping; a rise ends it at the earlier ping. A rise seen before any drop
/// means the recording began passive.
pub fn detect_passive_periods(echogram: &Echogram) -> Result<Vec<PingInterval>> {
    let n = echogram.n_pings();
    if n < 2 {
        return Err(Error::Domain(format!("passive detection needs 2 pings, got {n}")));
    }
    let mut out = Vec::new();
    let mut open: Option<usize> = None;
    let mut seen_boundary = false;
    for (k, d) in transducer_differences(echogram).into_iter().enumerate() {
        let i = k + 1;
        if d < -PASSIVE_THRESHOLD_DB {
            if open.is_none() {
                open = Some(i);
            }
            seen_boundary = true;
        } else if d > PASSIVE_THRESHOLD_DB {
            match open.take() {
                Some(s) => out.push(PingInterval::new(s, i - 1)),
                None if !seen_boundary => out.push(PingInterval::new(0, i - 1)),
                None => {}
            }
            seen_boundary = true;
        }
    }
    if let Some(s) = open {
        out.push(PingInterval::new(s, n - 1));
    }
    Ok(out)
}

/// Schedule if given, otherwise detection.
pub fn detect_passive_with_schedule(
    echogram: &Echogram,
    schedule: Option<&PassiveSchedule>,
) -> Result<Vec<PingInterval>> {
    match schedule {
        Some(s) => Ok(flags_to_intervals(&s.flags(&echogram.timestamps))),
        None => detect_passive_periods(echogram),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::Orientation;
    use crate::Matrix;
    use proptest::prelude::*;

    fn echogram(n: usize, depth: usize, f: impl Fn(usize, usize) -> f32) -> Echogram {
        Echogram {
            timestamps: (0..n).map(|i| i as f64).collect(),
            depths: (0..depth).map(|j| j as f64 * 0.1).collect(),
            sv: Matrix::from_fn(n, depth, f),
            present: Matrix::filled(n, depth, true),
            orientation: Orientation::Downfacing,
            flipped: false,
        }
    }

    fn attenuated(db: f32) -> Echogram {
        echogram(20, 60, move |i, j| {
            let base = -40.0 - (j % 7) as f32;
            if (5..=8).contains(&i) && j < 38 {
                base - db
            } else {
                base
            }
        })
    }

    #[test]
    fn uniform_has_none() {
        assert!(detect_passive_periods(&echogram(10, 40, |_, _| -50.0)).unwrap().is_empty());
    }

    #[test]
    fn sixty_db_drop_detected() {
        assert_eq!(detect_passive_periods(&attenuated(60.0)).unwrap(), vec![PingInterval::new(5, 8)]);
    }

    #[test]
    fn twenty_db_drop_ignored() {
        assert!(detect_passive_periods(&attenuated(20.0)).unwrap().is_empty());
    }

    #[test]
    fn exactly_threshold_is_not_a_boundary() {
        assert!(detect_passive_periods(&attenuated(25.0)).unwrap().is_empty());
    }

    #[test]
    fn starts_passive_and_ends_passive() {
        let e = echogram(10, 40, |i, _| if !(3..8).contains(&i) { -100.0 } else { -30.0 });
        assert_eq!(
            detect_passive_periods(&e).unwrap(),
            vec![PingInterval::new(0, 2), PingInterval::new(8, 9)]
        );
    }

    #[test]
    fn transducer_end_follows_flip() {
        let e = attenuated(60.0).flip_depth();
        assert_eq!(detect_passive_periods(&e).unwrap(), vec![PingInterval::new(5, 8)]);
    }

    #[test]
    fn schedule_overrides() {
        let e = attenuated(60.0);
        let s = PassiveSchedule { windows: vec![(2.0, 3.0)] };
        assert_eq!(
            detect_passive_with_schedule(&e, Some(&s)).unwrap(),
            vec![PingInterval::new(2, 3)]
        );
    }

    proptest! {
        #[test]
        fn deep_samples_do_not_matter(noise in prop::collection::vec(-200.0f32..50.0, 20 * 22)) {
            let base = attenuated(60.0);
            let mut other = base.clone();
            for i in 0..20 {
                for j in 38..60 {
                    other.sv.row_mut(i)[j] = noise[i * 22 + (j - 38)];
                }
            }
            prop_assert_eq!(detect_passive_periods(&base).unwrap(), detect_passive_periods(&other).unwrap());
        }
    }
}
