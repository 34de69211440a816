//! Region clean-up: merging and dropping periods, dropping small patches.

use std::collections::VecDeque;

use crate::preprocess::{PingInterval, RegionSet};
use crate::Matrix;

/// Sorts intervals and merges those whose start lies fewer than `max_gap`
/// pings after the previous end.
pub fn merge_intervals(intervals: &[PingInterval], max_gap: usize) -> Vec<PingInterval> {
    let mut sorted = intervals.to_vec();
    sorted.sort();
    let mut out: Vec<PingInterval> = Vec::with_capacity(sorted.len());
    for iv in sorted {
        match out.last_mut() {
            Some(last) if iv.start <= last.end || iv.start - last.end < max_gap => last.end = last.end.max(iv.end),
            _ => out.push(iv),
        }
    }
    out
}

/// 4-connected components of a mask, each as its pixel list.
pub fn components(mask: &Matrix<bool>) -> Vec<Vec<(usize, usize)>> {
    let (n, m) = mask.shape();
    let mut seen = Matrix::filled(n, m, false);
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..m {
            if !mask[(i, j)] || seen[(i, j)] {
                continue;
            }
            let mut pixels = Vec::new();
            let mut queue = VecDeque::from([(i, j)]);
            seen[(i, j)] = true;
            while let Some((a, b)) = queue.pop_front() {
                pixels.push((a, b));
                let next = [
                    (a.wrapping_sub(1), b),
                    (a + 1, b),
                    (a, b.wrapping_sub(1)),
                    (a, b + 1),
                ];
                for (x, y) in next {
                    if x < n && y < m && mask[(x, y)] && !seen[(x, y)] {
                        seen[(x, y)] = true;
                        queue.push_back((x, y));
                    }
                }
            }
            out.push(pixels);
        }
    }
    out
}

/// Inclusive `(ping0, ping1, depth0, depth1)` bounding box of each
/// component.
pub fn component_boxes(mask: &Matrix<bool>) -> Vec<(usize, usize, usize, usize)> {
    components(mask)
        .iter()
        .map(|c| {
            c.iter().fold((usize::MAX, 0, usize::MAX, 0), |(p0, p1, d0, d1), &(i, j)| {
                (p0.min(i), p1.max(i), d0.min(j), d1.max(j))
            })
        })
        .collect()
}

/// Settings for [`postprocess_regions`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionRules {
    /// Same-class periods closer than this many pings are merged.
    pub merge_gap: usize,
    /// Periods shorter than this many pings are dropped.
    pub min_length: usize,
    /// Patches smaller than this area (ping-metres) are dropped.
    pub min_patch_area: f64,
    /// Depth step of the patch mask (m).
    pub depth_step: f64,
    /// Discard every bad-data output, keeping passive periods.
    pub drop_bad_data: bool,
}

/// Merges close periods, then drops short periods and small patches.
/// Idempotent: merged periods are separated by at least the merge gap and
/// dropping only widens gaps.
pub fn postprocess_regions(raw: &RegionSet, rules: &RegionRules) -> RegionSet {
    let tidy = |ivs: &[PingInterval]| -> Vec<PingInterval> {
        merge_intervals(ivs, rules.merge_gap)
            .into_iter()
            .filter(|iv| iv.len() >= rules.min_length)
            .collect()
    };
    let (n, m) = raw.patches.shape();
    let mut patches = Matrix::filled(n, m, false);
    if !rules.drop_bad_data {
        for c in components(&raw.patches) {
            if c.len() as f64 * rules.depth_step >= rules.min_patch_area {
                for p in c {
                    patches[p] = true;
                }
            }
        }
    }
    RegionSet {
        passive: tidy(&raw.passive),
        bad_periods: if rules.drop_bad_data { Vec::new() } else { tidy(&raw.bad_periods) },
        patches,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rules() -> RegionRules {
        RegionRules { merge_gap: 10, min_length: 10, min_patch_area: 25.0, depth_step: 1.0, drop_bad_data: false }
    }

    fn iv(a: usize, b: usize) -> PingInterval {
        PingInterval::new(a, b)
    }

    #[test]
    fn close_periods_merge() {
        let set = RegionSet { passive: vec![iv(25, 40), iv(0, 20)], ..RegionSet::empty(50, 4) };
        assert_eq!(postprocess_regions(&set, &rules()).passive, [iv(0, 40)]);
        let far = RegionSet { passive: vec![iv(0, 20), iv(30, 45)], ..RegionSet::empty(50, 4) };
        assert_eq!(postprocess_regions(&far, &rules()).passive, [iv(0, 20), iv(30, 45)]);
    }

    #[test]
    fn short_period_is_dropped() {
        let set = RegionSet { bad_periods: vec![iv(10, 17)], ..RegionSet::empty(50, 4) };
        assert!(postprocess_regions(&set, &rules()).bad_periods.is_empty());
    }

    #[test]
    fn patch_area_threshold() {
        // 10 pings by 6 samples at 0.5 m is 30 ping-metres
        let mut set = RegionSet::empty(20, 20);
        for i in 0..10 {
            for j in 0..6 {
                set.patches[(i, j)] = true;
            }
        }
        // 4 by 4 at 0.5 m is 8 ping-metres
        for i in 14..18 {
            for j in 10..14 {
                set.patches[(i, j)] = true;
            }
        }
        let out = postprocess_regions(&set, &RegionRules { depth_step: 0.5, ..rules() });
        assert_eq!(out.patches.count_true(), 60);
        assert!(out.patches[(0, 0)] && !out.patches[(15, 11)]);
    }

    #[test]
    fn drop_flag_keeps_passive() {
        let mut set = RegionSet { passive: vec![iv(0, 30)], bad_periods: vec![iv(40, 80)], ..RegionSet::empty(100, 10) };
        set.patches = Matrix::filled(100, 10, true);
        let out = postprocess_regions(&set, &RegionRules { drop_bad_data: true, ..rules() });
        assert_eq!(out.passive, [iv(0, 30)]);
        assert!(out.bad_periods.is_empty());
        assert_eq!(out.patches.count_true(), 0);
    }

    #[test]
    fn boxes_of_components() {
        let mut m = Matrix::filled(5, 5, false);
        m[(0, 0)] = true;
        m[(1, 0)] = true;
        m[(1, 1)] = true;
        m[(3, 3)] = true;
        // diagonal neighbours are separate components
        m[(4, 4)] = true;
        let mut boxes = component_boxes(&m);
        boxes.sort();
        assert_eq!(boxes, [(0, 1, 0, 1), (3, 3, 3, 3), (4, 4, 4, 4)]);
    }

    fn arb_intervals() -> impl Strategy<Value = Vec<PingInterval>> {
        prop::collection::vec((0usize..300, 0usize..40), 0..12)
            .prop_map(|v| v.into_iter().map(|(s, l)| PingInterval::new(s, s + l)).collect())
    }

    proptest! {
        #[test]
        fn rules_hold_and_are_idempotent(
            passive in arb_intervals(),
            bad in arb_intervals(),
            cells in prop::collection::vec((0usize..40, 0usize..30), 0..200),
            step in 0.25f64..2.0,
        ) {
            let mut patches = Matrix::filled(40, 30, false);
            for c in cells {
                patches[c] = true;
            }
            let raw = RegionSet { passive, bad_periods: bad, patches };
            let r = RegionRules { depth_step: step, ..rules() };
            let once = postprocess_regions(&raw, &r);
            for ivs in [&once.passive, &once.bad_periods] {
                for w in ivs.windows(2) {
                    prop_assert!(w[1].start > w[0].end && w[1].start - w[0].end >= 10);
                }
                prop_assert!(ivs.iter().all(|iv| iv.len() >= 10));
            }
            for c in components(&once.patches) {
                prop_assert!(c.len() as f64 * step >= 25.0);
            }
            // every kept period covers only pings flagged before
            let before = crate::preprocess::intervals_to_flags(&raw.passive, 400);
            let merged = crate::preprocess::intervals_to_flags(&merge_intervals(&raw.passive, 10), 400);
            let after = crate::preprocess::intervals_to_flags(&once.passive, 400);
            for i in 0..400 {
                prop_assert!(!after[i] || merged[i]);
                prop_assert!(!before[i] || merged[i]);
            }
            prop_assert_eq!(postprocess_regions(&once, &r), once);
        }
    }
}
