//! Bad-data periods and patches.

use crate::Matrix;

use super::{flags_to_intervals, Echogram, Orientation, PatchVariant, SegmentationTargets};

#[derive(Debug, Clone, PartialEq)]
pub struct BadRegions {
    pub periods: Vec<bool>,
    /// Indexed by [`PatchVariant`].
    pub patches: [Matrix<bool>; 3],
}

/// Bad periods are runs of pings with no good data, other than passive
/// pings, keeping only runs where the annotated entrained-air line lies
/// above the annotated seafloor for at least one ping. Patches are masked
/// pixels that nothing else explains, computed once per line variant.
///
/// Reads `good`, the lines and `passive` from `targets`; its `bad_period`
/// and `patches` fields are ignored.
pub fn detect_bad_regions(targets: &SegmentationTargets, echogram: &Echogram) -> BadRegions {
    let n = targets.n_pings();
    let good = &targets.good;
    let candidates: Vec<bool> = (0..n)
        .map(|i| !targets.passive[i] && good.row(i).iter().all(|&g| !g))
        .collect();
    let mut periods = vec![false; n];
    for iv in flags_to_intervals(&candidates) {
        let air = &targets.air_original;
        let sea = &targets.seafloor;
        let lines_crossed = (iv.start..=iv.end).all(|i| {
            air.valid[i] && sea.valid[i] && air.depths[i] >= sea.depths[i]
        });
        if !lines_crossed {
            periods[iv.start..=iv.end].iter_mut().for_each(|p| *p = true);
        }
    }
    let patches = PatchVariant::ALL.map(|v| {
        let (air, sea) = targets.lines_for(v);
        let explained = explained_mask(
            &echogram.depths,
            air,
            sea,
            echogram.orientation,
            &targets.passive,
            &periods,
        );
        Matrix::from_fn(n, echogram.n_depths(), |i, j| !good[(i, j)] && !explained[(i, j)])
    });
    BadRegions { periods, patches }
}

/// Pixels excluded by lines, passive pings or bad periods: above the
/// entrained-air line, below the seafloor line (downfacing only), or in a
/// flagged ping. Invalid line entries exclude nothing.
pub fn explained_mask(
    depths: &[f64],
    air: &super::BoundaryLine,
    seafloor: &super::BoundaryLine,
    orientation: Orientation,
    passive: &[bool],
    bad: &[bool],
) -> Matrix<bool> {
    let down = orientation == Orientation::Downfacing;
    Matrix::from_fn(passive.len(), depths.len(), |i, j| {
        let d = depths[j];
        passive[i]
            || bad[i]
            || (air.valid[i] && d < air.depths[i])
            || (down && seafloor.valid[i] && d > seafloor.depths[i])
    })
}

/// Rebuilds the good-data mask from the lines, flags and patches of one
/// variant.
pub fn reconstruct_good_mask(targets: &SegmentationTargets, echogram: &Echogram, variant: PatchVariant) -> Matrix<bool> {
    let (air, sea) = targets.lines_for(variant);
    let explained = explained_mask(
        &echogram.depths,
        air,
        sea,
        echogram.orientation,
        &targets.passive,
        &targets.bad_period,
    );
    let patch = &targets.patches[variant as usize];
    Matrix::from_fn(explained.rows(), explained.cols(), |i, j| !explained[(i, j)] && !patch[(i, j)])
}
