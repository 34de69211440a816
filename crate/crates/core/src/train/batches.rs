//! Epoch assembly with orientation-stratified batches.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::preprocess::Orientation;
use crate::{Error, Result};

/// A dataset as seen by batch assembly: a count of shards, all of one
/// orientation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub name: String,
    pub orientation: Orientation,
    pub shards: usize,
    /// Occurrences of every shard per epoch.
    pub upsample: usize,
}

/// One sample of a batch: shard `shard` of dataset `dataset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SampleRef {
    pub dataset: usize,
    pub shard: usize,
}

/// Shuffles every occurrence for the epoch and deals them into batches
/// that each hold the aggregate downfacing/upfacing ratio to within one
/// sample. Every batch is full except possibly the last.
pub fn make_epoch_batches<R: Rng>(datasets: &[DatasetIndex], batch_size: usize, rng: &mut R) -> Result<Vec<Vec<SampleRef>>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    if datasets.is_empty() {
        return Err(Error::Config("no datasets to draw batches from".into()));
    }
    if let Some(d) = datasets.iter().find(|d| d.shards == 0 || d.upsample == 0) {
        return Err(Error::Config(format!("dataset {} contributes no samples", d.name)));
    }
    let mut pools: [Vec<SampleRef>; 2] = [Vec::new(), Vec::new()];
    for (k, d) in datasets.iter().enumerate() {
        let pool = &mut pools[(d.orientation == Orientation::Upfacing) as usize];
        for _ in 0..d.upsample {
            pool.extend((0..d.shards).map(|shard| SampleRef { dataset: k, shard }));
        }
    }
    for pool in &mut pools {
        pool.shuffle(rng);
    }
    let total = pools[0].len() + pools[1].len();
    let down = pools[0].len();
    // interleave so any run of samples holds the ratio up to one sample
    let target = |i: usize| (i * down + total / 2) / total;
    let mut taken = [0usize; 2];
    let mut order = Vec::with_capacity(total);
    for i in 0..total {
        let side = (target(i + 1) == target(i)) as usize;
        order.push(pools[side][taken[side]]);
        taken[side] += 1;
    }
    let mut batches: Vec<Vec<SampleRef>> = order.chunks(batch_size).map(<[SampleRef]>::to_vec).collect();
    for batch in &mut batches {
        batch.shuffle(rng);
    }
    Ok(batches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ds(name: &str, orientation: Orientation, shards: usize, upsample: usize) -> DatasetIndex {
        DatasetIndex { name: name.into(), orientation, shards, upsample }
    }

    fn orientation_counts(batch: &[SampleRef], sets: &[DatasetIndex]) -> (usize, usize) {
        let down = batch.iter().filter(|s| sets[s.dataset].orientation == Orientation::Downfacing).count();
        (down, batch.len() - down)
    }

    #[test]
    fn ratio_is_preserved() {
        let sets = [ds("a", Orientation::Downfacing, 80, 1), ds("b", Orientation::Upfacing, 40, 1)];
        let batches = make_epoch_batches(&sets, 12, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(batches.len(), 10);
        for b in &batches {
            assert_eq!(orientation_counts(b, &sets), (8, 4));
        }
    }

    #[test]
    fn single_orientation() {
        let sets = [ds("a", Orientation::Upfacing, 30, 1)];
        let batches = make_epoch_batches(&sets, 12, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(batches.iter().all(|b| orientation_counts(b, &sets).0 == 0));
    }

    #[test]
    fn upsampled_dataset_occurs_twice() {
        let sets = [ds("big", Orientation::Downfacing, 50, 1), ds("small", Orientation::Downfacing, 10, 2)];
        let batches = make_epoch_batches(&sets, 12, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let small = batches.iter().flatten().filter(|s| s.dataset == 1).count();
        assert_eq!(small, 20);
        for shard in 0..10 {
            let n = batches.iter().flatten().filter(|s| s.dataset == 1 && s.shard == shard).count();
            assert_eq!(n, 2);
        }
    }

    #[test]
    fn empty_inputs_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(make_epoch_batches(&[], 12, &mut rng), Err(Error::Config(_))));
        let sets = [ds("a", Orientation::Upfacing, 0, 1)];
        assert!(matches!(make_epoch_batches(&sets, 12, &mut rng), Err(Error::Config(_))));
    }

    proptest! {
        #[test]
        fn every_occurrence_dealt_once(down in 0usize..60, up in 1usize..60, bs in 1usize..16, seed in 0u64..100) {
            let mut sets = vec![ds("u", Orientation::Upfacing, up, 1)];
            if down > 0 {
                sets.push(ds("d", Orientation::Downfacing, down, 1));
            }
            let batches = make_epoch_batches(&sets, bs, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let mut all: Vec<SampleRef> = batches.iter().flatten().copied().collect();
            prop_assert_eq!(all.len(), down + up);
            all.sort_by_key(|s| (s.dataset, s.shard));
            all.dedup();
            prop_assert_eq!(all.len(), down + up);
            let frac = down as f64 / (down + up) as f64;
            for b in &batches[..batches.len() - 1] {
                prop_assert_eq!(b.len(), bs);
            }
            for b in &batches {
                prop_assert!(b.len() <= bs && !b.is_empty());
                let (d, _) = orientation_counts(b, &sets);
                prop_assert!((d as f64 - frac * b.len() as f64).abs() <= 1.0 + 1e-9);
            }
        }
    }
}
