use echoseg_core::pipeline::{load_annotated, load_regions};
use echoseg_core::preprocess::{Orientation, PatchVariant};
use echoseg_core::synth::{generate_recording, write_recording, RecordingFiles, SynthConfig};

fn config(orientation: Orientation, seed: u64) -> SynthConfig {
    SynthConfig {
        seed,
        orientation,
        n_pings: 400,
        water_depth: 18.0,
        passive_every: 150,
        patch_rate: 12.0,
        bad_period_rate: 6.0,
        ..SynthConfig::default()
    }
}

#[test]
fn targets_survive_the_file_round_trip() {
    for orientation in [Orientation::Downfacing, Orientation::Upfacing] {
        for seed in 0..2 {
            let dir = tempfile::tempdir().unwrap();
            let rec = generate_recording(&config(orientation, seed)).unwrap();
            write_recording(dir.path(), "r", &rec).unwrap();
            let files = RecordingFiles::conventional(dir.path(), "r");
            let loaded = load_annotated(&files, orientation, None).unwrap();
            assert_eq!(loaded.echogram, rec.raw);
            let t = &loaded.targets;
            assert_eq!(t.good, rec.targets.good);
            assert_eq!(t.passive, rec.targets.passive);
            assert_eq!(t.bad_period, rec.targets.bad_period);
            assert_eq!(t.air, rec.targets.air);
            assert_eq!(t.air_original, rec.targets.air_original);
            for v in PatchVariant::ALL {
                assert_eq!(t.patches[v as usize], rec.targets.patches[v as usize]);
            }
            let regions = load_regions(files.regions_evr.as_ref().unwrap(), &loaded.echogram).unwrap();
            assert_eq!(regions.passive, rec.targets.passive);
            assert_eq!(regions.bad_period, rec.targets.bad_period);
            assert_eq!(regions.patches, rec.targets.patches[0]);
        }
    }
}
