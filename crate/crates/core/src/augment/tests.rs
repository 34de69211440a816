use super::*;
use crate::synth::{generate_recording, SynthConfig};
use proptest::prelude::*;

fn echogram(values: Vec<Vec<f32>>) -> Echogram {
    let n = values.len();
    let m = values[0].len();
    Echogram {
        timestamps: (0..n).map(|i| i as f64).collect(),
        depths: (0..m).map(|j| 0.5 + j as f64).collect(),
        sv: Matrix::from_fn(n, m, |i, j| values[i][j]),
        present: Matrix::from_fn(n, m, |i, j| !values[i][j].is_nan()),
        orientation: Orientation::Downfacing,
        flipped: false,
    }
}

/// A small view with a ramped image and lines that move per ping.
fn toy_view(n: usize, m: usize) -> View {
    let line = |base: f64| BoundaryLine::new((0..n).map(|i| base + 0.1 * i as f64).collect());
    View {
        image: Matrix::from_fn(n, m, |i, j| (i as f32) * 0.25 - (j as f32) * 0.125),
        extent: (0.0, m as f64),
        orientation: Orientation::Downfacing,
        lines: [line(3.0), line(2.5), line(m as f64 - 4.0), line(m as f64 - 3.0), BoundaryLine::constant(0.0, n)],
        passive: (0..n).map(|i| i % 7 == 0).collect(),
        bad_period: (0..n).map(|i| i % 5 == 1).collect(),
        patches: [
            Matrix::from_fn(n, m, |i, j| (i + j) % 3 == 0),
            Matrix::from_fn(n, m, |i, j| (i * j) % 4 == 1),
            Matrix::from_fn(n, m, |i, _| i % 2 == 0),
        ],
    }
}

fn recording(seed: u64, orientation: Orientation) -> crate::synth::SynthRecording {
    generate_recording(&SynthConfig {
        seed,
        orientation,
        n_pings: 300,
        water_depth: 20.0,
        ..SynthConfig::default()
    })
    .unwrap()
}

#[test]
fn normalize_constant_is_zero() {
    let e = echogram(vec![vec![-61.5; 6]; 4]);
    let out = normalize_sv(&e).unwrap();
    assert!(out.as_slice().iter().all(|&v| v == 0.0));
}

#[test]
fn normalize_unit_spread() {
    let row: Vec<f32> = (0..11).map(|k| (10.0 + (k as f64 - 5.0) * 0.32) as f32).collect();
    let e = echogram(vec![row.clone()]);
    let out = normalize_sv(&e).unwrap();
    for (k, &v) in out.row(0).iter().enumerate() {
        assert!((v as f64 - (row[k] as f64 - 10.0)).abs() < 1e-5, "{k}");
    }
}

#[test]
fn normalize_missing_cell() {
    let mut rows = vec![vec![-70.0f32, -60.0, -50.0]; 2];
    rows[1][2] = f32::NAN;
    let out = normalize_sv(&echogram(rows)).unwrap();
    assert_eq!(out[(1, 2)], MISSING_VALUE);
}

#[test]
fn normalize_requires_data() {
    assert!(normalize_sv(&echogram(vec![vec![f32::NAN; 3]])).is_err());
}

#[test]
fn stretch_identity_and_double() {
    let v = toy_view(100, 12);
    assert_eq!(stretch_time(&v, 1.0).unwrap(), v);
    let s = stretch_time(&v, 2.0).unwrap();
    assert_eq!(s.n_pings(), 200);
    for k in 0..200 {
        for l in 0..5 {
            assert_eq!(s.lines[l].depths[k], v.lines[l].depths[k / 2]);
        }
        assert_eq!(s.passive[k], v.passive[k / 2]);
    }
    assert!(stretch_time(&v, 0.0).is_err());
    assert!(stretch_time(&v, -1.0).is_err());
}

#[test]
fn stretch_draws_are_log_uniform() {
    let cfg = AugmentConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let bins = 10;
    let mut counts = vec![0usize; bins];
    let draws = 10_000;
    let (a, b) = (0.5f64.ln(), 2.0f64.ln());
    for _ in 0..draws {
        let f = draw_stretch(&cfg, &mut rng);
        assert!((0.5..=2.0).contains(&f));
        let u = (f.ln() - a) / (b - a);
        counts[((u * bins as f64) as usize).min(bins - 1)] += 1;
    }
    // Kolmogorov-Smirnov style bound on the binned CDF
    let mut cum = 0usize;
    for (k, c) in counts.iter().enumerate() {
        cum += c;
        let emp = cum as f64 / draws as f64;
        let want = (k + 1) as f64 / bins as f64;
        assert!((emp - want).abs() < 1.63 / (draws as f64).sqrt(), "{k}: {emp} vs {want}");
    }
}

#[test]
fn reflection_is_involution() {
    let v = toy_view(9, 5);
    let r = reflect_time(&v);
    assert_ne!(r, v);
    assert_eq!(reflect_time(&r), v);
    assert_eq!(r.lines[0].depths[0], v.lines[0].depths[8]);
}

#[test]
fn crop_branches_forced() {
    let mut v = toy_view(20, 40);
    v.lines[4] = BoundaryLine::new((0..20).map(|i| 2.0 + (i % 3) as f64).collect());
    let cfg = AugmentConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    assert_eq!(crop_window_for(CropBranch::Full, &v, &cfg, &mut rng), (0.0, 40.0));
    let hi = v.lines[3].depths.iter().copied().fold(f64::MIN, f64::max);
    assert_eq!(crop_window_for(CropBranch::Optimal, &v, &cfg, &mut rng), (2.0, hi));
}

#[test]
fn crop_branch_frequencies() {
    let v = toy_view(20, 40);
    let cfg = AugmentConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let draws = 10_000;
    let mut counts = [0usize; 4];
    for _ in 0..draws {
        let (b, lo, hi) = depth_crop_window(&v, &cfg, &mut rng);
        assert!(hi - lo >= v.bin_width() - 1e-12);
        counts[b as usize] += 1;
    }
    for (k, p) in cfg.crop_probabilities.iter().enumerate() {
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        assert!((counts[k] as f64 - draws as f64 * p).abs() < 3.0 * sd, "{k}: {counts:?}");
    }
}

#[test]
fn near_optimal_respects_line_budget() {
    let rec = recording(5, Orientation::Downfacing);
    let v = View::from_recording(&rec.raw, &rec.targets).unwrap();
    let cfg = AugmentConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let (lo, hi) = crop_window_for(CropBranch::NearOptimal, &v, &cfg, &mut rng);
        assert!(fraction_outside(&v.lines[0], lo, hi) <= 0.25);
        assert!(fraction_outside(&v.lines[3], lo, hi) <= 0.5);
    }
}

#[test]
fn crop_full_extent_is_identity() {
    let v = toy_view(6, 16);
    assert_eq!(crop_depth(&v, 0.0, 16.0).unwrap(), v);
    assert!(crop_depth(&v, 3.0, 3.0).is_err());
    let c = crop_depth(&v, -16.0, 16.0).unwrap();
    assert_eq!(c.image[(0, 0)], MISSING_VALUE);
    assert!(!c.patches[0][(0, 0)]);
    assert_eq!(c.image[(2, 15)], v.image[(2, 15)]);
}

#[test]
fn jitter_examples() {
    let v = toy_view(3, 4);
    assert_eq!(color_jitter(&v, ColorJitter::IDENTITY), v);
    let b = ColorJitter { offset: 0.5, gain: 1.3, order: JitterOrder::BrightnessFirst };
    let c = ColorJitter { order: JitterOrder::ContrastFirst, ..b };
    assert!((b.apply(1.0) - 1.95).abs() < 1e-6);
    assert!((c.apply(1.0) - 1.8).abs() < 1e-6);
}

#[test]
fn elastic_zero_field_is_identity() {
    let v = toy_view(16, 24);
    let params = ElasticParams { alpha: 0.0, ..ElasticParams::default() };
    let fields = ElasticFields::draw(16, 24, &params, 11);
    assert!(fields.time.iter().chain(&fields.depth).all(|&x| x == 0.0));
    for order in InterpOrder::ALL {
        let d = elastic_deform(&v, &fields, order).unwrap();
        for (a, b) in d.image.as_slice().iter().zip(v.image.as_slice()) {
            assert!((a - b).abs() < 1e-6);
        }
        for l in 0..5 {
            for (a, b) in d.lines[l].depths.iter().zip(&v.lines[l].depths) {
                assert!((a - b).abs() < 1e-9);
            }
        }
        assert_eq!(d.patches, v.patches);
    }
}

#[test]
fn elastic_time_shift_moves_lines() {
    let v = toy_view(16, 12);
    let mut fields = ElasticFields::zero(16, 12);
    fields.time = vec![2.0; 16];
    let d = elastic_deform(&v, &fields, InterpOrder::Linear).unwrap();
    for i in 0..14 {
        assert_eq!(d.lines[0].depths[i], v.lines[0].depths[i + 2]);
        assert_eq!(d.passive[i], v.passive[i + 2]);
        for j in 0..12 {
            assert!((d.image[(i, j)] - v.image[(i + 2, j)]).abs() < 1e-6);
        }
    }
}

#[test]
fn elastic_depth_shift_moves_lines_the_other_way() {
    let v = toy_view(4, 30);
    let mut fields = ElasticFields::zero(4, 30);
    fields.depth = vec![3.0; 30];
    let d = elastic_deform(&v, &fields, InterpOrder::Cubic).unwrap();
    assert!((d.lines[0].depths[1] - (v.lines[0].depths[1] - 3.0)).abs() < 1e-9);
    assert!((d.image[(1, 5)] - v.image[(1, 8)]).abs() < 1e-5);
}

#[test]
fn elastic_is_separable() {
    let rec = recording(2, Orientation::Upfacing);
    let v = View::from_recording(&rec.raw.slice_pings(0, 40), &rec.targets.slice_pings(0, 40)).unwrap();
    let fields = ElasticFields::draw(v.n_pings(), v.n_samples(), &ElasticParams::default(), 4);
    for order in InterpOrder::ALL {
        let joint = elastic_deform(&v, &fields, order).unwrap();
        let t_only = ElasticFields { depth: vec![0.0; v.n_samples()], ..fields.clone() };
        let d_only = ElasticFields { time: vec![0.0; v.n_pings()], ..fields.clone() };
        let seq = elastic_deform(&elastic_deform(&v, &t_only, order).unwrap(), &d_only, order).unwrap();
        for (a, b) in joint.image.as_slice().iter().zip(seq.image.as_slice()) {
            assert!((a - b).abs() < 1e-4, "{a} {b}");
        }
        assert_eq!(joint.lines, seq.lines);
        assert_eq!(joint.patches, seq.patches);
    }
}

#[test]
fn finalize_examples() {
    let v = toy_view(128, 512);
    let t = finalize_view(&v, (128, 512)).unwrap();
    assert_eq!(t.input, v.image);
    let big = toy_view(256, 1024);
    let t = finalize_view(&big, (128, 512)).unwrap();
    for i in 0..128 {
        for j in 0..512 {
            assert_eq!(t.input[(i, j)], big.image[(2 * i + 1, 2 * j + 1)]);
        }
    }
    let mut mid = toy_view(128, 64);
    mid.lines[0] = BoundaryLine::constant(32.0, 128);
    let t = finalize_view(&mid, (128, 512)).unwrap();
    assert!(t.line_index[0].iter().all(|&k| k == 256));
    let mut empty = toy_view(1, 4);
    empty.image = Matrix::filled(0, 4, 0.0);
    assert!(finalize_view(&empty, (128, 512)).is_err());
}

#[test]
fn replay_is_bit_exact() {
    let rec = recording(3, Orientation::Downfacing);
    let cfg = AugmentConfig { shape: (32, 128), elastic_probability: 1.0, ..AugmentConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..5 {
        let tv = training_view(&rec.raw, &rec.targets, &cfg, &mut rng).unwrap();
        assert_eq!(tv.input.shape(), (32, 128));
        let again = replay_view(&rec.raw, &rec.targets, tv.record.as_ref().unwrap(), &cfg).unwrap();
        assert_eq!(tv.input.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            again.input.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(tv.line_index, again.line_index);
    }
}

#[test]
fn identity_config_matches_plain_resize() {
    let rec = recording(4, Orientation::Upfacing);
    let cfg = AugmentConfig::identity((32, 128));
    let e = rec.raw.slice_pings(0, 32);
    let t = rec.targets.slice_pings(0, 32);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let tv = training_view(&e, &t, &cfg, &mut rng).unwrap();
    let input = inference_input(&e, e.depth_edges(), 128).unwrap();
    assert_eq!(tv.input, input);
}

#[test]
fn bins_round_trip() {
    for k in 0..64 {
        assert_eq!(depth_to_bin(bin_to_depth(k as f64, (2.0, 18.0), 64), (2.0, 18.0), 64), k);
    }
    assert_eq!(depth_to_bin(-5.0, (2.0, 18.0), 64), 0);
    assert_eq!(depth_to_bin(50.0, (2.0, 18.0), 64), 63);
}

proptest! {
    #[test]
    fn normalized_median_and_spread(values in prop::collection::vec(-120.0f32..0.0, 10..200)) {
        let e = echogram(vec![values]);
        let out = normalize_sv(&e).unwrap();
        let vals = out.as_slice().iter().map(|&v| v as f64);
        let med = median(vals.clone()).unwrap();
        prop_assert!(med.abs() < 1e-6);
        let spread = idr(vals).unwrap();
        if idr(e.sv.as_slice().iter().map(|&v| v as f64)).unwrap() > 1e-3 {
            prop_assert!((spread - IDR_PER_SIGMA).abs() < 1e-4);
        }
    }

    #[test]
    fn augmentations_keep_alignment(seed in 0u64..1000, factor in 0.5f64..2.0) {
        let v = toy_view(24, 16);
        let s = stretch_time(&v, factor).unwrap();
        let src: Vec<usize> = (0..s.n_pings()).map(|k| nearest_index(k, 24, s.n_pings())).collect();
        for (k, &i) in src.iter().enumerate() {
            prop_assert_eq!(s.lines[2].depths[k], v.lines[2].depths[i]);
            prop_assert_eq!(s.image.row(k), v.image.row(i));
        }
        let fields = ElasticFields::draw(24, 16, &ElasticParams::default(), seed);
        let d = elastic_deform(&v, &fields, InterpOrder::Linear).unwrap();
        prop_assert_eq!(d.image.shape(), v.image.shape());
        prop_assert_eq!(d.lines[0].len(), 24);
    }
}
