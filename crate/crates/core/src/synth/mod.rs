//! Synthetic recordings with exact ground truth.
//!
//! Everything is generated in standardized coordinates (depth index 0 is
//! the far side of the column for both orientations) and converted to the
//! export convention only when written to disk, see [`export`].

mod export;

pub use export::{read_corpus_index, write_corpus, write_recording, CorpusEntry, CorpusIndex, RecordingFiles};

use chrono::{NaiveDate, Timelike};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::formats::{epoch_seconds, sample_depths};
use crate::preprocess::{
    flags_to_intervals, AnnotationLines, BoundaryLine, Echogram, Orientation, PingInterval, SegmentationTargets,
};
use crate::stats::gaussian_smooth;
use crate::{Error, Matrix, Result};

/// Samples near the transducer kept free of injected patches so that
/// passive detection sees only the passive cycle.
const NEAR_FIELD_SAMPLES: usize = 38;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub orientation: Orientation,
    pub n_pings: usize,
    /// Milliseconds between pings.
    pub ping_interval_ms: u64,
    /// Epoch milliseconds of the first ping.
    pub start_ms: i64,
    /// Range of the first sample from the transducer (m).
    pub range_start: f64,
    pub resolution: f64,
    /// Mean distance from transducer to the far boundary of the water
    /// column: the seafloor when downfacing, the sea surface when upfacing.
    pub water_depth: f64,
    /// Downfacing seafloor change over the recording (m).
    pub seafloor_ramp: f64,
    /// Upfacing surface excursion (m) and period (s).
    pub tide_amplitude: f64,
    pub tide_period_s: f64,
    /// Fraction of the sampled range lying beyond the water column.
    pub empty_fraction: f64,
    /// Entrained-air penetration as a fraction of the water column.
    pub air_base: f64,
    pub air_amplitude: f64,
    pub air_period_s: f64,
    /// Standard deviation (m) of the slowly varying boundary noise.
    pub roughness: f64,
    /// Smoothing (pings) of the boundary noise.
    pub roughness_smoothing: f64,
    /// Ping-to-ping jitter (m) of where the loud texture actually ends.
    pub texture_jitter: f64,
    pub air_db: f64,
    pub air_sigma_db: f64,
    /// Standard deviation (dB) of slow changes in air loudness.
    pub air_drift_db: f64,
    /// Probability that an air sample at the boundary reads as water.
    pub air_dropout: f64,
    pub water_db: f64,
    pub water_sigma_db: f64,
    pub fish_db: f64,
    /// Expected fish per ping.
    pub fish_rate: f64,
    pub seafloor_db: f64,
    /// Decay (dB per m) below the seafloor, or beyond the surface.
    pub seafloor_decay_db: f64,
    pub passive_attenuation_db: f64,
    /// A passive window of `passive_len` pings every `passive_every` pings
    /// (0 disables).
    pub passive_every: usize,
    pub passive_len: usize,
    /// Expected bad periods per 1000 pings.
    pub bad_period_rate: f64,
    /// Expected patches per 1000 pings.
    pub patch_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            orientation: Orientation::Downfacing,
            n_pings: 512,
            ping_interval_ms: 500,
            start_ms: 1_590_969_600_000,
            range_start: 0.5,
            resolution: 0.25,
            water_depth: 30.0,
            seafloor_ramp: 4.0,
            tide_amplitude: 2.0,
            tide_period_s: 1800.0,
            empty_fraction: 0.0,
            air_base: 0.34,
            air_amplitude: 0.15,
            air_period_s: 90.0,
            roughness: 0.8,
            roughness_smoothing: 4.0,
            texture_jitter: 0.4,
            air_db: -45.0,
            air_sigma_db: 5.0,
            air_drift_db: 6.0,
            air_dropout: 0.9,
            water_db: -90.0,
            water_sigma_db: 3.0,
            fish_db: -55.0,
            fish_rate: 0.05,
            seafloor_db: -20.0,
            seafloor_decay_db: 3.0,
            passive_attenuation_db: 60.0,
            passive_every: 240,
            passive_len: 12,
            bad_period_rate: 2.0,
            patch_rate: 4.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(m.to_string()));
        if self.n_pings < 2 {
            return bad("n_pings must be at least 2");
        }
        if !(self.air_base > 0.0 && self.air_base < 0.9) {
            return bad("air_base must lie in (0, 0.9)");
        }
        if self.air_amplitude < 0.0 || self.air_base + self.air_amplitude >= 0.9 {
            return bad("air_base + air_amplitude must stay below 0.9");
        }
        if !(self.resolution > 0.0) || !(self.range_start >= 0.0) || !(self.water_depth > self.range_start) {
            return bad("depth range and resolution must be positive");
        }
        if !(0.0..0.9).contains(&self.empty_fraction) {
            return bad("empty_fraction must lie in [0, 0.9)");
        }
        if self.roughness < 0.0 || self.texture_jitter < 0.0 || self.roughness_smoothing < 0.0 {
            return bad("noise scales must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.air_dropout) {
            return bad("air_dropout must be a probability");
        }
        if self.passive_every > 0 && (self.passive_len == 0 || self.passive_len >= self.passive_every) {
            return bad("passive_len must be positive and shorter than passive_every");
        }
        if self.passive_every > 0 && self.passive_attenuation_db <= 25.0 {
            return bad("passive attenuation must exceed 25 dB");
        }
        if self.ping_interval_ms == 0 {
            return bad("ping_interval_ms must be positive");
        }
        if self.orientation == Orientation::Downfacing && self.seafloor_ramp.abs() >= self.water_depth {
            return bad("seafloor ramp larger than the water depth");
        }
        if self.orientation == Orientation::Upfacing && self.tide_amplitude.abs() >= 0.5 * self.water_depth {
            return bad("tide amplitude too large for the water depth");
        }
        Ok(())
    }

    /// Ping timestamps on a millisecond grid.
    pub fn timestamps(&self) -> Vec<f64> {
        (0..self.n_pings)
            .map(|i| {
                let ms = self.start_ms + (i as u64 * self.ping_interval_ms) as i64;
                let dt = chrono::DateTime::from_timestamp_millis(ms)
                    .unwrap_or_default()
                    .naive_utc();
                epoch_seconds(dt.date(), dt.time().with_nanosecond(0).unwrap_or(dt.time()), (ms.rem_euclid(1000)) as u32, 1000)
            })
            .collect()
    }

    /// Largest distance from the transducer to the far boundary.
    fn column_max(&self) -> f64 {
        match self.orientation {
            Orientation::Downfacing => self.water_depth + 0.5 * self.seafloor_ramp.abs(),
            Orientation::Upfacing => self.water_depth + self.tide_amplitude.abs(),
        }
    }

    pub fn depth_grid(&self) -> Vec<f64> {
        let stop = self.column_max() / (1.0 - self.empty_fraction) + 2.0;
        let n = ((stop - self.range_start) / self.resolution).ceil() as usize + 1;
        let stop = self.range_start + self.resolution * (n - 1) as f64;
        sample_depths(self.range_start, stop, n)
    }
}

/// A generated recording: the raw and clean echograms as the pipeline would
/// load them, the annotation lines, and targets derived from the
/// construction itself.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthRecording {
    pub config: SynthConfig,
    pub raw: Echogram,
    pub clean: Echogram,
    pub lines: AnnotationLines,
    pub targets: SegmentationTargets,
    pub passive: Vec<PingInterval>,
    pub bad_periods: Vec<PingInterval>,
    /// Inclusive `(ping0, ping1, depth_index0, depth_index1)` rectangles.
    pub patches: Vec<(usize, usize, usize, usize)>,
}

/// Unit-variance noise smoothed along time.
fn smooth_noise(rng: &mut ChaCha8Rng, n: usize, sigma: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    if sigma <= 0.0 {
        return raw;
    }
    let smoothed = gaussian_smooth(&raw, sigma);
    let norm = (smoothed.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if norm > 0.0 {
        smoothed.iter().map(|v| v / norm).collect()
    } else {
        smoothed
    }
}

/// Value a line takes after being written in the export convention and read
/// back.
fn export_round_trip(d: f64, reflect: impl Fn(f64) -> f64, upfacing: bool) -> f64 {
    if upfacing {
        reflect(reflect(d))
    } else {
        d
    }
}

pub fn generate_recording(config: &SynthConfig) -> Result<SynthRecording> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n_pings;
    let depths = config.depth_grid();
    let nd = depths.len();
    let timestamps = config.timestamps();
    let r0 = depths[0];
    let r1 = depths[nd - 1];
    let reflect = |d: f64| r0 + r1 - d;
    let up = config.orientation == Orientation::Upfacing;
    let dt = config.ping_interval_ms as f64 / 1000.0;
    let t_of = |i: usize| i as f64 * dt;

    // Far boundary of the column (seafloor or surface) in standardized
    // coordinates, and the column length it implies.
    let floor_noise = smooth_noise(&mut rng, n, 20.0);
    let boundary: Vec<f64> = (0..n)
        .map(|i| {
            if up {
                let h = config.water_depth
                    + config.tide_amplitude * (std::f64::consts::TAU * t_of(i) / config.tide_period_s).sin()
                    + 0.05 * floor_noise[i];
                reflect(h)
            } else {
                config.water_depth + config.seafloor_ramp * (i as f64 / (n - 1) as f64 - 0.5) + 0.2 * floor_noise[i]
            }
        })
        .collect();
    let column: Vec<f64> = boundary.iter().map(|&b| if up { reflect(b) } else { b }).collect();

    let rough = smooth_noise(&mut rng, n, config.roughness_smoothing);
    let air: Vec<f64> = (0..n)
        .map(|i| {
            let phase = std::f64::consts::TAU * t_of(i) / config.air_period_s;
            let frac = config.air_base + config.air_amplitude * phase.sin().abs();
            let pen = (frac * column[i] + config.roughness * rough[i]).clamp(0.02 * column[i], 0.9 * column[i]);
            if up {
                boundary[i] + pen
            } else {
                pen.max(r0)
            }
        })
        .collect();
    let air: Vec<f64> = air.iter().map(|&a| export_round_trip(a, reflect, up)).collect();
    let surface: Vec<f64> = if up {
        boundary.iter().map(|&b| export_round_trip(b, reflect, true)).collect()
    } else {
        vec![0.0; n]
    };
    let seafloor: Vec<f64> = if up { vec![r1; n] } else { boundary.clone() };

    // Passive and bad periods.
    let mut passive = vec![false; n];
    if config.passive_every > 0 {
        let mut s = config.passive_every / 2;
        while s < n {
            let e = (s + config.passive_len).min(n);
            passive[s..e].iter_mut().for_each(|p| *p = true);
            s += config.passive_every;
        }
    }
    let mut bad = vec![false; n];
    let n_bad = poisson(&mut rng, config.bad_period_rate * n as f64 / 1000.0);
    for _ in 0..n_bad {
        let len = rng.random_range(5..=20usize).min(n);
        let s = rng.random_range(0..=n - len);
        // keep clear of passive windows so both stay separate runs
        let lo = s.saturating_sub(2);
        let hi = (s + len + 2).min(n);
        if passive[lo..hi].iter().any(|&p| p) {
            continue;
        }
        bad[s..s + len].iter_mut().for_each(|b| *b = true);
    }

    // First and last good sample per ping before patches.
    let first_good: Vec<usize> = (0..n).map(|i| depths.partition_point(|&d| d < air[i])).collect();
    let last_good: Vec<Option<usize>> = (0..n)
        .map(|i| {
            if up {
                Some(nd - 1)
            } else {
                depths.iter().rposition(|&d| d <= seafloor[i])
            }
        })
        .collect();

    // Patches in the water between the lines, away from both line-derived
    // extents and from the near-transducer samples.
    let mut patches = Vec::new();
    let n_patch = poisson(&mut rng, config.patch_rate * n as f64 / 1000.0);
    let near_lo = if up { nd.saturating_sub(NEAR_FIELD_SAMPLES) } else { 0 };
    let near_hi = if up { nd } else { NEAR_FIELD_SAMPLES.min(nd) };
    for _ in 0..n_patch {
        let len = rng.random_range(3..=15usize).min(n);
        let p0 = rng.random_range(0..=n - len);
        let p1 = p0 + len - 1;
        if (p0..=p1).any(|i| passive[i] || bad[i]) {
            continue;
        }
        let top = (p0..=p1).map(|i| first_good[i]).max().unwrap_or(0) + 2;
        let bottom = match (p0..=p1).map(|i| last_good[i]).collect::<Option<Vec<_>>>() {
            Some(v) => v.into_iter().min().unwrap_or(0).saturating_sub(2),
            None => continue,
        };
        let height = ((rng.random_range(1.0..3.0) / config.resolution).round() as usize).max(1);
        if bottom <= top + height {
            continue;
        }
        let j0 = rng.random_range(top..=bottom - height);
        let j1 = j0 + height - 1;
        if j0 < near_hi && j1 >= near_lo {
            continue;
        }
        if patches.iter().any(|&(a, b, c, d): &(usize, usize, usize, usize)| p0 <= b && a <= p1 && j0 <= d && c <= j1) {
            continue;
        }
        patches.push((p0, p1, j0, j1));
    }

    // Sv texture.
    let drift = smooth_noise(&mut rng, n, 30.0);
    let jitter_normal = Normal::new(0.0, config.texture_jitter.max(1e-12)).expect("finite");
    let water_normal = Normal::new(config.water_db, config.water_sigma_db.max(0.0)).expect("finite");
    let mut sv = Matrix::filled(n, nd, 0.0f32);
    for i in 0..n {
        let texture_end = air[i]
            + if config.texture_jitter > 0.0 {
                jitter_normal.sample(&mut rng)
            } else {
                0.0
            };
        let air_level = config.air_db + config.air_drift_db * drift[i];
        let top = if up { surface[i] } else { 0.0 };
        for j in 0..nd {
            let d = depths[j];
            let water = water_normal.sample(&mut rng);
            let v = if up && d < top {
                // reverberation beyond the surface
                let beyond = top - d;
                (config.air_db - config.seafloor_decay_db * beyond).max(config.water_db)
                    + config.air_sigma_db * rng.sample::<f64, _>(StandardNormal)
            } else if d < texture_end {
                let rel = ((d - top) / (texture_end - top).max(1e-9)).clamp(0.0, 1.0);
                if rng.random::<f64>() < config.air_dropout * rel.powi(3) {
                    water
                } else {
                    air_level + config.air_sigma_db * rng.sample::<f64, _>(StandardNormal)
                }
            } else if !up && d > seafloor[i] {
                let below = d - seafloor[i];
                (config.seafloor_db - config.seafloor_decay_db * below).max(config.water_db)
                    + config.water_sigma_db * rng.sample::<f64, _>(StandardNormal)
            } else {
                water
            };
            sv.row_mut(i)[j] = v as f32;
        }
        if up {
            // the surface itself echoes strongly
            let js = depths.partition_point(|&d| d < surface[i]).min(nd - 1);
            sv.row_mut(i)[js] = (config.seafloor_db + config.water_sigma_db * rng.sample::<f64, _>(StandardNormal)) as f32;
        }
    }
    let n_fish = poisson(&mut rng, config.fish_rate * n as f64);
    for _ in 0..n_fish {
        let ci = rng.random_range(0..n);
        let lo = air[ci] + 1.0;
        let hi = if up { r1 - 1.0 } else { seafloor[ci] - 1.0 };
        if hi <= lo {
            continue;
        }
        let cd = rng.random_range(lo..hi);
        let ri = rng.random_range(1.0..3.0f64);
        let rd = rng.random_range(0.3..1.0f64);
        let i0 = (ci as f64 - ri).floor().max(0.0) as usize;
        let i1 = ((ci as f64 + ri).ceil() as usize).min(n - 1);
        for i in i0..=i1 {
            for j in 0..nd {
                let u = (i as f64 - ci as f64) / ri;
                let w = (depths[j] - cd) / rd;
                if u * u + w * w <= 1.0 && depths[j] > air[i] {
                    let v = config.fish_db + config.water_sigma_db * rng.sample::<f64, _>(StandardNormal);
                    let cell = &mut sv.row_mut(i)[j];
                    *cell = cell.max(v as f32);
                }
            }
        }
    }
    for &(p0, p1, j0, j1) in &patches {
        for i in p0..=p1 {
            for j in j0..=j1 {
                sv.row_mut(i)[j] = (-40.0 + 2.0 * rng.sample::<f64, _>(StandardNormal)) as f32;
            }
        }
    }
    for i in 0..n {
        if bad[i] {
            let lo = first_good[i];
            let hi = last_good[i].unwrap_or(nd - 1);
            for j in lo..=hi.max(lo).min(nd - 1) {
                if !((near_lo..near_hi).contains(&j)) {
                    sv.row_mut(i)[j] = (-70.0 + 3.0 * rng.sample::<f64, _>(StandardNormal)) as f32;
                }
            }
        }
        if passive[i] {
            for v in sv.row_mut(i) {
                *v -= config.passive_attenuation_db as f32;
            }
        }
    }

    // Good-data mask by construction.
    let mut good = Matrix::from_fn(n, nd, |i, j| {
        let d = depths[j];
        !(passive[i] || bad[i] || d < air[i] || (!up && d > seafloor[i]))
    });
    let mut patch_mask = Matrix::filled(n, nd, false);
    for &(p0, p1, j0, j1) in &patches {
        for i in p0..=p1 {
            for j in j0..=j1 {
                good.row_mut(i)[j] = false;
                patch_mask.row_mut(i)[j] = true;
            }
        }
    }

    let raw = Echogram {
        timestamps: timestamps.clone(),
        depths: depths.clone(),
        sv: sv.clone(),
        present: Matrix::filled(n, nd, true),
        orientation: config.orientation,
        flipped: up,
    };
    let clean_sv = Matrix::from_fn(n, nd, |i, j| if good[(i, j)] { sv[(i, j)] } else { f32::NAN });
    let clean = Echogram {
        sv: clean_sv,
        present: good.clone(),
        ..raw.clone()
    };

    let air_target: Vec<f64> = (0..n)
        .map(|i| {
            if passive[i] || bad[i] || first_good[i] >= nd {
                air[i]
            } else {
                depths[first_good[i]]
            }
        })
        .collect();
    let seafloor_aggressive: Vec<f64> = (0..n)
        .map(|i| match last_good[i] {
            Some(j) if !up && !passive[i] && !bad[i] => depths[j],
            _ => seafloor[i],
        })
        .collect();
    let lines = AnnotationLines {
        air: BoundaryLine::new(air.clone()),
        seafloor: (!up).then(|| BoundaryLine::new(seafloor.clone())),
        surface: up.then(|| BoundaryLine::new(surface.clone())),
    };
    let targets = SegmentationTargets {
        air: BoundaryLine::new(air_target),
        air_original: BoundaryLine::new(air),
        seafloor: BoundaryLine::new(seafloor),
        seafloor_aggressive: BoundaryLine::new(seafloor_aggressive),
        surface: BoundaryLine::new(surface),
        passive: passive.clone(),
        bad_period: bad.clone(),
        patches: [patch_mask.clone(), patch_mask.clone(), patch_mask],
        good,
    };
    Ok(SynthRecording {
        config: config.clone(),
        raw,
        clean,
        lines,
        targets,
        passive: flags_to_intervals(&passive),
        bad_periods: flags_to_intervals(&bad),
        patches,
    })
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    rand_distr::Poisson::new(mean).map(|p| p.sample(rng) as usize).unwrap_or(0)
}

/// A held-out style set: `count` recordings with seeds `seed0..`, the
/// orientation alternating when `mixed`.
pub fn config_series(base: &SynthConfig, seed0: u64, count: usize, mixed: bool) -> Vec<SynthConfig> {
    (0..count)
        .map(|k| {
            let mut c = base.clone();
            c.seed = seed0 + k as u64;
            if mixed {
                c.orientation = if k % 2 == 0 { Orientation::Downfacing } else { Orientation::Upfacing };
            }
            c
        })
        .collect()
}

/// Calendar date of the default start time, for documentation and tests.
pub fn default_start_date() -> NaiveDate {
    chrono::DateTime::from_timestamp_millis(SynthConfig::default().start_ms)
        .unwrap_or_default()
        .date_naive()
}
