//! On-disk shard store: a recording split into fixed-length ping windows.
//!
//! Layout of a shard directory:
//!
//! * `manifest.txt`: `key=value` lines describing the grid and shard count.
//! * `depths.bin`: the depth grid, little-endian `f64`.
//! * `shard_NNNNN.bin`: one file per window, little-endian sections in
//!   this order, for `L` pings and `D` depths: timestamps (`L` f64), Sv
//!   (`L*D` f32, NaN where missing), presence (`L*D` u8), five lines (air,
//!   air original, seafloor, seafloor aggressive, surface; each `L` f64
//!   followed by `L` u8 validity), passive (`L` u8), bad period (`L` u8),
//!   three patch masks (`L*D` u8 each), good-data mask (`L*D` u8).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::{read_text, write_text};
use crate::preprocess::{BoundaryLine, Echogram, Orientation, SegmentationTargets};
use crate::{Error, Matrix, Result};

pub const SHARD_LEN: usize = 128;
const FORMAT_TAG: &str = "echogram-shards";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ShardManifest {
    pub source: String,
    pub orientation: Orientation,
    pub flipped: bool,
    pub n_pings: usize,
    pub n_depths: usize,
    pub shard_len: usize,
    pub shard_count: usize,
}

impl ShardManifest {
    /// Ping count of shard `idx`.
    pub fn shard_pings(&self, idx: usize) -> usize {
        let start = idx * self.shard_len;
        (self.n_pings - start).min(self.shard_len)
    }

    fn render(&self) -> String {
        format!(
            "format={FORMAT_TAG}\nversion={FORMAT_VERSION}\nsource={}\norientation={}\nflipped={}\nn_pings={}\nn_depths={}\nshard_len={}\nshard_count={}\n",
            self.source,
            self.orientation.name(),
            self.flipped,
            self.n_pings,
            self.n_depths,
            self.shard_len,
            self.shard_count
        )
    }

    fn parse(text: &str) -> Result<Self> {
        let map: BTreeMap<&str, &str> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.trim(), v.trim()))
            .collect();
        let get = |k: &str| {
            map.get(k)
                .copied()
                .ok_or_else(|| Error::Structure(format!("manifest lacks '{k}'")))
        };
        let num = |k: &str| {
            get(k)?
                .parse::<usize>()
                .map_err(|_| Error::Structure(format!("manifest field '{k}' is not an integer")))
        };
        if get("format")? != FORMAT_TAG {
            return Err(Error::Structure("not a shard manifest".into()));
        }
        if get("version")? != FORMAT_VERSION.to_string() {
            return Err(Error::Structure(format!("unsupported shard version {}", get("version")?)));
        }
        let m = Self {
            source: get("source")?.to_string(),
            orientation: get("orientation")?
                .parse()
                .map_err(|_| Error::Structure("bad orientation in manifest".into()))?,
            flipped: get("flipped")? == "true",
            n_pings: num("n_pings")?,
            n_depths: num("n_depths")?,
            shard_len: num("shard_len")?,
            shard_count: num("shard_count")?,
        };
        if m.shard_len == 0 || m.n_pings.div_ceil(m.shard_len) != m.shard_count {
            return Err(Error::Structure("manifest shard count disagrees with ping count".into()));
        }
        Ok(m)
    }
}

/// One stored window with its aligned targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Shard {
    pub source: String,
    pub index: usize,
    /// Ping offset of the window within the recording.
    pub offset: usize,
    pub echogram: Echogram,
    pub targets: SegmentationTargets,
}

fn shard_path(dir: &Path, idx: usize) -> PathBuf {
    dir.join(format!("shard_{idx:05}.bin"))
}

/// Splits a standardized recording and its targets into windows of
/// [`SHARD_LEN`] pings (the last may be shorter) and writes them to `dir`.
pub fn write_shards(
    echogram: &Echogram,
    targets: &SegmentationTargets,
    dir: impl AsRef<Path>,
    source: &str,
) -> Result<ShardManifest> {
    let dir = dir.as_ref();
    let n = echogram.n_pings();
    if targets.n_pings() != n {
        return Err(Error::Alignment(format!(
            "targets have {} pings, echogram {n}",
            targets.n_pings()
        )));
    }
    if n == 0 {
        return Err(Error::Structure("cannot shard an empty recording".into()));
    }
    if source.contains('\n') {
        return Err(Error::Validation("source id must be a single line".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = ShardManifest {
        source: source.to_string(),
        orientation: echogram.orientation,
        flipped: echogram.flipped,
        n_pings: n,
        n_depths: echogram.n_depths(),
        shard_len: SHARD_LEN,
        shard_count: n.div_ceil(SHARD_LEN),
    };
    let mut depth_bytes = Vec::with_capacity(8 * echogram.n_depths());
    put_f64(&mut depth_bytes, &echogram.depths);
    write_bytes(&dir.join("depths.bin"), &depth_bytes)?;
    for idx in 0..manifest.shard_count {
        let start = idx * SHARD_LEN;
        let end = (start + SHARD_LEN).min(n);
        let e = echogram.slice_pings(start, end);
        let t = targets.slice_pings(start, end);
        write_bytes(&shard_path(dir, idx), &encode(&e, &t))?;
    }
    write_text(&dir.join("manifest.txt"), &manifest.render())?;
    Ok(manifest)
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<ShardManifest> {
    let path = dir.as_ref().join("manifest.txt");
    if !path.exists() {
        return Err(Error::Structure(format!("no shard manifest at {}", path.display())));
    }
    ShardManifest::parse(&read_text(&path)?)
}

fn read_depths(dir: &Path, m: &ShardManifest) -> Result<Vec<f64>> {
    let path = dir.join("depths.bin");
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if bytes.len() != 8 * m.n_depths {
        return Err(Error::Structure("depth grid size disagrees with manifest".into()));
    }
    let mut r = Reader { bytes: &bytes, pos: 0 };
    Ok(r.f64s(m.n_depths))
}

pub fn read_shard(dir: impl AsRef<Path>, idx: usize) -> Result<Shard> {
    let dir = dir.as_ref();
    let m = read_manifest(dir)?;
    let depths = read_depths(dir, &m)?;
    read_shard_with(dir, &m, &depths, idx)
}

/// Reads a shard when manifest and depth grid are already known.
pub fn read_shard_with(dir: &Path, m: &ShardManifest, depths: &[f64], idx: usize) -> Result<Shard> {
    if idx >= m.shard_count {
        return Err(Error::OutOfBounds { index: idx, len: m.shard_count });
    }
    let path = shard_path(dir, idx);
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let (echogram, targets) = decode(&bytes, m, depths, m.shard_pings(idx))?;
    Ok(Shard {
        source: m.source.clone(),
        index: idx,
        offset: idx * m.shard_len,
        echogram,
        targets,
    })
}

/// Reads every shard and concatenates them back into one recording.
pub fn read_all_shards(dir: impl AsRef<Path>) -> Result<(Echogram, SegmentationTargets)> {
    let dir = dir.as_ref();
    let m = read_manifest(dir)?;
    let depths = read_depths(dir, &m)?;
    let shards = (0..m.shard_count)
        .map(|i| read_shard_with(dir, &m, &depths, i))
        .collect::<Result<Vec<_>>>()?;
    concat(&shards).ok_or_else(|| Error::Structure("shard store is empty".into()))
}

fn concat(shards: &[Shard]) -> Option<(Echogram, SegmentationTargets)> {
    let first = shards.first()?;
    let cat_f64 = |f: &dyn Fn(&Shard) -> &Vec<f64>| shards.iter().flat_map(|s| f(s).iter().copied()).collect::<Vec<_>>();
    let cat_bool = |f: &dyn Fn(&Shard) -> &Vec<bool>| shards.iter().flat_map(|s| f(s).iter().copied()).collect::<Vec<_>>();
    let cat_line = |f: &dyn Fn(&Shard) -> &BoundaryLine| BoundaryLine {
        depths: shards.iter().flat_map(|s| f(s).depths.iter().copied()).collect(),
        valid: shards.iter().flat_map(|s| f(s).valid.iter().copied()).collect(),
    };
    let stack_bool = |f: &dyn Fn(&Shard) -> &Matrix<bool>| {
        Matrix::vstack(&shards.iter().map(|s| f(s).clone()).collect::<Vec<_>>())
    };
    let echogram = Echogram {
        timestamps: cat_f64(&|s| &s.echogram.timestamps),
        depths: first.echogram.depths.clone(),
        sv: Matrix::vstack(&shards.iter().map(|s| s.echogram.sv.clone()).collect::<Vec<_>>())?,
        present: stack_bool(&|s| &s.echogram.present)?,
        orientation: first.echogram.orientation,
        flipped: first.echogram.flipped,
    };
    let targets = SegmentationTargets {
        air: cat_line(&|s| &s.targets.air),
        air_original: cat_line(&|s| &s.targets.air_original),
        seafloor: cat_line(&|s| &s.targets.seafloor),
        seafloor_aggressive: cat_line(&|s| &s.targets.seafloor_aggressive),
        surface: cat_line(&|s| &s.targets.surface),
        passive: cat_bool(&|s| &s.targets.passive),
        bad_period: cat_bool(&|s| &s.targets.bad_period),
        patches: [
            stack_bool(&|s| &s.targets.patches[0])?,
            stack_bool(&|s| &s.targets.patches[1])?,
            stack_bool(&|s| &s.targets.patches[2])?,
        ],
        good: stack_bool(&|s| &s.targets.good)?,
    };
    Some((echogram, targets))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn put_f64(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn put_f32(out: &mut Vec<u8>, v: &[f32]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn put_bool(out: &mut Vec<u8>, v: &[bool]) {
    out.extend(v.iter().map(|&b| b as u8));
}

fn put_line(out: &mut Vec<u8>, l: &BoundaryLine) {
    put_f64(out, &l.depths);
    put_bool(out, &l.valid);
}

fn encode(e: &Echogram, t: &SegmentationTargets) -> Vec<u8> {
    let mut out = Vec::new();
    put_f64(&mut out, &e.timestamps);
    let sv: Vec<f32> = e
        .sv
        .as_slice()
        .iter()
        .zip(e.present.as_slice())
        .map(|(&v, &p)| if p { v } else { f32::NAN })
        .collect();
    put_f32(&mut out, &sv);
    put_bool(&mut out, e.present.as_slice());
    for l in [&t.air, &t.air_original, &t.seafloor, &t.seafloor_aggressive, &t.surface] {
        put_line(&mut out, l);
    }
    put_bool(&mut out, &t.passive);
    put_bool(&mut out, &t.bad_period);
    for p in &t.patches {
        put_bool(&mut out, p.as_slice());
    }
    put_bool(&mut out, t.good.as_slice());
    out
}

fn encoded_len(l: usize, d: usize) -> usize {
    8 * l + 4 * l * d + l * d + 5 * 9 * l + 2 * l + 4 * l * d
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let out: [u8; N] = self.bytes[self.pos..self.pos + N].try_into().expect("length checked");
        self.pos += N;
        out
    }

    fn f64s(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| f64::from_le_bytes(self.take())).collect()
    }

    fn f32s(&mut self, n: usize) -> Vec<f32> {
        (0..n).map(|_| f32::from_le_bytes(self.take())).collect()
    }

    fn bools(&mut self, n: usize) -> Vec<bool> {
        let out = self.bytes[self.pos..self.pos + n].iter().map(|&b| b != 0).collect();
        self.pos += n;
        out
    }

    fn line(&mut self, n: usize) -> BoundaryLine {
        let depths = self.f64s(n);
        BoundaryLine { depths, valid: self.bools(n) }
    }

    fn mask(&mut self, l: usize, d: usize) -> Matrix<bool> {
        Matrix::from_vec(l, d, self.bools(l * d)).expect("sized")
    }
}

fn decode(bytes: &[u8], m: &ShardManifest, depths: &[f64], l: usize) -> Result<(Echogram, SegmentationTargets)> {
    let d = m.n_depths;
    if bytes.len() != encoded_len(l, d) {
        return Err(Error::Structure(format!(
            "shard holds {} bytes, expected {}",
            bytes.len(),
            encoded_len(l, d)
        )));
    }
    let mut r = Reader { bytes, pos: 0 };
    let timestamps = r.f64s(l);
    let sv = Matrix::from_vec(l, d, r.f32s(l * d)).expect("sized");
    let present = r.mask(l, d);
    let mut lines: Vec<BoundaryLine> = (0..5).map(|_| r.line(l)).collect();
    let passive = r.bools(l);
    let bad_period = r.bools(l);
    let patches = [r.mask(l, d), r.mask(l, d), r.mask(l, d)];
    let good = r.mask(l, d);
    let surface = lines.pop().expect("five lines");
    let seafloor_aggressive = lines.pop().expect("five lines");
    let seafloor = lines.pop().expect("five lines");
    let air_original = lines.pop().expect("five lines");
    let air = lines.pop().expect("five lines");
    Ok((
        Echogram {
            timestamps,
            depths: depths.to_vec(),
            sv,
            present,
            orientation: m.orientation,
            flipped: m.flipped,
        },
        SegmentationTargets {
            air,
            air_original,
            seafloor,
            seafloor_aggressive,
            surface,
            passive,
            bad_period,
            patches,
            good,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pair(n: usize, d: usize, seed: u64) -> (Echogram, SegmentationTargets) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let present = Matrix::from_fn(n, d, |_, _| rng.random_bool(0.9));
        let sv = Matrix::from_fn(n, d, |i, j| {
            if present[(i, j)] {
                rng.random_range(-120.0f32..0.0)
            } else {
                f32::NAN
            }
        });
        let e = Echogram {
            timestamps: (0..n).map(|i| 1.6e9 + i as f64 * 0.25).collect(),
            depths: (0..d).map(|j| 1.0 + j as f64 * 0.2).collect(),
            sv,
            present: present.clone(),
            orientation: Orientation::Upfacing,
            flipped: true,
        };
        let mut line = || BoundaryLine {
            depths: (0..n).map(|_| rng.random_range(0.0..10.0)).collect(),
            valid: (0..n).map(|_| rng.random_bool(0.8)).collect(),
        };
        let (a, b, c, dd, s) = (line(), line(), line(), line(), line());
        let mut flags = || (0..n).map(|_| rng.random_bool(0.1)).collect::<Vec<_>>();
        let (passive, bad) = (flags(), flags());
        let mut mask = || Matrix::from_fn(n, d, |_, _| rng.random_bool(0.05));
        let t = SegmentationTargets {
            air: a,
            air_original: b,
            seafloor: c,
            seafloor_aggressive: dd,
            surface: s,
            passive,
            bad_period: bad,
            patches: [mask(), mask(), mask()],
            good: present,
        };
        (e, t)
    }

    #[test]
    fn three_hundred_pings_make_three_shards() {
        let dir = tempfile::tempdir().unwrap();
        let (e, t) = random_pair(300, 7, 1);
        let m = write_shards(&e, &t, dir.path(), "rec").unwrap();
        assert_eq!(m.shard_count, 3);
        let lens: Vec<usize> = (0..3).map(|i| read_shard(dir.path(), i).unwrap().echogram.n_pings()).collect();
        assert_eq!(lens, vec![128, 128, 44]);
        assert_eq!(read_shard(dir.path(), 2).unwrap().offset, 256);
        assert!(matches!(read_shard(dir.path(), 3), Err(Error::OutOfBounds { .. })));
    }

    #[test]
    fn exact_multiple_gives_one_shard() {
        let dir = tempfile::tempdir().unwrap();
        let (e, t) = random_pair(128, 3, 2);
        assert_eq!(write_shards(&e, &t, dir.path(), "rec").unwrap().shard_count, 1);
    }

    #[test]
    fn concatenation_reconstructs_recording() {
        let dir = tempfile::tempdir().unwrap();
        let (e, t) = random_pair(260, 9, 3);
        write_shards(&e, &t, dir.path(), "rec").unwrap();
        let (e2, t2) = read_all_shards(dir.path()).unwrap();
        assert_eq!(e2, e);
        assert_eq!(t2, t);
    }

    #[test]
    fn missing_manifest_is_structural() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_shard(dir.path(), 0), Err(Error::Structure(_))));
    }

    #[test]
    fn truncated_shard_is_structural() {
        let dir = tempfile::tempdir().unwrap();
        let (e, t) = random_pair(10, 3, 4);
        write_shards(&e, &t, dir.path(), "rec").unwrap();
        let p = shard_path(dir.path(), 0);
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(read_shard(dir.path(), 0), Err(Error::Structure(_))));
    }
}
