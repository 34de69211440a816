use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{format_ev_time, parse_ev_time, read_text, write_text};
use crate::{Error, Result};

/// Version tag written after the `EVRG` magic.
pub const EVR_VERSION: &str = "7 13.0.0";

/// Structure version of each region record header.
const REGION_STRUCT_VERSION: u32 = 13;
/// Region type code for "bad (no data)" regions.
const REGION_TYPE_BAD: u32 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegionClass {
    Passive,
    BadPeriod,
    BadPatch,
}

impl RegionClass {
    pub fn label(self) -> &'static str {
        match self {
            Self::Passive => "Passive",
            Self::BadPeriod => "Bad period",
            Self::BadPatch => "Bad patch",
        }
    }

    fn from_label(s: &str) -> Option<Self> {
        match s {
            "Passive" => Some(Self::Passive),
            "Bad period" => Some(Self::BadPeriod),
            "Bad patch" => Some(Self::BadPatch),
            _ => None,
        }
    }
}

/// A region as a closed polygon of `(timestamp, depth)` vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: u32,
    pub class: RegionClass,
    pub name: String,
    pub vertices: Vec<(f64, f64)>,
}

impl Region {
    /// Axis-aligned rectangle spanning `[t0, t1] x [top, bottom]`.
    pub fn rectangle(id: u32, class: RegionClass, t0: f64, t1: f64, top: f64, bottom: f64) -> Self {
        Self {
            id,
            class,
            name: format!("{} {id}", class.label()),
            vertices: vec![(t0, top), (t0, bottom), (t1, bottom), (t1, top)],
        }
    }

    /// `(t_min, top, t_max, bottom)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        let mut b = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &(t, d) in &self.vertices {
            b.0 = b.0.min(t);
            b.1 = b.1.min(d);
            b.2 = b.2.max(t);
            b.3 = b.3.max(d);
        }
        b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionFile {
    pub version: String,
    pub regions: Vec<Region>,
}

impl RegionFile {
    pub fn new(regions: Vec<Region>) -> Self {
        Self {
            version: EVR_VERSION.to_string(),
            regions,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.regions {
            if !seen.insert(r.id) {
                return Err(Error::Validation(format!("duplicate region id {}", r.id)));
            }
            if r.vertices.is_empty() {
                return Err(Error::Validation(format!("region {} has no vertices", r.id)));
            }
            if r.vertices.iter().any(|(t, d)| !t.is_finite() || !d.is_finite()) {
                return Err(Error::Validation(format!("region {} has non-finite vertices", r.id)));
            }
            if r.name.trim().is_empty() || r.name.contains('\n') {
                return Err(Error::Validation(format!("region {} name spans lines", r.id)));
            }
        }
        Ok(())
    }
}

pub fn render_evr(file: &RegionFile) -> Result<String> {
    file.validate()?;
    let mut out = format!("EVRG {}\n{}\n", file.version, file.regions.len());
    for r in &file.regions {
        let (t0, top, t1, bottom) = r.bounds();
        let _ = writeln!(
            out,
            "\n{REGION_STRUCT_VERSION} {} {} 0 {REGION_TYPE_BAD} -1 1 {} {} {} {}",
            r.vertices.len(),
            r.id,
            format_ev_time(t0),
            top,
            format_ev_time(t1),
            bottom
        );
        out.push_str("0\n0\n");
        out.push_str(r.class.label());
        out.push('\n');
        for &(t, d) in &r.vertices {
            let _ = write!(out, "{} {} ", format_ev_time(t), d);
        }
        let _ = writeln!(out, "{REGION_TYPE_BAD}");
        out.push_str(&r.name);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_evr(file: &RegionFile, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &render_evr(file)?)
}

pub fn read_evr(path: impl AsRef<Path>) -> Result<RegionFile> {
    parse_evr(&read_text(path.as_ref())?)
}

pub fn parse_evr(text: &str) -> Result<RegionFile> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let mut next = |what: &str| {
        lines
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| Error::Structure(format!("unexpected end of file, expected {what}")))
    };
    let (_, header) = next("header")?;
    let version = header
        .trim()
        .strip_prefix("EVRG")
        .ok_or_else(|| Error::Structure(format!("bad region file header '{header}'")))?
        .trim()
        .to_string();
    let (row, count) = next("region count")?;
    let count: usize = count
        .trim()
        .parse()
        .map_err(|_| Error::parse(row, "invalid region count"))?;

    let mut regions = Vec::with_capacity(count);
    for _ in 0..count {
        let (row, head) = next("region header")?;
        let h: Vec<&str> = head.split_whitespace().collect();
        if h.len() != 13 {
            return Err(Error::parse(row, "region header needs 13 fields"));
        }
        let n_points: usize = h[1].parse().map_err(|_| Error::parse(row, "invalid point count"))?;
        let id: u32 = h[2].parse().map_err(|_| Error::parse(row, "invalid region id"))?;
        for (label, what) in [("notes", "note count"), ("detection", "detection setting count")] {
            let (row, n) = next(what)?;
            let n: usize = n.trim().parse().map_err(|_| Error::parse(row, format!("invalid {what}")))?;
            for _ in 0..n {
                next(label)?;
            }
        }
        let (row, class) = next("classification")?;
        let class = RegionClass::from_label(class.trim())
            .ok_or_else(|| Error::parse(row, format!("unknown classification '{}'", class.trim())))?;
        let (row, pts) = next("points")?;
        let p: Vec<&str> = pts.split_whitespace().collect();
        if p.len() != 3 * n_points + 1 {
            return Err(Error::Structure(format!(
                "line {row}: region {id} declares {n_points} points"
            )));
        }
        let vertices = p[..3 * n_points]
            .chunks(3)
            .map(|c| {
                let t = parse_ev_time(c[0], c[1], row)?;
                let d: f64 = c[2].parse().map_err(|_| Error::parse(row, "invalid depth"))?;
                Ok((t, d))
            })
            .collect::<Result<Vec<_>>>()?;
        let (_, name) = next("region name")?;
        regions.push(Region {
            id,
            class,
            name: name.to_string(),
            vertices,
        });
    }
    let file = RegionFile { version, regions };
    file.validate()?;
    Ok(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const T0: f64 = 1_577_836_800.0;

    #[test]
    fn single_passive_period() {
        let r = Region::rectangle(1, RegionClass::Passive, T0 + 10.0, T0 + 20.0, 0.5, 50.0);
        let file = RegionFile::new(vec![r]);
        let text = render_evr(&file).unwrap();
        assert!(text.starts_with("EVRG 7 13.0.0\n1\n"));
        assert!(text.contains("\nPassive\n"));
        let back = parse_evr(&text).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.regions[0].class, RegionClass::Passive);
    }

    #[test]
    fn empty_region_set() {
        let file = RegionFile::new(vec![]);
        let text = render_evr(&file).unwrap();
        assert_eq!(text, "EVRG 7 13.0.0\n0\n");
        assert_eq!(parse_evr(&text).unwrap(), file);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let a = Region::rectangle(3, RegionClass::Passive, T0, T0 + 1.0, 0.0, 1.0);
        let b = Region::rectangle(3, RegionClass::BadPatch, T0, T0 + 2.0, 0.0, 2.0);
        assert!(matches!(
            render_evr(&RegionFile::new(vec![a, b])),
            Err(Error::Validation(_))
        ));
    }

    fn arb_regions() -> impl Strategy<Value = RegionFile> {
        let class = prop_oneof![
            Just(RegionClass::Passive),
            Just(RegionClass::BadPeriod),
            Just(RegionClass::BadPatch)
        ];
        let vertex = (0i64..100_000_000, -10.0f64..300.0)
            .prop_map(|(ticks, d)| (T0 + (ticks / 10_000) as f64 + (ticks % 10_000) as f64 / 10_000.0, d));
        let region = (class, prop::collection::vec(vertex, 1..8), "[A-Za-z0-9 _]{0,12}");
        prop::collection::vec(region, 0..6).prop_map(|rs| {
            RegionFile::new(
                rs.into_iter()
                    .enumerate()
                    .map(|(i, (class, vertices, name))| Region {
                        id: i as u32 + 1,
                        class,
                        name: if name.trim().is_empty() { format!("r{i}") } else { name.trim().to_string() },
                        vertices,
                    })
                    .collect(),
            )
        })
    }

    proptest! {
        #[test]
        fn round_trip(file in arb_regions()) {
            let back = parse_evr(&render_evr(&file).unwrap()).unwrap();
            prop_assert_eq!(back, file);
        }
    }
}
