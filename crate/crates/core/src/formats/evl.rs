use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{format_ev_time, parse_ev_time, read_text, write_text};
use crate::{Error, Result};

/// Version tag written after the `EVBD` magic.
pub const EVL_VERSION: &str = "3 13.0.0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LineStatus {
    None = 0,
    Unverified = 1,
    Bad = 2,
    Good = 3,
}

impl LineStatus {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Self::None),
            1 => Some(Self::Unverified),
            2 => Some(Self::Bad),
            3 => Some(Self::Good),
            _ => None,
        }
    }
}

/// A point of a line file. Timestamps are epoch seconds; the file stores
/// them at 0.1 ms resolution, so only on-grid instants round-trip exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinePoint {
    pub timestamp: f64,
    pub depth: f64,
    pub status: LineStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineFile {
    pub version: String,
    pub points: Vec<LinePoint>,
}

impl LineFile {
    pub fn new(points: Vec<LinePoint>) -> Self {
        Self {
            version: EVL_VERSION.to_string(),
            points,
        }
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.timestamp).collect()
    }

    pub fn depths(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.depth).collect()
    }
}

pub fn parse_evl(text: &str) -> Result<LineFile> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Structure("empty line file".into()))?;
    let version = header
        .trim()
        .strip_prefix("EVBD")
        .ok_or_else(|| Error::Structure(format!("bad line file header '{header}'")))?
        .trim()
        .to_string();
    let (count_idx, count_line) = lines
        .next()
        .ok_or_else(|| Error::Structure("missing point count".into()))?;
    let count: usize = count_line
        .trim()
        .parse()
        .map_err(|_| Error::parse(count_idx + 1, "invalid point count"))?;

    let mut points = Vec::with_capacity(count);
    for (idx, line) in lines {
        let row = idx + 1;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 {
            return Err(Error::parse(row, "expected 'date time depth status'"));
        }
        let timestamp = parse_ev_time(f[0], f[1], row)?;
        let depth: f64 = f[2]
            .parse()
            .ok()
            .filter(|d: &f64| d.is_finite())
            .ok_or_else(|| Error::parse(row, format!("invalid depth '{}'", f[2])))?;
        let status = f[3]
            .parse::<u8>()
            .ok()
            .and_then(LineStatus::from_code)
            .ok_or_else(|| Error::parse(row, format!("invalid status '{}'", f[3])))?;
        if let Some(prev) = points.last().map(|p: &LinePoint| p.timestamp) {
            if timestamp < prev {
                return Err(Error::Structure(format!("row {row}: timestamps decrease")));
            }
        }
        points.push(LinePoint {
            timestamp,
            depth,
            status,
        });
    }
    if points.len() != count {
        return Err(Error::Structure(format!(
            "declared {count} points, found {}",
            points.len()
        )));
    }
    Ok(LineFile { version, points })
}

pub fn read_evl(path: impl AsRef<Path>) -> Result<LineFile> {
    parse_evl(&read_text(path.as_ref())?)
}

pub fn render_evl(line: &LineFile) -> Result<String> {
    if line.points.is_empty() {
        return Err(Error::Validation("line file needs at least one point".into()));
    }
    let mut out = format!("EVBD {}\n{}\n", line.version, line.points.len());
    for p in &line.points {
        if !p.depth.is_finite() {
            return Err(Error::Validation("non-finite line depth".into()));
        }
        let _ = writeln!(out, "{} {} {}", format_ev_time(p.timestamp), p.depth, p.status.code());
    }
    Ok(out)
}

pub fn write_evl(line: &LineFile, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &render_evl(line)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const T0: f64 = 1_577_836_800.0;

    #[test]
    fn three_point_line() {
        let line = LineFile::new(
            [5.0, 5.1, 5.2]
                .iter()
                .enumerate()
                .map(|(i, &depth)| LinePoint {
                    timestamp: T0 + i as f64,
                    depth,
                    status: LineStatus::Good,
                })
                .collect(),
        );
        let text = render_evl(&line).unwrap();
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows[0], "EVBD 3 13.0.0");
        assert_eq!(rows[1], "3");
        assert_eq!(rows[2], "20200101 0000000000 5 3");
        assert_eq!(rows[3], "20200101 0000010000 5.1 3");
        assert_eq!(parse_evl(&text).unwrap(), line);
    }

    #[test]
    fn status_codes() {
        for code in 0..=3u8 {
            let text = format!("EVBD 3 1\n1\n20200101 0000000000 1.5 {code}\n");
            assert_eq!(parse_evl(&text).unwrap().points[0].status.code(), code);
        }
        let text = "EVBD 3 1\n1\n20200101 0000000000 1.5 7\n";
        assert!(matches!(parse_evl(text), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn count_mismatch_and_bad_depth() {
        let text = "EVBD 3 1\n2\n20200101 0000000000 1.5 3\n";
        assert!(matches!(parse_evl(text), Err(Error::Structure(_))));
        let text = "EVBD 3 1\n1\n20200101 0000000000 deep 3\n";
        assert!(matches!(parse_evl(text), Err(Error::Parse { .. })));
    }

    #[test]
    fn empty_line_cannot_be_written() {
        assert!(render_evl(&LineFile::new(vec![])).is_err());
    }

    pub(crate) fn arb_line() -> impl Strategy<Value = LineFile> {
        (
            0i64..1_000_000_000,
            prop::collection::vec((0u32..100_000, -100.0f64..500.0, 0u8..4), 1..30),
        )
            .prop_map(|(start, steps)| {
                let mut ticks = start;
                let points = steps
                    .into_iter()
                    .map(|(dt, depth, code)| {
                        ticks += dt as i64;
                        LinePoint {
                            timestamp: T0 + (ticks / 10_000) as f64 + (ticks % 10_000) as f64 / 10_000.0,
                            depth,
                            status: LineStatus::from_code(code).unwrap(),
                        }
                    })
                    .collect();
                LineFile::new(points)
            })
    }

    proptest! {
        #[test]
        fn round_trip(line in arb_line()) {
            let back = parse_evl(&render_evl(&line).unwrap()).unwrap();
            prop_assert_eq!(back, line);
        }
    }
}
