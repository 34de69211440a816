use std::fmt::Write as _;
use std::path::Path;

use chrono::{NaiveDate, NaiveTime};

use super::{epoch_seconds, read_text, write_text};
use crate::{Error, Result};

/// Missing-data indicator written by the exporting software.
pub const MISSING_INDICATOR: f64 = -9.9e37;

const HEADER: [&str; 7] = [
    "Ping_index",
    "Ping_date",
    "Ping_time",
    "Ping_milliseconds",
    "Range_start",
    "Range_stop",
    "Sample_count",
];

/// One ping of an Sv CSV export. `None` samples carried the missing
/// indicator in the file.
#[derive(Debug, Clone, PartialEq)]
pub struct SvPing {
    pub index: i64,
    pub date: NaiveDate,
    pub time: NaiveTime,
    pub milliseconds: u32,
    pub range_start: f64,
    pub range_stop: f64,
    pub samples: Vec<Option<f64>>,
}

impl SvPing {
    pub fn timestamp(&self) -> f64 {
        epoch_seconds(self.date, self.time, self.milliseconds, 1000)
    }

    /// Depth of each sample, evenly spaced from `range_start` to
    /// `range_stop` inclusive.
    pub fn sample_depths(&self) -> Vec<f64> {
        sample_depths(self.range_start, self.range_stop, self.samples.len())
    }

    pub fn missing_count(&self) -> usize {
        self.samples.iter().filter(|s| s.is_none()).count()
    }
}

/// Evenly spaced sample depths. Shared by the reader, the regridder and
/// the synthetic generator so that identical ranges give identical grids.
pub fn sample_depths(start: f64, stop: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![start; count];
    }
    let step = (stop - start) / (count - 1) as f64;
    (0..count)
        .map(|i| if i + 1 == count { stop } else { start + step * i as f64 })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SvCsvRecording {
    pub pings: Vec<SvPing>,
}

impl SvCsvRecording {
    pub fn missing_count(&self) -> usize {
        self.pings.iter().map(SvPing::missing_count).sum()
    }
}

pub fn read_sv_csv(path: impl AsRef<Path>) -> Result<SvCsvRecording> {
    parse_sv_csv(&read_text(path.as_ref())?)
}

pub fn parse_sv_csv(text: &str) -> Result<SvCsvRecording> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Structure("missing header row".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < HEADER.len() || cols[..HEADER.len()] != HEADER {
        return Err(Error::Structure(format!("unexpected header '{header}'")));
    }

    let mut pings = Vec::new();
    for (idx, line) in lines {
        let row = idx + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < HEADER.len() {
            return Err(Error::Structure(format!(
                "row {row}: {} columns, expected at least {}",
                fields.len(),
                HEADER.len()
            )));
        }
        let bad = |what: &str| Error::parse(row, format!("invalid {what}"));
        let index = fields[0].parse::<i64>().map_err(|_| bad("ping index"))?;
        let date = NaiveDate::parse_from_str(fields[1], "%Y-%m-%d").map_err(|_| bad("date"))?;
        let time = NaiveTime::parse_from_str(fields[2], "%H:%M:%S").map_err(|_| bad("time"))?;
        let milliseconds = fields[3].parse::<u32>().map_err(|_| bad("milliseconds"))?;
        if milliseconds >= 1000 {
            return Err(bad("milliseconds"));
        }
        let range_start = fields[4].parse::<f64>().map_err(|_| bad("range start"))?;
        let range_stop = fields[5].parse::<f64>().map_err(|_| bad("range stop"))?;
        let count = fields[6].parse::<usize>().map_err(|_| bad("sample count"))?;
        if count == 0 {
            return Err(Error::Structure(format!("row {row}: zero samples")));
        }
        if !(range_stop > range_start) {
            return Err(Error::parse(row, "range stop must exceed range start"));
        }
        if fields.len() != HEADER.len() + count {
            return Err(Error::Structure(format!(
                "row {row}: {} sample columns, header declares {count}",
                fields.len() - HEADER.len()
            )));
        }
        let samples = fields[HEADER.len()..]
            .iter()
            .map(|f| {
                let v = f.parse::<f64>().map_err(|_| bad("sample value"))?;
                Ok(if v <= MISSING_INDICATOR * 0.5 { None } else { Some(v) })
            })
            .collect::<Result<Vec<_>>>()?;
        pings.push(SvPing {
            index,
            date,
            time,
            milliseconds,
            range_start,
            range_stop,
            samples,
        });
    }
    if pings.is_empty() {
        return Err(Error::Structure("no pings in data section".into()));
    }
    Ok(SvCsvRecording { pings })
}

pub fn render_sv_csv(rec: &SvCsvRecording) -> String {
    let mut out = HEADER.join(",");
    out.push('\n');
    for p in &rec.pings {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{}",
            p.index,
            p.date.format("%Y-%m-%d"),
            p.time.format("%H:%M:%S"),
            p.milliseconds,
            p.range_start,
            p.range_stop,
            p.samples.len()
        );
        for s in &p.samples {
            match s {
                Some(v) => {
                    let _ = write!(out, ",{v}");
                }
                None => out.push_str(",-9.9e+37"),
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_sv_csv(rec: &SvCsvRecording, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &render_sv_csv(rec))
}
