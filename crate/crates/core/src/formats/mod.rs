//! External data artifacts: Sv CSV exports, line (EVL) and region (EVR)
//! annotation files, and the on-disk training shard store.
//!
//! All readers are pure functions of an immutable file. Writers create or
//! truncate their output path.

mod csv;
mod evl;
mod evr;
mod shard;

pub use csv::{read_sv_csv, parse_sv_csv, sample_depths, write_sv_csv, render_sv_csv, SvCsvRecording, SvPing, MISSING_INDICATOR};
pub use evl::{read_evl, parse_evl, write_evl, render_evl, LineFile, LinePoint, LineStatus, EVL_VERSION};
pub use evr::{read_evr, parse_evr, write_evr, render_evr, Region, RegionClass, RegionFile, EVR_VERSION};
pub use shard::{read_all_shards, read_manifest, read_shard, read_shard_with, write_shards, Shard, ShardManifest, SHARD_LEN};

use chrono::{Datelike, NaiveDate, NaiveDateTime, NaiveTime, Timelike};

use crate::{Error, Result};

const SECONDS_PER_DAY: i64 = 86_400;

/// Seconds since the Unix epoch for a calendar date, a whole-second time of
/// day and a fractional part expressed as `ticks / ticks_per_second`.
///
/// Every reader funnels through this function so that the same instant read
/// from different file types yields the same `f64`.
pub fn epoch_seconds(date: NaiveDate, time: NaiveTime, ticks: u32, ticks_per_second: u32) -> f64 {
    let days = date.num_days_from_ce() as i64 - EPOCH_DAYS_FROM_CE;
    let whole = days * SECONDS_PER_DAY + time.num_seconds_from_midnight() as i64;
    whole as f64 + ticks as f64 / ticks_per_second as f64
}

const EPOCH_DAYS_FROM_CE: i64 = 719_163;

/// Splits epoch seconds back into date, whole-second time and ticks at the
/// given resolution. Inverse of [`epoch_seconds`] for on-grid instants.
pub fn split_epoch_seconds(t: f64, ticks_per_second: u32) -> (NaiveDate, NaiveTime, u32) {
    let mut whole = t.floor() as i64;
    let mut ticks = ((t - whole as f64) * ticks_per_second as f64).round() as i64;
    if ticks >= ticks_per_second as i64 {
        whole += 1;
        ticks -= ticks_per_second as i64;
    }
    let days = whole.div_euclid(SECONDS_PER_DAY);
    let secs = whole.rem_euclid(SECONDS_PER_DAY) as u32;
    let date = NaiveDate::from_num_days_from_ce_opt((days + EPOCH_DAYS_FROM_CE) as i32)
        .unwrap_or(NaiveDate::MIN);
    let time = NaiveTime::from_num_seconds_from_midnight_opt(secs, 0).unwrap_or(NaiveTime::MIN);
    (date, time, ticks as u32)
}

pub fn datetime_from_epoch(t: f64) -> NaiveDateTime {
    let (date, time, ticks) = split_epoch_seconds(t, 1_000_000);
    NaiveDateTime::new(date, time) + chrono::Duration::microseconds(ticks as i64)
}

/// `CCYYMMDD HHMMSSssss` as used by line and region files (ssss in units of
/// 0.1 ms).
pub(crate) fn format_ev_time(t: f64) -> String {
    let (date, time, ticks) = split_epoch_seconds(t, 10_000);
    format!(
        "{:04}{:02}{:02} {:02}{:02}{:02}{:04}",
        date.year(),
        date.month(),
        date.day(),
        time.hour(),
        time.minute(),
        time.second(),
        ticks
    )
}

pub(crate) fn parse_ev_time(date: &str, time: &str, line: usize) -> Result<f64> {
    let bad = || Error::parse(line, format!("invalid timestamp '{date} {time}'"));
    if date.len() != 8 || time.len() != 10 || !date.bytes().chain(time.bytes()).all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let num = |s: &str| s.parse::<u32>().map_err(|_| bad());
    let d = NaiveDate::from_ymd_opt(num(&date[..4])? as i32, num(&date[4..6])?, num(&date[6..])?)
        .ok_or_else(bad)?;
    let t = NaiveTime::from_hms_opt(num(&time[..2])?, num(&time[2..4])?, num(&time[4..6])?)
        .ok_or_else(bad)?;
    Ok(epoch_seconds(d, t, num(&time[6..])?, 10_000))
}

pub(crate) fn read_text(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_text(path: &std::path::Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epoch_origin() {
        let d = NaiveDate::from_ymd_opt(1970, 1, 1).unwrap();
        assert_eq!(epoch_seconds(d, NaiveTime::MIN, 0, 1000), 0.0);
        let d = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        assert_eq!(epoch_seconds(d, NaiveTime::MIN, 0, 1000), 1_577_836_800.0);
    }

    #[test]
    fn ms_and_tenth_ms_agree() {
        let d = NaiveDate::from_ymd_opt(2019, 6, 3).unwrap();
        let t = NaiveTime::from_hms_opt(13, 5, 59).unwrap();
        assert_eq!(epoch_seconds(d, t, 123, 1000), epoch_seconds(d, t, 1230, 10_000));
    }

    #[test]
    fn ev_time_round_trip() {
        let d = NaiveDate::from_ymd_opt(2019, 6, 3).unwrap();
        let t = NaiveTime::from_hms_opt(23, 59, 59).unwrap();
        let s = epoch_seconds(d, t, 9999, 10_000);
        let text = format_ev_time(s);
        assert_eq!(text, "20190603 2359599999");
        let (a, b) = text.split_once(' ').unwrap();
        assert_eq!(parse_ev_time(a, b, 1).unwrap(), s);
    }
}
