//! Tick ingestion and last-tick sampling onto a regular intraday grid.
//!
//! Log-prices and returns on the grid are expressed in percent, i.e.
//! `100 * ln(price)`, so a daily return of `1.0` means roughly one percent.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime, NaiveTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Multiplier applied to natural log-prices.
pub const PERCENT: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub timestamp: NaiveDateTime,
    pub price: f64,
}

/// Names of the timestamp and price columns in a tick CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub timestamp: String,
    pub price: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            timestamp: "timestamp".into(),
            price: "price".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSpec {
    pub open_time: NaiveTime,
    pub close_time: NaiveTime,
    /// Bar length in seconds.
    pub bar_seconds: i64,
    pub excluded_dates: BTreeSet<NaiveDate>,
    /// Days with fewer in-session ticks are dropped.
    pub min_ticks: usize,
}

impl Default for SessionSpec {
    fn default() -> Self {
        Self {
            open_time: NaiveTime::from_hms_opt(9, 30, 0).unwrap(),
            close_time: NaiveTime::from_hms_opt(16, 0, 0).unwrap(),
            bar_seconds: 300,
            excluded_dates: BTreeSet::new(),
            min_ticks: 50,
        }
    }
}

impl SessionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.open_time >= self.close_time {
            return Err(Error::InvalidSession("open_time must precede close_time".into()));
        }
        if self.bar_seconds <= 0 {
            return Err(Error::InvalidSession("bar interval must be positive".into()));
        }
        let length = (self.close_time - self.open_time).num_seconds();
        if length % self.bar_seconds != 0 {
            return Err(Error::InvalidSession(format!(
                "bar interval {}s does not divide session length {}s",
                self.bar_seconds, length
            )));
        }
        if self.bars() < 3 {
            return Err(Error::InvalidSession(
                "session must contain at least 3 bars".into(),
            ));
        }
        Ok(())
    }

    /// Number of intraday returns M per day.
    pub fn bars(&self) -> usize {
        ((self.close_time - self.open_time).num_seconds() / self.bar_seconds) as usize
    }

    pub fn grid_times(&self) -> Vec<NaiveTime> {
        (0..=self.bars())
            .map(|i| self.open_time + Duration::seconds(self.bar_seconds * i as i64))
            .collect()
    }
}

/// One day of regularly sampled percent log-prices and their differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntradayGrid {
    pub day: NaiveDate,
    pub log_prices: Vec<f64>,
    pub log_returns: Vec<f64>,
}

impl IntradayGrid {
    pub fn from_log_prices(day: NaiveDate, log_prices: Vec<f64>) -> Self {
        let log_returns = log_prices.windows(2).map(|w| w[1] - w[0]).collect();
        Self {
            day,
            log_prices,
            log_returns,
        }
    }

    pub fn bars(&self) -> usize {
        self.log_returns.len()
    }
}

/// Rows that failed to parse, with their 1-based data row index.
#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub malformed: Vec<(usize, String)>,
}

pub fn parse_timestamp(raw: &str) -> Option<NaiveDateTime> {
    let raw = raw.trim();
    if !raw.is_empty() && raw.bytes().all(|b| b.is_ascii_digit()) {
        let ms: i64 = raw.parse().ok()?;
        return DateTime::from_timestamp_millis(ms).map(|d| d.naive_utc());
    }
    const FORMATS: [&str; 4] = [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ];
    FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(raw, f).ok())
        .or_else(|| DateTime::parse_from_rfc3339(raw).ok().map(|d| d.naive_local()))
}

fn parse_ticks_inner<R: Read>(
    reader: R,
    schema: &ColumnMap,
    strict: bool,
) -> Result<(Vec<TickRecord>, LoadReport)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::UnparseableRow {
            row: 0,
            reason: format!("missing column '{name}'"),
        })
    };
    let ts_col = find(&schema.timestamp)?;
    let px_col = find(&schema.price)?;

    let mut ticks = Vec::new();
    let mut report = LoadReport::default();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let parsed = rec.map_err(|e| e.to_string()).and_then(|rec| {
            let ts = rec
                .get(ts_col)
                .and_then(parse_timestamp)
                .ok_or_else(|| "bad timestamp".to_string())?;
            let price: f64 = rec
                .get(px_col)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| "bad price".to_string())?;
            if !(price.is_finite() && price > 0.0) {
                return Err(format!("non-positive price {price}"));
            }
            Ok(TickRecord {
                timestamp: ts,
                price,
            })
        });
        match parsed {
            Ok(t) => ticks.push(t),
            Err(reason) if strict => return Err(Error::UnparseableRow { row, reason }),
            Err(reason) => report.malformed.push((row, reason)),
        }
    }
    if ticks.is_empty() && report.malformed.is_empty() {
        return Err(Error::EmptyFile);
    }
    ticks.sort_by_key(|t| t.timestamp);
    Ok((ticks, report))
}

/// Parses ticks from any reader, failing on the first malformed row.
pub fn parse_ticks<R: Read>(reader: R, schema: &ColumnMap) -> Result<Vec<TickRecord>> {
    parse_ticks_inner(reader, schema, true).map(|(t, _)| t)
}

/// Loads a tick CSV, failing on the first malformed row. Output is stably
/// sorted by timestamp.
pub fn load_ticks(path: impl AsRef<Path>, schema: &ColumnMap) -> Result<Vec<TickRecord>> {
    parse_ticks(std::fs::File::open(path)?, schema)
}

/// Like [`load_ticks`] but skips malformed rows and reports them.
pub fn load_ticks_lenient(
    path: impl AsRef<Path>,
    schema: &ColumnMap,
) -> Result<(Vec<TickRecord>, LoadReport)> {
    let (ticks, report) = parse_ticks_inner(std::fs::File::open(path)?, schema, false)?;
    for (row, reason) in &report.malformed {
        log::warn!("skipping tick row {row}: {reason}");
    }
    Ok((ticks, report))
}

#[derive(Debug, Clone, Default)]
pub struct SamplingReport {
    pub excluded: Vec<NaiveDate>,
    /// Days dropped for having fewer than `min_ticks` ticks in session.
    pub sparse: Vec<(NaiveDate, usize)>,
}

/// Last-tick sampling onto the session grid. See [`sample_last_tick_report`].
pub fn sample_last_tick(ticks: &[TickRecord], spec: &SessionSpec) -> Result<Vec<IntradayGrid>> {
    sample_last_tick_report(ticks, spec).map(|(g, _)| g)
}

/// Samples each session day on `open, open + bar, ..., close` taking the last
/// tick at or before each grid time. Grid points before the first tick of the
/// day take the first tick's price. Only ticks inside `[open, close]` count.
pub fn sample_last_tick_report(
    ticks: &[TickRecord],
    spec: &SessionSpec,
) -> Result<(Vec<IntradayGrid>, SamplingReport)> {
    spec.validate()?;
    let mut by_day: BTreeMap<NaiveDate, Vec<TickRecord>> = BTreeMap::new();
    for t in ticks {
        let time = t.timestamp.time();
        if time >= spec.open_time && time <= spec.close_time {
            by_day.entry(t.timestamp.date()).or_default().push(*t);
        }
    }

    let grid_times = spec.grid_times();
    let mut report = SamplingReport::default();
    let mut grids = Vec::with_capacity(by_day.len());
    for (day, mut day_ticks) in by_day {
        if spec.excluded_dates.contains(&day) {
            report.excluded.push(day);
            continue;
        }
        if day_ticks.len() < spec.min_ticks {
            log::warn!(
                "dropping {day}: {} ticks in session (< {})",
                day_ticks.len(),
                spec.min_ticks
            );
            report.sparse.push((day, day_ticks.len()));
            continue;
        }
        day_ticks.sort_by_key(|t| t.timestamp);
        let mut idx = 0;
        let mut last = day_ticks[0].price;
        let log_prices = grid_times
            .iter()
            .map(|&g| {
                let stamp = day.and_time(g);
                while idx < day_ticks.len() && day_ticks[idx].timestamp <= stamp {
                    last = day_ticks[idx].price;
                    idx += 1;
                }
                PERCENT * last.ln()
            })
            .collect();
        grids.push(IntradayGrid::from_log_prices(day, log_prices));
    }
    if grids.is_empty() {
        return Err(Error::NoValidDays);
    }
    Ok((grids, report))
}

/// Open-to-close percent log return per day.
pub fn daily_returns(grids: &[IntradayGrid]) -> Result<Vec<(NaiveDate, f64)>> {
    if grids.is_empty() {
        return Err(Error::NoValidDays);
    }
    let mut out: Vec<(NaiveDate, f64)> = grids
        .iter()
        .map(|g| (g.day, g.log_returns.iter().sum()))
        .collect();
    out.sort_by_key(|(d, _)| *d);
    Ok(out)
}

pub fn write_daily_returns<W: Write>(writer: W, returns: &[(NaiveDate, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "return"])?;
    for (d, r) in returns {
        w.write_record([d.to_string(), format!("{r:.12}")])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_daily_returns<R: Read>(reader: R) -> Result<Vec<(NaiveDate, f64)>> {
    read_dated_series(reader)
}

/// Reads a two-column `date,value` CSV (header required).
pub fn read_dated_series<R: Read>(reader: R) -> Result<Vec<(NaiveDate, f64)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |reason: &str| Error::UnparseableRow {
            row: i + 1,
            reason: reason.to_string(),
        };
        let date = rec
            .get(0)
            .and_then(|s| NaiveDate::parse_from_str(s, "%Y-%m-%d").ok())
            .ok_or_else(|| bad("bad date"))?;
        let value: f64 = rec
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad value"))?;
        out.push((date, value));
    }
    if out.is_empty() {
        return Err(Error::EmptyFile);
    }
    out.sort_by_key(|(d, _)| *d);
    Ok(out)
}

/// One row per bar: date, bar index, bar end time, percent log return.
pub fn write_intraday_returns<W: Write>(
    writer: W,
    grids: &[IntradayGrid],
    spec: &SessionSpec,
) -> Result<()> {
    let times = spec.grid_times();
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "bar", "time", "log_return"])?;
    for g in grids {
        for (i, r) in g.log_returns.iter().enumerate() {
            w.write_record([
                g.day.to_string(),
                (i + 1).to_string(),
                times[i + 1].format("%H:%M:%S").to_string(),
                format!("{r:.12}"),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
