//! Minute-bar price files to aligned intraday days and daily realized
//! variance.
//!
//! A day is a block of 1440 one-minute slots starting at a configurable UTC
//! boundary. Each retained day carries an opening anchor, the last price
//! observed in the minute before the boundary when the preceding calendar day
//! has data, so that a complete day yields 1440 returns.

use std::collections::BTreeMap;

use chrono::{DateTime, NaiveDate, NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::proxies::{realized_variance_with, DailyProxySeries, ProxyKind, RealizedNormalization};
use crate::series::{PathKind, PathSeries};

pub const MINUTES_PER_DAY: u32 = 1440;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinuteBarRecord {
    /// Start of the minute, UTC.
    pub timestamp: DateTime<Utc>,
    pub price: f64,
}

impl MinuteBarRecord {
    fn epoch_minute(&self) -> i64 {
        self.timestamp.timestamp().div_euclid(60)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRef {
    Index(usize),
    Name(String),
}

impl std::str::FromStr for ColumnRef {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => ColumnRef::Index(i),
            Err(_) => ColumnRef::Name(s.to_string()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimestampFormat {
    /// Epoch seconds or milliseconds by digit count, otherwise ISO-8601.
    Auto,
    Iso8601,
    EpochSeconds,
    EpochMillis,
    /// A chrono `strftime` pattern, read as UTC.
    Pattern(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BarSchema {
    pub timestamp_column: ColumnRef,
    pub price_column: ColumnRef,
    /// `None` detects a header from the first row.
    pub has_header: Option<bool>,
    pub delimiter: u8,
    pub timestamp_format: TimestampFormat,
    /// Unparseable rows tolerated before the file is rejected.
    pub max_bad_rows: usize,
}

impl Default for BarSchema {
    fn default() -> Self {
        Self {
            timestamp_column: ColumnRef::Index(0),
            price_column: ColumnRef::Index(1),
            has_header: None,
            delimiter: b',',
            timestamp_format: TimestampFormat::Auto,
            max_bad_rows: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseStats {
    pub rows_read: usize,
    pub rows_rejected: usize,
    pub duplicates: usize,
    pub reordered: usize,
    pub header: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedBars {
    pub records: Vec<MinuteBarRecord>,
    pub stats: ParseStats,
}

fn parse_timestamp(raw: &str, format: &TimestampFormat) -> Option<DateTime<Utc>> {
    let s = raw.trim();
    let epoch = |v: i64, millis: bool| {
        if millis {
            Utc.timestamp_millis_opt(v).single()
        } else {
            Utc.timestamp_opt(v, 0).single()
        }
    };
    match format {
        TimestampFormat::EpochSeconds => epoch(s.parse().ok()?, false),
        TimestampFormat::EpochMillis => epoch(s.parse().ok()?, true),
        TimestampFormat::Pattern(p) => NaiveDateTime::parse_from_str(s, p)
            .ok()
            .map(|t| t.and_utc()),
        TimestampFormat::Iso8601 => parse_iso(s),
        TimestampFormat::Auto => {
            let digits = s.trim_start_matches('-');
            if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
                epoch(s.parse().ok()?, digits.len() >= 12)
            } else {
                parse_iso(s)
            }
        }
    }
}

fn parse_iso(s: &str) -> Option<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    const NAIVE: [&str; 6] = [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
        "%Y%m%d %H%M%S",
        "%Y%m%d %H:%M:%S",
    ];
    NAIVE
        .iter()
        .find_map(|p| NaiveDateTime::parse_from_str(s, p).ok())
        .map(|t| t.and_utc())
}

fn floor_to_minute(t: DateTime<Utc>) -> DateTime<Utc> {
    let m = t.timestamp().div_euclid(60) * 60;
    Utc.timestamp_opt(m, 0).single().expect("in-range minute")
}

/// Reads `(timestamp, price)` rows. Output is sorted by time with one record
/// per minute; a later row for the same minute replaces an earlier one.
pub fn parse_bars<R: std::io::Read>(input: R, schema: &BarSchema) -> Result<ParsedBars> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(schema.delimiter)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut stats = ParseStats::default();
    let mut rows: Vec<(usize, MinuteBarRecord)> = Vec::new();
    let mut columns: Option<(usize, usize)> = None;
    let mut last_minute: Option<i64> = None;

    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if columns.is_none() {
            let by_index = |c: &ColumnRef| match c {
                ColumnRef::Index(i) => Some(*i),
                ColumnRef::Name(_) => None,
            };
            let header = match schema.has_header {
                Some(h) => h,
                None => {
                    let price_idx = by_index(&schema.price_column);
                    match price_idx {
                        Some(i) => rec.get(i).is_none_or(|v| v.parse::<f64>().is_err()),
                        None => true,
                    }
                }
            };
            let resolve = |c: &ColumnRef| -> Result<usize> {
                match c {
                    ColumnRef::Index(i) => Ok(*i),
                    ColumnRef::Name(name) if header => rec
                        .iter()
                        .position(|h| h.eq_ignore_ascii_case(name))
                        .ok_or_else(|| Error::Data(format!("header has no column '{name}'"))),
                    ColumnRef::Name(name) => Err(invalid(format!(
                        "column '{name}' named but the file has no header"
                    ))),
                }
            };
            columns = Some((
                resolve(&schema.timestamp_column)?,
                resolve(&schema.price_column)?,
            ));
            stats.header = header;
            if header {
                continue;
            }
        }
        let (ts_col, px_col) = columns.expect("resolved above");
        stats.rows_read += 1;
        let ts = rec
            .get(ts_col)
            .and_then(|s| parse_timestamp(s, &schema.timestamp_format));
        let px = rec
            .get(px_col)
            .and_then(|s| s.parse::<f64>().ok())
            .filter(|p| *p > 0.0 && p.is_finite());
        match (ts, px) {
            (Some(ts), Some(price)) => {
                let record = MinuteBarRecord {
                    timestamp: floor_to_minute(ts),
                    price,
                };
                let minute = record.epoch_minute();
                if last_minute.is_some_and(|m| minute < m) {
                    stats.reordered += 1;
                }
                last_minute = Some(last_minute.map_or(minute, |m| m.max(minute)));
                rows.push((line, record));
            }
            _ => {
                stats.rows_rejected += 1;
                if stats.rows_rejected > schema.max_bad_rows {
                    return Err(Error::Data(format!(
                        "row {} unparseable ({} bad rows, budget {}); check the column schema",
                        line + 1,
                        stats.rows_rejected,
                        schema.max_bad_rows
                    )));
                }
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Data("no price records in input".into()));
    }
    // Stable sort keeps file order among equal minutes, so the last one wins.
    rows.sort_by_key(|(_, r)| r.epoch_minute());
    let mut records: Vec<MinuteBarRecord> = Vec::with_capacity(rows.len());
    for (_, r) in rows {
        match records.last_mut() {
            Some(prev) if prev.epoch_minute() == r.epoch_minute() => {
                *prev = r;
                stats.duplicates += 1;
            }
            _ => records.push(r),
        }
    }
    Ok(ParsedBars { records, stats })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeekendPolicy {
    /// Drop days with fewer than `min_bars_per_day` bars.
    DropIncomplete,
    /// Keep every day with at least one bar, forward-filling gaps.
    PadForward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradingCalendarConfig {
    /// Day boundary in minutes after 00:00 UTC.
    pub day_boundary_minutes: u32,
    pub weekend_policy: WeekendPolicy,
    pub min_bars_per_day: u32,
}

impl Default for TradingCalendarConfig {
    fn default() -> Self {
        Self {
            day_boundary_minutes: 0,
            weekend_policy: WeekendPolicy::DropIncomplete,
            min_bars_per_day: 1380,
        }
    }
}

impl TradingCalendarConfig {
    pub fn validate(&self) -> Result<()> {
        if self.day_boundary_minutes >= MINUTES_PER_DAY {
            return Err(invalid("day boundary must be within one day"));
        }
        if self.min_bars_per_day > MINUTES_PER_DAY {
            return Err(invalid("min_bars_per_day cannot exceed 1440"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedDay {
    pub date: NaiveDate,
    pub bars: u32,
}

/// Gap and cleaning statistics of one ingestion run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub parse: ParseStats,
    pub days_seen: usize,
    pub days_retained: usize,
    pub dropped_days: Vec<DroppedDay>,
    /// Retained days with fewer than 1440 bars.
    pub days_padded: usize,
    /// Minutes forward-filled inside retained days.
    pub minutes_filled: usize,
    /// Retained days with no bar in the preceding calendar day; their first
    /// return is zero.
    pub days_without_anchor: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntradayDays {
    /// 1440 log-prices per retained day, concatenated.
    pub log_prices: PathSeries,
    /// Opening log-price of each day (the minute before the boundary).
    pub anchors: Vec<f64>,
    pub dates: Vec<NaiveDate>,
    pub report: IngestReport,
}

impl IntradayDays {
    pub fn day_count(&self) -> usize {
        self.dates.len()
    }

    /// `[anchor, slot 0, ..., slot 1439]` of day `d`.
    pub fn day_path(&self, d: usize) -> Vec<f64> {
        let per = MINUTES_PER_DAY as usize;
        let mut v = Vec::with_capacity(per + 1);
        v.push(self.anchors[d]);
        v.extend_from_slice(&self.log_prices.values[d * per..(d + 1) * per]);
        v
    }
}

/// Assembles complete 1440-minute days from cleaned, sorted records.
pub fn build_days(
    records: &[MinuteBarRecord],
    calendar: &TradingCalendarConfig,
) -> Result<IntradayDays> {
    calendar.validate()?;
    if records.is_empty() {
        return Err(Error::Data("no records to assemble".into()));
    }
    if records
        .windows(2)
        .any(|w| w[0].epoch_minute() >= w[1].epoch_minute())
    {
        return Err(invalid("records must be sorted with unique minutes"));
    }
    let per = MINUTES_PER_DAY as i64;
    let boundary = calendar.day_boundary_minutes as i64;
    let day_of = |r: &MinuteBarRecord| (r.epoch_minute() - boundary).div_euclid(per);

    let mut by_day: BTreeMap<i64, (usize, usize)> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let e = by_day.entry(day_of(r)).or_insert((i, i));
        e.1 = i + 1;
    }

    let mut report = IngestReport {
        days_seen: by_day.len(),
        ..Default::default()
    };
    let mut log_prices = Vec::new();
    let mut anchors = Vec::new();
    let mut dates = Vec::new();

    for (&day, &(start, end)) in &by_day {
        let bars = &records[start..end];
        let day_start_min = day * per + boundary;
        let date = DateTime::from_timestamp(day_start_min * 60, 0)
            .expect("in-range day")
            .date_naive();
        let count = bars.len() as u32;
        if calendar.weekend_policy == WeekendPolicy::DropIncomplete
            && count < calendar.min_bars_per_day
        {
            report.dropped_days.push(DroppedDay { date, bars: count });
            continue;
        }
        // Last record strictly before the day, if it lies in the previous day.
        let prev = start
            .checked_sub(1)
            .map(|i| &records[i])
            .filter(|r| day_of(r) == day - 1);
        let mut last = prev.map(|r| r.price.ln());
        if last.is_none() {
            report.days_without_anchor += 1;
        }
        let first_price = bars[0].price.ln();
        let anchor = last.unwrap_or(first_price);
        let mut slots = vec![f64::NAN; MINUTES_PER_DAY as usize];
        for r in bars {
            slots[(r.epoch_minute() - day_start_min) as usize] = r.price.ln();
        }
        let mut filled = 0;
        for s in slots.iter_mut() {
            if s.is_nan() {
                *s = last.unwrap_or(first_price);
                filled += 1;
            } else {
                last = Some(*s);
            }
        }
        if filled > 0 {
            report.days_padded += 1;
            report.minutes_filled += filled;
        }
        log_prices.extend_from_slice(&slots);
        anchors.push(anchor);
        dates.push(date);
    }
    report.days_retained = dates.len();
    if dates.is_empty() {
        return Err(Error::Data(format!(
            "no complete day: all {} days have fewer than {} bars",
            report.days_seen, calendar.min_bars_per_day
        )));
    }
    Ok(IntradayDays {
        log_prices: PathSeries::new(log_prices, 1.0 / MINUTES_PER_DAY as f64, PathKind::LogPrice),
        anchors,
        dates,
        report,
    })
}

/// Daily realized variance from `n_per_day` returns per day. `n_per_day` must
/// divide 1440; fewer than 1440 returns use every `1440 / n`-th minute.
pub fn daily_realized_series(
    days: &IntradayDays,
    n_per_day: u32,
    normalization: RealizedNormalization,
) -> Result<DailyProxySeries> {
    if n_per_day == 0 || !MINUTES_PER_DAY.is_multiple_of(n_per_day) {
        return Err(invalid(format!(
            "{n_per_day} returns per day do not divide 1440 minutes"
        )));
    }
    let every = (MINUTES_PER_DAY / n_per_day) as usize;
    let mut values = Vec::with_capacity(days.day_count());
    for d in 0..days.day_count() {
        let path = days.day_path(d);
        let sampled = PathSeries::new(
            path.iter().step_by(every).copied().collect(),
            every as f64 / MINUTES_PER_DAY as f64,
            PathKind::LogPrice,
        );
        values.extend(realized_variance_with(&sampled, n_per_day, normalization)?.values);
    }
    DailyProxySeries::new(values, ProxyKind::Variance, n_per_day)
}

/// CSV with columns `date, proxy_value, n_intraday`. Without dates the day
/// index is written.
pub fn write_series_csv<W: std::io::Write>(
    series: &DailyProxySeries,
    dates: Option<&[NaiveDate]>,
    out: W,
) -> Result<()> {
    if let Some(d) = dates {
        if d.len() != series.day_count() {
            return Err(Error::LengthMismatch {
                expected: series.day_count(),
                found: d.len(),
            });
        }
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["date", "proxy_value", "n_intraday"])?;
    for (i, v) in series.values.iter().enumerate() {
        let date = match dates {
            Some(d) => d[i].to_string(),
            None => i.to_string(),
        };
        w.write_record([date, v.to_string(), series.n_intraday.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the CSV of [`write_series_csv`]; the proxy kind is supplied.
pub fn read_series_csv<R: std::io::Read>(
    input: R,
    kind: ProxyKind,
) -> Result<(DailyProxySeries, Vec<String>)> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("series CSV lacks column '{name}'")))
    };
    let (date_col, value_col, n_col) = (col("date")?, col("proxy_value")?, col("n_intraday")?);
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut n_intraday = None;
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = || Error::Data(format!("bad series row {}", line + 1));
        values.push(
            rec.get(value_col)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(bad)?,
        );
        labels.push(rec.get(date_col).unwrap_or_default().to_string());
        let n = rec
            .get(n_col)
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(bad)?;
        if n_intraday.is_some_and(|m| m != n) {
            return Err(Error::Data("n_intraday differs between rows".into()));
        }
        n_intraday = Some(n);
    }
    let n = n_intraday.ok_or_else(|| Error::Data("empty series file".into()))?;
    Ok((DailyProxySeries::new(values, kind, n)?, labels))
}

pub fn write_bars_csv<W: std::io::Write>(records: &[MinuteBarRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["timestamp", "price"])?;
    for r in records {
        w.write_record([
            r.timestamp.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
            format!("{:.8}", r.price),
        ])?;
    }
    w.flush()?;
    Ok(())
}
