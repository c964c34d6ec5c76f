//! Loading and alignment of intraday prices, daily returns and measure panels.
//!
//! Intraday returns stay in raw log units and never span a day boundary.
//! Daily returns are percentage log-returns computed from closes, so the
//! overnight move lives only in the daily series.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime, Utc};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factors::FactorSeries;
use crate::realized::MeasurePanel;

/// Estimation needs at least this many in-sample days.
pub const MIN_IN_SAMPLE: usize = 250;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PricePoint {
    pub timestamp: DateTime<Utc>,
    pub price: f64,
}

/// One trading day's ordered intraday log-returns.
#[derive(Debug, Clone, PartialEq)]
pub struct IntradayDay {
    pub date: NaiveDate,
    pub returns: Vec<f64>,
}

impl IntradayDay {
    pub fn new(date: NaiveDate, returns: Vec<f64>) -> Result<Self> {
        if let Some(bad) = returns.iter().find(|r| !r.is_finite()) {
            return Err(Error::data(format!("{date}: non-finite intraday return {bad}")));
        }
        Ok(Self { date, returns })
    }

    pub fn n(&self) -> usize {
        self.returns.len()
    }
}

/// Rule mapping an instant to its trading day: the calendar date of
/// `timestamp + offset`. The default (offset 0) splits days at UTC midnight.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayBoundary {
    pub utc_offset_seconds: i32,
}

impl DayBoundary {
    pub fn utc() -> Self {
        Self::default()
    }

    pub fn with_offset_hours(hours: i32) -> Self {
        Self {
            utc_offset_seconds: hours * 3600,
        }
    }

    pub fn day_of(&self, ts: DateTime<Utc>) -> NaiveDate {
        (ts + Duration::seconds(i64::from(self.utc_offset_seconds))).date_naive()
    }
}

/// Parsed intraday file plus the days that were too short to keep.
#[derive(Debug, Clone, Default)]
pub struct IntradayLoad {
    pub days: Vec<IntradayDay>,
    /// (date, number of prices) for every dropped day.
    pub dropped: Vec<(NaiveDate, usize)>,
}

fn parse_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    let raw = raw.trim();
    if raw.is_empty() {
        return None;
    }
    if raw.bytes().all(|b| b.is_ascii_digit() || b == b'-') {
        let secs: i64 = raw.parse().ok()?;
        return DateTime::from_timestamp(secs, 0);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.with_timezone(&Utc));
    }
    let trimmed = raw.strip_suffix('Z').unwrap_or(raw);
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(trimmed, fmt) {
            return Some(naive.and_utc());
        }
    }
    None
}

fn parse_date(raw: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(raw.trim(), "%Y-%m-%d").ok()
}

fn parse_f64(raw: &str) -> Option<f64> {
    raw.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(reader)
}

fn header_names<R: Read>(rdr: &mut csv::Reader<R>) -> Result<Vec<String>> {
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(1, format!("unreadable header: {e}")))?;
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::data("empty file"));
    }
    Ok(headers.iter().map(|h| h.to_ascii_lowercase()).collect())
}

fn record_line(record: &csv::StringRecord, fallback: usize) -> usize {
    record
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or(fallback)
}

/// Parses `timestamp,price` rows and groups them into days.
///
/// Rows may arrive unsorted; they are ordered by timestamp before returns
/// are formed. Duplicate timestamps are rejected.
pub fn parse_intraday_csv<R: Read>(reader: R, boundary: DayBoundary) -> Result<IntradayLoad> {
    let mut rdr = csv_reader(reader);
    let header = header_names(&mut rdr)?;
    if header != ["timestamp", "price"] {
        return Err(Error::parse(
            1,
            format!("expected header `timestamp,price`, got `{}`", header.join(",")),
        ));
    }

    let mut points = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(i + 2);
            Error::parse(line, e.to_string())
        })?;
        let line = record_line(&rec, i + 2);
        let ts = parse_timestamp(&rec[0])
            .ok_or_else(|| Error::parse(line, format!("bad timestamp `{}`", &rec[0])))?;
        let price =
            parse_f64(&rec[1]).ok_or_else(|| Error::parse(line, format!("bad price `{}`", &rec[1])))?;
        if price <= 0.0 {
            return Err(Error::data(format!("line {line}: non-positive price {price}")));
        }
        points.push(PricePoint {
            timestamp: ts,
            price,
        });
    }
    if points.is_empty() {
        return Err(Error::data("intraday file has no price rows"));
    }
    points.sort_by_key(|p| p.timestamp);
    if let Some(w) = points.windows(2).find(|w| w[0].timestamp == w[1].timestamp) {
        return Err(Error::data(format!("duplicate timestamp {}", w[0].timestamp)));
    }
    Ok(group_days(&points, boundary))
}

/// Groups sorted prices by trading day and forms within-day log-returns.
pub fn group_days(points: &[PricePoint], boundary: DayBoundary) -> IntradayLoad {
    let mut load = IntradayLoad::default();
    let mut start = 0;
    while start < points.len() {
        let date = boundary.day_of(points[start].timestamp);
        let mut end = start + 1;
        while end < points.len() && boundary.day_of(points[end].timestamp) == date {
            end += 1;
        }
        let day = &points[start..end];
        if day.len() < 2 {
            warn!("dropping {date}: only {} price(s)", day.len());
            load.dropped.push((date, day.len()));
        } else {
            let returns = day
                .windows(2)
                .map(|w| w[1].price.ln() - w[0].price.ln())
                .collect();
            load.days.push(IntradayDay { date, returns });
        }
        start = end;
    }
    load
}

pub fn load_intraday_csv(path: impl AsRef<Path>, boundary: DayBoundary) -> Result<IntradayLoad> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_intraday_csv(file, boundary)
}

/// Daily percentage returns r_t = 100 (log p_t - log p_{t-1}).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    pub dates: Vec<NaiveDate>,
    pub returns: Vec<f64>,
}

impl ReturnSeries {
    pub fn new(dates: Vec<NaiveDate>, returns: Vec<f64>) -> Result<Self> {
        if dates.len() != returns.len() {
            return Err(Error::data(format!(
                "return series has {} dates but {} values",
                dates.len(),
                returns.len()
            )));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::data(format!("return dates not increasing at {}", w[1])));
        }
        if let Some(i) = returns.iter().position(|r| !r.is_finite()) {
            return Err(Error::data(format!("non-finite return on {}", dates[i])));
        }
        Ok(Self { dates, returns })
    }

    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("date,return_pct\n");
        for (d, r) in self.dates.iter().zip(&self.returns) {
            out.push_str(&format!("{d},{r}\n"));
        }
        out
    }
}

/// Contents of a daily CSV: either closes or precomputed returns.
#[derive(Debug, Clone, PartialEq)]
pub enum DailyInput {
    Closes(Vec<(NaiveDate, f64)>),
    Returns(ReturnSeries),
}

impl DailyInput {
    pub fn into_returns(self) -> Result<ReturnSeries> {
        match self {
            DailyInput::Closes(closes) => daily_returns_from_closes(&closes),
            DailyInput::Returns(r) => Ok(r),
        }
    }
}

/// Parses a daily CSV with header `date,close` or `date,return_pct`.
pub fn parse_daily_csv<R: Read>(reader: R) -> Result<DailyInput> {
    let mut rdr = csv_reader(reader);
    let header = header_names(&mut rdr)?;
    let is_close = match header.as_slice() {
        [d, c] if d == "date" && c == "close" => true,
        [d, r] if d == "date" && r == "return_pct" => false,
        _ => {
            return Err(Error::parse(
                1,
                format!(
                    "expected header `date,close` or `date,return_pct`, got `{}`",
                    header.join(",")
                ),
            ))
        }
    };
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(i + 2);
            Error::parse(line, e.to_string())
        })?;
        let line = record_line(&rec, i + 2);
        let date =
            parse_date(&rec[0]).ok_or_else(|| Error::parse(line, format!("bad date `{}`", &rec[0])))?;
        let value =
            parse_f64(&rec[1]).ok_or_else(|| Error::parse(line, format!("bad value `{}`", &rec[1])))?;
        if is_close && value <= 0.0 {
            return Err(Error::data(format!("line {line}: non-positive close {value}")));
        }
        rows.push((date, value));
    }
    if rows.is_empty() {
        return Err(Error::data("daily file has no rows"));
    }
    rows.sort_by_key(|r| r.0);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::data(format!("duplicate date {}", w[0].0)));
    }
    if is_close {
        Ok(DailyInput::Closes(rows))
    } else {
        let (dates, returns) = rows.into_iter().unzip();
        Ok(DailyInput::Returns(ReturnSeries::new(dates, returns)?))
    }
}

pub fn load_daily_csv(path: impl AsRef<Path>) -> Result<DailyInput> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_daily_csv(file)
}

pub fn daily_returns_from_closes(closes: &[(NaiveDate, f64)]) -> Result<ReturnSeries> {
    if closes.len() < 2 {
        return Err(Error::data("need at least two closes"));
    }
    if let Some((d, p)) = closes.iter().find(|(_, p)| !(*p > 0.0) || !p.is_finite()) {
        return Err(Error::data(format!("non-positive close {p} on {d}")));
    }
    let dates = closes[1..].iter().map(|c| c.0).collect();
    let returns = closes
        .windows(2)
        .map(|w| 100.0 * (w[1].1.ln() - w[0].1.ln()))
        .collect();
    ReturnSeries::new(dates, returns)
}

/// Where the out-of-sample block begins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    /// First out-of-sample date.
    Date(NaiveDate),
    /// Number of trailing observations held out.
    OosLength(usize),
}

/// Returns, measures and (optionally) factors on one shared date index.
#[derive(Debug, Clone)]
pub struct AlignedDataset {
    pub returns: ReturnSeries,
    pub measures: MeasurePanel,
    pub factors: Option<FactorSeries>,
    /// Index of the first out-of-sample observation.
    pub split: usize,
    pub dropped_return_dates: Vec<NaiveDate>,
    pub dropped_measure_dates: Vec<NaiveDate>,
}

impl AlignedDataset {
    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.returns.dates
    }

    pub fn oos_len(&self) -> usize {
        self.len() - self.split
    }

    /// Attaches a factor series; its dates must match the dataset exactly.
    pub fn with_factors(mut self, factors: FactorSeries) -> Result<Self> {
        if factors.dates != self.returns.dates {
            return Err(Error::data("factor dates differ from the aligned date index"));
        }
        self.factors = Some(factors);
        Ok(self)
    }
}

pub fn align(returns: &ReturnSeries, measures: &MeasurePanel, split: Split) -> Result<AlignedDataset> {
    let measure_dates: BTreeSet<NaiveDate> = measures.rows.iter().map(|r| r.date).collect();
    let return_dates: BTreeSet<NaiveDate> = returns.dates.iter().copied().collect();

    let keep_ret: Vec<usize> = (0..returns.len())
        .filter(|&i| measure_dates.contains(&returns.dates[i]))
        .collect();
    if keep_ret.is_empty() {
        return Err(Error::data("returns and measures share no dates"));
    }
    let dropped_return_dates: Vec<NaiveDate> = returns
        .dates
        .iter()
        .filter(|d| !measure_dates.contains(d))
        .copied()
        .collect();
    let dropped_measure_dates: Vec<NaiveDate> = measures
        .rows
        .iter()
        .map(|r| r.date)
        .filter(|d| !return_dates.contains(d))
        .collect();
    if !dropped_return_dates.is_empty() || !dropped_measure_dates.is_empty() {
        info!(
            "alignment dropped {} return date(s) and {} measure date(s)",
            dropped_return_dates.len(),
            dropped_measure_dates.len()
        );
    }

    let aligned_returns = ReturnSeries::new(
        keep_ret.iter().map(|&i| returns.dates[i]).collect(),
        keep_ret.iter().map(|&i| returns.returns[i]).collect(),
    )?;
    let aligned_measures = MeasurePanel::new(
        measures
            .rows
            .iter()
            .filter(|r| return_dates.contains(&r.date))
            .cloned()
            .collect(),
    )?;

    let n = aligned_returns.len();
    let split_index = match split {
        Split::OosLength(k) => {
            if k == 0 || k >= n {
                return Err(Error::data(format!(
                    "out-of-sample length {k} invalid for {n} aligned dates"
                )));
            }
            n - k
        }
        Split::Date(d) => {
            let first = aligned_returns.dates[0];
            let last = aligned_returns.dates[n - 1];
            if d <= first || d > last {
                return Err(Error::data(format!(
                    "split date {d} outside aligned range {first}..{last}"
                )));
            }
            aligned_returns.dates.partition_point(|x| *x < d)
        }
    };
    if split_index < MIN_IN_SAMPLE {
        return Err(Error::data(format!(
            "split leaves {split_index} in-sample days; need at least {MIN_IN_SAMPLE}"
        )));
    }
    info!(
        "aligned {n} dates: {split_index} in-sample, {} out-of-sample",
        n - split_index
    );

    Ok(AlignedDataset {
        returns: aligned_returns,
        measures: aligned_measures,
        factors: None,
        split: split_index,
        dropped_return_dates,
        dropped_measure_dates,
    })
}
