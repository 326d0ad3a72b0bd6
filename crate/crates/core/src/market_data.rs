//! Tick ingestion, missing-value fill and alignment onto a shared time grid.
//!
//! Raw ticks are sampled with the last-trade rule: every grid instant takes
//! the last tick observed in the bucket `(previous instant, instant]`. Empty
//! buckets are forward filled from the preceding row of the same stock, and a
//! leading run of empty buckets is back filled from the first observation.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{DateTime, Duration, NaiveTime, SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Timestamp = DateTime<Utc>;

pub const TICK_HEADER: [&str; 6] = ["stock_id", "timestamp", "bid", "ask", "volume", "avg_price"];

pub fn format_timestamp(ts: &Timestamp) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn parse_timestamp(s: &str) -> Option<Timestamp> {
    DateTime::parse_from_rfc3339(s.trim())
        .ok()
        .map(|t| t.with_timezone(&Utc))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TickRecord {
    pub stock_id: String,
    pub timestamp: Timestamp,
    pub bid: Option<f64>,
    pub ask: Option<f64>,
    pub volume: Option<f64>,
    pub avg_price: Option<f64>,
}

/// Which tick column feeds the price matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceField {
    /// Average transaction price, falling back to the bid/ask midpoint.
    #[default]
    Average,
    Mid,
    Bid,
    Ask,
}

impl TickRecord {
    pub fn price(&self, field: PriceField) -> Option<f64> {
        let mid = match (self.bid, self.ask) {
            (Some(b), Some(a)) => Some(0.5 * (b + a)),
            _ => None,
        };
        match field {
            PriceField::Average => self.avg_price.or(mid),
            PriceField::Mid => mid,
            PriceField::Bid => self.bid,
            PriceField::Ask => self.ask,
        }
    }
}

/// Parsed ticks grouped per stock, each stream sorted by timestamp.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TickTable {
    streams: BTreeMap<String, Vec<TickRecord>>,
    pub skipped: usize,
}

impl TickTable {
    pub fn from_records<I: IntoIterator<Item = TickRecord>>(records: I) -> Self {
        let mut streams: BTreeMap<String, Vec<TickRecord>> = BTreeMap::new();
        for rec in records {
            streams.entry(rec.stock_id.clone()).or_default().push(rec);
        }
        for stream in streams.values_mut() {
            // stable: equal timestamps keep file order
            stream.sort_by_key(|r| r.timestamp);
        }
        TickTable { streams, skipped: 0 }
    }

    pub fn stock_ids(&self) -> impl Iterator<Item = &str> {
        self.streams.keys().map(String::as_str)
    }

    pub fn stream(&self, stock_id: &str) -> Option<&[TickRecord]> {
        self.streams.get(stock_id).map(Vec::as_slice)
    }

    pub fn streams(&self) -> impl Iterator<Item = (&str, &[TickRecord])> {
        self.streams.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.streams.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn parse_optional_price(field: &str) -> std::result::Result<Option<f64>, ()> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(None);
    }
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(Some(v)),
        _ => Err(()),
    }
}

fn parse_tick_row(row: &csv::StringRecord) -> Option<TickRecord> {
    if row.len() != TICK_HEADER.len() {
        return None;
    }
    let stock_id = row[0].trim();
    if stock_id.is_empty() {
        return None;
    }
    let timestamp = parse_timestamp(&row[1])?;
    let bid = parse_optional_price(&row[2]).ok()?;
    let ask = parse_optional_price(&row[3]).ok()?;
    let volume = match row[4].trim() {
        "" => None,
        v => match v.parse::<f64>() {
            Ok(x) if x.is_finite() && x >= 0.0 => Some(x),
            _ => return None,
        },
    };
    let avg_price = parse_optional_price(&row[5]).ok()?;
    Some(TickRecord {
        stock_id: stock_id.to_string(),
        timestamp,
        bid,
        ask,
        volume,
        avg_price,
    })
}

/// Reads the tick CSV format. Rows that fail to parse are dropped and counted
/// in [`TickTable::skipped`]; a missing or wrong header is fatal.
pub fn parse_ticks<R: Read>(source: R) -> Result<TickTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(source);
    let header = reader
        .headers()
        .map_err(|e| Error::Format(format!("unreadable tick header: {e}")))?
        .clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != TICK_HEADER {
        return Err(Error::Format(format!(
            "expected tick header `{}`, found `{}`",
            TICK_HEADER.join(","),
            names.join(",")
        )));
    }

    let mut records = Vec::new();
    let mut skipped = 0;
    for row in reader.records() {
        match row.ok().as_ref().and_then(parse_tick_row) {
            Some(rec) => records.push(rec),
            None => skipped += 1,
        }
    }
    let mut table = TickTable::from_records(records);
    table.skipped = skipped;
    Ok(table)
}

pub fn write_ticks<W: Write>(records: &[TickRecord], sink: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(TICK_HEADER)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in records {
        writer.write_record([
            r.stock_id.clone(),
            format_timestamp(&r.timestamp),
            opt(r.bid),
            opt(r.ask),
            opt(r.volume),
            opt(r.avg_price),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// A daily trading session `[open, close]`, both ends inclusive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionWindow {
    pub open: NaiveTime,
    pub close: NaiveTime,
}

impl SessionWindow {
    fn contains(&self, t: NaiveTime) -> bool {
        self.open <= t && t <= self.close
    }
}

impl FromStr for SessionWindow {
    type Err = Error;

    /// Parses `HH:MM-HH:MM` (seconds optional).
    fn from_str(s: &str) -> Result<Self> {
        let parse = |p: &str| {
            let p = p.trim();
            NaiveTime::parse_from_str(p, "%H:%M:%S")
                .or_else(|_| NaiveTime::parse_from_str(p, "%H:%M"))
                .map_err(|_| Error::Config(format!("bad session time `{p}`")))
        };
        let (open, close) = s
            .split_once('-')
            .ok_or_else(|| Error::Config(format!("session `{s}` is not `open-close`")))?;
        let window = SessionWindow {
            open: parse(open)?,
            close: parse(close)?,
        };
        if window.open >= window.close {
            return Err(Error::Config(format!("session `{s}` closes before it opens")));
        }
        Ok(window)
    }
}

/// Uniform sampling grid. Instants advance by `step_ms` and jump to the next
/// session open whenever a step would leave the trading sessions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub step_ms: i64,
    pub sessions: Vec<SessionWindow>,
    instants: Vec<Timestamp>,
}

impl TimeGrid {
    pub fn new(start: Timestamp, step_ms: i64, count: usize, mut sessions: Vec<SessionWindow>) -> Result<Self> {
        if count == 0 {
            return Err(Error::Config("time grid needs a positive count".into()));
        }
        if step_ms <= 0 {
            return Err(Error::Config("time grid step must be positive".into()));
        }
        sessions.sort_by_key(|s| s.open);
        if sessions.windows(2).any(|w| w[0].close >= w[1].open) {
            return Err(Error::Config("trading sessions overlap".into()));
        }
        let in_session = |t: &Timestamp| sessions.is_empty() || sessions.iter().any(|s| s.contains(t.time()));
        if !in_session(&start) {
            return Err(Error::Config(format!(
                "grid start {} lies outside every session",
                format_timestamp(&start)
            )));
        }

        let step = Duration::milliseconds(step_ms);
        let mut instants = Vec::with_capacity(count);
        let mut current = start;
        instants.push(current);
        while instants.len() < count {
            let candidate = current + step;
            current = if in_session(&candidate) {
                candidate
            } else {
                next_session_open(&sessions, current)
            };
            instants.push(current);
        }
        Ok(TimeGrid {
            step_ms,
            sessions,
            instants,
        })
    }

    /// Grid over explicit instants, e.g. when loading a price CSV.
    pub fn from_instants(instants: Vec<Timestamp>) -> Result<Self> {
        if instants.is_empty() {
            return Err(Error::Format("time grid without instants".into()));
        }
        if instants.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Format("grid instants are not strictly increasing".into()));
        }
        let step_ms = match instants.as_slice() {
            [a, b, ..] => (*b - *a).num_milliseconds(),
            _ => 0,
        };
        Ok(TimeGrid {
            step_ms,
            sessions: Vec::new(),
            instants,
        })
    }

    pub fn instants(&self) -> &[Timestamp] {
        &self.instants
    }

    pub fn count(&self) -> usize {
        self.instants.len()
    }

    pub fn start(&self) -> Timestamp {
        self.instants[0]
    }

    fn tail(&self, from: usize) -> TimeGrid {
        TimeGrid {
            step_ms: self.step_ms,
            sessions: self.sessions.clone(),
            instants: self.instants[from..].to_vec(),
        }
    }
}

fn next_session_open(sessions: &[SessionWindow], after: Timestamp) -> Timestamp {
    let date = after.date_naive();
    let time = after.time();
    if let Some(s) = sessions.iter().find(|s| s.open > time) {
        return Utc.from_utc_datetime(&date.and_time(s.open));
    }
    let next = date.succ_opt().expect("date overflow");
    Utc.from_utc_datetime(&next.and_time(sessions[0].open))
}

/// Time-aligned prices: rows are grid instants, columns are stocks.
#[derive(Clone, Debug, PartialEq)]
pub struct PriceMatrix {
    grid: TimeGrid,
    stock_ids: Vec<String>,
    values: Vec<f64>,
    fill_mask: Vec<bool>,
}

impl PriceMatrix {
    /// `values` and `fill_mask` are row-major.
    pub fn new(grid: TimeGrid, stock_ids: Vec<String>, values: Vec<f64>, fill_mask: Vec<bool>) -> Result<Self> {
        let cells = grid.count() * stock_ids.len();
        if values.len() != cells || fill_mask.len() != cells {
            return Err(Error::Dimension(format!(
                "price matrix expects {} x {} cells",
                grid.count(),
                stock_ids.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Format(format!("non-positive or missing price {v}")));
        }
        Ok(PriceMatrix {
            grid,
            stock_ids,
            values,
            fill_mask,
        })
    }

    /// Builds a fully observed matrix from per-stock columns.
    pub fn from_columns(grid: TimeGrid, stock_ids: Vec<String>, columns: &[Vec<f64>]) -> Result<Self> {
        let rows = grid.count();
        if columns.len() != stock_ids.len() || columns.iter().any(|c| c.len() != rows) {
            return Err(Error::Dimension("column lengths disagree with grid".into()));
        }
        let cols = columns.len();
        let mut values = vec![0.0; rows * cols];
        for (j, col) in columns.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                values[i * cols + j] = *v;
            }
        }
        PriceMatrix::new(grid, stock_ids, values, vec![false; rows * cols])
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn stock_ids(&self) -> &[String] {
        &self.stock_ids
    }

    pub fn rows(&self) -> usize {
        self.grid.count()
    }

    pub fn cols(&self) -> usize {
        self.stock_ids.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols() + col]
    }

    pub fn is_filled(&self, row: usize, col: usize) -> bool {
        self.fill_mask[row * self.cols() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let c = self.cols();
        &self.values[row * c..(row + 1) * c]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows()).map(|r| self.get(r, col)).collect()
    }

    pub fn observed_fraction(&self, col: usize) -> f64 {
        let observed = (0..self.rows()).filter(|&r| !self.is_filled(r, col)).count();
        observed as f64 / self.rows() as f64
    }

    /// One synthetic tick per cell, carrying the cell price as `avg_price`.
    pub fn to_ticks(&self) -> Vec<TickRecord> {
        let mut out = Vec::with_capacity(self.values.len());
        for (r, ts) in self.grid.instants().iter().enumerate() {
            for (c, id) in self.stock_ids.iter().enumerate() {
                out.push(TickRecord {
                    stock_id: id.clone(),
                    timestamp: *ts,
                    bid: None,
                    ask: None,
                    volume: None,
                    avg_price: Some(self.get(r, c)),
                });
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        write_grid_csv(self.grid.instants(), &self.stock_ids, &self.values, sink)
    }

    /// Loads the CSV written by [`PriceMatrix::write_csv`]. Every cell counts
    /// as observed.
    pub fn read_csv<R: Read>(source: R) -> Result<Self> {
        let (instants, ids, values) = read_grid_csv(source)?;
        let n = values.len();
        PriceMatrix::new(TimeGrid::from_instants(instants)?, ids, values, vec![false; n])
    }
}

pub(crate) fn write_grid_csv<W: Write>(instants: &[Timestamp], ids: &[String], values: &[f64], sink: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    let mut header = vec!["timestamp".to_string()];
    header.extend(ids.iter().cloned());
    writer.write_record(&header)?;
    let cols = ids.len();
    for (r, ts) in instants.iter().enumerate() {
        let mut rec = Vec::with_capacity(cols + 1);
        rec.push(format_timestamp(ts));
        rec.extend(values[r * cols..(r + 1) * cols].iter().map(f64::to_string));
        writer.write_record(&rec)?;
    }
    writer.flush()?;
    Ok(())
}

pub(crate) fn read_grid_csv<R: Read>(source: R) -> Result<(Vec<Timestamp>, Vec<String>, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let header = reader.headers()?.clone();
    if header.get(0).map(str::trim) != Some("timestamp") || header.len() < 2 {
        return Err(Error::Format("matrix CSV must start with a timestamp column".into()));
    }
    let ids: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let mut instants = Vec::new();
    let mut values = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row?;
        let ts =
            parse_timestamp(&row[0]).ok_or_else(|| Error::Format(format!("bad timestamp on data row {}", line + 1)))?;
        instants.push(ts);
        for field in row.iter().skip(1) {
            let v = field
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("bad value `{field}` on data row {}", line + 1)))?;
            values.push(v);
        }
    }
    Ok((instants, ids, values))
}

/// Result of aligning ticks onto a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FilledPrices {
    pub matrix: PriceMatrix,
    /// Stocks without a single priced tick inside the grid window.
    pub dropped: Vec<String>,
}

/// Samples every stock onto `grid` and fills the gaps.
pub fn fill_missing(table: &TickTable, grid: &TimeGrid, field: PriceField) -> Result<FilledPrices> {
    let instants = grid.instants();
    let rows = instants.len();
    // the first bucket spans one step back from the first instant
    let window_start = instants[0] - Duration::milliseconds(grid.step_ms);
    let before_window = |t: Timestamp| {
        if grid.step_ms > 0 {
            t <= window_start
        } else {
            t < instants[0]
        }
    };

    let mut sampled: Vec<(String, Vec<Option<f64>>)> = Vec::new();
    let mut dropped = Vec::new();
    for (id, stream) in table.streams() {
        let mut column = vec![None; rows];
        let mut cursor = stream.partition_point(|r| before_window(r.timestamp));
        for (r, instant) in instants.iter().enumerate() {
            while cursor < stream.len() && stream[cursor].timestamp <= *instant {
                if let Some(p) = stream[cursor].price(field) {
                    column[r] = Some(p);
                }
                cursor += 1;
            }
        }
        if column.iter().all(Option::is_none) {
            dropped.push(id.to_string());
        } else {
            sampled.push((id.to_string(), column));
        }
    }
    if sampled.is_empty() {
        return Err(Error::EmptyUniverse);
    }

    let cols = sampled.len();
    let mut values = vec![0.0; rows * cols];
    let mut fill_mask = vec![true; rows * cols];
    let mut ids = Vec::with_capacity(cols);
    for (j, (id, column)) in sampled.into_iter().enumerate() {
        let first = column.iter().flatten().next().copied().expect("non-empty column");
        let mut last = first;
        for (r, cell) in column.iter().enumerate() {
            if let Some(p) = cell {
                last = *p;
                fill_mask[r * cols + j] = false;
            }
            values[r * cols + j] = last;
        }
        ids.push(id);
    }
    Ok(FilledPrices {
        matrix: PriceMatrix::new(grid.clone(), ids, values, fill_mask)?,
        dropped,
    })
}

/// Keeps stocks observed on at least `min_observed_fraction` of the rows and
/// truncates the oldest rows so the row count divides by `step_size`.
pub fn select_consistent_stocks(
    matrix: &PriceMatrix,
    min_observed_fraction: f64,
    step_size: usize,
) -> Result<PriceMatrix> {
    if !(min_observed_fraction > 0.0 && min_observed_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "presence threshold {min_observed_fraction} outside (0, 1]"
        )));
    }
    if step_size == 0 {
        return Err(Error::Config("step size must be positive".into()));
    }
    let keep: Vec<usize> = (0..matrix.cols())
        .filter(|&c| matrix.observed_fraction(c) >= min_observed_fraction)
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptyUniverse);
    }
    let rows = matrix.rows() / step_size * step_size;
    if rows == 0 {
        return Err(Error::Dimension(format!(
            "{} rows cannot hold one interval of {step_size} steps",
            matrix.rows()
        )));
    }
    let first = matrix.rows() - rows;
    let mut values = Vec::with_capacity(rows * keep.len());
    let mut mask = Vec::with_capacity(rows * keep.len());
    for r in first..matrix.rows() {
        for &c in &keep {
            values.push(matrix.get(r, c));
            mask.push(matrix.is_filled(r, c));
        }
    }
    let ids = keep.iter().map(|&c| matrix.stock_ids[c].clone()).collect();
    PriceMatrix::new(matrix.grid.tail(first), ids, values, mask)
}
