//! Irregularly timestamped observations and their piecewise-linear view.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickSeries {
    times: Vec<f64>,
    values: Vec<f64>,
    pub source: String,
}

impl TickSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>, source: impl Into<String>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::InvalidSeries(format!("{} timestamps but {} values", times.len(), values.len())));
        }
        if times.len() < 2 {
            return Err(Error::TooShort(times.len()));
        }
        if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidSeries(format!("timestamps not strictly increasing at index {}", i + 1)));
        }
        if let Some(i) = times.iter().chain(values.iter()).position(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries(format!("non-finite entry at position {i}")));
        }
        Ok(TickSeries { times, values, source: source.into() })
    }

    /// Series observed at integer times 0, 1, ..., n-1.
    pub fn from_values(values: Vec<f64>, source: impl Into<String>) -> Result<Self> {
        let times = (0..values.len()).map(|i| i as f64).collect();
        Self::new(times, values, source)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn interpolated(&self) -> InterpolatedPath<'_> {
        InterpolatedPath { series: self }
    }
}

/// Column layout of a tick file.
#[derive(Debug, Clone)]
pub struct TickFormat {
    pub delimiter: u8,
    pub has_header: bool,
    pub time_col: usize,
    pub value_col: usize,
}

impl Default for TickFormat {
    fn default() -> Self {
        TickFormat { delimiter: b',', has_header: true, time_col: 0, value_col: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadReport {
    pub rows: usize,
    pub collapsed: usize,
}

/// Reads a tick file. Rows are sorted by time; for repeated timestamps the last row wins.
pub fn load_ticks(path: impl AsRef<Path>, format: &TickFormat) -> Result<(TickSeries, LoadReport)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(format.delimiter)
        .has_headers(format.has_header)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut rows: Vec<(f64, f64)> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::MalformedRow { row, reason: e.to_string() })?;
        let field = |col: usize, what: &str| -> Result<f64> {
            let raw =
                rec.get(col).ok_or_else(|| Error::MalformedRow { row, reason: format!("missing {what} column") })?;
            let v: f64 = raw
                .parse()
                .map_err(|_| Error::MalformedRow { row, reason: format!("{what} {raw:?} is not a number") })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::MalformedRow { row, reason: format!("{what} is not finite") })
            }
        };
        rows.push((field(format.time_col, "time")?, field(format.value_col, "value")?));
    }
    let total = rows.len();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut times: Vec<f64> = Vec::with_capacity(total);
    let mut values: Vec<f64> = Vec::with_capacity(total);
    let mut collapsed = 0;
    for (t, v) in rows {
        if times.last() == Some(&t) {
            *values.last_mut().unwrap() = v;
            collapsed += 1;
        } else {
            times.push(t);
            values.push(v);
        }
    }
    if times.len() < 2 {
        return Err(Error::TooShort(times.len()));
    }
    let source = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok((TickSeries::new(times, values, source)?, LoadReport { rows: total, collapsed }))
}

/// Writes the canonical `time,value` format.
pub fn save_ticks(series: &TickSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "time,value")?;
        for (t, v) in series.times.iter().zip(&series.values) {
            writeln!(w, "{t:?},{v:?}")?;
        }
        w.flush()
    };
    write(&mut w).map_err(|e| Error::io(path, e))
}

pub fn log_transform(s: &TickSeries) -> Result<TickSeries> {
    if let Some((index, &value)) = s.values.iter().enumerate().find(|(_, v)| **v <= 0.0) {
        return Err(Error::NonPositive { index, value });
    }
    let values = s.values.iter().map(|v| v.ln()).collect();
    TickSeries::new(s.times.clone(), values, s.source.clone())
}

/// Continuous piecewise-linear evaluation of a [`TickSeries`].
#[derive(Debug, Clone, Copy)]
pub struct InterpolatedPath<'a> {
    series: &'a TickSeries,
}

impl<'a> InterpolatedPath<'a> {
    pub fn series(&self) -> &'a TickSeries {
        self.series
    }

    pub fn interpolate_at(&self, t: f64) -> Result<f64> {
        let (times, values) = (&self.series.times, &self.series.values);
        if !(t >= times[0] && t <= times[times.len() - 1]) {
            return Err(Error::OutOfRange { t, start: times[0], end: times[times.len() - 1] });
        }
        let i = times.partition_point(|&s| s < t);
        if times[i] == t {
            return Ok(values[i]);
        }
        let (t0, t1, x0, x1) = (times[i - 1], times[i], values[i - 1], values[i]);
        Ok(x0 + (x1 - x0) * ((t - t0) / (t1 - t0)))
    }

    /// Index of the segment `[times[k], times[k+1])` containing `t`.
    pub(crate) fn segment_of(&self, t: f64) -> usize {
        let times = &self.series.times;
        times.partition_point(|&s| s <= t).saturating_sub(1).min(times.len() - 2)
    }
}
