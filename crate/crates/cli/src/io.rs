//! Price-series files: `timestamp,price` CSV with epoch seconds.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nou_amm::calibrate::Sample;

use crate::error::{CliError, CliResult};

pub const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    /// Epoch seconds, non-decreasing.
    pub timestamps: Vec<i64>,
    /// Positive prices.
    pub prices: Vec<f64>,
    pub label: String,
}

impl RawSeries {
    pub fn new(timestamps: Vec<i64>, prices: Vec<f64>, label: impl Into<String>) -> CliResult<Self> {
        let label = label.into();
        if timestamps.len() != prices.len() {
            return Err(CliError::validation(format!(
                "{label}: {} timestamps but {} prices",
                timestamps.len(),
                prices.len()
            )));
        }
        if timestamps.is_empty() {
            return Err(CliError::validation(format!("{label}: series is empty")));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] < w[0]) {
            return Err(CliError::validation(format!(
                "{label}: timestamp {} at position {} precedes {}",
                timestamps[i + 1],
                i + 1,
                timestamps[i]
            )));
        }
        if let Some(i) = prices.iter().position(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(CliError::validation(format!(
                "{label}: price at position {i} must be positive and finite, got {}",
                prices[i]
            )));
        }
        Ok(RawSeries { timestamps, prices, label })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn first(&self) -> i64 {
        self.timestamps[0]
    }

    pub fn last(&self) -> i64 {
        self.timestamps[self.len() - 1]
    }

    /// Times in days from the first timestamp.
    pub fn to_sample(&self) -> CliResult<Sample<f64>> {
        let t0 = self.first();
        let times = self.timestamps.iter().map(|t| (t - t0) as f64 / SECONDS_PER_DAY).collect();
        Sample::new(times, self.prices.clone()).map_err(|e| {
            CliError::validation(format!("{}: {e} (resample to remove repeated timestamps)", self.label))
        })
    }
}

/// Parse a `timestamp,price` CSV. `label` names the source in error messages.
pub fn read_raw<R: Read>(reader: R, label: &str) -> CliResult<RawSeries> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CliError::validation(format!("{label}: line 1: {e}")))?
        .clone();
    let names: Vec<&str> = headers.iter().collect();
    if names != ["timestamp", "price"] {
        return Err(CliError::validation(format!(
            "{label}: line 1: expected header `timestamp,price`, found `{}`",
            names.join(",")
        )));
    }
    let mut timestamps = Vec::new();
    let mut prices = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            CliError::validation(format!("{label}: line {line}: {e}"))
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let ts = &record[0];
        let ts: i64 = ts.parse().map_err(|_| {
            CliError::validation(format!("{label}: line {line}: field `timestamp`: expected integer epoch seconds, got `{ts}`"))
        })?;
        let px = &record[1];
        let px: f64 = px
            .parse()
            .map_err(|_| CliError::validation(format!("{label}: line {line}: field `price`: expected a number, got `{px}`")))?;
        if !(px > 0.0 && px.is_finite()) {
            return Err(CliError::validation(format!(
                "{label}: line {line}: field `price`: must be positive and finite, got {px}"
            )));
        }
        if let Some(&prev) = timestamps.last() {
            if ts < prev {
                return Err(CliError::validation(format!(
                    "{label}: line {line}: field `timestamp`: {ts} precedes the previous timestamp {prev}"
                )));
            }
        }
        timestamps.push(ts);
        prices.push(px);
    }
    RawSeries::new(timestamps, prices, label)
}

pub fn read_raw_csv(path: &Path) -> CliResult<RawSeries> {
    let label = path.display().to_string();
    let file = File::open(path).map_err(|e| CliError::validation(format!("{label}: {e}")))?;
    read_raw(file, &label)
}

pub fn write_raw<W: Write>(writer: W, series: &RawSeries) -> CliResult<()> {
    let mut out = csv::Writer::from_writer(writer);
    let io_err = |e: csv::Error| CliError::validation(format!("writing {}: {e}", series.label));
    out.write_record(["timestamp", "price"]).map_err(io_err)?;
    for (t, p) in series.timestamps.iter().zip(&series.prices) {
        out.write_record([t.to_string(), p.to_string()]).map_err(io_err)?;
    }
    out.flush().map_err(|e| CliError::validation(format!("writing {}: {e}", series.label)))
}

/// Forward-filled values on the grid `start, start + step, ...` up to `end`.
///
/// Every grid point takes the last observation at or before it.
pub fn resample_ffill_range(series: &RawSeries, start: i64, end: i64, step: i64) -> CliResult<RawSeries> {
    if step <= 0 {
        return Err(CliError::validation(format!("resampling step must be > 0 seconds, got {step}")));
    }
    if start < series.first() {
        return Err(CliError::validation(format!(
            "{}: grid starts at {start}, before the first observation {}",
            series.label,
            series.first()
        )));
    }
    if end < start {
        return Err(CliError::validation(format!("{}: empty grid [{start}, {end}]", series.label)));
    }
    let n = ((end - start) / step + 1) as usize;
    let mut timestamps = Vec::with_capacity(n);
    let mut prices = Vec::with_capacity(n);
    let mut j = 0;
    for k in 0..n {
        let t = start + k as i64 * step;
        while j + 1 < series.len() && series.timestamps[j + 1] <= t {
            j += 1;
        }
        timestamps.push(t);
        prices.push(series.prices[j]);
    }
    Ok(RawSeries { timestamps, prices, label: series.label.clone() })
}

pub fn resample_ffill(series: &RawSeries, step: i64) -> CliResult<RawSeries> {
    resample_ffill_range(series, series.first(), series.last(), step)
}

/// Pointwise `numerator / denominator` on the timestamps both series share.
pub fn cross_rate(numerator: &RawSeries, denominator: &RawSeries) -> CliResult<RawSeries> {
    let label = format!("{}/{}", numerator.label, denominator.label);
    let (mut i, mut j) = (0, 0);
    let mut timestamps = Vec::new();
    let mut prices = Vec::new();
    while i < numerator.len() && j < denominator.len() {
        let (a, b) = (numerator.timestamps[i], denominator.timestamps[j]);
        if a < b {
            i += 1;
        } else if b < a {
            j += 1;
        } else {
            let d = denominator.prices[j];
            if d == 0.0 {
                return Err(CliError::validation(format!("{}: zero price at {b}", denominator.label)));
            }
            timestamps.push(a);
            prices.push(numerator.prices[i] / d);
            i += 1;
            j += 1;
        }
    }
    if timestamps.is_empty() {
        return Err(CliError::validation(format!("{label}: the two series share no timestamps")));
    }
    Ok(RawSeries { timestamps, prices, label })
}

/// Resample both legs on a common grid over their overlap, then divide.
pub fn aligned_cross_rate(numerator: &RawSeries, denominator: &RawSeries, step: i64) -> CliResult<RawSeries> {
    let start = numerator.first().max(denominator.first());
    let end = numerator.last().min(denominator.last());
    if end < start {
        return Err(CliError::validation(format!(
            "{} and {} do not overlap in time",
            numerator.label, denominator.label
        )));
    }
    let num = resample_ffill_range(numerator, start, end, step)?;
    let den = resample_ffill_range(denominator, start, end, step)?;
    cross_rate(&num, &den)
}

/// Parse a duration such as `15m`, `900s` or `1h` into whole seconds.
pub fn parse_step(text: &str) -> CliResult<i64> {
    let bad = || CliError::validation(format!("invalid duration `{text}` (examples: 15m, 900s, 1h)"));
    let secs = if let Ok(n) = text.parse::<i64>() {
        n
    } else {
        let d = humantime::parse_duration(text).map_err(|_| bad())?;
        if d.subsec_nanos() != 0 {
            return Err(bad());
        }
        i64::try_from(d.as_secs()).map_err(|_| bad())?
    };
    if secs <= 0 {
        return Err(CliError::validation(format!("duration `{text}` must be positive")));
    }
    Ok(secs)
}
