//! Day-ahead price series: CSV loading and a seeded synthetic generator.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Duration, Timelike, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::PriceSeries;

pub const CSV_HEADER: [&str; 2] = ["timestamp", "price_eur_mwh"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read prices: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Malformed { line: u64, msg: String },
    #[error("missing header: expected `timestamp,price_eur_mwh`")]
    Header,
    #[error("gap in price series: no row for {missing}")]
    Gap { missing: DateTime<Utc> },
    #[error("line {line}: duplicate or out-of-order timestamp {ts}")]
    Duplicate { line: u64, ts: DateTime<Utc> },
    #[error("price file has no rows")]
    Empty,
    #[error("invalid synthetic parameters: {0}")]
    Params(&'static str),
}

/// Loads `timestamp,price_eur_mwh` rows and checks hourly contiguity.
pub fn load_price_csv(path: impl AsRef<Path>) -> Result<PriceSeries, IngestError> {
    let file = std::fs::File::open(path)?;
    read_price_csv(file)
}

pub fn read_price_csv<R: Read>(input: R) -> Result<PriceSeries, IngestError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = reader.headers().map_err(|e| malformed(1, e))?;
    if header.len() != 2 || header[0] != *CSV_HEADER[0] || header[1] != *CSV_HEADER[1] {
        return Err(IngestError::Header);
    }
    let mut start: Option<DateTime<Utc>> = None;
    let mut prev: Option<DateTime<Utc>> = None;
    let mut values = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            malformed(line, e)
        })?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != 2 {
            return Err(IngestError::Malformed {
                line,
                msg: format!("expected 2 fields, found {}", row.len()),
            });
        }
        let ts = DateTime::parse_from_rfc3339(&row[0])
            .map_err(|e| IngestError::Malformed {
                line,
                msg: format!("bad timestamp '{}': {e}", &row[0]),
            })?
            .with_timezone(&Utc);
        if ts.minute() != 0 || ts.second() != 0 || ts.nanosecond() != 0 {
            return Err(IngestError::Malformed {
                line,
                msg: format!("timestamp {ts} is not hour-aligned"),
            });
        }
        let price: f64 = row[1].parse().map_err(|_| IngestError::Malformed {
            line,
            msg: format!("bad price '{}'", &row[1]),
        })?;
        if !price.is_finite() {
            return Err(IngestError::Malformed {
                line,
                msg: format!("non-finite price '{}'", &row[1]),
            });
        }
        if let Some(p) = prev {
            let expected = p + Duration::hours(1);
            if ts <= p {
                return Err(IngestError::Duplicate { line, ts });
            }
            if ts != expected {
                return Err(IngestError::Gap { missing: expected });
            }
        }
        start.get_or_insert(ts);
        prev = Some(ts);
        values.push(price);
    }
    let start = start.ok_or(IngestError::Empty)?;
    Ok(PriceSeries { start, pi_da: values })
}

fn malformed(line: u64, e: impl std::fmt::Display) -> IngestError {
    IngestError::Malformed {
        line,
        msg: e.to_string(),
    }
}

/// Writes a series in the loader's schema.
pub fn write_price_csv<W: Write>(series: &PriceSeries, out: W) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| IngestError::Io(e.into());
    w.write_record(CSV_HEADER).map_err(io)?;
    for (h, p) in series.pi_da.iter().enumerate() {
        w.write_record([
            series.timestamp(h).to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            p.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Shape of the synthetic day-ahead series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticPriceParams {
    pub seed: u64,
    pub days: usize,
    /// Off-peak level (€/MWh).
    pub base: f64,
    pub morning_amplitude: f64,
    pub evening_amplitude: f64,
    pub morning_hour: f64,
    pub evening_hour: f64,
    /// Width (std, hours) of each peak.
    pub peak_width: f64,
    /// Depth of the midday solar dip (€/MWh).
    pub midday_dip: f64,
    pub noise_std: f64,
    /// Chance that an hour clears negative.
    pub negative_prob: f64,
    /// Negative hours are drawn from `[-negative_amplitude, 0)`.
    pub negative_amplitude: f64,
}

impl Default for SyntheticPriceParams {
    fn default() -> Self {
        Self {
            seed: 0,
            days: 30,
            base: 70.0,
            morning_amplitude: 60.0,
            evening_amplitude: 110.0,
            morning_hour: 8.0,
            evening_hour: 19.0,
            peak_width: 1.5,
            midday_dip: 40.0,
            noise_std: 12.0,
            negative_prob: 0.02,
            negative_amplitude: 30.0,
        }
    }
}

impl SyntheticPriceParams {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.days == 0 {
            return Err(IngestError::Params("days must be at least 1"));
        }
        let nonneg = [
            self.morning_amplitude,
            self.evening_amplitude,
            self.midday_dip,
            self.noise_std,
            self.negative_amplitude,
        ];
        if nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(IngestError::Params("amplitudes and noise must be non-negative"));
        }
        if !(self.peak_width.is_finite() && self.peak_width > 0.0) {
            return Err(IngestError::Params("peak width must be positive"));
        }
        if !(0.0..=1.0).contains(&self.negative_prob) {
            return Err(IngestError::Params("negative probability outside [0, 1]"));
        }
        if !self.base.is_finite() {
            return Err(IngestError::Params("base must be finite"));
        }
        Ok(())
    }

    /// Noise-free price at hour-of-day `h`.
    pub fn profile(&self, h: usize) -> f64 {
        let h = h as f64;
        let bump = |centre: f64| {
            let d = h - centre;
            (-0.5 * d * d / (self.peak_width * self.peak_width)).exp()
        };
        let dip = {
            let d = h - 13.0;
            (-0.5 * d * d / 4.0).exp()
        };
        self.base + self.morning_amplitude * bump(self.morning_hour) + self.evening_amplitude * bump(self.evening_hour)
            - self.midday_dip * dip
    }
}

/// Seeded synthetic series starting 2024-01-01T00:00Z.
pub fn synth_prices(params: &SyntheticPriceParams) -> Result<PriceSeries, IngestError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let noise = Normal::new(0.0, params.noise_std).map_err(|_| IngestError::Params("bad noise std"))?;
    let hours = params.days * 24;
    let mut pi_da = Vec::with_capacity(hours);
    for t in 0..hours {
        // Draw both variates every hour so the stream layout is fixed.
        let n: f64 = noise.sample(&mut rng);
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        let price = if u < params.negative_prob {
            -params.negative_amplitude * (1.0 - v)
        } else {
            params.profile(t % 24) + n
        };
        pi_da.push(price);
    }
    Ok(PriceSeries {
        start: "2024-01-01T00:00:00Z".parse().expect("literal timestamp"),
        pi_da,
    })
}
