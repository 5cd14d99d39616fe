//! Ingestion and validation of hourly market prices and the freezer spec.
//!
//! Price files are CSV, UTF-8, one row per hour:
//! `timestamp_utc,spot_price,balancing_price,mfrr_reservation_price`
//! with ISO-8601 timestamps and dot decimal separators. Days must be complete
//! (24 distinct hours); daylight-saving artifacts (23/25-hour days, duplicated
//! hours) are rejected rather than repaired.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HOURS_PER_DAY: usize = 24;

/// Hourly spot, balancing and mFRR reservation prices for one calendar day.
/// All prices are in currency/MWh; hour 0 covers 00:00-01:00 UTC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceDay {
    pub date: NaiveDate,
    /// Day-ahead (spot) price per hour.
    pub lambda_s: Vec<f64>,
    /// Balancing price per hour.
    pub lambda_b: Vec<f64>,
    /// mFRR reservation price per hour.
    pub lambda_r: Vec<f64>,
}

impl PriceDay {
    pub fn new(date: NaiveDate, lambda_s: Vec<f64>, lambda_b: Vec<f64>, lambda_r: Vec<f64>) -> Result<Self> {
        let day = PriceDay {
            date,
            lambda_s,
            lambda_b,
            lambda_r,
        };
        day.validate()?;
        Ok(day)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, series) in [
            ("spot_price", &self.lambda_s),
            ("balancing_price", &self.lambda_b),
            ("mfrr_reservation_price", &self.lambda_r),
        ] {
            if series.len() != HOURS_PER_DAY {
                return Err(Error::Schema {
                    day: self.date,
                    detail: format!("{name} has {} hours, expected 24", series.len()),
                });
            }
            if series.iter().any(|v| !v.is_finite()) {
                return Err(Error::Schema {
                    day: self.date,
                    detail: format!("{name} contains non-finite values"),
                });
            }
        }
        if self.lambda_r.iter().any(|&v| v < 0.0) {
            return Err(Error::Schema {
                day: self.date,
                detail: "mfrr_reservation_price must be non-negative".into(),
            });
        }
        Ok(())
    }

    /// Balancing-minus-spot differential per hour.
    pub fn differentials(&self) -> Vec<f64> {
        self.lambda_b
            .iter()
            .zip(&self.lambda_s)
            .map(|(b, s)| b - s)
            .collect()
    }
}

/// Hours where the balancing price strictly exceeds the spot price.
/// Equality is not up-regulation.
pub fn up_regulation_hours(day: &PriceDay) -> usize {
    day.lambda_b
        .iter()
        .zip(&day.lambda_s)
        .filter(|(b, s)| b > s)
        .count()
}

/// Static description of the freezer as a market asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreezerSpec {
    /// Baseline consumption per hour, kW.
    pub p_base: Vec<f64>,
    /// Minimum consumption, kW.
    pub p_min: f64,
    /// Nominal (maximum) consumption, kW.
    pub p_nom: f64,
    /// Penalty price for undelivered reserve, currency/MWh.
    pub lambda_penalty: f64,
    /// Hours (0-based) where defrost is scheduled; no reserve can be sold there.
    #[serde(default)]
    pub defrost_hours: Vec<usize>,
}

impl FreezerSpec {
    pub fn validate(&self) -> Result<()> {
        if self.p_base.is_empty() {
            return Err(Error::invalid("p_base must not be empty"));
        }
        if self.p_base.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("p_base contains non-finite values"));
        }
        let lo = self.p_base.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.p_base.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(0.0 <= self.p_min && self.p_min <= lo && hi <= self.p_nom) {
            return Err(Error::invalid(format!(
                "power ordering violated: need 0 <= p_min ({}) <= min p_base ({lo}) <= max p_base ({hi}) <= p_nom ({})",
                self.p_min, self.p_nom
            )));
        }
        if !self.lambda_penalty.is_finite() || self.lambda_penalty < 0.0 {
            return Err(Error::invalid("lambda_penalty must be non-negative"));
        }
        let n_hours = self.p_base.len();
        if self.defrost_hours.iter().any(|&h| h >= n_hours) {
            return Err(Error::invalid(format!(
                "defrost_hours contains an hour outside 0..{n_hours}"
            )));
        }
        Ok(())
    }

    pub fn n_hours(&self) -> usize {
        self.p_base.len()
    }

    pub fn is_defrost_hour(&self, h: usize) -> bool {
        self.defrost_hours.contains(&h)
    }
}

const PRICE_HEADER: &str = "timestamp_utc,spot_price,balancing_price,mfrr_reservation_price";

/// Loads a price CSV, groups rows into complete calendar days (UTC) and keeps
/// those inside `date_range` (inclusive on both ends when given).
pub fn load_price_csv(
    path: impl AsRef<Path>,
    date_range: Option<(NaiveDate, NaiveDate)>,
) -> Result<Vec<PriceDay>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    read_price_csv(file, date_range)
}

/// Same as [`load_price_csv`] but from any reader.
pub fn read_price_csv(
    reader: impl Read,
    date_range: Option<(NaiveDate, NaiveDate)>,
) -> Result<Vec<PriceDay>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    {
        let headers = rdr
            .headers()
            .map_err(|e| Error::Parse { row: 1, detail: e.to_string() })?;
        let expected: Vec<&str> = PRICE_HEADER.split(',').collect();
        let got: Vec<&str> = headers.iter().map(|h| h.trim()).collect();
        if got != expected {
            return Err(Error::Parse {
                row: 1,
                detail: format!("header must be `{PRICE_HEADER}`, got `{}`", got.join(",")),
            });
        }
    }

    // date -> hour -> (spot, balancing, reservation)
    let mut by_day: BTreeMap<NaiveDate, Vec<Option<(f64, f64, f64)>>> = BTreeMap::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 2; // 1-based, after the header
        let record = record.map_err(|e| Error::Parse { row, detail: e.to_string() })?;
        if record.len() != 4 {
            return Err(Error::Parse {
                row,
                detail: format!("expected 4 columns, got {}", record.len()),
            });
        }
        let ts: DateTime<Utc> = record[0]
            .trim()
            .parse()
            .map_err(|e| Error::Parse { row, detail: format!("bad timestamp `{}`: {e}", &record[0]) })?;
        let mut nums = [0.0_f64; 3];
        for (k, slot) in nums.iter_mut().enumerate() {
            *slot = record[k + 1].trim().parse().map_err(|e| Error::Parse {
                row,
                detail: format!("bad number `{}` in column {}: {e}", &record[k + 1], k + 2),
            })?;
        }
        if ts.minute() != 0 || ts.second() != 0 {
            return Err(Error::Parse {
                row,
                detail: format!("timestamp `{ts}` is not on the hour"),
            });
        }
        let date = ts.date_naive();
        let hour = ts.hour() as usize;
        let slots = by_day.entry(date).or_insert_with(|| vec![None; HOURS_PER_DAY]);
        if slots[hour].is_some() {
            return Err(Error::Schema {
                day: date,
                detail: format!("hour {hour} appears more than once (DST duplication is rejected)"),
            });
        }
        slots[hour] = Some((nums[0], nums[1], nums[2]));
    }

    let mut days = Vec::new();
    for (date, slots) in by_day {
        if let Some((start, end)) = date_range {
            if date < start || date > end {
                continue;
            }
        }
        let missing: Vec<usize> = slots
            .iter()
            .enumerate()
            .filter_map(|(h, s)| s.is_none().then_some(h))
            .collect();
        if !missing.is_empty() {
            return Err(Error::Schema {
                day: date,
                detail: format!(
                    "missing hour(s) {:?}; partial days are rejected",
                    missing
                ),
            });
        }
        let day = PriceDay::new(
            date,
            slots.iter().map(|s| s.unwrap().0).collect(),
            slots.iter().map(|s| s.unwrap().1).collect(),
            slots.iter().map(|s| s.unwrap().2).collect(),
        )?;
        days.push(day);
    }
    Ok(days)
}

/// Writes days in the canonical CSV schema. Floats round-trip bit-exactly.
pub fn write_price_csv(writer: impl Write, days: &[PriceDay]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(PRICE_HEADER.split(','))
        .map_err(|e| Error::Parse { row: 1, detail: e.to_string() })?;
    for day in days {
        for h in 0..HOURS_PER_DAY {
            let ts = format!("{}T{:02}:00:00Z", day.date, h);
            w.write_record([
                ts.as_str(),
                &format_float(day.lambda_s[h]),
                &format_float(day.lambda_b[h]),
                &format_float(day.lambda_r[h]),
            ])
            .map_err(|e| Error::Parse { row: 0, detail: e.to_string() })?;
        }
    }
    w.flush().map_err(|e| Error::io("<writer>", e))?;
    Ok(())
}

/// Shortest representation that parses back to the same f64.
pub fn format_float(v: f64) -> String {
    format!("{v}")
}
