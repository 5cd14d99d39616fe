//! In-sample price scenario generation.
//!
//! Two strategies: resampling a year of history stratified by the number of
//! up-regulation hours (so that days where up-regulation happened are
//! up-sampled), and a plain lookback over the most recent days. Reservation
//! prices are not treated as uncertain, so a scenario set carries a single
//! shared reservation series.

use std::io::{Read, Write};

use chrono::NaiveDate;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prices::{format_float, up_regulation_hours, PriceDay};

/// One equiprobable joint draw of spot and balancing prices for a day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceScenario {
    pub lambda_s: Vec<f64>,
    pub lambda_b: Vec<f64>,
    /// Date of the history day this scenario was taken from, when known.
    pub source_date: Option<NaiveDate>,
}

/// A set of in-sample scenarios plus the deterministic reservation prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub scenarios: Vec<PriceScenario>,
    pub probabilities: Vec<f64>,
    /// Reservation price series shared by every scenario.
    pub lambda_r: Vec<f64>,
}

impl ScenarioSet {
    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn n_hours(&self) -> usize {
        self.lambda_r.len()
    }

    /// A single-scenario set with probability 1 from realized prices.
    pub fn from_realized(day: &PriceDay) -> Self {
        ScenarioSet {
            scenarios: vec![PriceScenario {
                lambda_s: day.lambda_s.clone(),
                lambda_b: day.lambda_b.clone(),
                source_date: Some(day.date),
            }],
            probabilities: vec![1.0],
            lambda_r: day.lambda_r.clone(),
        }
    }

    /// Replaces the reservation series, e.g. with the target day's known one.
    pub fn with_lambda_r(mut self, lambda_r: Vec<f64>) -> Result<Self> {
        if lambda_r.len() != self.n_hours() {
            return Err(Error::invalid(format!(
                "lambda_r has {} hours, scenario set has {}",
                lambda_r.len(),
                self.n_hours()
            )));
        }
        self.lambda_r = lambda_r;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(Error::invalid("scenario set is empty"));
        }
        if self.probabilities.len() != self.scenarios.len() {
            return Err(Error::invalid("probabilities and scenarios differ in length"));
        }
        let sum: f64 = self.probabilities.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("probabilities sum to {sum}, expected 1")));
        }
        if self.probabilities.iter().any(|&p| p <= 0.0) {
            return Err(Error::invalid("probabilities must be strictly positive"));
        }
        let n = self.n_hours();
        for (i, sc) in self.scenarios.iter().enumerate() {
            if sc.lambda_s.len() != n || sc.lambda_b.len() != n {
                return Err(Error::invalid(format!(
                    "scenario {i} has {}/{} hours, expected {n}",
                    sc.lambda_s.len(),
                    sc.lambda_b.len()
                )));
            }
            if sc.lambda_s.iter().chain(&sc.lambda_b).any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("scenario {i} contains non-finite prices")));
            }
        }
        if self.lambda_r.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::invalid("lambda_r must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Historical strategy: draw a target count of up-regulation hours `v`
/// uniformly from {0..24}, then a uniform day among the history days with
/// exactly `v` up-regulation hours, and take that day's spot prices together
/// with its balancing-spot differentials. Empty `v` buckets are resampled.
/// The shared reservation series is the per-hour mean over the history.
pub fn generate_historical(history: &[PriceDay], n_scenarios: usize, rng_seed: u64) -> Result<ScenarioSet> {
    if history.is_empty() {
        return Err(Error::invalid("history must not be empty"));
    }
    if n_scenarios == 0 {
        return Err(Error::invalid("n_scenarios must be at least 1"));
    }
    let n_hours = history[0].lambda_s.len();

    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); n_hours + 1];
    for (i, day) in history.iter().enumerate() {
        buckets[up_regulation_hours(day)].push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut scenarios = Vec::with_capacity(n_scenarios);
    for _ in 0..n_scenarios {
        let day = loop {
            let v = rng.gen_range(0..=n_hours);
            if !buckets[v].is_empty() {
                let k = rng.gen_range(0..buckets[v].len());
                break &history[buckets[v][k]];
            }
        };
        let lambda_s = day.lambda_s.clone();
        let lambda_b: Vec<f64> = lambda_s
            .iter()
            .zip(day.differentials())
            .map(|(s, d)| s + d)
            .collect();
        scenarios.push(PriceScenario {
            lambda_s,
            lambda_b,
            source_date: Some(day.date),
        });
    }

    let lambda_r = (0..n_hours)
        .map(|h| history.iter().map(|d| d.lambda_r[h]).sum::<f64>() / history.len() as f64)
        .collect();

    let set = ScenarioSet {
        scenarios,
        probabilities: vec![1.0 / n_scenarios as f64; n_scenarios],
        lambda_r,
    };
    set.validate()?;
    Ok(set)
}

/// Lookback strategy: the `k` most recent available days strictly before
/// `target_date` become `k` equiprobable scenarios. Missing calendar days are
/// skipped, not interpolated. The reservation series is taken from the most
/// recent of those days (callers with better information can replace it via
/// [`ScenarioSet::with_lambda_r`]).
pub fn generate_lookback(history: &[PriceDay], target_date: NaiveDate, k: usize) -> Result<ScenarioSet> {
    if k == 0 {
        return Err(Error::invalid("lookback window k must be at least 1"));
    }
    let mut prior: Vec<&PriceDay> = history.iter().filter(|d| d.date < target_date).collect();
    prior.sort_by_key(|d| d.date);
    if prior.len() < k {
        return Err(Error::invalid(format!(
            "lookback needs {k} days before {target_date}, found only {}",
            prior.len()
        )));
    }
    let recent = &prior[prior.len() - k..];
    let scenarios = recent
        .iter()
        .map(|d| PriceScenario {
            lambda_s: d.lambda_s.clone(),
            lambda_b: d.lambda_b.clone(),
            source_date: Some(d.date),
        })
        .collect();
    let set = ScenarioSet {
        scenarios,
        probabilities: vec![1.0 / k as f64; k],
        lambda_r: recent.last().unwrap().lambda_r.clone(),
    };
    set.validate()?;
    Ok(set)
}

const SCENARIO_HEADER: &str =
    "timestamp_utc,spot_price,balancing_price,mfrr_reservation_price,scenario_id,probability";

/// Exports a scenario set in the price CSV schema plus scenario id and
/// probability columns, for audit and replay. Scenarios without a source
/// date get synthetic dates counting from 1970-01-01.
pub fn write_scenario_csv(writer: impl Write, set: &ScenarioSet) -> Result<()> {
    set.validate()?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SCENARIO_HEADER.split(','))
        .map_err(|e| Error::Parse { row: 1, detail: e.to_string() })?;
    for (id, sc) in set.scenarios.iter().enumerate() {
        let date = sc
            .source_date
            .unwrap_or_else(|| NaiveDate::from_ymd_opt(1970, 1, 1).unwrap() + chrono::Days::new(id as u64));
        for h in 0..set.n_hours() {
            let ts = format!("{date}T{h:02}:00:00Z");
            w.write_record([
                ts.as_str(),
                &format_float(sc.lambda_s[h]),
                &format_float(sc.lambda_b[h]),
                &format_float(set.lambda_r[h]),
                &id.to_string(),
                &format_float(set.probabilities[id]),
            ])
            .map_err(|e| Error::Parse { row: 0, detail: e.to_string() })?;
        }
    }
    w.flush().map_err(|e| Error::io("<writer>", e))?;
    Ok(())
}

/// Reads back a scenario CSV produced by [`write_scenario_csv`].
pub fn read_scenario_csv(reader: impl Read) -> Result<ScenarioSet> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let mut scenarios: Vec<PriceScenario> = Vec::new();
    let mut probabilities: Vec<f64> = Vec::new();
    let mut lambda_r: Vec<f64> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::Parse { row, detail: e.to_string() })?;
        let parse = |col: usize| -> Result<f64> {
            record[col].trim().parse().map_err(|e| Error::Parse {
                row,
                detail: format!("bad number `{}`: {e}", &record[col]),
            })
        };
        let id: usize = record[4].trim().parse().map_err(|e| Error::Parse {
            row,
            detail: format!("bad scenario_id `{}`: {e}", &record[4]),
        })?;
        if id == scenarios.len() {
            scenarios.push(PriceScenario {
                lambda_s: Vec::new(),
                lambda_b: Vec::new(),
                source_date: record[0].trim().get(..10).and_then(|d| d.parse().ok()),
            });
            probabilities.push(parse(5)?);
        }
        if id != scenarios.len() - 1 {
            return Err(Error::Parse {
                row,
                detail: format!("scenario ids must be contiguous, got {id}"),
            });
        }
        scenarios[id].lambda_s.push(parse(1)?);
        scenarios[id].lambda_b.push(parse(2)?);
        if id == 0 {
            lambda_r.push(parse(3)?);
        }
    }
    let set = ScenarioSet {
        scenarios,
        probabilities,
        lambda_r,
    };
    set.validate()?;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    /// A day with exactly `v` up-regulation hours.
    fn day_with_upreg(date: NaiveDate, v: usize, level: f64) -> PriceDay {
        let lambda_s = vec![level; 24];
        let lambda_b: Vec<f64> = (0..24).map(|h| if h < v { level + 50.0 } else { level }).collect();
        PriceDay::new(date, lambda_s, lambda_b, vec![7.0; 24]).unwrap()
    }

    fn history(n: usize) -> Vec<PriceDay> {
        (0..n)
            .map(|i| {
                day_with_upreg(
                    d("2021-01-01") + chrono::Days::new(i as u64),
                    i % 25,
                    200.0 + i as f64,
                )
            })
            .collect()
    }

    #[test]
    fn single_day_history_yields_identical_scenarios() {
        let hist = vec![day_with_upreg(d("2021-01-01"), 3, 250.0)];
        let set = generate_historical(&hist, 3, 42).unwrap();
        assert_eq!(set.len(), 3);
        for sc in &set.scenarios {
            assert_eq!(sc.lambda_s, hist[0].lambda_s);
            assert_eq!(sc.lambda_b, hist[0].lambda_b);
        }
        assert!(set.probabilities.iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let hist = history(60);
        let a = generate_historical(&hist, 50, 7).unwrap();
        let b = generate_historical(&hist, 50, 7).unwrap();
        assert_eq!(a, b);
        let c = generate_historical(&hist, 50, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn scenarios_only_permute_history() {
        let hist = history(40);
        let set = generate_historical(&hist, 30, 11).unwrap();
        for sc in &set.scenarios {
            let found = hist.iter().any(|day| {
                day.lambda_s == sc.lambda_s
                    && day
                        .differentials()
                        .iter()
                        .zip(sc.lambda_b.iter().zip(&sc.lambda_s))
                        .all(|(d0, (b, s))| (b - s - d0).abs() < 1e-12)
            });
            assert!(found, "scenario not traceable to a history day");
        }
    }

    #[test]
    fn upreg_counts_approximately_uniform_over_attainable_values() {
        // History where only v in {0, 6, 12} exist, many days each.
        let mut hist = Vec::new();
        for i in 0..90 {
            let v = [0, 6, 12][i % 3];
            hist.push(day_with_upreg(d("2021-01-01") + chrono::Days::new(i as u64), v, 200.0));
        }
        let set = generate_historical(&hist, 600, 123).unwrap();
        let mut counts = [0usize; 3];
        for sc in &set.scenarios {
            let day = PriceDay::new(d("2021-01-01"), sc.lambda_s.clone(), sc.lambda_b.clone(), vec![0.0; 24]).unwrap();
            let v = up_regulation_hours(&day);
            let slot = [0, 6, 12].iter().position(|&x| x == v).expect("unexpected v");
            counts[slot] += 1;
        }
        // Exact uniform would be 200 each; allow generous sampling noise.
        for &c in &counts {
            assert!((140..=260).contains(&c), "counts {counts:?} not near uniform");
        }
    }

    #[test]
    fn lookback_takes_most_recent_available_days() {
        let mut hist = history(10);
        hist.remove(7); // gap on 2021-01-08
        let set = generate_lookback(&hist, d("2021-01-11"), 5).unwrap();
        let dates: Vec<NaiveDate> = set.scenarios.iter().map(|s| s.source_date.unwrap()).collect();
        assert_eq!(
            dates,
            vec![d("2021-01-05"), d("2021-01-06"), d("2021-01-07"), d("2021-01-09"), d("2021-01-10")]
        );
        assert!(set.probabilities.iter().all(|&p| (p - 0.2).abs() < 1e-15));
    }

    #[test]
    fn lookback_insufficient_history_names_shortfall() {
        let hist = history(3);
        let err = generate_lookback(&hist, d("2021-01-04"), 5).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('5') && msg.contains('3'), "msg: {msg}");
    }

    #[test]
    fn lookback_k1_is_deterministic_single_scenario() {
        let hist = history(3);
        let set = generate_lookback(&hist, d("2021-01-04"), 1).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.probabilities, vec![1.0]);
        assert_eq!(set.scenarios[0].source_date, Some(d("2021-01-03")));
    }

    #[test]
    fn empty_history_rejected() {
        assert!(generate_historical(&[], 5, 0).is_err());
    }

    #[test]
    fn scenario_csv_roundtrip() {
        let hist = history(20);
        let set = generate_historical(&hist, 7, 99).unwrap();
        let mut buf = Vec::new();
        write_scenario_csv(&mut buf, &set).unwrap();
        let back = read_scenario_csv(buf.as_slice()).unwrap();
        assert_eq!(set, back);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let hist = history(17);
        for n in [1, 5, 50] {
            let set = generate_historical(&hist, n, 3).unwrap();
            let sum: f64 = set.probabilities.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(set.probabilities.iter().all(|&p| p > 0.0));
        }
    }
}
