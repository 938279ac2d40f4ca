//! Index-level series and their conversion to birth/death sojourns.

use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{EventType, SojournData, SojournRecord};

/// Dated observations of a level series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinancialSeries {
    pub observations: Vec<(NaiveDate, f64)>,
    /// Free-form label of one sampling step, e.g. `month`.
    pub sampling_interval: String,
}

/// How sojourn durations are measured between retained changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SojournConvention {
    /// Number of sampling steps since the previous retained change.
    #[default]
    UnitInterval,
    /// Calendar days since the previous retained change.
    CalendarDays,
}

impl SojournConvention {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "unit_interval" | "unit" => Some(SojournConvention::UnitInterval),
            "calendar_days" | "days" => Some(SojournConvention::CalendarDays),
            _ => None,
        }
    }
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").or_else(|_| NaiveDate::parse_from_str(&format!("{s}-01"), "%Y-%m-%d")).ok()
}

/// Reads a `date,value` CSV from any reader. Dates are ISO-8601 days
/// (`YYYY-MM-DD`) or months (`YYYY-MM`).
pub fn read_series<R: Read>(input: R, sampling_interval: &str) -> Result<FinancialSeries> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = reader.headers()?.clone();
    let columns: Vec<String> = header.iter().map(|h| h.to_ascii_lowercase()).collect();
    if columns.len() < 2 || columns[0] != "date" || columns[1] != "value" {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `date,value`, got `{}`", columns.join(",")),
        });
    }
    let mut observations = Vec::new();
    for (idx, row) in reader.records().enumerate() {
        let line = idx + 2;
        let row = row.map_err(|e| Error::Parse { line, message: e.to_string() })?;
        let date_field = row.get(0).unwrap_or("");
        let value_field = row.get(1).unwrap_or("");
        let date = parse_date(date_field)
            .ok_or_else(|| Error::Parse { line, message: format!("invalid date {date_field:?}") })?;
        let value: f64 = value_field
            .parse()
            .map_err(|_| Error::Parse { line, message: format!("invalid value {value_field:?}") })?;
        if !value.is_finite() {
            return Err(Error::Parse { line, message: format!("non-finite value {value_field:?}") });
        }
        observations.push((line, date, value));
    }
    if observations.len() < 2 {
        return Err(Error::InsufficientData { got: observations.len(), need: 2 });
    }
    observations.sort_by_key(|&(_, d, _)| d);
    for pair in observations.windows(2) {
        if pair[0].1 == pair[1].1 {
            let line = pair[0].0.max(pair[1].0);
            return Err(Error::DuplicateTimestamp { line, timestamp: pair[1].1.to_string() });
        }
    }
    Ok(FinancialSeries {
        observations: observations.into_iter().map(|(_, d, v)| (d, v)).collect(),
        sampling_interval: sampling_interval.to_string(),
    })
}

/// Reads a `date,value` CSV file sampled monthly.
pub fn ingest_series(path: &Path) -> Result<FinancialSeries> {
    read_series(std::fs::File::open(path)?, "month")
}

/// Signed-change counts of a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeCounts {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

pub fn change_counts(series: &FinancialSeries) -> ChangeCounts {
    let mut c = ChangeCounts { positive: 0, negative: 0, zero: 0 };
    for w in series.observations.windows(2) {
        let d = w[1].1 - w[0].1;
        if d > 0.0 {
            c.positive += 1;
        } else if d < 0.0 {
            c.negative += 1;
        } else {
            c.zero += 1;
        }
    }
    c
}

/// Rises become births and falls deaths; unchanged steps are dropped and
/// their time is carried into the next retained event. Every record is
/// tagged with state 1, since the level series carries no population count.
pub fn series_to_sojourns(series: &FinancialSeries, convention: SojournConvention) -> Result<SojournData> {
    if series.observations.len() < 2 {
        return Err(Error::InsufficientData { got: series.observations.len(), need: 2 });
    }
    let mut records = Vec::new();
    let mut steps = 0usize;
    let mut last_date = series.observations[0].0;
    for w in series.observations.windows(2) {
        steps += 1;
        let change = w[1].1 - w[0].1;
        if change == 0.0 {
            continue;
        }
        let duration = match convention {
            SojournConvention::UnitInterval => steps as f64,
            SojournConvention::CalendarDays => (w[1].0 - last_date).num_days() as f64,
        };
        let event_type = if change > 0.0 { EventType::Birth } else { EventType::Death };
        records.push(SojournRecord { state_before: 1, duration, event_type });
        steps = 0;
        last_date = w[1].0;
    }
    if records.is_empty() {
        return Err(Error::EmptySample);
    }
    SojournData::from_records(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(csv: &str) -> Result<FinancialSeries> {
        read_series(csv.as_bytes(), "month")
    }

    #[test]
    fn three_rows() {
        let s = series("date,value\n2000-01-01,1\n2000-02-01,2\n2000-03-01,1.5\n").unwrap();
        assert_eq!(s.observations.len(), 3);
    }

    #[test]
    fn blank_value_reports_line() {
        match series("date,value\n2000-01,1\n2000-02,\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicates_and_sorting() {
        assert!(matches!(series("date,value\n2000-01,1\n2000-01-01,2\n"), Err(Error::DuplicateTimestamp { .. })));
        let s = series("date,value\n2000-03,3\n2000-01,1\n").unwrap();
        assert!(s.observations[0].0 < s.observations[1].0);
    }

    #[test]
    fn sign_classification_and_gaps() {
        let s = series("date,value\n2000-01,100\n2000-02,101\n2000-03,99\n").unwrap();
        let d = series_to_sojourns(&s, SojournConvention::UnitInterval).unwrap();
        assert_eq!((d.n_births, d.n_deaths), (1, 1));
        assert!(d.records.iter().all(|r| r.duration == 1.0));

        let s = series("date,value\n2000-01,100\n2000-02,100\n2000-03,101\n").unwrap();
        let d = series_to_sojourns(&s, SojournConvention::UnitInterval).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.records[0].duration, 2.0);
        let days = series_to_sojourns(&s, SojournConvention::CalendarDays).unwrap();
        assert_eq!(days.records[0].duration, 60.0);

        let flat = series("date,value\n2000-01,1\n2000-02,1\n").unwrap();
        assert!(matches!(series_to_sojourns(&flat, SojournConvention::UnitInterval), Err(Error::EmptySample)));
    }
}
