//! Ingestion and cleaning of daily reported epidemic counts.
//!
//! The pipeline takes cumulative confirmed/recovered/deaths totals, fills
//! missing cells by linear interpolation on the full daily grid, turns the
//! totals into daily increments with negative corrections, and rebuilds the
//! infectious count through the recursion
//! `I(t) = I(t-1) + new_cases(t) - recovered(t) - deaths(t)`.

use std::io::{Read, Write};

use chrono::NaiveDate;
use thiserror::Error;

/// Width of the smoothing window in days.
pub const SMOOTHING_WINDOW: usize = 7;

const HEADER: [&str; 4] = ["date", "confirmed", "recovered", "deaths"];

#[derive(Debug, Error, PartialEq)]
pub enum TimeseriesError {
    #[error("series has no records")]
    EmptySeries,
    #[error("column `{column}` has no value on its {which} record")]
    MissingEndpoint {
        column: &'static str,
        which: &'static str,
    },
    #[error("dates must be strictly increasing: {previous} is followed by {next}")]
    UnorderedDates { previous: NaiveDate, next: NaiveDate },
    #[error("invalid count {value} in column `{column}` on {date}")]
    InvalidCount {
        column: &'static str,
        date: NaiveDate,
        value: f64,
    },
    #[error("expected header `date,confirmed,recovered,deaths`, found `{found}`")]
    BadHeader { found: String },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

/// One row of reported cumulative totals. `None` marks a missing cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawRecord {
    pub date: NaiveDate,
    pub confirmed: Option<f64>,
    pub recovered: Option<f64>,
    pub deaths: Option<f64>,
}

impl RawRecord {
    pub fn new(
        date: NaiveDate,
        confirmed: Option<f64>,
        recovered: Option<f64>,
        deaths: Option<f64>,
    ) -> Self {
        Self {
            date,
            confirmed,
            recovered,
            deaths,
        }
    }

    fn column(&self, column: Column) -> Option<f64> {
        match column {
            Column::Confirmed => self.confirmed,
            Column::Recovered => self.recovered,
            Column::Deaths => self.deaths,
        }
    }

    fn set_column(&mut self, column: Column, value: Option<f64>) {
        match column {
            Column::Confirmed => self.confirmed = value,
            Column::Recovered => self.recovered = value,
            Column::Deaths => self.deaths = value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Column {
    Confirmed,
    Recovered,
    Deaths,
}

impl Column {
    const ALL: [Column; 3] = [Column::Confirmed, Column::Recovered, Column::Deaths];

    fn name(self) -> &'static str {
        match self {
            Column::Confirmed => "confirmed",
            Column::Recovered => "recovered",
            Column::Deaths => "deaths",
        }
    }
}

/// Reported cumulative totals ordered by date. Gaps in the calendar are
/// allowed; every present count is finite and non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    records: Vec<RawRecord>,
}

impl RawSeries {
    pub fn new(records: Vec<RawRecord>) -> Result<Self, TimeseriesError> {
        for pair in records.windows(2) {
            if pair[1].date <= pair[0].date {
                return Err(TimeseriesError::UnorderedDates {
                    previous: pair[0].date,
                    next: pair[1].date,
                });
            }
        }
        for record in &records {
            for column in Column::ALL {
                if let Some(value) = record.column(column) {
                    if !value.is_finite() || value < 0.0 {
                        return Err(TimeseriesError::InvalidCount {
                            column: column.name(),
                            date: record.date,
                            value,
                        });
                    }
                }
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[RawRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Number of missing cells once the series is laid on its full daily grid.
    pub fn missing_cells_on_grid(&self) -> usize {
        let (Some(first), Some(last)) = (self.records.first(), self.records.last()) else {
            return 0;
        };
        let grid_days = (last.date - first.date).num_days() as usize + 1;
        let present: usize = self
            .records
            .iter()
            .map(|r| Column::ALL.iter().filter(|c| r.column(**c).is_some()).count())
            .sum();
        grid_days * Column::ALL.len() - present
    }

    /// Parses `date,confirmed,recovered,deaths` CSV. Empty cells are missing
    /// values; counts may be integers or decimals.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self, TimeseriesError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let mut rows = rdr.records();

        let header = match rows.next() {
            None => {
                return Err(TimeseriesError::BadHeader {
                    found: String::new(),
                })
            }
            Some(row) => row.map_err(csv_error)?,
        };
        let found: Vec<&str> = header.iter().collect();
        if found.len() != HEADER.len()
            || found
                .iter()
                .zip(HEADER)
                .any(|(got, want)| !got.trim_start_matches('\u{feff}').eq_ignore_ascii_case(want))
        {
            return Err(TimeseriesError::BadHeader {
                found: found.join(","),
            });
        }

        let mut records = Vec::new();
        for row in rows {
            let row = row.map_err(csv_error)?;
            let line = row.position().map(|p| p.line()).unwrap_or(0);
            if row.len() == 1 && row[0].is_empty() {
                continue;
            }
            if row.len() != HEADER.len() {
                return Err(TimeseriesError::Parse {
                    line,
                    message: format!("expected 4 fields, found {}", row.len()),
                });
            }
            let date = NaiveDate::parse_from_str(&row[0], "%Y-%m-%d").map_err(|e| {
                TimeseriesError::Parse {
                    line,
                    message: format!("bad date `{}`: {e}", &row[0]),
                }
            })?;
            let mut counts = [None; 3];
            for (slot, (cell, column)) in counts.iter_mut().zip(row.iter().skip(1).zip(Column::ALL)) {
                if cell.is_empty() {
                    continue;
                }
                let value: f64 = cell.parse().map_err(|_| TimeseriesError::Parse {
                    line,
                    message: format!("bad {} count `{cell}`", column.name()),
                })?;
                if !value.is_finite() || value < 0.0 {
                    return Err(TimeseriesError::Parse {
                        line,
                        message: format!("{} count must be finite and >= 0, got `{cell}`", column.name()),
                    });
                }
                *slot = Some(value);
            }
            records.push(RawRecord::new(date, counts[0], counts[1], counts[2]));
        }
        if records.is_empty() {
            return Err(TimeseriesError::EmptySeries);
        }
        Self::new(records)
    }
}

fn csv_error(err: csv::Error) -> TimeseriesError {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    TimeseriesError::Parse {
        line,
        message: err.to_string(),
    }
}

/// Lays the series on its full daily grid and fills every missing interior
/// cell with the linear interpolant of its nearest present neighbours.
pub fn interpolate_missing(raw: &RawSeries) -> Result<RawSeries, TimeseriesError> {
    let first = raw.records.first().ok_or(TimeseriesError::EmptySeries)?;
    let last = raw.records.last().expect("non-empty");
    for column in Column::ALL {
        if first.column(column).is_none() {
            return Err(TimeseriesError::MissingEndpoint {
                column: column.name(),
                which: "first",
            });
        }
        if last.column(column).is_none() {
            return Err(TimeseriesError::MissingEndpoint {
                column: column.name(),
                which: "last",
            });
        }
    }

    let start = first.date;
    let n_days = (last.date - start).num_days() as usize + 1;
    let mut grid: Vec<RawRecord> = start
        .iter_days()
        .take(n_days)
        .map(|date| RawRecord::new(date, None, None, None))
        .collect();
    for record in &raw.records {
        let offset = (record.date - start).num_days() as usize;
        grid[offset] = *record;
    }

    for column in Column::ALL {
        let mut left = 0usize;
        for idx in 1..n_days {
            if grid[idx].column(column).is_none() {
                continue;
            }
            if idx - left > 1 {
                let y0 = grid[left].column(column).expect("anchor");
                let y1 = grid[idx].column(column).expect("anchor");
                let span = (idx - left) as f64;
                for k in left + 1..idx {
                    let frac = (k - left) as f64 / span;
                    grid[k].set_column(column, Some(y0 + (y1 - y0) * frac));
                }
            }
            left = idx;
        }
    }

    Ok(RawSeries { records: grid })
}

/// First differences of a cumulative series with negative increments replaced
/// by the most recent non-negative increment to their left (0 if none).
pub fn daily_from_cumulative(cum: &[f64]) -> Result<Vec<f64>, TimeseriesError> {
    difference_and_correct(cum).map(|(daily, _)| daily)
}

fn difference_and_correct(cum: &[f64]) -> Result<(Vec<f64>, usize), TimeseriesError> {
    let (&head, tail) = cum.split_first().ok_or(TimeseriesError::EmptySeries)?;
    let mut daily = Vec::with_capacity(cum.len());
    let mut corrected = 0;
    let mut last_valid = if head >= 0.0 { Some(head) } else { None };
    if head >= 0.0 {
        daily.push(head);
    } else {
        corrected += 1;
        daily.push(0.0);
    }
    let mut prev = head;
    for &value in tail {
        let diff = value - prev;
        prev = value;
        if diff >= 0.0 {
            daily.push(diff);
            last_valid = Some(diff);
        } else {
            corrected += 1;
            daily.push(last_valid.unwrap_or(0.0));
        }
    }
    Ok((daily, corrected))
}

/// Trailing seven-day moving average; the first six days average over the
/// values that exist so far.
pub fn moving_average7(series: &[f64]) -> Vec<f64> {
    (0..series.len())
        .map(|t| {
            let from = t.saturating_sub(SMOOTHING_WINDOW - 1);
            let window = &series[from..=t];
            window.iter().sum::<f64>() / window.len() as f64
        })
        .collect()
}

fn cumulative_sum(daily: &[f64]) -> Vec<f64> {
    daily
        .iter()
        .scan(0.0, |acc, &x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

/// Cleaned per-day series on a contiguous daily grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EpiSeries {
    start_date: NaiveDate,
    infectious: Vec<f64>,
    recovered_cum: Vec<f64>,
    deaths_cum: Vec<f64>,
    new_cases: Vec<f64>,
}

impl EpiSeries {
    pub fn start_date(&self) -> NaiveDate {
        self.start_date
    }

    pub fn len(&self) -> usize {
        self.infectious.len()
    }

    pub fn is_empty(&self) -> bool {
        self.infectious.is_empty()
    }

    pub fn infectious(&self) -> &[f64] {
        &self.infectious
    }

    pub fn recovered_cum(&self) -> &[f64] {
        &self.recovered_cum
    }

    pub fn deaths_cum(&self) -> &[f64] {
        &self.deaths_cum
    }

    pub fn new_cases(&self) -> &[f64] {
        &self.new_cases
    }

    pub fn date_of(&self, day: usize) -> NaiveDate {
        self.start_date + chrono::Days::new(day as u64)
    }

    /// Day index of `date` on this series' grid, if it falls inside it.
    pub fn day_of(&self, date: NaiveDate) -> Option<usize> {
        let offset = (date - self.start_date).num_days();
        (offset >= 0 && (offset as usize) < self.len()).then_some(offset as usize)
    }

    /// Column-wise trailing seven-day moving average.
    pub fn smoothed(&self) -> SmoothedSeries {
        SmoothedSeries {
            start_date: self.start_date,
            infectious: moving_average7(&self.infectious),
            recovered_cum: moving_average7(&self.recovered_cum),
            deaths_cum: moving_average7(&self.deaths_cum),
            new_cases: moving_average7(&self.new_cases),
            window_width: SMOOTHING_WINDOW,
        }
    }

    /// Writes `date,infectious,recovered_cum,deaths_cum,new_cases`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), TimeseriesError> {
        let mut wtr = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| TimeseriesError::Io(e.to_string());
        wtr.write_record(["date", "infectious", "recovered_cum", "deaths_cum", "new_cases"])
            .map_err(io)?;
        for day in 0..self.len() {
            wtr.write_record([
                self.date_of(day).format("%Y-%m-%d").to_string(),
                self.infectious[day].to_string(),
                self.recovered_cum[day].to_string(),
                self.deaths_cum[day].to_string(),
                self.new_cases[day].to_string(),
            ])
            .map_err(io)?;
        }
        wtr.flush().map_err(|e| TimeseriesError::Io(e.to_string()))
    }
}

/// [`EpiSeries`] after the seven-day moving average.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedSeries {
    pub start_date: NaiveDate,
    pub infectious: Vec<f64>,
    pub recovered_cum: Vec<f64>,
    pub deaths_cum: Vec<f64>,
    pub new_cases: Vec<f64>,
    pub window_width: usize,
}

/// Counts of what the cleaning pipeline had to touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PreprocessReport {
    pub input_rows: usize,
    pub output_rows: usize,
    pub interpolated_cells: usize,
    pub corrected_cells: usize,
    /// Days on which the recursion went negative and the infectious count was
    /// clamped at zero.
    pub clamped_infectious: usize,
}

/// Interpolation, differencing with negative correction and the infectious
/// recursion in one pass.
pub fn build_epi_series(raw: &RawSeries) -> Result<EpiSeries, TimeseriesError> {
    preprocess(raw).map(|(series, _)| series)
}

/// Same as [`build_epi_series`] but also reports how many cells were filled
/// or corrected.
pub fn preprocess(raw: &RawSeries) -> Result<(EpiSeries, PreprocessReport), TimeseriesError> {
    let grid = interpolate_missing(raw)?;
    let column = |c: Column| -> Vec<f64> {
        grid.records
            .iter()
            .map(|r| r.column(c).expect("interpolated"))
            .collect()
    };
    let (new_cases, fixed_c) = difference_and_correct(&column(Column::Confirmed))?;
    let (recovered_daily, fixed_r) = difference_and_correct(&column(Column::Recovered))?;
    let (deaths_daily, fixed_d) = difference_and_correct(&column(Column::Deaths))?;

    let n = new_cases.len();
    let mut infectious = Vec::with_capacity(n);
    let mut clamped = 0;
    let mut current = 0.0;
    for t in 0..n {
        let next = current + new_cases[t] - recovered_daily[t] - deaths_daily[t];
        current = if next < 0.0 {
            clamped += 1;
            0.0
        } else {
            next
        };
        infectious.push(current);
    }

    let series = EpiSeries {
        start_date: grid.records[0].date,
        infectious,
        recovered_cum: cumulative_sum(&recovered_daily),
        deaths_cum: cumulative_sum(&deaths_daily),
        new_cases,
    };
    let report = PreprocessReport {
        input_rows: raw.len(),
        output_rows: n,
        interpolated_cells: raw.missing_cells_on_grid(),
        corrected_cells: fixed_c + fixed_r + fixed_d,
        clamped_infectious: clamped,
    };
    Ok((series, report))
}
