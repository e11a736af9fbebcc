//! Serialized shapes of the files the subcommands write.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::NaiveDate;
use serde::Serialize;

use crate::calibration::{
    Daily, Envelope, FitResult, Observations, ParamBounds, QuantileBands, WindowFit, WindowFits,
};
use crate::model::SirdParams;
use crate::objectives::ObjectiveSpec;
use crate::pso::PsoConfig;

use super::config::{BoundsPreset, RunConfig};

#[derive(Debug, Serialize)]
pub struct BoundsDoc {
    pub preset: String,
    pub beta1: [f64; 2],
    pub beta2: [f64; 2],
    pub gamma: [f64; 2],
    pub mu: [f64; 2],
    pub t_margin: f64,
}

impl BoundsDoc {
    pub fn new(preset: BoundsPreset, b: &ParamBounds) -> Self {
        let pair = |(lo, hi): (f64, f64)| [lo, hi];
        Self {
            preset: preset.to_string(),
            beta1: pair(b.beta1),
            beta2: pair(b.beta2),
            gamma: pair(b.gamma),
            mu: pair(b.mu),
            t_margin: b.t_margin,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SwarmDoc {
    pub particles: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
}

impl From<&PsoConfig> for SwarmDoc {
    fn from(c: &PsoConfig) -> Self {
        Self {
            particles: c.n_particles,
            iterations: c.max_iters,
            inertia: c.inertia,
            cognitive: c.cognitive,
            social: c.social,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct WindowDoc {
    pub index: usize,
    pub start_day: usize,
    pub end_day: usize,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub seed: u64,
    pub status: &'static str,
    pub error: Option<String>,
    /// `t1`, `t2` are days after `start_day`.
    pub params: Option<SirdParams>,
    pub objective_value: Option<f64>,
    pub r2_d: Option<f64>,
}

impl WindowDoc {
    pub fn new(w: &WindowFit, data: &Observations) -> Self {
        let (status, error, fit) = match &w.result {
            Ok(fit) => ("ok", None, Some(fit)),
            Err(e) => ("failed", Some(e.to_string()), None),
        };
        Self {
            index: w.window.index,
            start_day: w.window.start,
            end_day: w.window.end,
            start_date: data.date_of(w.window.start),
            end_date: data.date_of(w.window.end),
            seed: w.seed,
            status,
            error,
            params: fit.map(|f| f.params),
            objective_value: fit.map(|f| f.objective_value),
            r2_d: fit.and_then(|f| f.r2_d),
        }
    }
}

/// Contents of `fits.json`. Nothing here depends on the thread count or the
/// time of the run.
#[derive(Debug, Serialize)]
pub struct FitsDoc {
    pub objective: ObjectiveSpec,
    pub bounds: BoundsDoc,
    pub population: f64,
    pub start_date: NaiveDate,
    pub last_day: usize,
    pub tau: usize,
    pub delta: usize,
    pub seed: u64,
    pub substeps: usize,
    pub smooth: bool,
    pub swarm: SwarmDoc,
    pub window_count: usize,
    pub fitted: usize,
    pub failed: usize,
    pub mean_r2_d: Option<f64>,
    pub windows: Vec<WindowDoc>,
}

impl FitsDoc {
    pub fn new(cfg: &RunConfig, data: &Observations, fits: &WindowFits) -> Self {
        Self {
            objective: cfg.objective,
            bounds: BoundsDoc::new(cfg.preset, &cfg.bounds),
            population: cfg.population,
            start_date: data.start_date,
            last_day: fits.scheme.last_day,
            tau: fits.scheme.tau,
            delta: fits.scheme.delta,
            seed: cfg.seed,
            substeps: cfg.substeps,
            smooth: cfg.smooth,
            swarm: SwarmDoc::from(&cfg.pso),
            window_count: fits.windows.len(),
            fitted: fits.windows.len() - fits.failures(),
            failed: fits.failures(),
            mean_r2_d: fits.mean_r2_d(),
            windows: fits.windows.iter().map(|w| WindowDoc::new(w, data)).collect(),
        }
    }
}

/// One row of the long-format envelope files.
#[derive(Debug, Serialize)]
pub struct EnvelopeRow<'a> {
    pub day: usize,
    pub date: NaiveDate,
    pub quantity: &'a str,
    pub samples: usize,
    pub outer_min: f64,
    pub outer_max: f64,
    pub band1_min: f64,
    pub band1_max: f64,
    pub band2_min: Option<f64>,
    pub band2_max: Option<f64>,
    pub median: f64,
}

pub fn envelope_rows<'a>(data: &Observations, quantity: &'a str, series: &[Daily<Envelope>]) -> Vec<EnvelopeRow<'a>> {
    series
        .iter()
        .map(|d| {
            let e = &d.value;
            EnvelopeRow {
                day: d.day,
                date: data.date_of(d.day),
                quantity,
                samples: e.samples,
                outer_min: e.outer.lower,
                outer_max: e.outer.upper,
                band1_min: e.band1.lower,
                band1_max: e.band1.upper,
                band2_min: e.band2.map(|b| b.lower),
                band2_max: e.band2.map(|b| b.upper),
                median: e.median,
            }
        })
        .collect()
}

/// One row of `stability_bands.csv`.
#[derive(Debug, Serialize)]
pub struct BandRow<'a> {
    pub day: usize,
    pub date: NaiveDate,
    pub offset: usize,
    pub phase: &'static str,
    pub quantity: &'a str,
    pub samples: usize,
    pub median: f64,
    pub q50_lower: f64,
    pub q50_upper: f64,
    pub q90_lower: f64,
    pub q90_upper: f64,
    pub q95_lower: f64,
    pub q95_upper: f64,
}

impl<'a> BandRow<'a> {
    pub fn new(start_day: usize, start_date: NaiveDate, junction: usize, quantity: &'a str, d: &Daily<QuantileBands>) -> Self {
        let q = &d.value;
        Self {
            day: start_day + d.day,
            date: start_date + chrono::Days::new((start_day + d.day) as u64),
            offset: d.day,
            phase: if d.day <= junction { "fit" } else { "forecast" },
            quantity,
            samples: q.samples,
            median: q.median,
            q50_lower: q.band50.lower,
            q50_upper: q.band50.upper,
            q90_lower: q.band90.lower,
            q90_upper: q.band90.upper,
            q95_lower: q.band95.lower,
            q95_upper: q.band95.upper,
        }
    }
}

/// One row of `forecast.csv`.
#[derive(Debug, Serialize)]
pub struct ForecastRow {
    pub day: usize,
    pub date: NaiveDate,
    pub offset: usize,
    pub phase: &'static str,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "I")]
    pub i: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "D")]
    pub d: f64,
    pub reported_i: Option<f64>,
    pub reported_r: Option<f64>,
    pub reported_d: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct FitSummaryDoc {
    pub seed: u64,
    pub params: SirdParams,
    pub objective_value: f64,
    pub r2_d: Option<f64>,
}

impl FitSummaryDoc {
    pub fn new(seed: u64, fit: &FitResult) -> Self {
        Self {
            seed,
            params: fit.params,
            objective_value: fit.objective_value,
            r2_d: fit.r2_d,
        }
    }
}

pub fn create_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

pub fn write_json<T: Serialize>(path: PathBuf, value: &T) -> Result<PathBuf> {
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(path)
}

pub fn write_csv<T: Serialize>(path: PathBuf, rows: impl IntoIterator<Item = T>) -> Result<PathBuf> {
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(path)
}
