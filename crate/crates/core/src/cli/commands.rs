//! The subcommands as library functions.

use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::NaiveDate;
use serde::Serialize;

use crate::calibration::{
    compartment_envelopes, derive_seed, fit_all_windows, fit_window, forecast_extension, parameter_envelopes,
    stability_study, FitSetup, Observations, QuantileBands, Window, WindowFits, WindowScheme,
};
use crate::exec;
use crate::objectives::{Family, Metric, ObjectiveSpec};
use crate::timeseries::{preprocess, PreprocessReport, RawSeries};

use super::config::{BoundsPreset, RunConfig};
use super::output::{
    create_out_dir, envelope_rows, write_csv, write_json, BandRow, BoundsDoc, FitSummaryDoc, FitsDoc, ForecastRow,
    SwarmDoc,
};

/// A job that did not produce a result. The command still writes whatever
/// it could.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobFailure {
    pub job: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommandReport {
    pub written: Vec<PathBuf>,
    pub failures: Vec<JobFailure>,
    /// Human-readable lines for the terminal.
    pub notes: Vec<String>,
}

fn read_raw(path: &Path) -> Result<RawSeries> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    RawSeries::from_csv_reader(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

/// Reads, cleans and (with `smooth`) averages the input series.
pub fn load_observations(cfg: &RunConfig) -> Result<(Observations, PreprocessReport)> {
    let (series, report) = preprocess(&read_raw(&cfg.input)?)?;
    let obs = if cfg.smooth {
        Observations::from(&series.smoothed())
    } else {
        Observations::from(&series)
    };
    Ok((obs, report))
}

fn setup_for(cfg: &RunConfig, objective: ObjectiveSpec, bounds: crate::calibration::ParamBounds) -> FitSetup {
    FitSetup {
        substeps: cfg.substeps,
        ..FitSetup::new(objective, bounds, cfg.pso, cfg.population)
    }
}

fn window_failures(fits: &WindowFits, prefix: &str) -> Vec<JobFailure> {
    fits.windows
        .iter()
        .filter_map(|w| {
            w.result.as_ref().err().map(|e| JobFailure {
                job: format!("{prefix}window {}", w.window.index),
                error: e.to_string(),
            })
        })
        .collect()
}

/// Cleans `input` and writes the daily series to `output`, or to stdout when
/// no path is given.
pub fn cmd_preprocess(input: &Path, output: Option<&Path>) -> Result<PreprocessReport> {
    let (series, report) = preprocess(&read_raw(input)?)?;
    match output {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            series.write_csv(io::BufWriter::new(file))?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            series.write_csv(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(report)
}

pub fn preprocess_summary(r: &PreprocessReport) -> String {
    format!(
        "rows in: {}, rows out: {}, interpolated cells: {}, corrected cells: {}, clamped infectious days: {}",
        r.input_rows, r.output_rows, r.interpolated_cells, r.corrected_cells, r.clamped_infectious
    )
}

/// Result of [`cmd_fit`]: the fits themselves plus what was written.
pub struct FitOutput {
    pub data: Observations,
    pub fits: WindowFits,
    pub report: CommandReport,
}

/// Fits every window and writes `fits.json` and the two envelope files.
pub fn cmd_fit(cfg: &RunConfig) -> Result<FitOutput> {
    exec::with_threads(cfg.threads.as_option(), || {
        let (data, _) = load_observations(cfg)?;
        let scheme = WindowScheme::for_length(data.len(), cfg.tau, cfg.delta)?;
        let fits = fit_all_windows(&data, &scheme, &setup_for(cfg, cfg.objective, cfg.bounds), cfg.seed)?;

        create_out_dir(&cfg.out_dir)?;
        let mut report = CommandReport::default();
        report
            .written
            .push(write_json(cfg.out_dir.join("fits.json"), &FitsDoc::new(cfg, &data, &fits))?);

        let ok = fits.successes();
        let params = parameter_envelopes(&ok);
        let rows = [("beta", &params.beta), ("r0", &params.r0), ("gamma", &params.gamma), ("mu", &params.mu)]
            .into_iter()
            .flat_map(|(name, series)| envelope_rows(&data, name, series));
        report.written.push(write_csv(cfg.out_dir.join("envelopes_params.csv"), rows)?);

        let comp = compartment_envelopes(&ok);
        let rows = [("I", &comp.infectious), ("R", &comp.recovered), ("D", &comp.deaths)]
            .into_iter()
            .flat_map(|(name, series)| envelope_rows(&data, name, series));
        report.written.push(write_csv(cfg.out_dir.join("envelopes_compartments.csv"), rows)?);

        report.failures = window_failures(&fits, "");
        report.notes.push(format!(
            "fitted {} of {} windows, mean R^2(D) = {}",
            ok.len(),
            fits.windows.len(),
            fits.mean_r2_d().map_or("undefined".to_string(), |v| v.to_string())
        ));
        Ok(FitOutput { data, fits, report })
    })
}

/// One cell of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareCell {
    pub procedure: &'static str,
    pub bounds: BoundsPreset,
    pub objective: ObjectiveSpec,
    pub fitted: usize,
    pub failed: usize,
    pub mean_r2_d: Option<f64>,
}

#[derive(Debug, Serialize)]
struct CompareDoc<'a> {
    seed: u64,
    population: f64,
    tau: usize,
    delta: usize,
    window_count: usize,
    swarm: SwarmDoc,
    bounds: [BoundsDoc; 2],
    cells: &'a [CompareCell],
}

fn procedure_label(preset: BoundsPreset) -> &'static str {
    match preset {
        BoundsPreset::Stage1 => "before",
        _ => "after",
    }
}

/// Runs all eight objectives under both bound presets and writes the mean
/// `R^2(D)` table.
pub fn cmd_compare(cfg: &RunConfig) -> Result<(Vec<CompareCell>, CommandReport)> {
    exec::with_threads(cfg.threads.as_option(), || {
        let (data, _) = load_observations(cfg)?;
        let scheme = WindowScheme::for_length(data.len(), cfg.tau, cfg.delta)?;
        let presets = [
            (BoundsPreset::Stage1, crate::calibration::ParamBounds::stage1()),
            (BoundsPreset::Stage2, crate::calibration::ParamBounds::stage2()),
        ];
        let mut report = CommandReport::default();
        let mut cells = Vec::new();
        for (preset, bounds) in presets {
            for spec in ObjectiveSpec::all() {
                let fits = fit_all_windows(&data, &scheme, &setup_for(cfg, spec, bounds), cfg.seed)?;
                report.failures.extend(window_failures(&fits, &format!("{preset} {spec} ")));
                cells.push(CompareCell {
                    procedure: procedure_label(preset),
                    bounds: preset,
                    objective: spec,
                    fitted: fits.windows.len() - fits.failures(),
                    failed: fits.failures(),
                    mean_r2_d: fits.mean_r2_d(),
                });
            }
        }

        create_out_dir(&cfg.out_dir)?;
        let path = cfg.out_dir.join("compare.csv");
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))?;
        w.write_record(["procedure", "fitting_to", "MXSE", "MSE", "MAE", "MAPE"])?;
        for preset in [BoundsPreset::Stage1, BoundsPreset::Stage2] {
            for family in [Family::DOnly, Family::IrdJoint] {
                let mut record = vec![
                    procedure_label(preset).to_string(),
                    if family == Family::DOnly { "D" } else { "IRD" }.to_string(),
                ];
                for metric in Metric::ALL {
                    let cell = cells
                        .iter()
                        .find(|c| c.bounds == preset && c.objective == ObjectiveSpec::new(family, metric))
                        .expect("every cell was computed");
                    record.push(cell.mean_r2_d.map_or("failed".to_string(), |v| v.to_string()));
                }
                w.write_record(&record)?;
            }
        }
        w.flush()?;
        report.written.push(path);

        let doc = CompareDoc {
            seed: cfg.seed,
            population: cfg.population,
            tau: cfg.tau,
            delta: cfg.delta,
            window_count: scheme.window_count(),
            swarm: SwarmDoc::from(&cfg.pso),
            bounds: [
                BoundsDoc::new(BoundsPreset::Stage1, &presets[0].1),
                BoundsDoc::new(BoundsPreset::Stage2, &presets[1].1),
            ],
            cells: &cells,
        };
        report.written.push(write_json(cfg.out_dir.join("compare.json"), &doc)?);
        Ok((cells, report))
    })
}

fn window_at(data: &Observations, start: NaiveDate, tau: usize) -> Result<Window> {
    let day = data
        .day_of(start)
        .with_context(|| format!("window start {start} is outside the data ({} days from {})", data.len(), data.start_date))?;
    let window = Window::new(0, day, tau);
    data.window(&window)?;
    Ok(window)
}

#[derive(Debug, Serialize)]
struct ForecastDoc {
    start_date: NaiveDate,
    start_day: usize,
    tau: usize,
    horizon: usize,
    objective: ObjectiveSpec,
    bounds: BoundsDoc,
    population: f64,
    fit: FitSummaryDoc,
}

/// Fits the window starting on `start` and extends it by `cfg.horizon` days.
///
/// The swarm seed is `derive_seed(cfg.seed, start_day)`, so a window gets the
/// same fit whatever else is run.
pub fn cmd_forecast(cfg: &RunConfig, start: NaiveDate) -> Result<CommandReport> {
    exec::with_threads(cfg.threads.as_option(), || {
        let (data, _) = load_observations(cfg)?;
        let window = window_at(&data, start, cfg.tau)?;
        let seed = derive_seed(cfg.seed, window.start as u64);
        let setup = setup_for(cfg, cfg.objective, cfg.bounds).with_seed(seed);
        let fit = fit_window(&data, &window, &setup)?;
        let forecast = forecast_extension(&fit, cfg.horizon, cfg.population, cfg.substeps)?;

        let reported = |day: usize, col: &[f64]| col.get(day).copied();
        let row = |offset: usize, phase: &'static str, st: &crate::model::SirdState| {
            let day = window.start + offset;
            ForecastRow {
                day,
                date: data.date_of(day),
                offset,
                phase,
                s: st.s,
                i: st.i,
                r: st.r,
                d: st.d,
                reported_i: reported(day, &data.infectious),
                reported_r: reported(day, &data.recovered),
                reported_d: reported(day, &data.deaths),
            }
        };
        let tau = window.tau();
        let rows = fit
            .trajectory
            .states
            .iter()
            .enumerate()
            .map(|(k, st)| row(k, "fit", st))
            .chain(forecast.trajectory.states.iter().enumerate().map(|(k, st)| row(tau + k, "forecast", st)));

        create_out_dir(&cfg.out_dir)?;
        let mut report = CommandReport::default();
        report.written.push(write_csv(cfg.out_dir.join("forecast.csv"), rows)?);
        let doc = ForecastDoc {
            start_date: start,
            start_day: window.start,
            tau,
            horizon: cfg.horizon,
            objective: cfg.objective,
            bounds: BoundsDoc::new(cfg.preset, &cfg.bounds),
            population: cfg.population,
            fit: FitSummaryDoc::new(seed, &fit),
        };
        report.written.push(write_json(cfg.out_dir.join("forecast_fit.json"), &doc)?);
        report.notes.push(format!(
            "window {} .. {}: objective {}, R^2(D) = {}",
            data.date_of(window.start),
            data.date_of(window.end),
            fit.objective_value,
            fit.r2_d.map_or("undefined".to_string(), |v| v.to_string())
        ));
        Ok(report)
    })
}

#[derive(Debug, Serialize)]
struct RepetitionDoc {
    repetition: usize,
    #[serde(flatten)]
    fit: FitSummaryDoc,
}

#[derive(Debug, Serialize)]
struct StabilityDoc {
    start_date: NaiveDate,
    start_day: usize,
    tau: usize,
    horizon: usize,
    objective: ObjectiveSpec,
    bounds: BoundsDoc,
    population: f64,
    seed: u64,
    swarm: SwarmDoc,
    repetitions: usize,
    succeeded: usize,
    excluded: usize,
    failures: Vec<JobFailure>,
    gamma: QuantileBands,
    mu: QuantileBands,
    fits: Vec<RepetitionDoc>,
}

/// Repeats the fit of one window `cfg.repetitions` times and writes per-day
/// quantile bands plus a JSON summary.
pub fn cmd_stability(cfg: &RunConfig, start: NaiveDate) -> Result<CommandReport> {
    exec::with_threads(cfg.threads.as_option(), || {
        let (data, _) = load_observations(cfg)?;
        let window = window_at(&data, start, cfg.tau)?;
        let setup = setup_for(cfg, cfg.objective, cfg.bounds);
        let study = stability_study(&data, &window, &setup, cfg.repetitions, cfg.horizon, cfg.seed)?;

        let junction = study.junction();
        let rows = [
            ("beta", &study.beta),
            ("r0", &study.r0),
            ("I", &study.infectious),
            ("R", &study.recovered),
            ("D", &study.deaths),
        ]
        .into_iter()
        .flat_map(|(name, series)| {
            series
                .iter()
                .map(move |d| BandRow::new(window.start, data.start_date, junction, name, d))
        });

        create_out_dir(&cfg.out_dir)?;
        let mut report = CommandReport::default();
        report.written.push(write_csv(cfg.out_dir.join("stability_bands.csv"), rows)?);

        report.failures = study
            .failures
            .iter()
            .map(|(k, e)| JobFailure {
                job: format!("repetition {k}"),
                error: e.to_string(),
            })
            .collect();
        let doc = StabilityDoc {
            start_date: start,
            start_day: window.start,
            tau: window.tau(),
            horizon: cfg.horizon,
            objective: cfg.objective,
            bounds: BoundsDoc::new(cfg.preset, &cfg.bounds),
            population: cfg.population,
            seed: cfg.seed,
            swarm: SwarmDoc::from(&cfg.pso),
            repetitions: study.repetitions,
            succeeded: study.fits.len(),
            excluded: study.excluded(),
            failures: report.failures.clone(),
            gamma: study.gamma.clone(),
            mu: study.mu.clone(),
            fits: study
                .fits
                .iter()
                .map(|(k, fit)| RepetitionDoc {
                    repetition: *k,
                    fit: FitSummaryDoc::new(derive_seed(cfg.seed, *k as u64), fit),
                })
                .collect(),
        };
        report.written.push(write_json(cfg.out_dir.join("stability_summary.json"), &doc)?);
        report.notes.push(format!(
            "{} of {} repetitions succeeded",
            study.fits.len(),
            study.repetitions
        ));
        Ok(report)
    })
}
