//! Repeated calibration of one window with independent seeds.

use super::{derive_seed, fit_window, forecast_extension, CalibrationError, Daily, FitResult, FitSetup, Observations, QuantileBands, Window};
use crate::exec;
use crate::model::{self, SirdState};

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityStudy {
    pub window: Window,
    pub horizon: usize,
    pub repetitions: usize,
    /// Indices of repetitions that failed, with the reason.
    pub failures: Vec<(usize, CalibrationError)>,
    /// Successful fits in repetition order, paired with their index.
    pub fits: Vec<(usize, FitResult)>,
    /// Day offsets run from the window start through `tau + horizon`.
    pub beta: Vec<Daily<QuantileBands>>,
    pub r0: Vec<Daily<QuantileBands>>,
    pub infectious: Vec<Daily<QuantileBands>>,
    pub recovered: Vec<Daily<QuantileBands>>,
    pub deaths: Vec<Daily<QuantileBands>>,
    pub gamma: QuantileBands,
    pub mu: QuantileBands,
}

impl StabilityStudy {
    pub fn excluded(&self) -> usize {
        self.failures.len()
    }

    /// Offset of the junction between the fitted span and the extension.
    pub fn junction(&self) -> usize {
        self.window.tau()
    }
}

struct Run {
    fit: FitResult,
    /// Fitted states followed by the extension, `tau + horizon + 1` entries.
    path: Vec<SirdState>,
}

/// Fits `window` `repetitions` times, repetition `k` seeded with
/// `derive_seed(base_seed, k)`, extends every fit by `horizon` days and
/// summarizes the spread per day.
pub fn stability_study(
    data: &Observations,
    window: &Window,
    setup: &FitSetup,
    repetitions: usize,
    horizon: usize,
    base_seed: u64,
) -> Result<StabilityStudy, CalibrationError> {
    if repetitions == 0 {
        return Err(CalibrationError::SchemeInvalid("repetitions must be at least 1".into()));
    }
    // Parallelism goes to the repetitions; the swarm inside each one then runs
    // on whatever workers remain.
    let reps: Vec<usize> = (0..repetitions).collect();
    let outcomes = exec::map_slice(&reps, |&k| -> Result<Run, CalibrationError> {
        let fit = fit_window(data, window, &setup.with_seed(derive_seed(base_seed, k as u64)))?;
        let ext = forecast_extension(&fit, horizon, setup.population, setup.substeps)?;
        let mut path = fit.trajectory.states.clone();
        path.extend_from_slice(&ext.trajectory.states[1..]);
        Ok(Run { fit, path })
    });

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (k, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(run) => runs.push((k, run)),
            Err(e) => failures.push((k, e)),
        }
    }
    if runs.is_empty() {
        return Err(CalibrationError::NoSuccessfulRepetition);
    }

    let span = window.tau() + horizon;
    let per_day = |value: &dyn Fn(&Run, usize) -> Option<f64>| -> Vec<Daily<QuantileBands>> {
        (0..=span)
            .filter_map(|day| {
                let xs: Vec<f64> = runs.iter().filter_map(|(_, r)| value(r, day)).collect();
                QuantileBands::from_samples(&xs).map(|value| Daily { day, value })
            })
            .collect()
    };
    // beta_at already returns beta2 past t2, which covers the extension.
    let beta = per_day(&|r, t| Some(r.fit.params.beta_at(t as f64)));
    let r0 = per_day(&|r, t| model::r0(r.fit.params.beta_at(t as f64), r.fit.params.gamma, r.fit.params.mu).ok());
    let infectious = per_day(&|r, t| Some(r.path[t].i));
    let recovered = per_day(&|r, t| Some(r.path[t].r));
    let deaths = per_day(&|r, t| Some(r.path[t].d));
    let scalar = |f: fn(&FitResult) -> f64| {
        let xs: Vec<f64> = runs.iter().map(|(_, r)| f(&r.fit)).collect();
        QuantileBands::from_samples(&xs).expect("at least one run")
    };
    let gamma = scalar(|f| f.params.gamma);
    let mu = scalar(|f| f.params.mu);

    Ok(StabilityStudy {
        window: *window,
        horizon,
        repetitions,
        failures,
        fits: runs.into_iter().map(|(k, r)| (k, r.fit)).collect(),
        beta,
        r0,
        infectious,
        recovered,
        deaths,
        gamma,
        mu,
    })
}
