//! Window-wise calibration, forecast extensions and uncertainty envelopes.
//!
//! The data span `[0, T]` is cut into windows `[T_i, T_i + tau]` with
//! `T_{i+1} = T_i + delta`, each fitted independently by a swarm run. Within
//! a window the ramp times `t1 <= t2` are offsets from `T_i`.

mod bands;
mod stability;

pub use bands::{quantile_sorted, Band, Daily, Envelope, QuantileBands};
pub use stability::{stability_study, StabilityStudy};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec;
use crate::model::{self, integrate_euler, ModelError, SirdParams, SirdState, Trajectory};
use crate::objectives::{r_squared_d, ObjectiveError, ObjectiveSpec, ObservedWindow, WindowObjective};
use crate::pso::{self, ParallelObjective, PsoConfig, PsoError, SearchBounds};
use crate::timeseries::{EpiSeries, SmoothedSeries};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CalibrationError {
    #[error("invalid window scheme: {0}")]
    SchemeInvalid(String),
    #[error("invalid parameter bounds: {0}")]
    BoundsInvalid(String),
    #[error("window [{start}, {end}] is outside the {len} days of data")]
    WindowOutOfRange { start: usize, end: usize, len: usize },
    #[error("population {population} is smaller than I+R+D = {occupied} at day {day}")]
    InsufficientPopulation { day: usize, population: f64, occupied: f64 },
    #[error("every repetition failed")]
    NoSuccessfulRepetition,
    #[error(transparent)]
    Optimizer(#[from] PsoError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

/// `last_day` is `T`, the index of the final observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowScheme {
    pub last_day: usize,
    pub tau: usize,
    pub delta: usize,
}

impl WindowScheme {
    pub const DEFAULT_TAU: usize = 35;
    pub const DEFAULT_DELTA: usize = 3;

    pub fn new(last_day: usize, tau: usize, delta: usize) -> Self {
        Self { last_day, tau, delta }
    }

    /// Scheme covering a series of `n_days` observations.
    pub fn for_length(n_days: usize, tau: usize, delta: usize) -> Result<Self, CalibrationError> {
        if n_days == 0 {
            return Err(CalibrationError::SchemeInvalid("no data".into()));
        }
        let scheme = Self::new(n_days - 1, tau, delta);
        scheme.validate()?;
        Ok(scheme)
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        if self.tau < 1 {
            return Err(CalibrationError::SchemeInvalid("tau must be at least 1".into()));
        }
        if self.delta < 1 {
            return Err(CalibrationError::SchemeInvalid("delta must be at least 1".into()));
        }
        if self.last_day < self.tau {
            return Err(CalibrationError::SchemeInvalid(format!(
                "window length tau = {} exceeds the last data day T = {}",
                self.tau, self.last_day
            )));
        }
        Ok(())
    }

    /// `floor(1 + (T - tau) / delta)`.
    pub fn window_count(&self) -> usize {
        1 + (self.last_day - self.tau) / self.delta
    }
}

/// Days `start..=end` of the data, `end - start == tau`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub index: usize,
    pub start: usize,
    pub end: usize,
}

impl Window {
    pub fn new(index: usize, start: usize, tau: usize) -> Self {
        Self {
            index,
            start,
            end: start + tau,
        }
    }

    /// Number of observations, `tau + 1`.
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tau(&self) -> usize {
        self.end - self.start
    }

    pub fn covers(&self, day: usize) -> bool {
        self.start <= day && day <= self.end
    }
}

/// Windows start at `0, δ, 2δ, ...` while the last one still ends on or
/// before `T`, giving `⌊1 + (T − τ)/δ⌋` of them. With `T` read as the last
/// day index, 450 days of data and `τ = 35, δ = 3` give 139 windows; reading
/// `T` as the number of days would give 138.
pub fn make_windows(scheme: &WindowScheme) -> Result<Vec<Window>, CalibrationError> {
    scheme.validate()?;
    Ok((0..scheme.window_count())
        .map(|i| Window::new(i, i * scheme.delta, scheme.tau))
        .collect())
}

/// Box constraints on `beta1, beta2, gamma, mu` plus the ramp-time rule
/// `0 <= t1 <= t2 <= tau - t_margin` (offsets from the window start).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub beta1: (f64, f64),
    pub beta2: (f64, f64),
    pub gamma: (f64, f64),
    pub mu: (f64, f64),
    pub t_margin: f64,
}

impl ParamBounds {
    /// Wide first-pass ranges.
    pub fn stage1() -> Self {
        Self {
            beta1: (0.0, 10.0),
            beta2: (0.0, 10.0),
            gamma: (0.0, 10.0),
            mu: (0.0, 10.0),
            t_margin: 0.0,
        }
    }

    /// Narrowed ranges; the ramp must end a week before the window does.
    pub fn stage2() -> Self {
        Self {
            beta1: (0.0, 2.0),
            beta2: (0.0, 2.0),
            gamma: (0.0, 1.0),
            mu: (0.0, 0.1),
            t_margin: 7.0,
        }
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        for (name, (lo, hi)) in [
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("gamma", self.gamma),
            ("mu", self.mu),
        ] {
            if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
                return Err(CalibrationError::BoundsInvalid(format!("{name}: [{lo}, {hi}]")));
            }
        }
        if !(self.t_margin.is_finite() && self.t_margin >= 0.0) {
            return Err(CalibrationError::BoundsInvalid(format!("t_margin: {}", self.t_margin)));
        }
        Ok(())
    }

    /// Latest allowed ramp time for a window of length `tau`.
    pub fn t_upper(&self, tau: usize) -> f64 {
        tau as f64 - self.t_margin
    }

    /// Six-dimensional box in `[beta1, beta2, t1, t2, gamma, mu]` order.
    pub fn search_bounds(&self, tau: usize) -> Result<SearchBounds, CalibrationError> {
        self.validate()?;
        let t_hi = self.t_upper(tau);
        if t_hi < 0.0 {
            return Err(CalibrationError::BoundsInvalid(format!(
                "t_margin {} exceeds the window length {tau}",
                self.t_margin
            )));
        }
        let lower = vec![self.beta1.0, self.beta2.0, 0.0, 0.0, self.gamma.0, self.mu.0];
        let upper = vec![self.beta1.1, self.beta2.1, t_hi, t_hi, self.gamma.1, self.mu.1];
        Ok(SearchBounds::new(lower, upper)?)
    }

    pub fn contains(&self, p: &SirdParams, tau: usize) -> bool {
        let inside = |x: f64, (lo, hi): (f64, f64)| lo <= x && x <= hi;
        inside(p.beta1, self.beta1)
            && inside(p.beta2, self.beta2)
            && inside(p.gamma, self.gamma)
            && inside(p.mu, self.mu)
            && 0.0 <= p.t1
            && p.t1 <= p.t2
            && p.t2 <= self.t_upper(tau)
    }
}

/// Reported compartments the fitter compares against.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    pub start_date: NaiveDate,
    pub infectious: Vec<f64>,
    pub recovered: Vec<f64>,
    pub deaths: Vec<f64>,
}

impl Observations {
    pub fn len(&self) -> usize {
        self.deaths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deaths.is_empty()
    }

    pub fn date_of(&self, day: usize) -> NaiveDate {
        self.start_date + chrono::Days::new(day as u64)
    }

    pub fn day_of(&self, date: NaiveDate) -> Option<usize> {
        let offset = (date - self.start_date).num_days();
        (offset >= 0 && (offset as usize) < self.len()).then_some(offset as usize)
    }

    pub fn window(&self, window: &Window) -> Result<ObservedWindow<'_>, CalibrationError> {
        if window.end >= self.len() {
            return Err(CalibrationError::WindowOutOfRange {
                start: window.start,
                end: window.end,
                len: self.len(),
            });
        }
        let r = window.start..window.end + 1;
        Ok(ObservedWindow {
            infectious: &self.infectious[r.clone()],
            recovered: &self.recovered[r.clone()],
            deaths: &self.deaths[r],
        })
    }
}

impl From<&EpiSeries> for Observations {
    fn from(s: &EpiSeries) -> Self {
        Self {
            start_date: s.start_date(),
            infectious: s.infectious().to_vec(),
            recovered: s.recovered_cum().to_vec(),
            deaths: s.deaths_cum().to_vec(),
        }
    }
}

impl From<&SmoothedSeries> for Observations {
    fn from(s: &SmoothedSeries) -> Self {
        Self {
            start_date: s.start_date,
            infectious: s.infectious.clone(),
            recovered: s.recovered_cum.clone(),
            deaths: s.deaths_cum.clone(),
        }
    }
}

/// Everything a single window fit needs besides the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitSetup {
    pub objective: ObjectiveSpec,
    pub bounds: ParamBounds,
    pub pso: PsoConfig,
    pub population: f64,
    pub substeps: usize,
}

impl FitSetup {
    pub fn new(objective: ObjectiveSpec, bounds: ParamBounds, pso: PsoConfig, population: f64) -> Self {
        Self {
            objective,
            bounds,
            pso,
            population,
            substeps: model::DEFAULT_SUBSTEPS,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.pso.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub window: Window,
    pub params: SirdParams,
    pub objective: ObjectiveSpec,
    pub objective_value: f64,
    /// `None` when reported deaths are constant over the window.
    pub r2_d: Option<f64>,
    pub trajectory: Trajectory,
}

impl FitResult {
    /// `beta(t)` at an absolute data day inside the window.
    pub fn beta_on_day(&self, day: usize) -> f64 {
        self.params.beta_at(day as f64 - self.window.start as f64)
    }

    pub fn state_on_day(&self, day: usize) -> &SirdState {
        &self.trajectory.states[day - self.window.start]
    }
}

/// Mixes a base seed with a job index into an independent seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn swap_ramp_times(x: &mut [f64]) {
    if x[2] > x[3] {
        x.swap(2, 3);
    }
}

/// Initial state from the reported first day of the window.
pub fn initial_state(
    data: &Observations,
    window: &Window,
    population: f64,
) -> Result<SirdState, CalibrationError> {
    let day = window.start;
    let (i, r, d) = (data.infectious[day], data.recovered[day], data.deaths[day]);
    SirdState::from_observed(population, i, r, d).ok_or(CalibrationError::InsufficientPopulation {
        day,
        population,
        occupied: i + r + d,
    })
}

/// Fits one window with the seed in `setup.pso`.
pub fn fit_window(data: &Observations, window: &Window, setup: &FitSetup) -> Result<FitResult, CalibrationError> {
    let observed = data.window(window)?;
    let init = initial_state(data, window, setup.population)?;
    let tau = window.tau();
    let bounds = setup.bounds.search_bounds(tau)?;
    let objective = WindowObjective::new(setup.objective, observed)?;

    let (population, substeps) = (setup.population, setup.substeps);
    let cost = |x: &[f64]| {
        let params = SirdParams::from_slice(x);
        match integrate_euler(&params, &init, population, tau, substeps) {
            Ok(traj) => objective.evaluate(&traj).unwrap_or(f64::INFINITY),
            Err(_) => f64::INFINITY,
        }
    };
    let outcome = pso::optimize(&setup.pso, &bounds, &ParallelObjective(cost), Some(&swap_ramp_times))?;

    let params = SirdParams::from_slice(&outcome.best_position);
    let trajectory = integrate_euler(&params, &init, population, tau, substeps)?;
    let r2_d = r_squared_d(observed.deaths, &trajectory.deaths()).ok();
    Ok(FitResult {
        window: *window,
        params,
        objective: setup.objective,
        objective_value: outcome.best_cost,
        r2_d,
        trajectory,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowFit {
    pub window: Window,
    pub seed: u64,
    pub result: Result<FitResult, CalibrationError>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowFits {
    pub scheme: WindowScheme,
    pub windows: Vec<WindowFit>,
}

impl WindowFits {
    pub fn successes(&self) -> Vec<&FitResult> {
        self.windows.iter().filter_map(|w| w.result.as_ref().ok()).collect()
    }

    pub fn failures(&self) -> usize {
        self.windows.iter().filter(|w| w.result.is_err()).count()
    }

    /// Mean of the defined per-window `R^2(D)` values over successful fits.
    pub fn mean_r2_d(&self) -> Option<f64> {
        let values: Vec<f64> = self.successes().iter().filter_map(|f| f.r2_d).collect();
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Fits every window of the scheme. Window `i` uses seed
/// `derive_seed(base_seed, i)`; failures are kept per window.
pub fn fit_all_windows(
    data: &Observations,
    scheme: &WindowScheme,
    setup: &FitSetup,
    base_seed: u64,
) -> Result<WindowFits, CalibrationError> {
    let windows = make_windows(scheme)?;
    if scheme.last_day >= data.len() {
        return Err(CalibrationError::SchemeInvalid(format!(
            "scheme ends on day {} but data has {} days",
            scheme.last_day,
            data.len()
        )));
    }
    let fits = exec::map_slice(&windows, |w| {
        let seed = derive_seed(base_seed, w.index as u64);
        WindowFit {
            window: *w,
            seed,
            result: fit_window(data, w, &setup.with_seed(seed)),
        }
    });
    Ok(WindowFits {
        scheme: *scheme,
        windows: fits,
    })
}

/// Continuation of a fitted window with constant `beta2`, `gamma`, `mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub horizon: usize,
    pub params: SirdParams,
    /// `horizon + 1` daily states; day 0 is the last fitted day.
    pub trajectory: Trajectory,
}

pub fn forecast_extension(
    fit: &FitResult,
    horizon: usize,
    population: f64,
    substeps: usize,
) -> Result<Forecast, CalibrationError> {
    let params = SirdParams::constant(fit.params.beta2, fit.params.gamma, fit.params.mu);
    let start = *fit.trajectory.last();
    let trajectory = if horizon == 0 {
        Trajectory {
            states: vec![start],
            population,
        }
    } else {
        integrate_euler(&params, &start, population, horizon, substeps)?
    };
    Ok(Forecast {
        horizon,
        params,
        trajectory,
    })
}

/// Envelopes of the fitted parameters per data day.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterEnvelopes {
    pub beta: Vec<Daily<Envelope>>,
    pub gamma: Vec<Daily<Envelope>>,
    pub mu: Vec<Daily<Envelope>>,
    /// `beta(t) / (gamma + mu)`; windows with `gamma + mu == 0` are skipped.
    pub r0: Vec<Daily<Envelope>>,
}

/// Envelopes of the fitted compartments per data day.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CompartmentEnvelopes {
    pub infectious: Vec<Daily<Envelope>>,
    pub recovered: Vec<Daily<Envelope>>,
    pub deaths: Vec<Daily<Envelope>>,
}

fn day_span(fits: &[&FitResult]) -> std::ops::RangeInclusive<usize> {
    let first = fits.iter().map(|f| f.window.start).min().unwrap_or(1);
    let last = fits.iter().map(|f| f.window.end).max().unwrap_or(0);
    first..=last
}

fn daily_envelopes<F>(fits: &[&FitResult], value: F) -> Vec<Daily<Envelope>>
where
    F: Fn(&FitResult, usize) -> Option<f64>,
{
    day_span(fits)
        .filter_map(|day| {
            let samples: Vec<f64> = fits
                .iter()
                .filter(|f| f.window.covers(day))
                .filter_map(|f| value(f, day))
                .collect();
            Envelope::from_samples(&samples).map(|value| Daily { day, value })
        })
        .collect()
}

/// For every day, the values of each covering window's parameters.
pub fn parameter_envelopes(fits: &[&FitResult]) -> ParameterEnvelopes {
    ParameterEnvelopes {
        beta: daily_envelopes(fits, |f, day| Some(f.beta_on_day(day))),
        gamma: daily_envelopes(fits, |f, _| Some(f.params.gamma)),
        mu: daily_envelopes(fits, |f, _| Some(f.params.mu)),
        r0: daily_envelopes(fits, |f, day| model::r0(f.beta_on_day(day), f.params.gamma, f.params.mu).ok()),
    }
}

/// For every day, the fitted compartment values of each covering window.
pub fn compartment_envelopes(fits: &[&FitResult]) -> CompartmentEnvelopes {
    CompartmentEnvelopes {
        infectious: daily_envelopes(fits, |f, day| Some(f.state_on_day(day).i)),
        recovered: daily_envelopes(fits, |f, day| Some(f.state_on_day(day).r)),
        deaths: daily_envelopes(fits, |f, day| Some(f.state_on_day(day).d)),
    }
}
