//! SIRD dynamics with a piecewise-linear transmission rate, integrated by a
//! fixed-step explicit Euler scheme.
//!
//! ```text
//! S' = -beta(t)/N * S * I
//! I' =  beta(t)/N * S * I - (gamma + mu) * I
//! R' =  gamma * I
//! D' =  mu * I
//! ```
//!
//! `beta(t)` holds at `beta1` before `t1`, ramps linearly to `beta2` on
//! `[t1, t2)` and stays at `beta2` afterwards. Times are measured in days from
//! the start of the integration window.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec;

/// Default number of Euler substeps per day (step of one hour).
pub const DEFAULT_SUBSTEPS: usize = 24;

#[derive(Debug, Clone, Copy, Error, PartialEq)]
pub enum ModelError {
    #[error("state became non-finite on day {day}")]
    NonFinite { day: usize },
    #[error("gamma + mu must be positive to compute R0")]
    DegenerateRates,
    #[error("invalid integration request: {0}")]
    InvalidInput(&'static str),
}

/// The six fitted quantities of one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SirdParams {
    pub beta1: f64,
    pub beta2: f64,
    /// Start of the transmission ramp, days from the window start.
    pub t1: f64,
    /// End of the transmission ramp, days from the window start.
    pub t2: f64,
    pub gamma: f64,
    pub mu: f64,
}

impl SirdParams {
    pub const DIM: usize = 6;

    /// Parameters with a constant transmission rate.
    pub fn constant(beta: f64, gamma: f64, mu: f64) -> Self {
        Self {
            beta1: beta,
            beta2: beta,
            t1: 0.0,
            t2: 0.0,
            gamma,
            mu,
        }
    }

    /// Reads `[beta1, beta2, t1, t2, gamma, mu]`.
    pub fn from_slice(x: &[f64]) -> Self {
        assert_eq!(x.len(), Self::DIM, "parameter vector has wrong length");
        Self {
            beta1: x[0],
            beta2: x[1],
            t1: x[2],
            t2: x[3],
            gamma: x[4],
            mu: x[5],
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.beta1, self.beta2, self.t1, self.t2, self.gamma, self.mu]
    }

    pub fn is_valid(&self) -> bool {
        let rates = [self.beta1, self.beta2, self.gamma, self.mu];
        rates.iter().all(|r| r.is_finite() && *r >= 0.0)
            && self.t1.is_finite()
            && self.t2.is_finite()
            && self.t1 <= self.t2
    }

    pub fn beta_at(&self, t: f64) -> f64 {
        beta_at(self, t)
    }
}

/// Transmission rate at time `t`. When `t1 == t2` the ramp collapses to a
/// step at `t1`.
pub fn beta_at(params: &SirdParams, t: f64) -> f64 {
    if t < params.t1 {
        params.beta1
    } else if t < params.t2 {
        params.beta1 + (params.beta2 - params.beta1) / (params.t2 - params.t1) * (t - params.t1)
    } else {
        params.beta2
    }
}

/// Compartment sizes. Also used for their time derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SirdState {
    pub s: f64,
    pub i: f64,
    pub r: f64,
    pub d: f64,
}

impl SirdState {
    pub fn new(s: f64, i: f64, r: f64, d: f64) -> Self {
        Self { s, i, r, d }
    }

    /// Initial state from observed `I`, `R`, `D` with the remainder of the
    /// population susceptible. `None` if that would leave `S < 0`.
    pub fn from_observed(population: f64, i: f64, r: f64, d: f64) -> Option<Self> {
        let s = population - i - r - d;
        (s >= 0.0).then_some(Self { s, i, r, d })
    }

    pub fn total(&self) -> f64 {
        self.s + self.i + self.r + self.d
    }

    pub fn is_finite(&self) -> bool {
        self.s.is_finite() && self.i.is_finite() && self.r.is_finite() && self.d.is_finite()
    }
}

/// Right-hand side of the SIRD system.
pub fn sird_rhs(state: &SirdState, beta: f64, gamma: f64, mu: f64, population: f64) -> SirdState {
    let infection = beta / population * state.s * state.i;
    SirdState {
        s: -infection,
        i: infection - (gamma + mu) * state.i,
        r: gamma * state.i,
        d: mu * state.i,
    }
}

/// Daily samples of an integrated SIRD solution; `states[0]` is the initial
/// condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<SirdState>,
    pub population: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &SirdState {
        self.states.last().expect("trajectory has at least one state")
    }

    pub fn susceptible(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.s).collect()
    }

    pub fn infectious(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.i).collect()
    }

    pub fn recovered(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.r).collect()
    }

    pub fn deaths(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.d).collect()
    }

    /// Largest `|S+I+R+D - N| / N` over all days.
    pub fn max_relative_drift(&self) -> f64 {
        self.states
            .iter()
            .map(|s| (s.total() - self.population).abs() / self.population)
            .fold(0.0, f64::max)
    }
}

/// Advances `init` by `n_days` days with `substeps` Euler steps per day and
/// returns the `n_days + 1` daily samples (day 0 is `init` itself).
///
/// The transmission rate is re-evaluated at the start of every substep.
pub fn integrate_euler(
    params: &SirdParams,
    init: &SirdState,
    population: f64,
    n_days: usize,
    substeps: usize,
) -> Result<Trajectory, ModelError> {
    if n_days == 0 {
        return Err(ModelError::InvalidInput("n_days must be at least 1"));
    }
    if substeps == 0 {
        return Err(ModelError::InvalidInput("substeps must be at least 1"));
    }
    if !(population > 0.0) {
        return Err(ModelError::InvalidInput("population must be positive"));
    }

    let h = 1.0 / substeps as f64;
    let per_capita = 1.0 / population;
    let removal = params.gamma + params.mu;

    let mut states = Vec::with_capacity(n_days + 1);
    states.push(*init);
    let mut x = *init;
    for day in 0..n_days {
        for k in 0..substeps {
            let t = day as f64 + k as f64 / substeps as f64;
            let beta = params.beta_at(t);
            let infection = h * beta * per_capita * x.s * x.i;
            let recovery = h * params.gamma * x.i;
            let death = h * params.mu * x.i;
            x.s -= infection;
            x.i += infection - h * removal * x.i;
            x.r += recovery;
            x.d += death;
        }
        if !x.is_finite() {
            return Err(ModelError::NonFinite { day: day + 1 });
        }
        states.push(x);
    }
    Ok(Trajectory { states, population })
}

/// [`integrate_euler`] for every parameter set. Elements are independent and
/// may be computed concurrently; failures stay in their own slot.
pub fn integrate_batch(
    params_batch: &[SirdParams],
    init: &SirdState,
    population: f64,
    n_days: usize,
    substeps: usize,
) -> Vec<Result<Trajectory, ModelError>> {
    exec::map_slice(params_batch, |p| {
        integrate_euler(p, init, population, n_days, substeps)
    })
}

/// Basic reproduction number `beta / (gamma + mu)`.
pub fn r0(beta: f64, gamma: f64, mu: f64) -> Result<f64, ModelError> {
    let removal = gamma + mu;
    if removal == 0.0 {
        return Err(ModelError::DegenerateRates);
    }
    Ok(beta / removal)
}
