//! Synthetic epidemics for the integration tests.
#![allow(dead_code)]

use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use episwarm::calibration::Observations;
use episwarm::model::{beta_at, integrate_euler, SirdParams, SirdState, Trajectory, DEFAULT_SUBSTEPS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const POPULATION: f64 = 1e6;

pub fn start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 3, 18).unwrap()
}

/// Ramp from 0.35 to 0.2 over days 10..20, well inside the stage-2 box.
pub fn truth() -> SirdParams {
    SirdParams {
        beta1: 0.35,
        beta2: 0.2,
        t1: 10.0,
        t2: 20.0,
        gamma: 0.1,
        mu: 0.01,
    }
}

pub fn initial_state() -> SirdState {
    SirdState::new(POPULATION - 1200.0, 1000.0, 150.0, 50.0)
}

/// Noise-free trajectory over days `0..n_days`.
pub fn generate(params: &SirdParams, n_days: usize) -> Trajectory {
    integrate_euler(params, &initial_state(), POPULATION, n_days - 1, DEFAULT_SUBSTEPS).unwrap()
}

pub fn observations(traj: &Trajectory) -> Observations {
    Observations {
        start_date: start_date(),
        infectious: traj.infectious(),
        recovered: traj.recovered(),
        deaths: traj.deaths(),
    }
}

/// Cumulative CSV whose preprocessing returns `traj`'s I, R and D.
pub fn write_csv(path: &Path, traj: &Trajectory) {
    let mut f = std::fs::File::create(path).unwrap();
    writeln!(f, "date,confirmed,recovered,deaths").unwrap();
    for (k, st) in traj.states.iter().enumerate() {
        let date = start_date() + chrono::Days::new(k as u64);
        writeln!(f, "{date},{},{},{}", st.i + st.r + st.d, st.r, st.d).unwrap();
    }
}

/// A longer epidemic with two changes in transmission, integrated as one
/// piece. `beta` is evaluated on an absolute clock so windows see whatever
/// part of the schedule they overlap.
pub fn two_wave(n_days: usize) -> Trajectory {
    let schedule = |t: f64| {
        if t < 30.0 {
            beta_at(&SirdParams { beta1: 0.32, beta2: 0.16, t1: 8.0, t2: 22.0, gamma: 0.0, mu: 0.0 }, t)
        } else {
            beta_at(&SirdParams { beta1: 0.16, beta2: 0.26, t1: 40.0, t2: 50.0, gamma: 0.0, mu: 0.0 }, t)
        }
    };
    let (gamma, mu) = (0.09, 0.012);
    let h = 1.0 / DEFAULT_SUBSTEPS as f64;
    let mut st = initial_state();
    let mut states = vec![st];
    for day in 0..n_days - 1 {
        for k in 0..DEFAULT_SUBSTEPS {
            let beta = schedule(day as f64 + k as f64 * h);
            let inf = beta / POPULATION * st.s * st.i * h;
            let rec = gamma * st.i * h;
            let die = mu * st.i * h;
            st = SirdState::new(st.s - inf, st.i + inf - rec - die, st.r + rec, st.d + die);
        }
        states.push(st);
    }
    Trajectory { states, population: POPULATION }
}

/// Reported counts with multiplicative noise on the daily increments, like
/// late or batched reporting. Cumulative columns stay monotone.
pub fn noisy_observations(traj: &Trajectory, level: f64, seed: u64) -> Observations {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noisy = |col: Vec<f64>| -> Vec<f64> {
        let mut out = Vec::with_capacity(col.len());
        let mut acc = col[0];
        out.push(acc);
        for w in col.windows(2) {
            let factor = 1.0 + level * (2.0 * rng.random::<f64>() - 1.0);
            acc += (w[1] - w[0]).max(0.0) * factor;
            out.push(acc);
        }
        out
    };
    let confirmed: Vec<f64> = traj.states.iter().map(|s| s.i + s.r + s.d).collect();
    let confirmed = noisy(confirmed);
    let recovered = noisy(traj.recovered());
    let deaths = noisy(traj.deaths());
    let infectious = confirmed
        .iter()
        .zip(&recovered)
        .zip(&deaths)
        .map(|((c, r), d)| (c - r - d).max(0.0))
        .collect();
    Observations {
        start_date: start_date(),
        infectious,
        recovered,
        deaths,
    }
}
