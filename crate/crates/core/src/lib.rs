//! SIRD epidemic model calibration with a parallel particle swarm.
//!
//! The crate reads cumulative case counts, turns them into the compartments
//! of a SIRD model with a piecewise-linear transmission rate, and fits that
//! model on overlapping windows of the data. Fits can be extended into short
//! forecasts and summarized as per-day envelopes or repeated-run quantile
//! bands.
//!
//! With the default `parallel` feature the swarm is evaluated on a rayon
//! pool; without it everything runs on the calling thread. Results are the
//! same either way.

pub mod calibration;
pub mod cli;
pub mod exec;
pub mod model;
pub mod objectives;
pub mod pso;
pub mod timeseries;
