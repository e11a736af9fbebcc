//! Bound-constrained particle swarm optimization with batched evaluation.
//!
//! Each particle owns a ChaCha8 stream keyed by `(seed, particle index)`.
//! Draw order per particle is fixed: `d` uniforms for the initial position,
//! then for every step and every dimension one `r1` followed by one `r2`.
//! Because no draw depends on scheduling, a run is bit-identical for any
//! number of worker threads.
//!
//! Velocity update per dimension:
//!
//! ```text
//! v <- w*v + c_cog*r1*(pbest - x) + c_soc*r2*(gbest - x)
//! x <- clamp(x + v, lower, upper)
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PsoError {
    #[error("invalid swarm configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid search bounds: {0}")]
    InvalidBounds(String),
    #[error("no particle reached a finite cost")]
    AllInfeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsoConfig {
    pub n_particles: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            n_particles: 10_000,
            inertia: 0.5,
            cognitive: 0.5,
            social: 0.5,
            max_iters: 100,
            seed: 0,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<(), PsoError> {
        if self.n_particles < 2 {
            return Err(PsoError::InvalidConfig("need at least 2 particles".into()));
        }
        if self.max_iters < 1 {
            return Err(PsoError::InvalidConfig("need at least 1 iteration".into()));
        }
        for (name, c) in [
            ("inertia", self.inertia),
            ("cognitive", self.cognitive),
            ("social", self.social),
        ] {
            if !(c.is_finite() && c >= 0.0) {
                return Err(PsoError::InvalidConfig(format!("{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Axis-aligned box `lower[k] <= x[k] <= upper[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchBounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl SearchBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, PsoError> {
        if lower.len() != upper.len() {
            return Err(PsoError::InvalidBounds(format!(
                "{} lower vs {} upper values",
                lower.len(),
                upper.len()
            )));
        }
        if lower.is_empty() {
            return Err(PsoError::InvalidBounds("zero dimensions".into()));
        }
        for (k, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(PsoError::InvalidBounds(format!("dimension {k}: [{lo}, {hi}]")));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The same interval in every dimension.
    pub fn uniform(dim: usize, lower: f64, upper: f64) -> Result<Self, PsoError> {
        Self::new(vec![lower; dim], vec![upper; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }

    /// Moves every out-of-range coordinate onto the violated boundary.
    pub fn clamp(&self, x: &mut [f64]) {
        for (v, (lo, hi)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            if *v < *lo {
                *v = *lo;
            } else if *v > *hi {
                *v = *hi;
            }
        }
    }
}

/// Evaluates a whole swarm in one call.
pub trait BatchObjective {
    /// Writes the cost of `positions[k]` into `costs[k]`.
    fn evaluate_batch(&self, positions: &[&[f64]], costs: &mut [f64]);
}

/// Turns a per-point cost function into a [`BatchObjective`] that spreads
/// the points over the worker pool.
pub struct ParallelObjective<F>(pub F);

impl<F> BatchObjective for ParallelObjective<F>
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    fn evaluate_batch(&self, positions: &[&[f64]], costs: &mut [f64]) {
        let out = exec::map_slice(positions, |x| (self.0)(x));
        costs.copy_from_slice(&out);
    }
}

/// Same as [`ParallelObjective`] but always single-threaded.
pub struct SequentialObjective<F>(pub F);

impl<F> BatchObjective for SequentialObjective<F>
where
    F: Fn(&[f64]) -> f64,
{
    fn evaluate_batch(&self, positions: &[&[f64]], costs: &mut [f64]) {
        for (c, x) in costs.iter_mut().zip(positions) {
            *c = (self.0)(x);
        }
    }
}

/// In-place repair applied to every position after clamping.
pub type Repair<'a> = &'a (dyn Fn(&mut [f64]) + Sync);

#[derive(Debug, Clone)]
pub struct Particle {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub best_position: Vec<f64>,
    pub best_cost: f64,
    rng: ChaCha8Rng,
}

#[derive(Debug, Clone)]
pub struct SwarmState {
    pub particles: Vec<Particle>,
    pub global_best_position: Vec<f64>,
    pub global_best_cost: f64,
    pub iteration: usize,
    evaluated: bool,
}

impl SwarmState {
    pub fn positions(&self) -> impl Iterator<Item = &[f64]> {
        self.particles.iter().map(|p| p.position.as_slice())
    }
}

/// Random generator for particle `index`.
pub fn particle_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Uniform positions inside `bounds`, zero velocities, personal bests at the
/// starting points with cost `+inf`. Nothing is evaluated yet.
pub fn initialize(config: &PsoConfig, bounds: &SearchBounds) -> SwarmState {
    let dim = bounds.dim();
    let particles: Vec<Particle> = exec::map_indexed(config.n_particles, |idx| {
        let mut rng = particle_rng(config.seed, idx);
        let position: Vec<f64> = bounds
            .lower()
            .iter()
            .zip(bounds.upper())
            .map(|(lo, hi)| {
                let u: f64 = rng.random();
                lo + u * (hi - lo)
            })
            .collect();
        Particle {
            best_position: position.clone(),
            velocity: vec![0.0; dim],
            position,
            best_cost: f64::INFINITY,
            rng,
        }
    });
    SwarmState {
        global_best_position: particles[0].position.clone(),
        global_best_cost: f64::INFINITY,
        particles,
        iteration: 0,
        evaluated: false,
    }
}

/// Scores the current positions and updates personal and global bests.
///
/// A personal best moves only on strict improvement. The global best is the
/// lowest personal best, lowest index first among equals, and it too moves
/// only on strict improvement.
pub fn evaluate_swarm(state: &mut SwarmState, evaluate: &dyn BatchObjective) {
    let mut costs = vec![f64::INFINITY; state.particles.len()];
    {
        let positions: Vec<&[f64]> = state.positions().collect();
        evaluate.evaluate_batch(&positions, &mut costs);
    }
    for (p, cost) in state.particles.iter_mut().zip(costs) {
        let cost = if cost.is_nan() { f64::INFINITY } else { cost };
        if cost < p.best_cost {
            p.best_cost = cost;
            p.best_position.copy_from_slice(&p.position);
        }
    }

    let (best_idx, best_cost) = state
        .particles
        .iter()
        .enumerate()
        .fold((0usize, f64::INFINITY), |(bi, bc), (i, p)| {
            if p.best_cost < bc {
                (i, p.best_cost)
            } else {
                (bi, bc)
            }
        });
    if best_cost < state.global_best_cost || !state.evaluated {
        state.global_best_cost = best_cost;
        state
            .global_best_position
            .copy_from_slice(&state.particles[best_idx].best_position);
    }
    state.evaluated = true;
}

/// One velocity/position update followed by a batch evaluation.
pub fn step(
    state: &mut SwarmState,
    config: &PsoConfig,
    bounds: &SearchBounds,
    evaluate: &dyn BatchObjective,
    repair: Option<Repair<'_>>,
) {
    let gbest = state.global_best_position.clone();
    let (w, c_cog, c_soc) = (config.inertia, config.cognitive, config.social);
    exec::for_each_indexed_mut(&mut state.particles, |_, p| {
        for k in 0..p.position.len() {
            let r1: f64 = p.rng.random();
            let r2: f64 = p.rng.random();
            let x = p.position[k];
            p.velocity[k] = w * p.velocity[k]
                + c_cog * r1 * (p.best_position[k] - x)
                + c_soc * r2 * (gbest[k] - x);
            p.position[k] = x + p.velocity[k];
        }
        bounds.clamp(&mut p.position);
        if let Some(repair) = repair {
            repair(&mut p.position);
        }
    });
    evaluate_swarm(state, evaluate);
    state.iteration += 1;
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsoOutcome {
    pub best_position: Vec<f64>,
    pub best_cost: f64,
    /// Global best cost after each of the `max_iters` steps.
    pub history: Vec<f64>,
}

/// Initializes, evaluates the starting swarm and runs `max_iters` steps.
pub fn optimize(
    config: &PsoConfig,
    bounds: &SearchBounds,
    evaluate: &dyn BatchObjective,
    repair: Option<Repair<'_>>,
) -> Result<PsoOutcome, PsoError> {
    config.validate()?;
    let mut state = initialize(config, bounds);
    if let Some(repair) = repair {
        exec::for_each_indexed_mut(&mut state.particles, |_, p| {
            repair(&mut p.position);
            p.best_position.copy_from_slice(&p.position);
        });
    }
    evaluate_swarm(&mut state, evaluate);

    let mut history = Vec::with_capacity(config.max_iters);
    for _ in 0..config.max_iters {
        step(&mut state, config, bounds, evaluate, repair);
        history.push(state.global_best_cost);
    }
    if state.global_best_cost == f64::INFINITY {
        return Err(PsoError::AllInfeasible);
    }
    Ok(PsoOutcome {
        best_position: state.global_best_position,
        best_cost: state.global_best_cost,
        history,
    })
}
