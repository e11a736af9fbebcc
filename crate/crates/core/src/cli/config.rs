//! Run configuration: command-line flags over an optional TOML file over
//! built-in defaults.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, ensure, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use crate::calibration::{ParamBounds, WindowScheme};
use crate::model::DEFAULT_SUBSTEPS;
use crate::objectives::ObjectiveSpec;
use crate::pso::PsoConfig;

pub const DEFAULT_HORIZON: usize = 21;
pub const DEFAULT_REPETITIONS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundsPreset {
    Stage1,
    Stage2,
    Custom,
}

impl fmt::Display for BoundsPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundsPreset::Stage1 => "stage1",
            BoundsPreset::Stage2 => "stage2",
            BoundsPreset::Custom => "custom",
        })
    }
}

impl FromStr for BoundsPreset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "stage1" => Ok(BoundsPreset::Stage1),
            "stage2" => Ok(BoundsPreset::Stage2),
            "custom" => Ok(BoundsPreset::Custom),
            _ => Err(format!("unknown bounds preset '{s}' (expected stage1, stage2 or custom)")),
        }
    }
}

/// Worker count: a positive number or `max` for every available core.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Threads {
    Max,
    Fixed(usize),
}

impl Threads {
    /// `None` means "leave the global pool alone".
    pub fn as_option(self) -> Option<usize> {
        match self {
            Threads::Max => None,
            Threads::Fixed(n) => Some(n),
        }
    }
}

impl FromStr for Threads {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "max" {
            return Ok(Threads::Max);
        }
        match s.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Threads::Fixed(n)),
            _ => Err(format!("'{s}' is not a positive thread count or 'max'")),
        }
    }
}

impl<'de> Deserialize<'de> for Threads {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(usize),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(n) => n.to_string().parse(),
            Raw::S(s) => s.parse(),
        }
        .map_err(serde::de::Error::custom)
    }
}

/// Parses `beta1=0:2,gamma=0:1,t_margin=7`. Unlisted entries keep the
/// stage-2 values.
pub fn parse_custom_bounds(s: &str) -> Result<ParamBounds> {
    let mut b = ParamBounds::stage2();
    for item in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
        let (key, value) = item
            .split_once('=')
            .with_context(|| format!("custom bound '{item}' is not key=value"))?;
        let range = |v: &str| -> Result<(f64, f64)> {
            let (lo, hi) = v
                .split_once(':')
                .with_context(|| format!("range '{v}' for {key} is not lo:hi"))?;
            Ok((lo.trim().parse()?, hi.trim().parse()?))
        };
        match key.trim() {
            "beta1" => b.beta1 = range(value)?,
            "beta2" => b.beta2 = range(value)?,
            "gamma" => b.gamma = range(value)?,
            "mu" => b.mu = range(value)?,
            "t_margin" => b.t_margin = value.trim().parse()?,
            other => bail!("unknown custom bound '{other}'"),
        }
    }
    b.validate()?;
    Ok(b)
}

/// Flags shared by the fitting subcommands. Every field is optional so the
/// config file can fill the gaps.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML file with any of the settings below
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input CSV with columns date,confirmed,recovered,deaths
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Population size N
    #[arg(long)]
    pub population: Option<f64>,
    /// Window length in days [default: 35]
    #[arg(long)]
    pub tau: Option<usize>,
    /// Shift between consecutive windows in days [default: 3]
    #[arg(long)]
    pub delta: Option<usize>,
    /// d-mxse, d-mse, d-mae, d-mape, ird-mxse, ird-mse, ird-mae or ird-mape [default: ird-mxse]
    #[arg(long)]
    pub objective: Option<ObjectiveSpec>,
    /// stage1, stage2 or custom [default: stage2]
    #[arg(long)]
    pub bounds: Option<BoundsPreset>,
    /// Ranges for --bounds custom, e.g. "beta1=0:2,beta2=0:2,gamma=0:1,mu=0:0.1,t_margin=7"
    #[arg(long)]
    pub custom_bounds: Option<String>,
    /// Swarm size [default: 10000]
    #[arg(long)]
    pub particles: Option<usize>,
    /// Swarm iterations [default: 100]
    #[arg(long)]
    pub iters: Option<usize>,
    /// Base random seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Forecast horizon in days [default: 21]
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Repetitions for the stability study [default: 1000]
    #[arg(long)]
    pub reps: Option<usize>,
    /// Fit the seven-day moving average instead of the raw series
    #[arg(long)]
    pub smooth: bool,
    /// Worker threads, or "max" [default: max]
    #[arg(long)]
    pub threads: Option<Threads>,
    /// Euler substeps per day [default: 24]
    #[arg(long)]
    pub substeps: Option<usize>,
    /// Output directory [default: .]
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileBounds {
    beta1: Option<(f64, f64)>,
    beta2: Option<(f64, f64)>,
    gamma: Option<(f64, f64)>,
    mu: Option<(f64, f64)>,
    t_margin: Option<f64>,
}

impl FileBounds {
    fn resolve(self) -> Result<ParamBounds> {
        let d = ParamBounds::stage2();
        let b = ParamBounds {
            beta1: self.beta1.unwrap_or(d.beta1),
            beta2: self.beta2.unwrap_or(d.beta2),
            gamma: self.gamma.unwrap_or(d.gamma),
            mu: self.mu.unwrap_or(d.mu),
            t_margin: self.t_margin.unwrap_or(d.t_margin),
        };
        b.validate()?;
        Ok(b)
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    input: Option<PathBuf>,
    population: Option<f64>,
    tau: Option<usize>,
    delta: Option<usize>,
    objective: Option<ObjectiveSpec>,
    bounds: Option<BoundsPreset>,
    custom_bounds: Option<FileBounds>,
    particles: Option<usize>,
    iters: Option<usize>,
    inertia: Option<f64>,
    cognitive: Option<f64>,
    social: Option<f64>,
    seed: Option<u64>,
    horizon: Option<usize>,
    reps: Option<usize>,
    smooth: Option<bool>,
    threads: Option<Threads>,
    substeps: Option<usize>,
    out_dir: Option<PathBuf>,
}

fn read_file_config(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

/// Fully resolved settings for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: PathBuf,
    pub population: f64,
    pub tau: usize,
    pub delta: usize,
    pub objective: ObjectiveSpec,
    pub preset: BoundsPreset,
    pub bounds: ParamBounds,
    /// The seed inside is ignored; `seed` below is the base for all jobs.
    pub pso: PsoConfig,
    pub seed: u64,
    pub horizon: usize,
    pub repetitions: usize,
    pub smooth: bool,
    pub threads: Threads,
    pub substeps: usize,
    pub out_dir: PathBuf,
}

impl RunConfig {
    /// Defaults for everything but the input file and population.
    pub fn new(input: impl Into<PathBuf>, population: f64) -> Self {
        Self {
            input: input.into(),
            population,
            tau: WindowScheme::DEFAULT_TAU,
            delta: WindowScheme::DEFAULT_DELTA,
            objective: ObjectiveSpec::default(),
            preset: BoundsPreset::Stage2,
            bounds: ParamBounds::stage2(),
            pso: PsoConfig::default(),
            seed: 0,
            horizon: DEFAULT_HORIZON,
            repetitions: DEFAULT_REPETITIONS,
            smooth: false,
            threads: Threads::Max,
            substeps: DEFAULT_SUBSTEPS,
            out_dir: PathBuf::from("."),
        }
    }

    pub fn resolve(args: &RunArgs) -> Result<Self> {
        let file = match &args.config {
            Some(path) => read_file_config(path)?,
            None => FileConfig::default(),
        };
        let input = args
            .input
            .clone()
            .or(file.input)
            .context("no input file given (use --input or 'input' in the config file)")?;
        let population = args
            .population
            .or(file.population)
            .context("population size is required (use --population or 'population' in the config file)")?;

        let mut cfg = RunConfig::new(input, population);
        let pick = |flag: Option<usize>, from_file: Option<usize>, default: usize| flag.or(from_file).unwrap_or(default);
        cfg.tau = pick(args.tau, file.tau, cfg.tau);
        cfg.delta = pick(args.delta, file.delta, cfg.delta);
        cfg.objective = args.objective.or(file.objective).unwrap_or(cfg.objective);
        cfg.pso.n_particles = pick(args.particles, file.particles, cfg.pso.n_particles);
        cfg.pso.max_iters = pick(args.iters, file.iters, cfg.pso.max_iters);
        cfg.pso.inertia = file.inertia.unwrap_or(cfg.pso.inertia);
        cfg.pso.cognitive = file.cognitive.unwrap_or(cfg.pso.cognitive);
        cfg.pso.social = file.social.unwrap_or(cfg.pso.social);
        cfg.seed = args.seed.or(file.seed).unwrap_or(cfg.seed);
        cfg.horizon = pick(args.horizon, file.horizon, cfg.horizon);
        cfg.repetitions = pick(args.reps, file.reps, cfg.repetitions);
        cfg.smooth = args.smooth || file.smooth.unwrap_or(false);
        cfg.threads = args.threads.or(file.threads).unwrap_or(cfg.threads);
        cfg.substeps = pick(args.substeps, file.substeps, cfg.substeps);
        cfg.out_dir = args.out_dir.clone().or(file.out_dir).unwrap_or(cfg.out_dir);

        let custom = match (&args.custom_bounds, file.custom_bounds) {
            (Some(s), _) => Some(parse_custom_bounds(s)?),
            (None, Some(fb)) => Some(fb.resolve()?),
            (None, None) => None,
        };
        cfg.preset = match args.bounds.or(file.bounds) {
            Some(p) => p,
            None if custom.is_some() => BoundsPreset::Custom,
            None => BoundsPreset::Stage2,
        };
        cfg.bounds = match cfg.preset {
            BoundsPreset::Stage1 => ParamBounds::stage1(),
            BoundsPreset::Stage2 => ParamBounds::stage2(),
            BoundsPreset::Custom => custom.context("--bounds custom needs --custom-bounds")?,
        };

        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.input.is_file(),
            "input file {} does not exist",
            self.input.display()
        );
        ensure!(
            self.population.is_finite() && self.population > 0.0,
            "population must be positive, got {}",
            self.population
        );
        ensure!(self.substeps >= 1, "substeps must be at least 1");
        ensure!(self.repetitions >= 1, "repetitions must be at least 1");
        self.bounds.validate()?;
        self.pso.validate()?;
        Ok(())
    }
}
