//! Cost functions comparing a simulated window with reported data.
//!
//! Two families are supported: scoring deaths alone, or taking the worst of
//! the infectious, recovered and deaths compartments after each has been
//! min-max rescaled by its reported range (MAPE skips the rescaling since it
//! is already scale-free).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Trajectory;

#[derive(Debug, Clone, Copy, Error, PartialEq)]
pub enum ObjectiveError {
    #[error("observed and predicted series differ in length ({observed} vs {predicted})")]
    LengthMismatch { observed: usize, predicted: usize },
    #[error("series is empty")]
    Empty,
    #[error("MAPE is undefined: observed value is zero on day {day}")]
    MapeZeroDenominator { day: usize },
    #[error("normalization range is empty (min == max == {value})")]
    DegenerateRange { value: f64 },
    #[error("observed series is constant; R^2 is undefined")]
    ConstantObserved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    /// Max squared error.
    Mxse,
    /// Mean squared error.
    Mse,
    /// Mean absolute error.
    Mae,
    /// Mean absolute percentage error, in percent.
    Mape,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Mxse, Metric::Mse, Metric::Mae, Metric::Mape];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Mxse => "mxse",
            Metric::Mse => "mse",
            Metric::Mae => "mae",
            Metric::Mape => "mape",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    /// Deaths compartment only.
    DOnly,
    /// Worst of the infectious, recovered and deaths compartments.
    IrdJoint,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::DOnly => "d",
            Family::IrdJoint => "ird",
        }
    }
}

/// One of the eight family/metric combinations, written `d-mse`, `ird-mxse`, ...
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ObjectiveSpec {
    pub family: Family,
    pub metric: Metric,
}

impl ObjectiveSpec {
    pub const fn new(family: Family, metric: Metric) -> Self {
        Self { family, metric }
    }

    pub fn all() -> impl Iterator<Item = ObjectiveSpec> {
        [Family::DOnly, Family::IrdJoint]
            .into_iter()
            .flat_map(|f| Metric::ALL.into_iter().map(move |m| ObjectiveSpec::new(f, m)))
    }
}

impl Default for ObjectiveSpec {
    fn default() -> Self {
        Self::new(Family::IrdJoint, Metric::Mxse)
    }
}

impl fmt::Display for ObjectiveSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.family.name(), self.metric.name())
    }
}

impl FromStr for ObjectiveSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        let (family, metric) = lower
            .split_once('-')
            .ok_or_else(|| format!("objective `{s}` must look like `ird-mxse`"))?;
        let family = match family {
            "d" => Family::DOnly,
            "ird" => Family::IrdJoint,
            other => return Err(format!("unknown objective family `{other}` (expected d or ird)")),
        };
        let metric = Metric::ALL
            .into_iter()
            .find(|m| m.name() == metric)
            .ok_or_else(|| format!("unknown metric `{metric}` (expected mxse, mse, mae or mape)"))?;
        Ok(Self { family, metric })
    }
}

impl Serialize for ObjectiveSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ObjectiveSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn check_lengths(observed: &[f64], predicted: &[f64]) -> Result<(), ObjectiveError> {
    if observed.len() != predicted.len() {
        return Err(ObjectiveError::LengthMismatch {
            observed: observed.len(),
            predicted: predicted.len(),
        });
    }
    if observed.is_empty() {
        return Err(ObjectiveError::Empty);
    }
    Ok(())
}

/// MXSE, MSE or MAE over residuals. Must not be called with MAPE.
fn residual_metric(metric: Metric, residuals: impl Iterator<Item = f64>) -> f64 {
    let mut n = 0usize;
    let mut acc = 0.0f64;
    for e in residuals {
        n += 1;
        match metric {
            Metric::Mxse => acc = acc.max(e * e),
            Metric::Mse => acc += e * e,
            Metric::Mae => acc += e.abs(),
            Metric::Mape => unreachable!("MAPE needs the observed values"),
        }
    }
    match metric {
        Metric::Mxse => acc,
        _ => acc / n as f64,
    }
}

/// Low-level cost between a reported and a simulated series.
pub fn metric_value(metric: Metric, observed: &[f64], predicted: &[f64]) -> Result<f64, ObjectiveError> {
    check_lengths(observed, predicted)?;
    match metric {
        Metric::Mape => {
            if let Some(day) = observed.iter().position(|&y| y == 0.0) {
                return Err(ObjectiveError::MapeZeroDenominator { day });
            }
            Ok(mape_skipping_zeros(observed, predicted))
        }
        _ => Ok(residual_metric(
            metric,
            observed.iter().zip(predicted).map(|(y, p)| y - p),
        )),
    }
}

/// MAPE over the days with a non-zero observed value; `+inf` if there are none.
pub fn mape_skipping_zeros(observed: &[f64], predicted: &[f64]) -> f64 {
    let mut n = 0usize;
    let mut acc = 0.0;
    for (&y, &p) in observed.iter().zip(predicted) {
        if y != 0.0 {
            n += 1;
            acc += ((y - p) / y).abs();
        }
    }
    if n == 0 {
        f64::INFINITY
    } else {
        100.0 * acc / n as f64
    }
}

/// Affine map sending `ref_min` to 0 and `ref_max` to 1. Values outside the
/// reference range are not clipped.
pub fn minmax_normalize(series: &[f64], ref_min: f64, ref_max: f64) -> Result<Vec<f64>, ObjectiveError> {
    if !(ref_max > ref_min) {
        return Err(ObjectiveError::DegenerateRange { value: ref_min });
    }
    let span = ref_max - ref_min;
    Ok(series.iter().map(|y| (y - ref_min) / span).collect())
}

fn min_max(xs: &[f64]) -> (f64, f64) {
    xs.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Reported infectious, recovered and deaths over one window.
#[derive(Debug, Clone, Copy)]
pub struct ObservedWindow<'a> {
    pub infectious: &'a [f64],
    pub recovered: &'a [f64],
    pub deaths: &'a [f64],
}

impl ObservedWindow<'_> {
    pub fn len(&self) -> usize {
        self.deaths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deaths.is_empty()
    }
}

#[derive(Debug, Clone)]
enum Scaling {
    /// Reported values already rescaled into [0, 1] by `(y - min) / span`.
    MinMax { min: f64, span: f64, scaled: Vec<f64> },
    /// Flat reported series: raw residuals divided by `max(1, |value|)`.
    Flat { divisor: f64 },
    Raw,
}

#[derive(Debug, Clone)]
struct Channel {
    observed: Vec<f64>,
    scaling: Scaling,
}

impl Channel {
    fn new(observed: &[f64], normalize: bool) -> Self {
        let scaling = if normalize {
            let (lo, hi) = min_max(observed);
            match minmax_normalize(observed, lo, hi) {
                Ok(scaled) => Scaling::MinMax {
                    min: lo,
                    span: hi - lo,
                    scaled,
                },
                Err(_) => Scaling::Flat {
                    divisor: lo.abs().max(1.0),
                },
            }
        } else {
            Scaling::Raw
        };
        Self {
            observed: observed.to_vec(),
            scaling,
        }
    }

    fn cost(&self, metric: Metric, predicted: &[f64]) -> f64 {
        if metric == Metric::Mape {
            return mape_skipping_zeros(&self.observed, predicted);
        }
        let pairs = self.observed.iter().zip(predicted);
        match &self.scaling {
            Scaling::MinMax { min, span, scaled } => residual_metric(
                metric,
                scaled.iter().zip(predicted).map(|(fy, p)| fy - (p - min) / span),
            ),
            Scaling::Flat { divisor } => residual_metric(metric, pairs.map(|(y, p)| (y - p) / divisor)),
            Scaling::Raw => residual_metric(metric, pairs.map(|(y, p)| y - p)),
        }
    }
}

/// An objective bound to one window of reported data, with the
/// normalization ranges computed once up front.
#[derive(Debug, Clone)]
pub struct WindowObjective {
    spec: ObjectiveSpec,
    channels: Vec<(Compartment, Channel)>,
    len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Compartment {
    I,
    R,
    D,
}

impl WindowObjective {
    pub fn new(spec: ObjectiveSpec, observed: ObservedWindow<'_>) -> Result<Self, ObjectiveError> {
        let n = observed.len();
        if n == 0 {
            return Err(ObjectiveError::Empty);
        }
        for other in [observed.infectious.len(), observed.recovered.len()] {
            if other != n {
                return Err(ObjectiveError::LengthMismatch {
                    observed: n,
                    predicted: other,
                });
            }
        }
        let normalize = spec.family == Family::IrdJoint && spec.metric != Metric::Mape;
        let channels = match spec.family {
            Family::DOnly => vec![(Compartment::D, Channel::new(observed.deaths, false))],
            Family::IrdJoint => vec![
                (Compartment::I, Channel::new(observed.infectious, normalize)),
                (Compartment::R, Channel::new(observed.recovered, normalize)),
                (Compartment::D, Channel::new(observed.deaths, normalize)),
            ],
        };
        Ok(Self { spec, channels, len: n })
    }

    pub fn spec(&self) -> ObjectiveSpec {
        self.spec
    }

    /// Cost of a simulated window; `+inf` for a non-finite trajectory.
    pub fn evaluate(&self, predicted: &Trajectory) -> Result<f64, ObjectiveError> {
        if predicted.len() != self.len {
            return Err(ObjectiveError::LengthMismatch {
                observed: self.len,
                predicted: predicted.len(),
            });
        }
        if !predicted.states.iter().all(|s| s.is_finite()) {
            return Ok(f64::INFINITY);
        }
        let mut worst = 0.0f64;
        for (compartment, channel) in &self.channels {
            let series = match compartment {
                Compartment::I => predicted.infectious(),
                Compartment::R => predicted.recovered(),
                Compartment::D => predicted.deaths(),
            };
            let cost = channel.cost(self.spec.metric, &series);
            if cost.is_nan() {
                return Ok(f64::INFINITY);
            }
            worst = worst.max(cost);
        }
        Ok(worst)
    }
}

/// Objective value of `predicted` against the reported window.
pub fn objective_value(
    spec: ObjectiveSpec,
    observed: ObservedWindow<'_>,
    predicted: &Trajectory,
) -> Result<f64, ObjectiveError> {
    WindowObjective::new(spec, observed)?.evaluate(predicted)
}

/// Coefficient of determination on the deaths compartment; may be negative.
pub fn r_squared_d(observed_d: &[f64], predicted_d: &[f64]) -> Result<f64, ObjectiveError> {
    check_lengths(observed_d, predicted_d)?;
    let mean = observed_d.iter().sum::<f64>() / observed_d.len() as f64;
    let ss_tot: f64 = observed_d.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(ObjectiveError::ConstantObserved);
    }
    let ss_res: f64 = observed_d
        .iter()
        .zip(predicted_d)
        .map(|(y, p)| (y - p).powi(2))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}
