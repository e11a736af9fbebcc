//! Per-day summaries of a bag of samples.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lower: f64,
    pub upper: f64,
}

impl Band {
    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn contains_band(&self, inner: &Band) -> bool {
        self.lower <= inner.lower && inner.upper <= self.upper
    }
}

fn sorted(samples: &[f64]) -> Vec<f64> {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn median_of_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Linear-interpolation quantile of sorted data, `q` in `[0, 1]`.
pub fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    assert!(!v.is_empty(), "quantile of an empty sample");
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if frac == 0.0 {
        v[lo]
    } else {
        v[lo] + (v[hi] - v[lo]) * frac
    }
}

/// Order-statistic envelope over the values several windows give for one day.
///
/// `outer` spans all samples, `band1` drops the single smallest and largest
/// value, `band2` drops the two smallest and two largest. With fewer than
/// three samples there is nothing to trim and `band1` equals `outer`;
/// `band2` needs at least five samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub samples: usize,
    pub outer: Band,
    pub band1: Band,
    pub band2: Option<Band>,
    pub median: f64,
}

impl Envelope {
    pub fn from_samples(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let v = sorted(samples);
        let n = v.len();
        let outer = Band::new(v[0], v[n - 1]);
        let band1 = if n >= 3 { Band::new(v[1], v[n - 2]) } else { outer };
        let band2 = (n >= 5).then(|| Band::new(v[2], v[n - 3]));
        Some(Self {
            samples: n,
            outer,
            band1,
            band2,
            median: median_of_sorted(&v),
        })
    }

    pub fn is_nested(&self) -> bool {
        self.outer.contains_band(&self.band1)
            && self.outer.contains(self.median)
            && match self.band2 {
                Some(b2) => self.band1.contains_band(&b2) && b2.contains(self.median),
                None => true,
            }
    }
}

/// Central 50/90/95% bands around the median of repeated-run samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileBands {
    pub samples: usize,
    pub median: f64,
    pub band50: Band,
    pub band90: Band,
    pub band95: Band,
}

impl QuantileBands {
    pub fn from_samples(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let v = sorted(samples);
        let central = |lo: f64, hi: f64| Band::new(quantile_sorted(&v, lo), quantile_sorted(&v, hi));
        Some(Self {
            samples: v.len(),
            median: quantile_sorted(&v, 0.5),
            band50: central(0.25, 0.75),
            band90: central(0.05, 0.95),
            band95: central(0.025, 0.975),
        })
    }

    pub fn is_nested(&self) -> bool {
        self.band95.contains_band(&self.band90)
            && self.band90.contains_band(&self.band50)
            && self.band50.contains(self.median)
    }
}

/// A value attached to a day index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Daily<T> {
    pub day: usize,
    pub value: T,
}
