//! Sensor placement for the fixed-mesh and free-mesh protocols.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::streams::{stream, Purpose};
use crate::error::{Error, Result};
use crate::operators::SensorSet;

/// `Fix`: one sensor set shared by every sample. `Free`: every sample draws
/// its own.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    Fix,
    Free,
}

impl fmt::Display for SamplingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplingMode::Fix => "fix",
            SamplingMode::Free => "free",
        })
    }
}

impl FromStr for SamplingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fix" => Ok(SamplingMode::Fix),
            "free" => Ok(SamplingMode::Free),
            other => Err(Error::config(format!("unknown sampling mode '{other}' (expected fix or free)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SensorLayout {
    /// `lo + (hi - lo) j / n` for `j = 0..n`; deterministic.
    Uniform { lo: f64, hi: f64, n: usize },
    /// One uniform draw inside each of `n` equal subintervals of `[lo, hi)`.
    Stratified { lo: f64, hi: f64, n: usize },
    /// One uniform draw inside each cell of a `cells x cells` partition of
    /// the unit square, cells ordered x1-major.
    StratifiedSquare { cells: usize },
}

impl SensorLayout {
    pub fn n_sensors(&self) -> usize {
        match *self {
            SensorLayout::Uniform { n, .. } | SensorLayout::Stratified { n, .. } => n,
            SensorLayout::StratifiedSquare { cells } => cells * cells,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SensorLayout::StratifiedSquare { .. } => 2,
            _ => 1,
        }
    }
}

/// Draws one sensor set from `layout`.
pub fn sample_sensors(layout: &SensorLayout, rng: &mut ChaCha8Rng) -> SensorSet {
    match *layout {
        SensorLayout::Uniform { lo, hi, n } => {
            SensorSet::from_scalars((0..n).map(|j| lo + (hi - lo) * j as f64 / n as f64).collect())
        }
        SensorLayout::Stratified { lo, hi, n } => {
            let width = (hi - lo) / n as f64;
            SensorSet::from_scalars(
                (0..n)
                    .map(|j| lo + width * (j as f64 + rng.gen::<f64>()))
                    .collect(),
            )
        }
        SensorLayout::StratifiedSquare { cells } => {
            let width = 1.0 / cells as f64;
            let mut coords = Vec::with_capacity(2 * cells * cells);
            for i in 0..cells {
                for j in 0..cells {
                    coords.push(width * (i as f64 + rng.gen::<f64>()));
                    coords.push(width * (j as f64 + rng.gen::<f64>()));
                }
            }
            SensorSet::new(2, coords).expect("even coordinate count")
        }
    }
}

/// Hands out the sensors of sample `index`. In fix mode the set is drawn
/// once from the master seed; in free mode each `(split, index)` pair owns an
/// independent stream.
#[derive(Clone, Debug)]
pub struct SensorSampler {
    mode: SamplingMode,
    layout: SensorLayout,
    seed: u64,
    fixed: Option<SensorSet>,
}

impl SensorSampler {
    pub fn new(mode: SamplingMode, layout: SensorLayout, seed: u64) -> Result<Self> {
        if layout.n_sensors() == 0 {
            return Err(Error::config("sensor layout has no points"));
        }
        if let SensorLayout::Uniform { lo, hi, .. } | SensorLayout::Stratified { lo, hi, .. } = layout {
            if !(lo < hi) {
                return Err(Error::config(format!("empty sensor interval [{lo}, {hi})")));
            }
        }
        let fixed = match mode {
            SamplingMode::Fix => Some(sample_sensors(&layout, &mut stream(seed, Purpose::FixedSensors, 0))),
            SamplingMode::Free => None,
        };
        Ok(SensorSampler {
            mode,
            layout,
            seed,
            fixed,
        })
    }

    pub fn mode(&self) -> SamplingMode {
        self.mode
    }

    pub fn layout(&self) -> &SensorLayout {
        &self.layout
    }

    /// Sensors of sample `index` in the split whose streams use `purpose`.
    pub fn sensors(&self, purpose: Purpose, index: u64) -> SensorSet {
        match &self.fixed {
            Some(set) => set.clone(),
            None => sample_sensors(&self.layout, &mut stream(self.seed, purpose, index)),
        }
    }
}
