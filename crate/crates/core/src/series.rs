use serde::{Deserialize, Serialize};

/// What a [`PathSeries`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    /// Stationary increments (fractional Gaussian noise).
    Increments,
    /// Fractional Brownian motion or a mean-reverting variant of it.
    Fractional,
    /// Spot variance of the log-price.
    Variance,
    /// Log-price.
    LogPrice,
}

/// Uniformly sampled real-valued path. `step` is the sampling interval in days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSeries {
    pub values: Vec<f64>,
    pub step: f64,
    pub kind: PathKind,
}

impl PathSeries {
    pub fn new(values: Vec<f64>, step: f64, kind: PathKind) -> Self {
        Self { values, step, kind }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Keeps every `every`-th sample starting at index 0.
    pub fn subsample(&self, every: usize) -> PathSeries {
        let every = every.max(1);
        PathSeries {
            values: self.values.iter().step_by(every).copied().collect(),
            step: self.step * every as f64,
            kind: self.kind,
        }
    }
}
