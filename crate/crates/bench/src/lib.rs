//! Shared inputs for the criterion benchmarks.

use volscale_core::fractional::{simulate_fbm, FbmParams};

/// Daily fBm path used by the moment and regression benchmarks.
pub fn daily_fbm(hurst: f64, days: usize, seed: u64) -> Vec<f64> {
    simulate_fbm(&FbmParams {
        hurst,
        scale: 1.0,
        step: 1.0,
        length: days,
        seed,
    })
    .expect("valid benchmark parameters")
    .values
}
