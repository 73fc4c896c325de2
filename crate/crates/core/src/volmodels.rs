//! Variance models (RFSV, geometric Brownian variance), the multiplicative
//! observation-noise model, and intraday price synthesis from a variance path.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fractional::{simulate_fbm_with, FbmParams, FgnMethod, FgnSampler};
use crate::proxies::{DailyProxySeries, ProxyKind};
use crate::rng::{self, streams};
use crate::series::{PathKind, PathSeries};

/// Observation noisy variance values are floored at this multiple of the
/// path median.
pub const NOISE_FLOOR_FRACTION: f64 = 1e-12;

/// `sigma_t = sigma_base * exp(vol_of_vol * B^H_t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfsvParams {
    /// Daily volatility level.
    pub sigma_base: f64,
    pub vol_of_vol: f64,
    pub hurst: f64,
    pub days: usize,
    pub steps_per_day: u32,
    pub seed: u64,
}

impl RfsvParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_base > 0.0) {
            return Err(invalid("sigma_base must be positive"));
        }
        if !(self.vol_of_vol > 0.0) {
            return Err(invalid("vol_of_vol must be positive"));
        }
        if self.days == 0 || self.steps_per_day == 0 {
            return Err(invalid("days and steps_per_day must be positive"));
        }
        self.fbm().validate()
    }

    pub fn len(&self) -> usize {
        self.days * self.steps_per_day as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Driving fBm of the log-volatility, already scaled by `vol_of_vol`.
    pub fn fbm(&self) -> FbmParams {
        FbmParams {
            hurst: self.hurst,
            scale: self.vol_of_vol,
            step: 1.0 / self.steps_per_day as f64,
            length: self.len(),
            seed: self.seed,
        }
    }
}

/// `sigma_t^2 = sigma0^2 exp(beta B_t - beta^2 t / 2)`, `t` in days.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbmVarianceParams {
    pub sigma0: f64,
    /// Volatility of the variance, per square-root day.
    pub beta: f64,
    pub days: usize,
    pub steps_per_day: u32,
    pub seed: u64,
}

impl GbmVarianceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma0 > 0.0) {
            return Err(invalid("sigma0 must be positive"));
        }
        if !(self.beta > 0.0) {
            return Err(invalid("beta must be positive"));
        }
        if self.days == 0 || self.steps_per_day == 0 {
            return Err(invalid("days and steps_per_day must be positive"));
        }
        Ok(())
    }
}

/// Multiplicative observation noise `sigma^2 (1 + relative_sd Z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub relative_sd: f64,
    pub seed: u64,
}

impl NoiseSpec {
    /// Noise level of a realized variance from `n` intraday returns.
    pub fn from_intraday_count(n: u32, seed: u64) -> Self {
        Self {
            relative_sd: crate::noisecal::measurement_relative_sd(n),
            seed,
        }
    }
}

/// RFSV spot variance `sigma_base^2 exp(2 vol_of_vol B^H_t)` sampled at
/// `t = i / steps_per_day`, `i = 0 .. days * steps_per_day`.
pub fn simulate_rfsv_variance(params: &RfsvParams) -> Result<PathSeries> {
    params.validate()?;
    let sampler = FgnSampler::new(params.hurst, params.len() - 1, FgnMethod::Auto)?;
    rfsv_variance_with(&sampler, params)
}

/// As [`simulate_rfsv_variance`] with a sampler for `len - 1` increments.
pub fn rfsv_variance_with(sampler: &FgnSampler, params: &RfsvParams) -> Result<PathSeries> {
    params.validate()?;
    let fbm = simulate_fbm_with(sampler, &params.fbm())?;
    let base = params.sigma_base * params.sigma_base;
    let values = fbm.values.iter().map(|b| base * (2.0 * b).exp()).collect();
    Ok(PathSeries::new(values, fbm.step, PathKind::Variance))
}

/// Exact lognormal variance path at `t = i / steps_per_day`, starting at
/// `sigma0^2`.
pub fn simulate_gbm_variance(params: &GbmVarianceParams) -> Result<PathSeries> {
    params.validate()?;
    let n = params.days * params.steps_per_day as usize;
    let h = 1.0 / params.steps_per_day as f64;
    let sqrt_h = h.sqrt();
    let mut rng = rng::stream(params.seed, streams::BROWNIAN);
    let v0 = params.sigma0 * params.sigma0;
    let drift = -0.5 * params.beta * params.beta;
    let mut b = 0.0;
    let mut values = Vec::with_capacity(n);
    values.push(v0);
    for i in 1..n {
        let z: f64 = rng.sample(StandardNormal);
        b += sqrt_h * z;
        let t = i as f64 * h;
        values.push(v0 * (params.beta * b + drift * t).exp());
    }
    Ok(PathSeries::new(values, h, PathKind::Variance))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyProxy {
    pub series: DailyProxySeries,
    /// Days whose noisy value fell to or below zero and was floored.
    pub floored: usize,
}

/// `sigma^2_t (1 + relative_sd Z_t)` with i.i.d. standard Gaussian `Z_t`.
///
/// Non-positive results are floored at `1e-12` times the median of the input
/// path. The output counts one intraday observation per day.
pub fn add_observation_noise(variance_path: &PathSeries, noise: &NoiseSpec) -> Result<NoisyProxy> {
    if !(noise.relative_sd >= 0.0 && noise.relative_sd.is_finite()) {
        return Err(invalid("relative_sd must be non-negative"));
    }
    if (variance_path.step - 1.0).abs() > 1e-9 {
        return Err(invalid(format!(
            "observation noise applies to daily samples, path step is {} days",
            variance_path.step
        )));
    }
    if let Some(index) = variance_path.values.iter().position(|v| !(*v > 0.0)) {
        return Err(crate::Error::NonPositive {
            index,
            value: variance_path.values[index],
        });
    }
    let mut sorted = variance_path.values.clone();
    sorted.sort_by(f64::total_cmp);
    let floor = NOISE_FLOOR_FRACTION * sorted[sorted.len() / 2];

    let mut rng = rng::stream(noise.seed, streams::OBSERVATION);
    let mut floored = 0;
    let values = variance_path
        .values
        .iter()
        .map(|&v| {
            let z: f64 = rng.sample(StandardNormal);
            let noisy = v * (1.0 + noise.relative_sd * z);
            if noisy > floor {
                noisy
            } else {
                floored += 1;
                floor
            }
        })
        .collect();
    if floored > 0 {
        log::warn!("{floored} noisy variance values floored at {floor:e}");
    }
    Ok(NoisyProxy {
        series: DailyProxySeries::new(values, ProxyKind::Variance, 1)?,
        floored,
    })
}

/// Zero-drift log-price driven by a variance path.
///
/// Each variance sample is held for `substeps` price steps of length
/// `delta = step / substeps`, with increments `sigma sqrt(delta) Z - sigma^2 delta / 2`.
/// The output starts at 0 and has `len * substeps + 1` samples.
pub fn simulate_price_path(
    variance_path: &PathSeries,
    substeps: u32,
    seed: u64,
) -> Result<PathSeries> {
    if substeps == 0 {
        return Err(invalid("substeps must be at least 1"));
    }
    if let Some(index) = variance_path.values.iter().position(|v| !(*v >= 0.0)) {
        return Err(crate::Error::NonPositive {
            index,
            value: variance_path.values[index],
        });
    }
    let delta = variance_path.step / substeps as f64;
    let sqrt_delta = delta.sqrt();
    let mut rng = rng::stream(seed, streams::PRICE);
    let mut values = Vec::with_capacity(variance_path.len() * substeps as usize + 1);
    let mut x = 0.0;
    values.push(x);
    for &var in &variance_path.values {
        let vol = var.sqrt() * sqrt_delta;
        let drift = -0.5 * var * delta;
        for _ in 0..substeps {
            let z: f64 = rng.sample(StandardNormal);
            x += vol * z + drift;
            values.push(x);
        }
    }
    Ok(PathSeries::new(values, delta, PathKind::LogPrice))
}
