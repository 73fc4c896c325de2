//! Exact simulation of fractional Gaussian noise, fractional Brownian motion
//! and fractional Ornstein-Uhlenbeck paths, with the closed-form fBm moments.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{num_complex::Complex, Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{invalid, Error, Result};
use crate::rng::{self, streams, StreamRng};
use crate::series::{PathKind, PathSeries};

/// Largest length for which the dense Cholesky fallback is attempted.
pub const CHOLESKY_MAX_LEN: usize = 4096;

/// Largest drift step, as a fraction of the reversion time, used when
/// integrating the fOU drift.
pub const FOU_MAX_DRIFT_STEP: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FbmParams {
    pub hurst: f64,
    /// Scale of the fBm: `Var(B_t) = scale^2 * t^(2 hurst)`, `t` in days.
    pub scale: f64,
    /// Days per sample.
    pub step: f64,
    /// Number of samples.
    pub length: usize,
    pub seed: u64,
}

impl FbmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.hurst > 0.0 && self.hurst < 1.0) {
            return Err(invalid(format!(
                "hurst must lie in (0, 1), got {}",
                self.hurst
            )));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(invalid(format!(
                "scale must be positive, got {}",
                self.scale
            )));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(invalid(format!("step must be positive, got {}", self.step)));
        }
        if self.length < 2 {
            return Err(invalid(format!(
                "length must be at least 2, got {}",
                self.length
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FouParams {
    pub base: FbmParams,
    /// Mean-reversion frequency, per day.
    pub reversion_rate: f64,
    pub long_mean: f64,
}

impl FouParams {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if !(self.reversion_rate >= 0.0 && self.reversion_rate.is_finite()) {
            return Err(invalid(format!(
                "reversion_rate must be non-negative, got {}",
                self.reversion_rate
            )));
        }
        if !self.long_mean.is_finite() {
            return Err(invalid("long_mean must be finite"));
        }
        Ok(())
    }
}

/// `E[B_s B_t] = (scale^2 / 2)(|s|^2H + |t|^2H - |s - t|^2H)`.
pub fn fbm_covariance(s: f64, t: f64, params: &FbmParams) -> f64 {
    let two_h = 2.0 * params.hurst;
    0.5 * params.scale
        * params.scale
        * (s.abs().powf(two_h) + t.abs().powf(two_h) - (s - t).abs().powf(two_h))
}

/// `E|B_t - B_{t-tau}|^k`.
pub fn fbm_abs_moment(tau: f64, k: f64, params: &FbmParams) -> f64 {
    gaussian_abs_moment_factor(k) * params.scale.powf(k) * tau.powf(k * params.hurst)
}

/// `E|Z|^k` for a standard Gaussian `Z`: `2^(k/2) Γ((k+1)/2) / Γ(1/2)`.
pub fn gaussian_abs_moment_factor(k: f64) -> f64 {
    if k == 2.0 {
        return 1.0;
    }
    2f64.powf(k / 2.0) * gamma((k + 1.0) / 2.0) / std::f64::consts::PI.sqrt()
}

/// Autocovariance of unit-scale, unit-step fGn at lag `lag`.
pub fn fgn_unit_autocovariance(lag: usize, hurst: f64) -> f64 {
    let two_h = 2.0 * hurst;
    let j = lag as f64;
    0.5 * ((j + 1.0).powf(two_h) - 2.0 * j.powf(two_h) + (j - 1.0).abs().powf(two_h))
}

/// Autocovariance of the fGn produced by [`simulate_fgn`] at lag `lag`.
pub fn fgn_autocovariance(lag: usize, params: &FbmParams) -> f64 {
    params.scale
        * params.scale
        * params.step.powf(2.0 * params.hurst)
        * fgn_unit_autocovariance(lag, params.hurst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FgnMethod {
    /// Circulant embedding with the Cholesky fallback for short paths.
    Auto,
    CirculantEmbedding,
    Cholesky,
}

/// Reusable exact sampler of unit-scale, unit-step fGn of a fixed length.
///
/// Building a sampler costs one FFT; every draw costs one more. Monte-Carlo
/// loops should build it once and share it across paths.
pub struct FgnSampler {
    len: usize,
    inner: SamplerKind,
}

enum SamplerKind {
    Circulant {
        sqrt_eigs: Vec<f64>,
        fft: Arc<dyn Fft<f64>>,
    },
    Cholesky {
        // Row-major lower triangle, row i holds entries 0..=i.
        lower: Vec<f64>,
    },
}

impl FgnSampler {
    pub fn new(hurst: f64, len: usize, method: FgnMethod) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 1.0) {
            return Err(invalid(format!("hurst must lie in (0, 1), got {hurst}")));
        }
        if len == 0 {
            return Err(invalid("fGn length must be positive"));
        }
        match method {
            FgnMethod::CirculantEmbedding => Self::circulant(hurst, len),
            FgnMethod::Cholesky => Self::cholesky(hurst, len),
            FgnMethod::Auto => match Self::circulant(hurst, len) {
                Ok(s) => Ok(s),
                Err(Error::EmbeddingFailed(msg)) if len <= CHOLESKY_MAX_LEN => {
                    log::warn!("{msg}; falling back to Cholesky");
                    Self::cholesky(hurst, len)
                }
                Err(e) => Err(e),
            },
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn circulant(hurst: f64, len: usize) -> Result<Self> {
        let half = len.next_power_of_two();
        let m = 2 * half;
        let mut row: Vec<Complex<f64>> = (0..m)
            .map(|i| {
                let lag = if i <= half { i } else { m - i };
                Complex::new(fgn_unit_autocovariance(lag, hurst), 0.0)
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(m);
        fft.process(&mut row);
        let max = row.iter().map(|c| c.re).fold(0.0, f64::max);
        let tol = 1e-10 * max.max(1.0);
        let mut sqrt_eigs = Vec::with_capacity(m);
        for (i, c) in row.iter().enumerate() {
            if c.re < -tol {
                return Err(Error::EmbeddingFailed(format!(
                    "eigenvalue {} = {:.3e} is negative (H = {hurst}, n = {len})",
                    i, c.re
                )));
            }
            sqrt_eigs.push((c.re.max(0.0) / m as f64).sqrt());
        }
        Ok(Self {
            len,
            inner: SamplerKind::Circulant { sqrt_eigs, fft },
        })
    }

    fn cholesky(hurst: f64, len: usize) -> Result<Self> {
        if len > CHOLESKY_MAX_LEN {
            return Err(invalid(format!(
                "Cholesky generation limited to {CHOLESKY_MAX_LEN} samples, requested {len}"
            )));
        }
        let gamma: Vec<f64> = (0..len)
            .map(|j| fgn_unit_autocovariance(j, hurst))
            .collect();
        let idx = |i: usize, j: usize| i * (i + 1) / 2 + j;
        let mut lower = vec![0.0; len * (len + 1) / 2];
        for i in 0..len {
            for j in 0..=i {
                let mut sum = gamma[i - j];
                for p in 0..j {
                    sum -= lower[idx(i, p)] * lower[idx(j, p)];
                }
                if i == j {
                    if sum <= 0.0 {
                        return Err(Error::Numerical(format!(
                            "covariance matrix not positive definite at row {i}"
                        )));
                    }
                    lower[idx(i, i)] = sum.sqrt();
                } else {
                    lower[idx(i, j)] = sum / lower[idx(j, j)];
                }
            }
        }
        Ok(Self {
            len,
            inner: SamplerKind::Cholesky { lower },
        })
    }

    /// One draw of unit-scale, unit-step fGn.
    pub fn sample(&self, rng: &mut StreamRng) -> Vec<f64> {
        match &self.inner {
            SamplerKind::Circulant { sqrt_eigs, fft } => {
                let mut w: Vec<Complex<f64>> = sqrt_eigs
                    .iter()
                    .map(|&s| {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = rng.sample(StandardNormal);
                        Complex::new(s * re, s * im)
                    })
                    .collect();
                fft.process(&mut w);
                w.iter().take(self.len).map(|c| c.re).collect()
            }
            SamplerKind::Cholesky { lower } => {
                let z: Vec<f64> = (0..self.len).map(|_| rng.sample(StandardNormal)).collect();
                (0..self.len)
                    .map(|i| {
                        let row = &lower[i * (i + 1) / 2..=i * (i + 1) / 2 + i];
                        row.iter().zip(&z).map(|(l, z)| l * z).sum()
                    })
                    .collect()
            }
        }
    }
}

/// `params.length` fGn increments; their cumulative sum is an fBm sample.
pub fn simulate_fgn(params: &FbmParams) -> Result<PathSeries> {
    simulate_fgn_with(params, FgnMethod::Auto)
}

pub fn simulate_fgn_with(params: &FbmParams, method: FgnMethod) -> Result<PathSeries> {
    params.validate()?;
    let sampler = FgnSampler::new(params.hurst, params.length, method)?;
    Ok(PathSeries::new(
        scaled_fgn(&sampler, params, params.step),
        params.step,
        PathKind::Increments,
    ))
}

fn scaled_fgn(sampler: &FgnSampler, params: &FbmParams, step: f64) -> Vec<f64> {
    let mut rng = rng::stream(params.seed, streams::FRACTIONAL_NOISE);
    let factor = params.scale * step.powf(params.hurst);
    let mut noise = sampler.sample(&mut rng);
    noise.iter_mut().for_each(|x| *x *= factor);
    noise
}

/// fBm sampled at `0, step, ..., (length - 1) step`, starting from 0.
///
/// The increments are `simulate_fgn` with `length - 1` samples and the same
/// seed.
pub fn simulate_fbm(params: &FbmParams) -> Result<PathSeries> {
    params.validate()?;
    let sampler = FgnSampler::new(params.hurst, params.length - 1, FgnMethod::Auto)?;
    simulate_fbm_with(&sampler, params)
}

/// As [`simulate_fbm`], reusing a sampler built for `params.length - 1`
/// increments.
pub fn simulate_fbm_with(sampler: &FgnSampler, params: &FbmParams) -> Result<PathSeries> {
    params.validate()?;
    if sampler.len() != params.length - 1 {
        return Err(invalid(format!(
            "sampler built for {} increments, path needs {}",
            sampler.len(),
            params.length - 1
        )));
    }
    let noise = scaled_fgn(sampler, params, params.step);
    let mut values = Vec::with_capacity(params.length);
    let mut x = 0.0;
    values.push(x);
    for g in noise {
        x += g;
        values.push(x);
    }
    Ok(PathSeries::new(values, params.step, PathKind::Fractional))
}

/// Number of internal drift sub-steps per output sample.
pub fn fou_substeps(params: &FouParams) -> usize {
    if params.reversion_rate == 0.0 {
        return 1;
    }
    let ratio = params.base.step * params.reversion_rate / FOU_MAX_DRIFT_STEP;
    (ratio.ceil() as usize).max(1)
}

/// fOU path `dX = -rate (X - mean) dt + dB^H`, started at `long_mean`.
///
/// The driving noise is exact fGn on an internal grid fine enough that
/// `rate * h <= 0.1`. Over each internal step the linear drift is integrated
/// exactly and the noise increment is discounted to the step midpoint, so a
/// zero rate reproduces `long_mean + fBm` bit for bit.
pub fn simulate_fou(params: &FouParams) -> Result<PathSeries> {
    params.validate()?;
    let sub = fou_substeps(params);
    let base = &params.base;
    let h = base.step / sub as f64;
    let n_inc = (base.length - 1) * sub;
    let sampler = FgnSampler::new(base.hurst, n_inc, FgnMethod::Auto)?;
    let noise = scaled_fgn(&sampler, base, h);

    let decay = (-params.reversion_rate * h).exp();
    let weight = (-0.5 * params.reversion_rate * h).exp();
    let mean = params.long_mean;
    let mut values = Vec::with_capacity(base.length);
    let mut x = mean;
    values.push(x);
    for (i, g) in noise.into_iter().enumerate() {
        x = mean + decay * (x - mean) + weight * g;
        if (i + 1) % sub == 0 {
            values.push(x);
        }
    }
    Ok(PathSeries::new(values, base.step, PathKind::Fractional))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(hurst: f64, scale: f64, length: usize, seed: u64) -> FbmParams {
        FbmParams {
            hurst,
            scale,
            step: 1.0,
            length,
            seed,
        }
    }

    #[test]
    fn covariance_examples() {
        assert_relative_eq!(fbm_covariance(1.0, 1.0, &params(0.5, 1.0, 2, 0)), 1.0);
        assert_relative_eq!(fbm_covariance(1.0, 2.0, &params(0.5, 1.0, 2, 0)), 1.0);
        assert_relative_eq!(
            fbm_covariance(1.0, 2.0, &params(0.25, 1.0, 2, 0)),
            0.5 * 2f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn abs_moment_examples() {
        let p = params(0.37, 1.7, 2, 0);
        assert_relative_eq!(
            fbm_abs_moment(3.0, 2.0, &p),
            1.7 * 1.7 * 3f64.powf(0.74),
            max_relative = 1e-14
        );
        assert_relative_eq!(
            fbm_abs_moment(1.0, 1.0, &params(0.5, 1.0, 2, 0)),
            (2.0 / std::f64::consts::PI).sqrt(),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            fbm_abs_moment(4.0, 2.0, &params(0.1, 2.0, 2, 0)),
            4.0 * 4f64.powf(0.2),
            max_relative = 1e-12
        );
        // k = 4: E Z^4 = 3
        assert_relative_eq!(gaussian_abs_moment_factor(4.0), 3.0, max_relative = 1e-12);
    }

    #[test]
    fn variance_self_consistency() {
        let p = params(0.3, 0.8, 2, 0);
        for t in [0.5, 1.0, 7.0, 100.0] {
            assert_relative_eq!(
                fbm_covariance(t, t, &p),
                fbm_abs_moment(t, 2.0, &p),
                max_relative = 1e-13
            );
        }
    }

    #[test]
    fn brownian_increments_are_uncorrelated() {
        for j in 1..20 {
            assert_eq!(fgn_unit_autocovariance(j, 0.5), 0.0);
        }
        assert_eq!(fgn_unit_autocovariance(0, 0.5), 1.0);
    }

    #[test]
    fn same_seed_same_path() {
        let p = params(0.2, 1.0, 1000, 11);
        assert_eq!(simulate_fgn(&p).unwrap(), simulate_fgn(&p).unwrap());
        let q = FbmParams { seed: 12, ..p };
        assert_ne!(simulate_fgn(&p).unwrap(), simulate_fgn(&q).unwrap());
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(simulate_fgn(&params(1.0, 1.0, 10, 0)).is_err());
        assert!(simulate_fgn(&params(0.5, 0.0, 10, 0)).is_err());
        assert!(simulate_fgn(&params(0.5, 1.0, 1, 0)).is_err());
        assert!(FgnSampler::new(0.3, CHOLESKY_MAX_LEN + 1, FgnMethod::Cholesky).is_err());
    }

    #[test]
    fn fgn_autocovariance_matches_closed_form() {
        // H = 0.8, paths of 10^5 samples: lags 1..5 within 3 standard errors,
        // the standard error taken across independent paths.
        let n = 100_000;
        let hurst = 0.8;
        let paths = 12;
        let sampler = FgnSampler::new(hurst, n, FgnMethod::Auto).unwrap();
        let estimates: Vec<Vec<f64>> = (0..paths)
            .map(|seed| {
                let x = sampler.sample(&mut rng::stream(1000 + seed, 0));
                (1..=5)
                    .map(|lag| {
                        (0..n - lag).map(|i| x[i] * x[i + lag]).sum::<f64>() / (n - lag) as f64
                    })
                    .collect()
            })
            .collect();
        for lag in 1..=5 {
            let vals: Vec<f64> = estimates.iter().map(|e| e[lag - 1]).collect();
            let m = vals.iter().sum::<f64>() / paths as f64;
            let sd =
                (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (paths - 1) as f64).sqrt();
            let se = sd / (paths as f64).sqrt();
            let expected = fgn_unit_autocovariance(lag, hurst);
            assert!(
                (m - expected).abs() < 3.0 * se,
                "lag {lag}: {m} vs {expected} (se {se})"
            );
        }
    }

    #[test]
    fn two_point_law_matches_cholesky_oracle() {
        // Exact 2x2 law: Var = 1, correlation = 2^(2H-1) - 1.
        for method in [FgnMethod::CirculantEmbedding, FgnMethod::Cholesky] {
            let hurst = 0.8;
            let rho = 2f64.powf(2.0 * hurst - 1.0) - 1.0;
            let sampler = FgnSampler::new(hurst, 2, method).unwrap();
            let reps = 40_000;
            let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
            for seed in 0..reps {
                let mut r = rng::stream(seed, 0);
                let v = sampler.sample(&mut r);
                sxx += v[0] * v[0];
                syy += v[1] * v[1];
                sxy += v[0] * v[1];
            }
            let n = reps as f64;
            let corr = sxy / (sxx * syy).sqrt();
            let se = (1.0 - rho * rho) / n.sqrt();
            assert!((corr - rho).abs() < 4.0 * se, "{method:?}: {corr} vs {rho}");
            assert!((sxx / n - 1.0).abs() < 4.0 * (2.0 / n).sqrt());
        }
    }

    #[test]
    fn cholesky_factor_reproduces_covariance() {
        let hurst = 0.3;
        let s = FgnSampler::new(hurst, 6, FgnMethod::Cholesky).unwrap();
        let SamplerKind::Cholesky { lower } = &s.inner else {
            unreachable!()
        };
        let idx = |i: usize, j: usize| i * (i + 1) / 2 + j;
        for i in 0..6 {
            for j in 0..=i {
                let c: f64 = (0..=j).map(|p| lower[idx(i, p)] * lower[idx(j, p)]).sum();
                assert_relative_eq!(c, fgn_unit_autocovariance(i - j, hurst), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn fbm_is_cumulative_fgn() {
        let p = params(0.3, 0.5, 500, 9);
        let fbm = simulate_fbm(&p).unwrap();
        let fgn = simulate_fgn(&FbmParams { length: 499, ..p }).unwrap();
        assert_eq!(fbm.values[0], 0.0);
        let mut acc = 0.0;
        for (i, g) in fgn.values.iter().enumerate() {
            acc += g;
            assert_eq!(fbm.values[i + 1], acc);
        }
    }

    #[test]
    fn fou_without_reversion_is_fbm() {
        let base = params(0.2, 0.7, 800, 5);
        let fou = simulate_fou(&FouParams {
            base,
            reversion_rate: 0.0,
            long_mean: 0.0,
        })
        .unwrap();
        assert_eq!(fou.values, simulate_fbm(&base).unwrap().values);

        let shifted = simulate_fou(&FouParams {
            base,
            reversion_rate: 0.0,
            long_mean: 3.0,
        })
        .unwrap();
        for (a, b) in shifted.values.iter().zip(&fou.values) {
            assert_relative_eq!(*a, b + 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn fou_substep_rule() {
        let base = FbmParams {
            step: 1.0,
            ..params(0.5, 1.0, 10, 0)
        };
        let p = |rate| FouParams {
            base,
            reversion_rate: rate,
            long_mean: 0.0,
        };
        assert_eq!(fou_substeps(&p(0.0)), 1);
        assert_eq!(fou_substeps(&p(0.05)), 1);
        assert_eq!(fou_substeps(&p(10.0)), 100);
    }

    #[test]
    fn ou_stationary_variance() {
        // Classical OU: stationary variance scale^2 / (2 rate).
        let rate = 10.0;
        let scale = 1.0;
        let target = scale * scale / (2.0 * rate);
        let seeds = 50;
        let mut means = Vec::new();
        for seed in 0..seeds {
            let path = simulate_fou(&FouParams {
                base: FbmParams {
                    hurst: 0.5,
                    scale,
                    step: 0.05,
                    length: 4000,
                    seed,
                },
                reversion_rate: rate,
                long_mean: 0.0,
            })
            .unwrap();
            let tail = &path.values[200..];
            means.push(tail.iter().map(|x| x * x).sum::<f64>() / tail.len() as f64);
        }
        let m = means.iter().sum::<f64>() / seeds as f64;
        let sd = (means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (seeds - 1) as f64).sqrt();
        let se = sd / (seeds as f64).sqrt();
        assert!((m - target).abs() < 3.0 * se, "{m} vs {target} (se {se})");
    }
}
