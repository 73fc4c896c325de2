//! Closed-form noise calculus for daily variance proxies.
//!
//! Two distortions separate the observed proxy from the spot variance:
//!
//! * measurement noise: realized variance from `n` returns differs from the
//!   integrated variance by an asymptotically Gaussian error of variance
//!   `2 sigma^4 / n`;
//! * smoothing error: increments of a day-averaged variance are not
//!   increments of the spot variance. When the spot variance is an fBm with
//!   Hurst exponent `H`, the increment variance at lag `tau` days is
//!   `xi^2 tau^2H f(tau, H)` in the continuous-averaging limit.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingSpec {
    pub hurst: f64,
    /// Scale of the spot-variance fBm.
    pub xi: f64,
    /// Days averaged by one proxy value.
    pub d: u32,
    /// Spot samples averaged by one proxy value.
    pub n_samples: u32,
}

impl SmoothingSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.hurst > 0.0 && self.hurst < 1.0) {
            return Err(invalid(format!(
                "hurst must lie in (0, 1), got {}",
                self.hurst
            )));
        }
        if !(self.xi > 0.0) {
            return Err(invalid(format!("xi must be positive, got {}", self.xi)));
        }
        if self.d == 0 || self.n_samples == 0 {
            return Err(invalid("d and N must be positive"));
        }
        Ok(())
    }
}

/// Variance `2 sigma2^2 / n` of the realized-variance measurement error.
pub fn measurement_noise_variance(sigma2: f64, n: u32) -> f64 {
    2.0 * sigma2 * sigma2 / n as f64
}

/// Relative standard deviation `sqrt(2 / n)` of the realized variance.
pub fn measurement_relative_sd(n: u32) -> f64 {
    (2.0 / n as f64).sqrt()
}

/// Exact variance of a `tau * d`-day increment of the averaged proxy
/// `(d / N) sum_{i<N} sigma^2_{t - i d / N}` when `sigma^2` is an fBm:
///
/// `xi^2 (d/N)^2 sum_{i,j<N} (|tau d + (j-i) d/N|^2H - |(j-i) d/N|^2H)`.
///
/// The double sum is grouped by lag `m = j - i`, which occurs `N - |m|`
/// times.
pub fn smoothing_variance_finite(tau: u32, spec: &SmoothingSpec) -> f64 {
    let two_h = 2.0 * spec.hurst;
    let n = spec.n_samples as i64;
    let d = spec.d as f64;
    let spacing = d / n as f64;
    let shift = tau as f64 * d;
    let mut sum = 0.0;
    for m in -(n - 1)..n {
        let weight = (n - m.abs()) as f64;
        let lag = m as f64 * spacing;
        sum += weight * ((shift + lag).abs().powf(two_h) - lag.abs().powf(two_h));
    }
    spec.xi * spec.xi * spacing * spacing * sum
}

/// Smoothing factor
/// `f(tau, H) = tau^2 / ((2H+1)(2H+2)) ((1 + 1/tau)^(2H+2) - 2 - 2 (1/tau)^(2H+2) + (1 - 1/tau)^(2H+2))`.
///
/// For `tau >= 2` the bracket is expanded as a binomial series in `1/tau`,
/// which avoids the cancellation of the direct form at large `tau`.
pub fn smoothing_factor(tau: f64, hurst: f64) -> f64 {
    let a = 2.0 * hurst + 2.0;
    let norm = a * (a - 1.0);
    let x = 1.0 / tau;
    if tau < 2.0 {
        let bracket = (1.0 + x).powf(a) - 2.0 - 2.0 * x.powf(a) + (1.0 - x).powf(a);
        return tau * tau * bracket / norm;
    }
    // (1+x)^a + (1-x)^a - 2 = 2 sum_{k>=1} C(a, 2k) x^2k
    let x2 = x * x;
    let mut coeff = a * (a - 1.0) / 2.0; // C(a, 2)
    let mut power = 1.0; // x^(2k - 2)
    let mut series = 0.0;
    let mut k = 1;
    loop {
        let term = coeff * power;
        series += term;
        if term.abs() <= 1e-18 * series.abs() || k > 200 {
            break;
        }
        let j = 2.0 * k as f64;
        coeff *= (a - j) * (a - j - 1.0) / ((j + 1.0) * (j + 2.0));
        power *= x2;
        k += 1;
    }
    (2.0 * series - 2.0 * x.powf(a - 2.0)) / norm
}

/// Perceived Hurst exponent of the averaged proxy from the two-point slope
/// between scales `tau1 < tau2`, under smoothing error alone.
pub fn perceived_hurst_bias(h_in: f64, n_samples: u32, d: u32, scales: (u32, u32)) -> Result<f64> {
    let (tau1, tau2) = scales;
    if tau1 == 0 || tau1 >= tau2 {
        return Err(invalid(format!(
            "scale pair must satisfy 0 < tau1 < tau2, got ({tau1}, {tau2})"
        )));
    }
    let spec = SmoothingSpec {
        hurst: h_in,
        xi: 1.0,
        d,
        n_samples,
    };
    spec.validate()?;
    let v1 = smoothing_variance_finite(tau1, &spec);
    let v2 = smoothing_variance_finite(tau2, &spec);
    Ok(0.5 * (v2.ln() - v1.ln()) / ((tau2 as f64).ln() - (tau1 as f64).ln()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub h_in: f64,
    pub n: u32,
    pub d: u32,
    pub tau1: u32,
    pub tau2: u32,
    pub perceived_h: f64,
}

/// Every combination of the inputs, in input order.
pub fn bias_table(
    h_grid: &[f64],
    n_grid: &[u32],
    d: u32,
    pairs: &[(u32, u32)],
) -> Result<Vec<BiasRow>> {
    let mut rows = Vec::with_capacity(h_grid.len() * n_grid.len() * pairs.len());
    for &n in n_grid {
        for &(tau1, tau2) in pairs {
            for &h_in in h_grid {
                rows.push(BiasRow {
                    h_in,
                    n,
                    d,
                    tau1,
                    tau2,
                    perceived_h: perceived_hurst_bias(h_in, n, d, (tau1, tau2))?,
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_bias_csv<W: std::io::Write>(rows: &[BiasRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["h_in", "N", "d", "tau1", "tau2", "perceived_h"])?;
    for r in rows {
        w.write_record([
            r.h_in.to_string(),
            r.n.to_string(),
            r.d.to_string(),
            r.tau1.to_string(),
            r.tau2.to_string(),
            r.perceived_h.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
