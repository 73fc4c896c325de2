//! Seeded simulation studies and the empirical pipeline report.
//!
//! Multi-seed studies fan out over rayon and collect per-seed results in seed
//! order, so every reduction is deterministic regardless of thread count.
//! Seeds are derived from a base seed with [`rng::derive_seed`].

use chrono::{Datelike, Duration, NaiveDate, TimeZone, Utc, Weekday};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::filters::{
    default_hurst_input, filter_curve, measurement_bias_check, FilterConfig, FilterVariant,
    FilteredCurve,
};
use crate::fractional::{
    simulate_fbm_with, simulate_fou, FbmParams, FgnMethod, FgnSampler, FouParams,
};
use crate::ingest::{daily_realized_series, IntradayDays, MinuteBarRecord, MINUTES_PER_DAY};
use crate::moments::{
    abs_moment, build_loglog, convexity_stat, default_tau_grid, regress_hurst, CurvePoint,
    HurstEstimate, Increments, LogLogCurve, ScaleWindow,
};
use crate::noisecal::{smoothing_variance_finite, SmoothingSpec};
use crate::proxies::{
    averaged_spot_variance, convert, realized_variance, DailyProxySeries, ProxyKind,
    RealizedNormalization,
};
use crate::rng::{self, derive_seed, streams};
use crate::volmodels::{
    add_observation_noise, rfsv_variance_with, simulate_gbm_variance, simulate_price_path,
    GbmVarianceParams, NoiseSpec, RfsvParams,
};

pub fn seeds(base_seed: u64, count: usize) -> Vec<u64> {
    (0..count as u64)
        .map(|i| derive_seed(base_seed, i))
        .collect()
}

/// Mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn check_seeds(n_seeds: usize) -> Result<()> {
    if n_seeds == 0 {
        return Err(invalid("at least one seed is required"));
    }
    Ok(())
}

/// Daily log-volatility proxy of one RFSV path, from realized variance with
/// `steps_per_day * substeps` returns per day.
pub fn rfsv_log_vol_proxy(
    sampler: &FgnSampler,
    params: &RfsvParams,
    substeps: u32,
) -> Result<DailyProxySeries> {
    let var = rfsv_variance_with(sampler, params)?;
    let prices = simulate_price_path(&var, substeps, params.seed)?;
    let rv = realized_variance(&prices, params.steps_per_day * substeps)?;
    convert(&rv, ProxyKind::LogVolatility)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterStudyConfig {
    /// `seed` is the base seed of the study.
    pub rfsv: RfsvParams,
    pub substeps: u32,
    pub n_seeds: usize,
    /// Smoothing-factor input; the model Hurst exponent when `None`.
    pub hurst_input: Option<f64>,
    pub window: ScaleWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterStudy {
    /// Seed-averaged raw curve of the log-volatility proxy.
    pub raw: LogLogCurve,
    pub filtered: FilteredCurve,
    pub raw_fit: HurstEstimate,
    pub filtered_fit: HurstEstimate,
    pub seeds: Vec<u64>,
}

/// RFSV realized-volatility curves averaged in log space over seeds, then
/// filtered for measurement noise and smoothing.
pub fn rfsv_filter_study(cfg: &FilterStudyConfig) -> Result<FilterStudy> {
    check_seeds(cfg.n_seeds)?;
    cfg.rfsv.validate()?;
    let sampler = FgnSampler::new(cfg.rfsv.hurst, cfg.rfsv.len() - 1, FgnMethod::Auto)?;
    let grid = default_tau_grid(cfg.rfsv.days);
    let seeds = seeds(cfg.rfsv.seed, cfg.n_seeds);
    let curves = seeds
        .par_iter()
        .map(|&seed| {
            let params = RfsvParams { seed, ..cfg.rfsv };
            build_loglog(
                &rfsv_log_vol_proxy(&sampler, &params, cfg.substeps)?,
                2.0,
                &grid,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let raw = LogLogCurve::average_log(&curves)?;
    let n = cfg.rfsv.steps_per_day * cfg.substeps;
    let hurst_input = cfg.hurst_input.unwrap_or(cfg.rfsv.hurst);
    let filtered = filter_curve(
        &raw,
        &FilterConfig::full(n, hurst_input, FilterVariant::LogVolFbm),
    )?;
    let raw_fit = regress_hurst(&raw, cfg.window.min, cfg.window.max)?;
    let filtered_fit = regress_hurst(&filtered.curve, cfg.window.min, cfg.window.max)?;
    Ok(FilterStudy {
        raw,
        filtered,
        raw_fit,
        filtered_fit,
        seeds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerceivedHurst {
    pub mean: f64,
    pub se: f64,
}

impl PerceivedHurst {
    fn from_samples(xs: &[f64]) -> Self {
        let (mean, se) = mean_se(xs);
        Self { mean, se }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisyGbmRow {
    pub beta: f64,
    pub noisy: PerceivedHurst,
    pub clean: PerceivedHurst,
}

/// Perceived Hurst exponent of daily gBm log-variance with and without
/// multiplicative observation noise, over `window`, for each `beta`.
///
/// The same seeds are reused for every `beta`, so rows differ only through
/// the vol of vol.
pub fn noisy_gbm_sweep(
    base: &GbmVarianceParams,
    relative_sd: f64,
    betas: &[f64],
    n_seeds: usize,
    window: ScaleWindow,
) -> Result<Vec<NoisyGbmRow>> {
    check_seeds(n_seeds)?;
    if base.steps_per_day != 1 {
        return Err(invalid(
            "the noisy gBm study samples the variance once per day",
        ));
    }
    let seeds = seeds(base.seed, n_seeds);
    let grid: Vec<u32> = (window.min..=window.max).collect();
    betas
        .iter()
        .map(|&beta| {
            let pairs = seeds
                .par_iter()
                .map(|&seed| {
                    let params = GbmVarianceParams {
                        beta,
                        seed,
                        ..*base
                    };
                    let var = simulate_gbm_variance(&params)?;
                    let noisy = add_observation_noise(&var, &NoiseSpec { relative_sd, seed })?;
                    let clean = DailyProxySeries::new(var.values, ProxyKind::Variance, 1)?;
                    let h = |s: &DailyProxySeries| -> Result<f64> {
                        let curve = build_loglog(&convert(s, ProxyKind::LogVariance)?, 2.0, &grid)?;
                        Ok(regress_hurst(&curve, window.min, window.max)?.hurst)
                    };
                    Ok((h(&noisy.series)?, h(&clean)?))
                })
                .collect::<Result<Vec<_>>>()?;
            let (noisy, clean): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            Ok(NoisyGbmRow {
                beta,
                noisy: PerceivedHurst::from_samples(&noisy),
                clean: PerceivedHurst::from_samples(&clean),
            })
        })
        .collect()
}

/// `count` values from `lo` to `hi`, evenly spaced in log scale.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityStudy {
    pub values: Vec<f64>,
    pub mean: f64,
    pub se: f64,
}

/// Convexity statistic of fOU paths, one per seed.
pub fn fou_convexity(
    params: &FouParams,
    n_seeds: usize,
    small: ScaleWindow,
    large: ScaleWindow,
) -> Result<ConvexityStudy> {
    check_seeds(n_seeds)?;
    params.validate()?;
    let days = params.base.length;
    let mut grid: Vec<u32> = default_tau_grid(days);
    grid.extend([small.min, small.max, large.min, large.max]);
    grid.sort_unstable();
    grid.dedup();
    let values = seeds(params.base.seed, n_seeds)
        .par_iter()
        .map(|&seed| {
            let p = FouParams {
                base: FbmParams {
                    seed,
                    ..params.base
                },
                ..*params
            };
            let path = simulate_fou(&p)?;
            let series = DailyProxySeries::new(path.values, ProxyKind::LogVolatility, 1)?;
            convexity_stat(&build_loglog(&series, 2.0, &grid)?, small, large)
        })
        .collect::<Result<Vec<_>>>()?;
    let (mean, se) = mean_se(&values);
    Ok(ConvexityStudy { values, mean, se })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingCheckRow {
    pub tau: u32,
    pub empirical: f64,
    pub se: f64,
    pub theoretical: f64,
}

impl SmoothingCheckRow {
    /// Deviation in standard errors.
    pub fn z_score(&self) -> f64 {
        (self.empirical - self.theoretical) / self.se
    }
}

/// Empirical second moment of increments of averaged fBm spot variance
/// against its closed form. The spot variance is a unit fBm sampled `N`
/// times per day over `days` days.
pub fn smoothing_monte_carlo(
    hurst: f64,
    n_samples: u32,
    days: usize,
    taus: &[u32],
    n_seeds: usize,
    base_seed: u64,
) -> Result<Vec<SmoothingCheckRow>> {
    check_seeds(n_seeds)?;
    let len = days * n_samples as usize;
    let fbm = FbmParams {
        hurst,
        scale: 1.0,
        step: 1.0 / n_samples as f64,
        length: len,
        seed: base_seed,
    };
    fbm.validate()?;
    let sampler = FgnSampler::new(hurst, len - 1, FgnMethod::Auto)?;
    let per_seed = seeds(base_seed, n_seeds)
        .par_iter()
        .map(|&seed| {
            let path = simulate_fbm_with(&sampler, &FbmParams { seed, ..fbm })?;
            let avg = averaged_spot_variance(&path, 1, n_samples)?;
            taus.iter()
                .map(|&tau| abs_moment(&avg.values, 2.0, tau as usize, Increments::Overlapping))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let spec = SmoothingSpec {
        hurst,
        xi: 1.0,
        d: 1,
        n_samples,
    };
    Ok(taus
        .iter()
        .enumerate()
        .map(|(j, &tau)| {
            let xs: Vec<f64> = per_seed.iter().map(|row| row[j]).collect();
            let (empirical, se) = mean_se(&xs);
            SmoothingCheckRow {
                tau,
                empirical,
                se,
                theoretical: smoothing_variance_finite(tau, &spec),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasCheckRow {
    pub tau: u32,
    pub mean: f64,
    pub se: f64,
    pub expected: f64,
}

/// Measurement-bias check on daily gBm variance with the noise of a realized
/// variance from `n` returns, as log-variance or log-volatility.
///
/// The standard error comes from `batches` contiguous sub-series.
pub fn measurement_bias_study(
    clean_params: &GbmVarianceParams,
    n: u32,
    target: ProxyKind,
    taus: &[u32],
    batches: usize,
) -> Result<Vec<BiasCheckRow>> {
    let expected = match target {
        ProxyKind::LogVariance => 4.0 / n as f64,
        ProxyKind::LogVolatility => 1.0 / n as f64,
        other => {
            return Err(invalid(format!(
                "bias study needs a log kind, got {}",
                other.as_str()
            )))
        }
    };
    if batches < 2 {
        return Err(invalid(
            "at least two batches are needed for a standard error",
        ));
    }
    let var = simulate_gbm_variance(clean_params)?;
    let noisy = add_observation_noise(&var, &NoiseSpec::from_intraday_count(n, clean_params.seed))?;
    if noisy.floored > 0 {
        log::warn!("{} noisy values floored", noisy.floored);
    }
    let clean = DailyProxySeries::new(var.values, ProxyKind::Variance, n)?;
    let noisy = DailyProxySeries {
        n_intraday: n,
        ..noisy.series
    };
    let (noisy, clean) = (convert(&noisy, target)?, convert(&clean, target)?);
    let full = measurement_bias_check(&noisy, &clean, taus)?;
    let size = clean.day_count() / batches;
    let per_batch = (0..batches)
        .map(|b| {
            let cut = |s: &DailyProxySeries| DailyProxySeries {
                values: s.values[b * size..(b + 1) * size].to_vec(),
                ..s.clone()
            };
            measurement_bias_check(&cut(&noisy), &cut(&clean), taus)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(taus
        .iter()
        .enumerate()
        .map(|(j, &tau)| {
            let xs: Vec<f64> = per_batch.iter().map(|r| r[j]).collect();
            BiasCheckRow {
                tau,
                mean: full[j],
                se: mean_se(&xs).1,
                expected,
            }
        })
        .collect())
}

/// Expected raw second-moment curve of RFSV realized log-volatility:
/// smoothing-affected log-volatility increments plus the `1/n` noise term.
pub fn expected_log_vol_curve(
    hurst: f64,
    vol_of_vol: f64,
    n: u32,
    tau_grid: &[u32],
    day_count: usize,
) -> Result<LogLogCurve> {
    let spec = SmoothingSpec {
        hurst,
        xi: vol_of_vol,
        d: 1,
        n_samples: n,
    };
    spec.validate()?;
    let points = tau_grid
        .iter()
        .map(|&tau| CurvePoint {
            tau,
            moment: smoothing_variance_finite(tau, &spec) + 1.0 / n as f64,
        })
        .collect();
    LogLogCurve::new(points, 2.0, ProxyKind::LogVolatility, day_count)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticBarsSpec {
    /// Must have 1440 steps per day.
    pub rfsv: RfsvParams,
    /// First trading day; only weekdays are trading days.
    pub start: NaiveDate,
    pub initial_price: f64,
    /// Minutes removed at random inside trading days.
    pub missing_fraction: f64,
    /// Rows preceded by a stale duplicate of the same minute.
    pub duplicate_fraction: f64,
    /// Adjacent rows swapped in the file.
    pub swap_fraction: f64,
    /// Bars written before each trading week opens, held at the previous
    /// close. These form short days dropped at ingestion.
    pub weekend_open_minutes: u32,
}

impl SyntheticBarsSpec {
    pub fn new(rfsv: RfsvParams, start: NaiveDate) -> Self {
        Self {
            rfsv,
            start,
            initial_price: 1.1,
            missing_fraction: 0.002,
            duplicate_fraction: 0.001,
            swap_fraction: 0.001,
            weekend_open_minutes: 120,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.rfsv.validate()?;
        if self.rfsv.steps_per_day != MINUTES_PER_DAY {
            return Err(invalid("synthetic bars need 1440 steps per day"));
        }
        if !(self.initial_price > 0.0) {
            return Err(invalid("initial price must be positive"));
        }
        for (name, f) in [
            ("missing_fraction", self.missing_fraction),
            ("duplicate_fraction", self.duplicate_fraction),
            ("swap_fraction", self.swap_fraction),
        ] {
            if !(0.0..0.05).contains(&f) {
                return Err(invalid(format!("{name} must lie in [0, 0.05)")));
            }
        }
        if self.weekend_open_minutes >= MINUTES_PER_DAY {
            return Err(invalid("weekend_open_minutes must be below 1440"));
        }
        Ok(())
    }
}

fn trading_days(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(count);
    let mut d = start;
    while out.len() < count {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

/// Minute bars of an RFSV log-price on weekdays, in file order, with gaps,
/// stale duplicates and swapped rows mixed in.
///
/// The model clock runs over trading minutes only: each day's first return
/// starts from the previous trading day's close.
pub fn synthetic_minute_bars(spec: &SyntheticBarsSpec) -> Result<Vec<MinuteBarRecord>> {
    spec.validate()?;
    let p = &spec.rfsv;
    let sampler = FgnSampler::new(p.hurst, p.len() - 1, FgnMethod::Auto)?;
    let var = rfsv_variance_with(&sampler, p)?;
    let log_prices = simulate_price_path(&var, 1, p.seed)?;
    let mut rng = rng::stream(p.seed, streams::FIXTURE);
    let per = MINUTES_PER_DAY as usize;
    let ln0 = spec.initial_price.ln();
    let price = |i: usize| (ln0 + log_prices.values[i]).exp();
    let at = |date: NaiveDate, minute: i64| {
        Utc.from_utc_datetime(&date.and_hms_opt(0, 0, 0).expect("midnight"))
            + Duration::minutes(minute)
    };

    let mut rows = Vec::with_capacity(log_prices.len() + p.days * 4);
    for (d, date) in trading_days(spec.start, p.days).into_iter().enumerate() {
        // Previous close, repeated over the last minutes before the open when
        // the previous calendar day is not a trading day.
        let prev = date - Duration::days(1);
        let open_minutes = if d == 0 || matches!(prev.weekday(), Weekday::Sat | Weekday::Sun) {
            spec.weekend_open_minutes.max(1) as i64
        } else {
            0
        };
        for m in (1..=open_minutes).rev() {
            rows.push(MinuteBarRecord {
                timestamp: at(date, -m),
                price: price(d * per),
            });
        }
        for j in 0..per {
            if rng.random::<f64>() < spec.missing_fraction {
                continue;
            }
            let record = MinuteBarRecord {
                timestamp: at(date, j as i64),
                price: price(d * per + j + 1),
            };
            if rng.random::<f64>() < spec.duplicate_fraction {
                rows.push(MinuteBarRecord {
                    price: record.price * (1.0 + 1e-3),
                    ..record
                });
            }
            rows.push(record);
        }
    }
    let mut i = 1;
    while i < rows.len() {
        // Never swap a stale duplicate past its replacement.
        if rows[i - 1].timestamp != rows[i].timestamp && rng.random::<f64>() < spec.swap_fraction {
            rows.swap(i - 1, i);
            i += 1;
        }
        i += 1;
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub n_per_day: u32,
    pub normalization: RealizedNormalization,
    pub small: ScaleWindow,
    pub large: ScaleWindow,
    pub variant: FilterVariant,
    /// Smoothing-factor input; the raw large-scale estimate when `None`.
    pub hurst_input: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            n_per_day: MINUTES_PER_DAY,
            normalization: RealizedNormalization::Sum,
            small: ScaleWindow::SMALL,
            large: ScaleWindow::LARGE,
            variant: FilterVariant::LogVolFbm,
            hurst_input: None,
        }
    }
}

/// One row of the small/large-scale Hurst table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HurstTableRow {
    pub symbol: String,
    pub days: usize,
    pub n_intraday: u32,
    pub small_scale_h: f64,
    pub large_scale_h: f64,
    pub filtered_small_scale_h: Option<f64>,
    pub filtered_large_scale_h: Option<f64>,
    /// `None` when no input was given and the raw large-scale estimate is
    /// outside (0, 1); the filtered columns are then empty.
    pub hurst_input: Option<f64>,
    pub dropped_points: usize,
    pub small_window: ScaleWindow,
    pub large_window: ScaleWindow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub series: DailyProxySeries,
    pub raw: LogLogCurve,
    pub filtered: Option<FilteredCurve>,
    pub row: HurstTableRow,
}

/// Realized log-volatility of assembled days, its raw and filtered curves,
/// and the small/large-scale estimates.
pub fn run_pipeline(
    symbol: &str,
    days: &IntradayDays,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    let rv = daily_realized_series(days, cfg.n_per_day, cfg.normalization)?;
    let (rv, zeros) = crate::proxies::fill_zero_proxies(&rv)?;
    if zeros > 0 {
        log::warn!("{zeros} zero realized variances filled from the previous day");
    }
    let series = convert(&rv, cfg.variant.expected_kind())?;
    if max_large_scale(series.day_count()) < cfg.large.max {
        return Err(Error::Data(format!(
            "{} days are too few for scales up to {} (need {})",
            series.day_count(),
            cfg.large.max,
            3 * cfg.large.max
        )));
    }
    let mut grid = default_tau_grid(series.day_count());
    grid.extend([cfg.small.min, cfg.small.max, cfg.large.min, cfg.large.max]);
    grid.sort_unstable();
    grid.dedup();
    let raw = build_loglog(&series, 2.0, &grid)?;
    let small = regress_hurst(&raw, cfg.small.min, cfg.small.max)?;
    let large = regress_hurst(&raw, cfg.large.min, cfg.large.max)?;
    let hurst_input = match cfg.hurst_input {
        Some(h) => Some(h),
        None => match default_hurst_input(&raw, cfg.large) {
            Ok(h) => Some(h),
            Err(e) => {
                log::warn!("filter skipped: {e}");
                None
            }
        },
    };
    let filtered = hurst_input
        .map(|h| filter_curve(&raw, &FilterConfig::full(cfg.n_per_day, h, cfg.variant)))
        .transpose()?;
    let fit = |w: ScaleWindow| {
        filtered
            .as_ref()
            .and_then(|f| regress_hurst(&f.curve, w.min, w.max).ok())
            .map(|e| e.hurst)
    };
    let row = HurstTableRow {
        symbol: symbol.to_string(),
        days: series.day_count(),
        n_intraday: cfg.n_per_day,
        small_scale_h: small.hurst,
        large_scale_h: large.hurst,
        filtered_small_scale_h: fit(cfg.small),
        filtered_large_scale_h: fit(cfg.large),
        hurst_input,
        dropped_points: filtered.as_ref().map_or(0, |f| f.dropped),
        small_window: cfg.small,
        large_window: cfg.large,
    };
    Ok(PipelineOutput {
        series,
        raw,
        filtered,
        row,
    })
}

fn max_large_scale(day_count: usize) -> u32 {
    crate::moments::max_scale(day_count)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSensitivityRow {
    pub step_minutes: u32,
    pub n_intraday: u32,
    pub small_scale_h: f64,
    pub large_scale_h: Option<f64>,
}

/// Raw perceived Hurst exponents of realized log-volatility computed with
/// each sampling step. Steps must divide 1440 minutes.
pub fn step_sensitivity(
    days: &IntradayDays,
    steps_minutes: &[u32],
    small: ScaleWindow,
    large: ScaleWindow,
) -> Result<Vec<StepSensitivityRow>> {
    if let Some(s) = steps_minutes
        .iter()
        .find(|&&s| s == 0 || !MINUTES_PER_DAY.is_multiple_of(s))
    {
        return Err(invalid(format!("step of {s} minutes does not divide 1440")));
    }
    steps_minutes
        .iter()
        .map(|&step| {
            let n = MINUTES_PER_DAY / step;
            let rv = daily_realized_series(days, n, RealizedNormalization::Sum)?;
            let (rv, _) = crate::proxies::fill_zero_proxies(&rv)?;
            let series = convert(&rv, ProxyKind::LogVolatility)?;
            let mut grid = default_tau_grid(series.day_count());
            grid.extend([small.min, small.max, large.min, large.max]);
            grid.sort_unstable();
            grid.dedup();
            let curve = build_loglog(&series, 2.0, &grid)?;
            Ok(StepSensitivityRow {
                step_minutes: step,
                n_intraday: n,
                small_scale_h: regress_hurst(&curve, small.min, small.max)?.hurst,
                large_scale_h: regress_hurst(&curve, large.min, large.max)
                    .ok()
                    .map(|e| e.hurst),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HurstInputRow {
    pub hurst_input: f64,
    pub convexity: f64,
    pub small_scale_h: f64,
    pub large_scale_h: f64,
    pub dropped: usize,
}

/// Filters `raw` once per smoothing-factor input and measures the result.
pub fn hurst_input_sweep(
    raw: &LogLogCurve,
    base: &FilterConfig,
    inputs: &[f64],
    small: ScaleWindow,
    large: ScaleWindow,
) -> Result<Vec<HurstInputRow>> {
    inputs
        .iter()
        .map(|&h| {
            let f = filter_curve(
                raw,
                &FilterConfig {
                    hurst_input: h,
                    ..*base
                },
            )?;
            Ok(HurstInputRow {
                hurst_input: h,
                convexity: convexity_stat(&f.curve, small, large)?,
                small_scale_h: regress_hurst(&f.curve, small.min, small.max)?.hurst,
                large_scale_h: regress_hurst(&f.curve, large.min, large.max)?.hurst,
                dropped: f.dropped,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{build_days, parse_bars, write_bars_csv, BarSchema, TradingCalendarConfig};

    fn small_fixture(days: usize, seed: u64) -> SyntheticBarsSpec {
        SyntheticBarsSpec::new(
            RfsvParams {
                sigma_base: 0.006,
                vol_of_vol: 0.3,
                hurst: 0.2,
                days,
                steps_per_day: 1440,
                seed,
            },
            NaiveDate::from_ymd_opt(2021, 1, 4).unwrap(),
        )
    }

    #[test]
    fn seeds_are_stable_and_distinct() {
        let s = seeds(7, 5);
        assert_eq!(s, seeds(7, 5));
        let mut d = s.clone();
        d.dedup();
        assert_eq!(d.len(), 5);
    }

    #[test]
    fn synthetic_bars_survive_ingestion() {
        let spec = small_fixture(12, 3);
        let rows = synthetic_minute_bars(&spec).unwrap();
        let mut csv = Vec::new();
        write_bars_csv(&rows, &mut csv).unwrap();
        let parsed = parse_bars(&csv[..], &BarSchema::default()).unwrap();
        assert!(parsed.stats.reordered > 0);
        assert!(parsed.stats.duplicates > 0);
        let days = build_days(&parsed.records, &TradingCalendarConfig::default()).unwrap();
        assert_eq!(days.day_count(), 12);
        // Two weekends plus the opening Sunday, all short.
        assert_eq!(days.report.dropped_days.len(), 3);
        assert_eq!(days.report.days_without_anchor, 0);
        // Stale duplicates never survive.
        let truth = simulate_price_path(
            &rfsv_variance_with(
                &FgnSampler::new(0.2, 12 * 1440 - 1, FgnMethod::Auto).unwrap(),
                &spec.rfsv,
            )
            .unwrap(),
            1,
            spec.rfsv.seed,
        )
        .unwrap();
        let anchor0 = spec.initial_price.ln() + truth.values[0];
        assert!((days.anchors[0] - anchor0).abs() < 1e-8);
    }

    #[test]
    fn synthetic_bars_deterministic() {
        let spec = small_fixture(3, 11);
        assert_eq!(
            synthetic_minute_bars(&spec).unwrap(),
            synthetic_minute_bars(&spec).unwrap()
        );
    }

    #[test]
    fn step_sensitivity_rejects_bad_step() {
        let rows = synthetic_minute_bars(&small_fixture(3, 1)).unwrap();
        let mut sorted = rows.clone();
        sorted.sort_by_key(|r| r.timestamp);
        sorted.dedup_by_key(|r| r.timestamp);
        let days = build_days(&sorted, &TradingCalendarConfig::default()).unwrap();
        assert!(
            step_sensitivity(&days, &[7], ScaleWindow::new(1, 2), ScaleWindow::new(1, 2)).is_err()
        );
    }

    #[test]
    fn expected_curve_limits() {
        let c = expected_log_vol_curve(0.5, 0.2, 1, &[1, 4], 100).unwrap();
        // With one sample per day there is no smoothing.
        assert!((c.points[0].moment - (0.04 + 1.0)).abs() < 1e-12);
        assert!((c.points[1].moment - (0.16 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn smoothing_monte_carlo_small() {
        let rows = smoothing_monte_carlo(0.3, 20, 300, &[1, 3], 8, 5).unwrap();
        for r in rows {
            assert!(r.z_score().abs() < 4.0, "{r:?}");
        }
    }

    #[test]
    fn lower_hurst_input_gives_more_convex_curve() {
        let grid = default_tau_grid(3000);
        let raw = expected_log_vol_curve(0.2, 0.3, 288, &grid, 3000).unwrap();
        let base = FilterConfig::full(288, 0.2, FilterVariant::LogVolFbm);
        let rows = hurst_input_sweep(
            &raw,
            &base,
            &[0.4, 0.3, 0.2, 0.1, 0.05],
            ScaleWindow::SMALL,
            ScaleWindow::LARGE,
        )
        .unwrap();
        assert!(
            rows.windows(2).all(|w| w[1].convexity > w[0].convexity),
            "{rows:?}"
        );
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(0.001, 0.2, 5);
        assert!((g[0] - 0.001).abs() < 1e-15 && (g[4] - 0.2).abs() < 1e-12);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }
}
