//! Removal of measurement noise and smoothing error from second-moment
//! log-log curves of log-volatility or log-variance proxies.
//!
//! For each scale the raw moment `M` becomes
//! `M' = f(tau, H)^-1 (M - offset)`, with `offset = 1/n` for log-volatility
//! proxies and `4/n` for log-variance proxies. The offset is subtracted
//! first, then the smoothing factor is divided out.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::moments::{self, CurvePoint, Increments, LogLogCurve, ScaleWindow};
use crate::noisecal::smoothing_factor;
use crate::proxies::{to_log, DailyProxySeries, ProxyKind};

/// Which process is assumed to be an fBm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterVariant {
    /// Log-volatility is an fBm (RFSV); input curves are of log-volatility.
    LogVolFbm,
    /// Log-variance is an fBm; input curves are of log-variance.
    LogVarFbm,
}

impl FilterVariant {
    pub fn expected_kind(self) -> ProxyKind {
        match self {
            FilterVariant::LogVolFbm => ProxyKind::LogVolatility,
            FilterVariant::LogVarFbm => ProxyKind::LogVariance,
        }
    }

    /// Measurement-noise offset of the second moment for `n` intraday returns.
    pub fn offset(self, n_intraday: u32) -> f64 {
        let n = n_intraday as f64;
        match self {
            FilterVariant::LogVolFbm => 1.0 / n,
            FilterVariant::LogVarFbm => 4.0 / n,
        }
    }
}

impl std::str::FromStr for FilterVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log_vol_fbm" | "log-vol" => Ok(FilterVariant::LogVolFbm),
            "log_var_fbm" | "log-var" => Ok(FilterVariant::LogVarFbm),
            other => Err(invalid(format!("unknown filter variant '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub n_intraday: u32,
    /// Hurst exponent fed to the smoothing factor.
    pub hurst_input: f64,
    pub variant: FilterVariant,
    pub apply_measurement: bool,
    pub apply_smoothing: bool,
}

impl FilterConfig {
    pub fn full(n_intraday: u32, hurst_input: f64, variant: FilterVariant) -> Self {
        Self {
            n_intraday,
            hurst_input,
            variant,
            apply_measurement: true,
            apply_smoothing: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_intraday == 0 {
            return Err(invalid("n_intraday must be at least 1"));
        }
        if !(self.hurst_input > 0.0 && self.hurst_input < 1.0) {
            return Err(invalid(format!(
                "hurst_input must lie in (0, 1), got {}",
                self.hurst_input
            )));
        }
        Ok(())
    }
}

/// Per-scale record of what the filter did.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterRow {
    pub tau: u32,
    pub raw_moment: f64,
    pub offset_applied: f64,
    pub f_value: f64,
    /// `None` when the point was dropped.
    pub filtered_moment: Option<f64>,
}

impl FilterRow {
    pub fn dropped(&self) -> bool {
        self.filtered_moment.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredCurve {
    pub curve: LogLogCurve,
    pub rows: Vec<FilterRow>,
    pub dropped: usize,
    pub config: FilterConfig,
    /// The smoothing factor is derived with the variance as the fBm. Under
    /// the log-volatility model it holds only to first order.
    pub smoothing_assumption: String,
}

pub const SMOOTHING_ASSUMPTION: &str =
    "smoothing factor derived for a variance following an fBm; first-order approximation for log-volatility models";

/// Applies the configured corrections to a second-moment curve.
///
/// Points where `M - offset <= 0` are dropped and counted, never clamped.
pub fn filter_curve(raw: &LogLogCurve, cfg: &FilterConfig) -> Result<FilteredCurve> {
    cfg.validate()?;
    if raw.k != 2.0 {
        return Err(invalid(format!(
            "filters apply to second moments only, curve has k = {}",
            raw.k
        )));
    }
    if raw.source_kind != cfg.variant.expected_kind() {
        return Err(invalid(format!(
            "variant {:?} expects a {} curve, got {}",
            cfg.variant,
            cfg.variant.expected_kind().as_str(),
            raw.source_kind.as_str()
        )));
    }
    let offset = if cfg.apply_measurement {
        cfg.variant.offset(cfg.n_intraday)
    } else {
        0.0
    };
    let mut rows = Vec::with_capacity(raw.points.len());
    let mut points = Vec::with_capacity(raw.points.len());
    for p in &raw.points {
        let f_value = if cfg.apply_smoothing {
            smoothing_factor(p.tau as f64, cfg.hurst_input)
        } else {
            1.0
        };
        let shifted = p.moment - offset;
        let filtered = (shifted > 0.0).then(|| shifted / f_value);
        if let Some(moment) = filtered {
            points.push(CurvePoint { tau: p.tau, moment });
        }
        rows.push(FilterRow {
            tau: p.tau,
            raw_moment: p.moment,
            offset_applied: offset,
            f_value,
            filtered_moment: filtered,
        });
    }
    let dropped = rows.iter().filter(|r| r.dropped()).count();
    if points.is_empty() {
        return Err(Error::Numerical(format!(
            "all {} points dropped: measurement offset {offset:e} exceeds every moment",
            rows.len()
        )));
    }
    if dropped > 0 {
        log::warn!("{dropped} curve points dropped by the measurement filter");
    }
    Ok(FilteredCurve {
        curve: LogLogCurve::new(points, raw.k, raw.source_kind, raw.day_count)?,
        rows,
        dropped,
        config: *cfg,
        smoothing_assumption: SMOOTHING_ASSUMPTION.to_string(),
    })
}

/// Inverse of [`filter_curve`] on the retained points.
pub fn unfilter_curve(filtered: &LogLogCurve, cfg: &FilterConfig) -> Result<LogLogCurve> {
    cfg.validate()?;
    let offset = if cfg.apply_measurement {
        cfg.variant.offset(cfg.n_intraday)
    } else {
        0.0
    };
    let points = filtered
        .points
        .iter()
        .map(|p| {
            let f = if cfg.apply_smoothing {
                smoothing_factor(p.tau as f64, cfg.hurst_input)
            } else {
                1.0
            };
            CurvePoint {
                tau: p.tau,
                moment: p.moment * f + offset,
            }
        })
        .collect();
    LogLogCurve::new(points, filtered.k, filtered.source_kind, filtered.day_count)
}

/// Large-scale perceived Hurst exponent of the raw curve, the default input
/// of the smoothing factor.
pub fn default_hurst_input(raw: &LogLogCurve, large: ScaleWindow) -> Result<f64> {
    let est = moments::regress_hurst(raw, large.min, large.max)?;
    if !(est.hurst > 0.0 && est.hurst < 1.0) {
        return Err(Error::Numerical(format!(
            "large-scale perceived Hurst exponent {:.4} is outside (0, 1); pass hurst_input explicitly",
            est.hurst
        )));
    }
    Ok(est.hurst)
}

/// `M_2(log noisy) - M_2(log clean)` for each scale of `tau_grid`.
///
/// Level series are logged first. For variance proxies with relative noise
/// variance `2/n` the differences are close to `4/n`; for volatility proxies
/// to `1/n`.
pub fn measurement_bias_check(
    noisy: &DailyProxySeries,
    clean: &DailyProxySeries,
    tau_grid: &[u32],
) -> Result<Vec<f64>> {
    if noisy.day_count() != clean.day_count() {
        return Err(Error::LengthMismatch {
            expected: clean.day_count(),
            found: noisy.day_count(),
        });
    }
    if noisy.kind != clean.kind {
        return Err(invalid(format!(
            "series kinds differ: {} vs {}",
            noisy.kind.as_str(),
            clean.kind.as_str()
        )));
    }
    let noisy = to_log(noisy)?;
    let clean = to_log(clean)?;
    tau_grid
        .iter()
        .map(|&tau| {
            let a = moments::abs_moment(&noisy.values, 2.0, tau as usize, Increments::Overlapping)?;
            let b = moments::abs_moment(&clean.values, 2.0, tau as usize, Increments::Overlapping)?;
            Ok(a - b)
        })
        .collect()
}

pub fn write_filtered_csv<W: std::io::Write>(filtered: &FilteredCurve, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "tau_days",
        "log_tau",
        "moment",
        "log_moment",
        "raw_moment",
        "offset_applied",
        "f_value",
        "dropped",
    ])?;
    for r in &filtered.rows {
        let (moment, log_moment) = match r.filtered_moment {
            Some(m) => (m.to_string(), m.ln().to_string()),
            None => (String::new(), String::new()),
        };
        w.write_record([
            r.tau.to_string(),
            (r.tau as f64).ln().to_string(),
            moment,
            log_moment,
            r.raw_moment.to_string(),
            r.offset_applied.to_string(),
            r.f_value.to_string(),
            r.dropped().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
