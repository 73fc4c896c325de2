//! Daily variance and volatility proxies: realized variance from intraday
//! log-prices and discrete day-averaging of a spot-variance path.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::series::PathSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxyKind {
    Variance,
    Volatility,
    LogVariance,
    LogVolatility,
}

impl ProxyKind {
    pub fn is_log(self) -> bool {
        matches!(self, ProxyKind::LogVariance | ProxyKind::LogVolatility)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ProxyKind::Variance => "variance",
            ProxyKind::Volatility => "volatility",
            ProxyKind::LogVariance => "log_variance",
            ProxyKind::LogVolatility => "log_volatility",
        }
    }
}

impl std::str::FromStr for ProxyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "variance" => Ok(ProxyKind::Variance),
            "volatility" => Ok(ProxyKind::Volatility),
            "log_variance" => Ok(ProxyKind::LogVariance),
            "log_volatility" => Ok(ProxyKind::LogVolatility),
            other => Err(invalid(format!("unknown proxy kind '{other}'"))),
        }
    }
}

/// One proxy value per day.
///
/// Variance and volatility values may be zero (a flat day) until
/// [`fill_zero_proxies`] has been applied; log transforms reject them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyProxySeries {
    pub values: Vec<f64>,
    pub kind: ProxyKind,
    /// Intraday observations behind each value.
    pub n_intraday: u32,
}

impl DailyProxySeries {
    pub fn new(values: Vec<f64>, kind: ProxyKind, n_intraday: u32) -> Result<Self> {
        if n_intraday == 0 {
            return Err(invalid("n_intraday must be positive"));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite proxy value {v} on day {i}"
            )));
        }
        if !kind.is_log() {
            if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| **v < 0.0) {
                return Err(Error::NonPositive { index, value });
            }
        }
        Ok(Self {
            values,
            kind,
            n_intraday,
        })
    }

    pub fn day_count(&self) -> usize {
        self.values.len()
    }
}

/// How the squared intraday returns of one day are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RealizedNormalization {
    /// Sum of squared returns.
    #[default]
    Sum,
    /// Mean of squared returns (the sum divided by `n`).
    Average,
}

/// Daily realized variance of a log-price path.
///
/// The path holds an opening anchor followed by `n_per_day` samples per day,
/// so day `d` uses the returns between samples `d n .. (d + 1) n`.
pub fn realized_variance(log_prices: &PathSeries, n_per_day: u32) -> Result<DailyProxySeries> {
    realized_variance_with(log_prices, n_per_day, RealizedNormalization::Sum)
}

pub fn realized_variance_with(
    log_prices: &PathSeries,
    n_per_day: u32,
    normalization: RealizedNormalization,
) -> Result<DailyProxySeries> {
    if n_per_day == 0 {
        return Err(invalid("n_per_day must be positive"));
    }
    let n = n_per_day as usize;
    let len = log_prices.len();
    if len < n + 1 || !(len - 1).is_multiple_of(n) {
        return Err(Error::Data(format!(
            "log-price path of {len} samples is not an anchor plus whole days of {n} returns; \
             align days before estimating"
        )));
    }
    let scale = match normalization {
        RealizedNormalization::Sum => 1.0,
        RealizedNormalization::Average => 1.0 / n as f64,
    };
    let values = log_prices.values[..]
        .windows(2)
        .map(|w| (w[1] - w[0]).powi(2))
        .collect::<Vec<_>>()
        .chunks(n)
        .map(|day| day.iter().sum::<f64>() * scale)
        .collect();
    DailyProxySeries::new(values, crate::proxies::ProxyKind::Variance, n_per_day)
}

/// Averages of a spot-variance path sampled `n_samples` times per day:
/// `(d / N) sum_{i<N} sigma^2_{t - i d / N}`, one value per `d`-day block.
///
/// Within a block of `d N` samples every `d`-th sample is used, ending at the
/// last sample of the block.
pub fn averaged_spot_variance(
    spot_variance: &PathSeries,
    d: u32,
    n_samples: u32,
) -> Result<DailyProxySeries> {
    if d == 0 || n_samples == 0 {
        return Err(invalid("d and N must be positive"));
    }
    let (d, n) = (d as usize, n_samples as usize);
    let block = d * n;
    if spot_variance.len() < block {
        return Err(Error::Data(format!(
            "spot path of {} samples shorter than one block of {block}",
            spot_variance.len()
        )));
    }
    let weight = d as f64 / n as f64;
    let values: Vec<f64> = spot_variance
        .values
        .chunks_exact(block)
        .map(|chunk| chunk.iter().rev().step_by(d).sum::<f64>() * weight)
        .collect();
    // Spot paths may be signed (an fBm variance), so this skips the
    // positivity check of the constructor.
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Data(format!("non-finite averaged value {v}")));
    }
    Ok(DailyProxySeries {
        values,
        kind: ProxyKind::Variance,
        n_intraday: n_samples,
    })
}

fn check_positive(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !(*v > 0.0)) {
        Some(index) => Err(Error::NonPositive {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}

fn with_values(series: &DailyProxySeries, values: Vec<f64>, kind: ProxyKind) -> DailyProxySeries {
    DailyProxySeries {
        values,
        kind,
        n_intraday: series.n_intraday,
    }
}

/// Element-wise logarithm: variance to log-variance, volatility to
/// log-volatility. Log kinds pass through unchanged.
pub fn to_log(series: &DailyProxySeries) -> Result<DailyProxySeries> {
    let kind = match series.kind {
        ProxyKind::Variance => ProxyKind::LogVariance,
        ProxyKind::Volatility => ProxyKind::LogVolatility,
        _ => return Ok(series.clone()),
    };
    check_positive(&series.values)?;
    Ok(with_values(
        series,
        series.values.iter().map(|v| v.ln()).collect(),
        kind,
    ))
}

/// Converts any kind to volatility or log-volatility, keeping the log/level
/// distinction.
pub fn to_volatility(series: &DailyProxySeries) -> Result<DailyProxySeries> {
    match series.kind {
        ProxyKind::Variance => {
            check_positive(&series.values)?;
            Ok(with_values(
                series,
                series.values.iter().map(|v| v.sqrt()).collect(),
                ProxyKind::Volatility,
            ))
        }
        ProxyKind::LogVariance => Ok(with_values(
            series,
            series.values.iter().map(|v| 0.5 * v).collect(),
            ProxyKind::LogVolatility,
        )),
        _ => Ok(series.clone()),
    }
}

/// Converts any kind to variance or log-variance, keeping the log/level
/// distinction.
pub fn to_variance(series: &DailyProxySeries) -> Result<DailyProxySeries> {
    match series.kind {
        ProxyKind::Volatility => Ok(with_values(
            series,
            series.values.iter().map(|v| v * v).collect(),
            ProxyKind::Variance,
        )),
        ProxyKind::LogVolatility => Ok(with_values(
            series,
            series.values.iter().map(|v| 2.0 * v).collect(),
            ProxyKind::LogVariance,
        )),
        _ => Ok(series.clone()),
    }
}

/// Inverse of [`to_log`].
pub fn to_level(series: &DailyProxySeries) -> DailyProxySeries {
    let kind = match series.kind {
        ProxyKind::LogVariance => ProxyKind::Variance,
        ProxyKind::LogVolatility => ProxyKind::Volatility,
        _ => return series.clone(),
    };
    with_values(
        series,
        series.values.iter().map(|v| v.exp()).collect(),
        kind,
    )
}

/// Any kind to any kind.
pub fn convert(series: &DailyProxySeries, target: ProxyKind) -> Result<DailyProxySeries> {
    if series.kind == target {
        return Ok(series.clone());
    }
    let level = match target {
        ProxyKind::Variance | ProxyKind::LogVariance => to_variance(series)?,
        ProxyKind::Volatility | ProxyKind::LogVolatility => to_volatility(series)?,
    };
    match (level.kind.is_log(), target.is_log()) {
        (false, true) => to_log(&level),
        (true, false) => Ok(to_level(&level)),
        _ => Ok(level),
    }
}

/// Replaces non-positive level proxies by the smallest positive value of the
/// series. Returns the new series and the number of replaced days.
pub fn fill_zero_proxies(series: &DailyProxySeries) -> Result<(DailyProxySeries, usize)> {
    if series.kind.is_log() {
        return Ok((series.clone(), 0));
    }
    let floor = series
        .values
        .iter()
        .copied()
        .filter(|v| *v > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !floor.is_finite() {
        return Err(Error::Data("no positive proxy value in series".into()));
    }
    let mut replaced = 0;
    let values = series
        .values
        .iter()
        .map(|&v| {
            if v > 0.0 {
                v
            } else {
                replaced += 1;
                floor
            }
        })
        .collect();
    if replaced > 0 {
        log::warn!("replaced {replaced} zero proxy values by {floor:e}");
    }
    Ok((with_values(series, values, series.kind), replaced))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::PathKind;
    use approx::assert_relative_eq;

    fn prices(values: Vec<f64>) -> PathSeries {
        PathSeries::new(values, 1.0, PathKind::LogPrice)
    }

    #[test]
    fn constant_price_gives_zero() {
        let rv = realized_variance(&prices(vec![0.3; 11]), 5).unwrap();
        assert_eq!(rv.values, vec![0.0, 0.0]);
        assert_eq!(rv.n_intraday, 5);
    }

    #[test]
    fn two_return_day() {
        let rv = realized_variance(&prices(vec![0.0, 0.01, -0.01]), 2).unwrap();
        assert_relative_eq!(rv.values[0], 0.0005, epsilon = 1e-15);
        let avg = realized_variance_with(
            &prices(vec![0.0, 0.01, -0.01]),
            2,
            RealizedNormalization::Average,
        )
        .unwrap();
        assert_relative_eq!(avg.values[0], 0.00025, epsilon = 1e-15);
    }

    #[test]
    fn misaligned_path_rejected() {
        assert!(matches!(
            realized_variance(&prices(vec![0.0; 10]), 4),
            Err(Error::Data(_))
        ));
        assert!(realized_variance(&prices(vec![0.0; 3]), 4).is_err());
    }

    #[test]
    fn invariant_under_price_scaling() {
        let base: Vec<f64> = (0..41).map(|i| ((i * 7919) % 13) as f64 * 1e-3).collect();
        let shifted: Vec<f64> = base.iter().map(|x| x + 2.5f64.ln()).collect();
        let a = realized_variance(&prices(base), 8).unwrap();
        let b = realized_variance(&prices(shifted), 8).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert_relative_eq!(x, y, max_relative = 1e-9);
        }
    }

    #[test]
    fn averaging_identity_and_constant() {
        let spot = PathSeries::new(vec![1.0, 2.0, 3.0], 1.0, PathKind::Variance);
        assert_eq!(
            averaged_spot_variance(&spot, 1, 1).unwrap().values,
            vec![1.0, 2.0, 3.0]
        );

        let c = PathSeries::new(vec![0.04; 60], 0.1, PathKind::Variance);
        for d in [1, 2, 3] {
            let avg = averaged_spot_variance(&c, d, 10).unwrap();
            assert!(avg
                .values
                .iter()
                .all(|v| (v - 0.04 * d as f64).abs() < 1e-15));
        }
        assert!(averaged_spot_variance(&c, 7, 10).is_err());
    }

    #[test]
    fn averaging_uses_every_dth_sample() {
        // d = 2, N = 2: block of 4 samples, use the last and the one two before.
        let spot = PathSeries::new(vec![1.0, 2.0, 3.0, 4.0], 0.25, PathKind::Variance);
        let avg = averaged_spot_variance(&spot, 2, 2).unwrap();
        assert_relative_eq!(avg.values[0], (4.0 + 2.0) * 2.0 / 2.0);
    }

    #[test]
    fn conversions() {
        let v = DailyProxySeries::new(vec![4.0], ProxyKind::Variance, 1).unwrap();
        assert_eq!(to_volatility(&v).unwrap().values, vec![2.0]);

        let var = DailyProxySeries::new(vec![0.3, 1e-5, 7.0], ProxyKind::Variance, 10).unwrap();
        let logvol = to_log(&to_volatility(&var).unwrap()).unwrap();
        let logvar = to_log(&var).unwrap();
        assert_eq!(logvol.kind, ProxyKind::LogVolatility);
        for (a, b) in logvol.values.iter().zip(&logvar.values) {
            assert_relative_eq!(*a, 0.5 * b, max_relative = 1e-14);
        }
        let back = to_level(&logvar);
        for (a, b) in back.values.iter().zip(&var.values) {
            assert_relative_eq!(*a, *b, max_relative = 1e-15);
        }
        let via = convert(&logvol, ProxyKind::Variance).unwrap();
        assert_eq!(via.kind, ProxyKind::Variance);
        for (a, b) in via.values.iter().zip(&var.values) {
            assert_relative_eq!(*a, *b, max_relative = 1e-14);
        }
    }

    #[test]
    fn log_rejects_zero_with_index() {
        let v = DailyProxySeries::new(vec![1.0, 0.0, 2.0], ProxyKind::Variance, 1).unwrap();
        match to_log(&v) {
            Err(Error::NonPositive { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
        let (filled, n) = fill_zero_proxies(&v).unwrap();
        assert_eq!(n, 1);
        assert_eq!(filled.values, vec![1.0, 1.0, 2.0]);
        assert!(DailyProxySeries::new(vec![-1.0], ProxyKind::Variance, 1).is_err());
        assert!(DailyProxySeries::new(vec![1.0], ProxyKind::Variance, 0).is_err());
    }

    #[test]
    fn kind_round_trips_through_str() {
        for k in [
            ProxyKind::Variance,
            ProxyKind::Volatility,
            ProxyKind::LogVariance,
            ProxyKind::LogVolatility,
        ] {
            assert_eq!(k.as_str().parse::<ProxyKind>().unwrap(), k);
        }
    }
}
