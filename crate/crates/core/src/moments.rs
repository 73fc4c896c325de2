//! Empirical absolute moments of increments, log-log curves and the Hurst
//! regression.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fractional::{fbm_abs_moment, FbmParams};
use crate::proxies::{DailyProxySeries, ProxyKind};

/// Increment sampling used by [`abs_moment`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Increments {
    /// All `N - tau + 1` increments `X_i - X_{i - tau}`.
    #[default]
    Overlapping,
    /// The `floor(N / tau)` disjoint increments `X_{i tau} - X_{(i-1) tau}`.
    NonOverlapping,
}

/// Mean of `|X_i - X_{i - tau}|^k`. `values` holds `X_0 .. X_N`.
pub fn abs_moment(values: &[f64], k: f64, tau: usize, increments: Increments) -> Result<f64> {
    if tau == 0 || tau >= values.len() {
        return Err(invalid(format!(
            "lag {tau} outside [1, {}] for a series of {} points",
            values.len().saturating_sub(1),
            values.len()
        )));
    }
    let power = |d: f64| if k == 2.0 { d * d } else { d.abs().powf(k) };
    let (sum, count) = match increments {
        Increments::Overlapping => (
            values[tau..]
                .iter()
                .zip(values)
                .map(|(a, b)| power(a - b))
                .sum::<f64>(),
            values.len() - tau,
        ),
        Increments::NonOverlapping => {
            let blocks = (values.len() - 1) / tau;
            (
                (1..=blocks)
                    .map(|i| power(values[i * tau] - values[(i - 1) * tau]))
                    .sum::<f64>(),
                blocks,
            )
        }
    };
    Ok(sum / count as f64)
}

pub fn abs_moment_overlapping(series: &DailyProxySeries, k: f64, tau: usize) -> Result<f64> {
    abs_moment(&series.values, k, tau, Increments::Overlapping)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub tau: u32,
    pub moment: f64,
}

/// `(tau, M_{k,tau})` pairs; taus strictly increasing, moments positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLogCurve {
    pub points: Vec<CurvePoint>,
    pub k: f64,
    pub source_kind: ProxyKind,
    pub day_count: usize,
}

impl LogLogCurve {
    pub fn new(
        points: Vec<CurvePoint>,
        k: f64,
        source_kind: ProxyKind,
        day_count: usize,
    ) -> Result<Self> {
        if points.windows(2).any(|w| w[0].tau >= w[1].tau) {
            return Err(invalid("curve scales must be strictly increasing"));
        }
        if let Some(p) = points
            .iter()
            .find(|p| !(p.moment > 0.0 && p.moment.is_finite()))
        {
            return Err(Error::Data(format!(
                "non-positive moment {} at tau {}",
                p.moment, p.tau
            )));
        }
        Ok(Self {
            points,
            k,
            source_kind,
            day_count,
        })
    }

    pub fn taus(&self) -> Vec<u32> {
        self.points.iter().map(|p| p.tau).collect()
    }

    /// Log-space mean of curves sharing the same scales (a geometric mean of
    /// the moments).
    pub fn average_log(curves: &[LogLogCurve]) -> Result<LogLogCurve> {
        let first = curves
            .first()
            .ok_or_else(|| invalid("no curves to average"))?;
        let taus = first.taus();
        if curves.iter().any(|c| c.taus() != taus) {
            return Err(invalid("curves to average must share their scale grid"));
        }
        let points = taus
            .iter()
            .enumerate()
            .map(|(i, &tau)| {
                let mean_log = curves.iter().map(|c| c.points[i].moment.ln()).sum::<f64>()
                    / curves.len() as f64;
                CurvePoint {
                    tau,
                    moment: mean_log.exp(),
                }
            })
            .collect();
        LogLogCurve::new(points, first.k, first.source_kind, first.day_count)
    }

    /// Points with `min <= tau <= max`.
    pub fn window(&self, window: ScaleWindow) -> impl Iterator<Item = &CurvePoint> {
        self.points
            .iter()
            .filter(move |p| p.tau >= window.min && p.tau <= window.max)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CURVE_COLUMNS)?;
        for p in &self.points {
            let tau = p.tau as f64;
            w.write_record([
                p.tau.to_string(),
                tau.ln().to_string(),
                p.moment.to_string(),
                p.moment.ln().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV written by [`LogLogCurve::write_csv`]. The moment order
    /// and source kind are not part of the file.
    pub fn read_csv<R: std::io::Read>(input: R, k: f64, source_kind: ProxyKind) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Data(format!("curve CSV lacks column '{name}'")))
        };
        let (tau_col, moment_col) = (col("tau_days")?, col("moment")?);
        let mut points = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let parse = |c: usize| -> Result<f64> {
                rec.get(c)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::Data(format!("bad value in curve row {}", line + 1)))
            };
            let tau = parse(tau_col)?;
            if tau < 1.0 || tau.fract() != 0.0 {
                return Err(Error::Data(format!(
                    "tau_days must be a positive integer, got {tau}"
                )));
            }
            points.push(CurvePoint {
                tau: tau as u32,
                moment: parse(moment_col)?,
            });
        }
        let day_count = points.last().map(|p| 3 * p.tau as usize).unwrap_or(0);
        LogLogCurve::new(points, k, source_kind, day_count)
    }
}

pub const CURVE_COLUMNS: [&str; 4] = ["tau_days", "log_tau", "moment", "log_moment"];

/// Inclusive range of scales in days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleWindow {
    pub min: u32,
    pub max: u32,
}

impl ScaleWindow {
    pub const fn new(min: u32, max: u32) -> Self {
        Self { min, max }
    }

    /// One day to three weeks.
    pub const SMALL: ScaleWindow = ScaleWindow::new(1, 21);
    /// Two to four and a half months of 21 trading days.
    pub const LARGE: ScaleWindow = ScaleWindow::new(42, 95);
}

/// Largest usable scale: a third of the series length, so every moment
/// averages at least three disjoint increments.
pub fn max_scale(day_count: usize) -> u32 {
    (day_count / 3) as u32
}

/// Integer grid `1..=10` followed by steps of roughly 20 %, capped at
/// `max_scale(day_count)`.
pub fn default_tau_grid(day_count: usize) -> Vec<u32> {
    let cap = max_scale(day_count);
    let mut grid: Vec<u32> = (1..=10.min(cap)).collect();
    let mut x = 10.0f64;
    loop {
        x *= 1.2;
        let t = x.round() as u32;
        if t > cap {
            break;
        }
        if grid.last() != Some(&t) {
            grid.push(t);
        }
    }
    grid
}

/// Empirical log-log curve of `series` over the scales of `tau_grid`.
///
/// Scales outside `[1, N/3]` are ignored; zero moments are dropped with a
/// warning.
pub fn build_loglog(series: &DailyProxySeries, k: f64, tau_grid: &[u32]) -> Result<LogLogCurve> {
    build_loglog_with(series, k, tau_grid, Increments::Overlapping)
}

pub fn build_loglog_with(
    series: &DailyProxySeries,
    k: f64,
    tau_grid: &[u32],
    increments: Increments,
) -> Result<LogLogCurve> {
    if !(k > 0.0) {
        return Err(invalid(format!("moment order must be positive, got {k}")));
    }
    let cap = max_scale(series.day_count());
    let mut taus: Vec<u32> = tau_grid
        .iter()
        .copied()
        .filter(|&t| t >= 1 && t <= cap)
        .collect();
    taus.sort_unstable();
    taus.dedup();
    if taus.len() < tau_grid.len() {
        log::warn!(
            "{} scales outside [1, {cap}] ignored",
            tau_grid.len() - taus.len()
        );
    }
    let mut points = Vec::with_capacity(taus.len());
    for tau in taus {
        let moment = abs_moment(&series.values, k, tau as usize, increments)?;
        if moment > 0.0 {
            points.push(CurvePoint { tau, moment });
        } else {
            log::warn!("zero moment at tau {tau} dropped");
        }
    }
    if points.is_empty() {
        return Err(Error::Data("no usable scale left in the grid".into()));
    }
    LogLogCurve::new(points, k, series.kind, series.day_count())
}

/// Exact fBm curve `E|B_{t+tau} - B_t|^k` over `tau_grid`.
pub fn fbm_theoretical_curve(params: &FbmParams, k: f64, tau_grid: &[u32]) -> Result<LogLogCurve> {
    params.validate()?;
    let points = tau_grid
        .iter()
        .map(|&tau| CurvePoint {
            tau,
            moment: fbm_abs_moment(tau as f64, k, params),
        })
        .collect();
    LogLogCurve::new(points, k, ProxyKind::LogVolatility, params.length)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HurstEstimate {
    pub hurst: f64,
    /// Intercept of `ln M` on `ln tau`.
    pub intercept: f64,
    pub k: f64,
    pub scale_min: u32,
    pub scale_max: u32,
    pub r_squared: f64,
    /// Sum of squared residuals of the fit.
    pub ssr: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Copy)]
struct LineFit {
    slope: f64,
    intercept: f64,
    r_squared: f64,
    ssr: f64,
}

fn ols(xs: &[f64], ys: &[f64]) -> LineFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if syy > 0.0 {
        (1.0 - ssr / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    LineFit {
        slope,
        intercept,
        r_squared,
        ssr,
    }
}

fn fit_window(curve: &LogLogCurve, window: ScaleWindow) -> Result<(LineFit, usize)> {
    if window.min >= window.max {
        return Err(invalid(format!(
            "scale window [{}, {}] is empty",
            window.min, window.max
        )));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = curve
        .window(window)
        .map(|p| ((p.tau as f64).ln(), p.moment.ln()))
        .unzip();
    if xs.len() < 2 {
        return Err(Error::Data(format!(
            "fewer than 2 curve points in scale window [{}, {}]",
            window.min, window.max
        )));
    }
    Ok((ols(&xs, &ys), xs.len()))
}

/// Unweighted least squares of `ln M` on `ln tau` over the points inside
/// `[scale_min, scale_max]`; the Hurst exponent is the slope over `k`.
pub fn regress_hurst(curve: &LogLogCurve, scale_min: u32, scale_max: u32) -> Result<HurstEstimate> {
    let (fit, points) = fit_window(curve, ScaleWindow::new(scale_min, scale_max))?;
    Ok(HurstEstimate {
        hurst: fit.slope / curve.k,
        intercept: fit.intercept,
        k: curve.k,
        scale_min,
        scale_max,
        r_squared: fit.r_squared,
        ssr: fit.ssr,
        points,
    })
}

/// Large-scale minus small-scale log-log slope. Positive means convex.
pub fn convexity_stat(curve: &LogLogCurve, small: ScaleWindow, large: ScaleWindow) -> Result<f64> {
    if curve.points.len() < 3 {
        return Err(Error::Data(
            "convexity needs at least 3 curve points".into(),
        ));
    }
    let (s, _) = fit_window(curve, small)?;
    let (l, _) = fit_window(curve, large)?;
    Ok(l.slope - s.slope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn series(values: Vec<f64>) -> DailyProxySeries {
        DailyProxySeries::new(values, ProxyKind::LogVolatility, 1).unwrap()
    }

    fn curve_from(f: impl Fn(f64) -> f64, taus: &[u32]) -> LogLogCurve {
        let points = taus
            .iter()
            .map(|&tau| CurvePoint {
                tau,
                moment: f((tau as f64).ln()).exp(),
            })
            .collect();
        LogLogCurve::new(points, 2.0, ProxyKind::LogVolatility, 1000).unwrap()
    }

    #[test]
    fn hand_enumerated_moments() {
        let s = series(vec![0.0, 1.0, 3.0, 2.0]);
        assert_relative_eq!(abs_moment_overlapping(&s, 2.0, 1).unwrap(), 2.0);
        assert_relative_eq!(abs_moment_overlapping(&s, 2.0, 2).unwrap(), 5.0);
        assert_relative_eq!(abs_moment_overlapping(&s, 1.0, 1).unwrap(), 4.0 / 3.0);
        assert!(abs_moment_overlapping(&s, 2.0, 4).is_err());
        assert!(abs_moment_overlapping(&s, 2.0, 0).is_err());
        // Disjoint increments at lag 2: only X_2 - X_0.
        assert_relative_eq!(
            abs_moment(&s.values, 2.0, 2, Increments::NonOverlapping).unwrap(),
            9.0
        );
    }

    #[test]
    fn constant_and_linear_series() {
        let c = series(vec![3.0; 20]);
        assert_eq!(abs_moment_overlapping(&c, 2.0, 3).unwrap(), 0.0);
        let lin = series((0..50).map(|i| -0.7 * i as f64).collect());
        for (k, tau) in [(1.0, 1), (2.0, 4), (3.5, 7)] {
            assert_relative_eq!(
                abs_moment_overlapping(&lin, k, tau).unwrap(),
                (0.7 * tau as f64).powf(k),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn regression_of_exact_line() {
        let c = curve_from(|x| 0.3 * x + 1.0, &[1, 2, 3, 5, 8, 13]);
        let est = regress_hurst(&c, 1, 13).unwrap();
        assert_relative_eq!(est.hurst, 0.15, epsilon = 1e-12);
        assert_relative_eq!(est.intercept, 1.0, epsilon = 1e-12);
        assert_relative_eq!(est.r_squared, 1.0, epsilon = 1e-12);
        assert_eq!(est.points, 6);
        assert!(regress_hurst(&c, 4, 4).is_err());
        assert!(regress_hurst(&c, 6, 7).is_err());
    }

    #[test]
    fn convexity_signs() {
        let line = curve_from(|x| 0.4 * x - 2.0, &[1, 2, 3, 5, 6, 8, 10]);
        assert!(
            convexity_stat(&line, ScaleWindow::new(1, 3), ScaleWindow::new(5, 10))
                .unwrap()
                .abs()
                < 1e-12
        );
        let parabola = curve_from(|x| x * x, &[1, 2, 3, 5, 6, 8, 10]);
        assert!(
            convexity_stat(&parabola, ScaleWindow::new(1, 3), ScaleWindow::new(5, 10)).unwrap()
                > 0.0
        );
    }

    #[test]
    fn theoretical_fbm_curve_is_straight() {
        let p = FbmParams {
            hurst: 0.23,
            scale: 0.4,
            step: 1.0,
            length: 3000,
            seed: 0,
        };
        let c = fbm_theoretical_curve(&p, 2.0, &default_tau_grid(3000)).unwrap();
        assert!(
            convexity_stat(&c, ScaleWindow::SMALL, ScaleWindow::LARGE)
                .unwrap()
                .abs()
                < 1e-12
        );
        assert_relative_eq!(
            regress_hurst(&c, 1, 1000).unwrap().hurst,
            0.23,
            epsilon = 1e-12
        );
    }

    #[test]
    fn grid_is_capped_and_increasing() {
        let g = default_tau_grid(3206);
        assert_eq!(&g[..10], &(1..=10).collect::<Vec<_>>()[..]);
        assert_eq!(g[10], 12);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert!(*g.last().unwrap() <= 3206 / 3);
        assert_eq!(default_tau_grid(9), vec![1, 2, 3]);
    }

    #[test]
    fn build_filters_grid() {
        let s = series((0..30).map(|i| ((i * 37) % 11) as f64).collect());
        let c = build_loglog(&s, 2.0, &[1]).unwrap();
        assert_eq!(c.points.len(), 1);
        let c = build_loglog(&s, 2.0, &[0, 50, 3, 3, 2]).unwrap();
        assert_eq!(c.taus(), vec![2, 3]);
        assert!(build_loglog(&s, 2.0, &[11, 40]).is_err());
        let flat = series(vec![1.0; 30]);
        assert!(build_loglog(&flat, 2.0, &[1, 2]).is_err());
    }

    #[test]
    fn csv_round_trip_and_columns() {
        let c = curve_from(|x| 0.2 * x - 3.0, &[1, 2, 4]);
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "tau_days,log_tau,moment,log_moment"
        );
        let back = LogLogCurve::read_csv(&buf[..], 2.0, ProxyKind::LogVolatility).unwrap();
        assert_eq!(back.points, c.points);
    }

    #[test]
    fn log_average_is_geometric_mean() {
        let a = curve_from(|_| 1f64.ln(), &[1, 2]);
        let b = curve_from(|_| 4f64.ln(), &[1, 2]);
        let avg = LogLogCurve::average_log(&[a.clone(), b]).unwrap();
        assert_relative_eq!(avg.points[0].moment, 2.0, max_relative = 1e-14);
        let c = curve_from(|_| 0.0, &[1, 3]);
        assert!(LogLogCurve::average_log(&[a, c]).is_err());
    }

    proptest! {
        #[test]
        fn moments_translate_and_scale(
            xs in proptest::collection::vec(-10.0f64..10.0, 5..60),
            shift in -100.0f64..100.0,
            c in -5.0f64..5.0,
            k in 1.0f64..4.0,
            tau_frac in 0.0f64..1.0,
        ) {
            let tau = 1 + ((xs.len() - 2) as f64 * tau_frac) as usize;
            let base = abs_moment(&xs, k, tau, Increments::Overlapping).unwrap();
            let shifted: Vec<f64> = xs.iter().map(|x| x + shift).collect();
            let scaled: Vec<f64> = xs.iter().map(|x| x * c).collect();
            let m_shift = abs_moment(&shifted, k, tau, Increments::Overlapping).unwrap();
            let m_scale = abs_moment(&scaled, k, tau, Increments::Overlapping).unwrap();
            prop_assert!((m_shift - base).abs() <= 1e-9 * base.max(1.0));
            prop_assert!((m_scale - c.abs().powf(k) * base).abs() <= 1e-9 * (c.abs().powf(k) * base).max(1e-12));
        }

        #[test]
        fn regression_slope_ignores_level(
            slope in -1.0f64..1.0,
            offset in -5.0f64..5.0,
            noise in proptest::collection::vec(-0.1f64..0.1, 8),
            factor in 1e-3f64..1e3,
        ) {
            let taus = [1u32, 2, 3, 5, 8, 13, 21, 34];
            let pts: Vec<CurvePoint> = taus.iter().zip(&noise)
                .map(|(&t, e)| CurvePoint { tau: t, moment: (slope * (t as f64).ln() + offset + e).exp() })
                .collect();
            let scaled: Vec<CurvePoint> = pts.iter()
                .map(|p| CurvePoint { tau: p.tau, moment: p.moment * factor })
                .collect();
            let a = regress_hurst(&LogLogCurve::new(pts, 2.0, ProxyKind::LogVolatility, 200).unwrap(), 1, 34).unwrap();
            let b = regress_hurst(&LogLogCurve::new(scaled, 2.0, ProxyKind::LogVolatility, 200).unwrap(), 1, 34).unwrap();
            prop_assert!((a.hurst - b.hurst).abs() < 1e-10);
            prop_assert!((b.intercept - a.intercept - factor.ln()).abs() < 1e-9);
        }
    }
}
