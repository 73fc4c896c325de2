use approx::assert_relative_eq;
use proptest::prelude::*;

use volscale_core::filters::{filter_curve, unfilter_curve};
use volscale_core::fractional::simulate_fbm;
use volscale_core::ingest::{build_days, daily_realized_series, parse_bars, MINUTES_PER_DAY};
use volscale_core::moments::{
    build_loglog, default_tau_grid, fbm_theoretical_curve, regress_hurst,
};
use volscale_core::proxies::{convert, realized_variance, RealizedNormalization};
use volscale_core::volmodels::{simulate_price_path, simulate_rfsv_variance};
use volscale_core::{
    BarSchema, CurvePoint, DailyProxySeries, Error, ErrorCategory, FbmParams, FilterConfig,
    FilterVariant, LogLogCurve, ProxyKind, RfsvParams, TradingCalendarConfig,
};

const DAY: usize = MINUTES_PER_DAY as usize;

fn fbm(hurst: f64, length: usize, seed: u64) -> Vec<f64> {
    simulate_fbm(&FbmParams {
        hurst,
        scale: 1.0,
        step: 1.0,
        length,
        seed,
    })
    .unwrap()
    .values
}

#[test]
fn simulated_fbm_slope_recovers_hurst() {
    for (h, seed) in [(0.2, 11), (0.6, 12)] {
        let series =
            DailyProxySeries::new(fbm(h, 20_000, seed), ProxyKind::LogVolatility, 1).unwrap();
        let curve = build_loglog(&series, 2.0, &default_tau_grid(series.day_count())).unwrap();
        let est = regress_hurst(&curve, 1, 50).unwrap();
        assert!(
            (est.hurst - h).abs() < 0.04,
            "H = {h}: estimated {}",
            est.hurst
        );
        assert!(est.r_squared > 0.99);
    }
}

#[test]
fn theoretical_curve_has_exact_slope() {
    let params = FbmParams {
        hurst: 0.35,
        scale: 0.7,
        step: 1.0,
        length: 3000,
        seed: 0,
    };
    let curve = fbm_theoretical_curve(&params, 1.5, &default_tau_grid(3000)).unwrap();
    let est = regress_hurst(&curve, 1, 1000).unwrap();
    assert_relative_eq!(est.hurst, 0.35, epsilon = 1e-12);
    assert!(est.ssr < 1e-20);
}

#[test]
fn same_seed_same_path() {
    assert_eq!(fbm(0.3, 5000, 3), fbm(0.3, 5000, 3));
    assert_ne!(fbm(0.3, 5000, 3), fbm(0.3, 5000, 4));
}

#[test]
fn rfsv_to_filtered_curve() {
    let params = RfsvParams {
        sigma_base: 0.006,
        vol_of_vol: 0.1,
        hurst: 0.2,
        days: 1500,
        steps_per_day: 48,
        seed: 21,
    };
    let variance = simulate_rfsv_variance(&params).unwrap();
    let prices = simulate_price_path(&variance, 1, params.seed).unwrap();
    let rv = realized_variance(&prices, 48).unwrap();
    assert_eq!(rv.day_count(), 1500);
    let logvol = convert(&rv, ProxyKind::LogVolatility).unwrap();
    let raw = build_loglog(&logvol, 2.0, &default_tau_grid(1500)).unwrap();
    let cfg = FilterConfig::full(48, 0.2, FilterVariant::LogVolFbm);
    let filtered = filter_curve(&raw, &cfg).unwrap();
    assert_eq!(filtered.rows.len(), raw.points.len());
    assert_eq!(
        filtered.dropped + filtered.curve.points.len(),
        raw.points.len()
    );
    let raw_h = regress_hurst(&raw, 1, 21).unwrap().hurst;
    let filtered_h = regress_hurst(&filtered.curve, 1, 21).unwrap().hurst;
    // At this vol-of-vol measurement noise dominates and flattens the raw curve.
    assert!(filtered_h > raw_h, "filtered {filtered_h} vs raw {raw_h}");
}

fn curve(moments: &[(u32, f64)]) -> LogLogCurve {
    let points = moments
        .iter()
        .map(|&(tau, moment)| CurvePoint { tau, moment })
        .collect();
    LogLogCurve::new(points, 2.0, ProxyKind::LogVolatility, 1000).unwrap()
}

#[test]
fn filter_without_corrections_is_identity() {
    let raw = curve(&[(1, 0.02), (2, 0.03), (5, 0.05), (10, 0.08)]);
    let mut cfg = FilterConfig::full(36, 0.25, FilterVariant::LogVolFbm);
    cfg.apply_measurement = false;
    cfg.apply_smoothing = false;
    let out = filter_curve(&raw, &cfg).unwrap();
    assert_eq!(out.curve.points, raw.points);
    assert_eq!(out.dropped, 0);
}

#[test]
fn points_below_offset_are_dropped_not_clamped() {
    // offset 1/36 ~ 0.0278
    let raw = curve(&[(1, 0.02), (2, 0.0277), (5, 0.05), (10, 0.08)]);
    let out = filter_curve(
        &raw,
        &FilterConfig::full(36, 0.25, FilterVariant::LogVolFbm),
    )
    .unwrap();
    assert_eq!(out.dropped, 2);
    assert_eq!(out.curve.taus(), vec![5, 10]);
    assert!(out.rows[0].dropped() && out.rows[1].dropped());
    assert!(out.curve.points.iter().all(|p| p.moment > 0.0));
}

#[test]
fn filter_rejects_bad_configuration() {
    let raw = curve(&[(1, 0.2), (2, 0.3)]);
    for cfg in [
        FilterConfig::full(0, 0.25, FilterVariant::LogVolFbm),
        FilterConfig::full(36, 1.0, FilterVariant::LogVarFbm),
        FilterConfig::full(36, 0.0, FilterVariant::LogVarFbm),
    ] {
        let err = filter_curve(&raw, &cfg).unwrap_err();
        assert_eq!(err.category(), ErrorCategory::Usage);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unfilter_inverts_filter(
        h in 0.05f64..0.95,
        n in 1u32..400,
        base in 0.5f64..5.0,
        variant in prop_oneof![Just(FilterVariant::LogVolFbm), Just(FilterVariant::LogVarFbm)],
    ) {
        let points = [(1, base), (3, base * 1.5), (10, base * 2.0), (40, base * 3.0)]
            .iter()
            .map(|&(tau, moment)| CurvePoint { tau, moment })
            .collect();
        let raw = LogLogCurve::new(points, 2.0, variant.expected_kind(), 1000).unwrap();
        let cfg = FilterConfig::full(n, h, variant);
        let filtered = filter_curve(&raw, &cfg).unwrap();
        prop_assume!(filtered.dropped == 0);
        let back = unfilter_curve(&filtered.curve, &cfg).unwrap();
        for (a, b) in back.points.iter().zip(&raw.points) {
            prop_assert!((a.moment - b.moment).abs() <= 1e-12 * b.moment);
        }
    }

    #[test]
    fn loglog_is_shift_invariant(shift in -10.0f64..10.0, seed in 0u64..50) {
        let values = fbm(0.3, 400, seed);
        let shifted: Vec<f64> = values.iter().map(|v| v + shift).collect();
        let grid = default_tau_grid(400);
        let a = build_loglog(&DailyProxySeries::new(values, ProxyKind::LogVolatility, 1).unwrap(), 2.0, &grid).unwrap();
        let b = build_loglog(&DailyProxySeries::new(shifted, ProxyKind::LogVolatility, 1).unwrap(), 2.0, &grid).unwrap();
        for (p, q) in a.points.iter().zip(&b.points) {
            prop_assert!((p.moment - q.moment).abs() <= 1e-9 * p.moment);
        }
    }

    #[test]
    fn tau_grid_is_increasing_and_capped(n in 4usize..100_000) {
        let grid = default_tau_grid(n);
        prop_assert!(grid.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(*grid.last().unwrap() as usize <= (n / 3).max(1));
    }
}

#[test]
fn messy_bar_file_is_repaired() {
    let mut text = String::from("timestamp,price\n");
    // two complete days of flat-then-rising prices, written out of order
    let mut rows = Vec::new();
    for m in 0..(2 * DAY) {
        let ts = chrono::DateTime::from_timestamp(1_704_153_600 + 60 * m as i64, 0).unwrap();
        rows.push(format!("{},{}\n", ts.to_rfc3339(), 1.1 + 1e-6 * m as f64));
    }
    rows.swap(10, 11);
    rows.insert(500, rows[499].clone());
    rows.insert(700, "garbage,row\n".into());
    for r in &rows {
        text.push_str(r);
    }
    let schema = BarSchema {
        max_bad_rows: 1,
        ..BarSchema::default()
    };
    let parsed = parse_bars(text.as_bytes(), &schema).unwrap();
    assert!(parsed.stats.header);
    assert_eq!(parsed.stats.rows_rejected, 1);
    assert_eq!(parsed.stats.duplicates, 1);
    assert!(parsed.stats.reordered >= 1);
    assert_eq!(parsed.records.len(), 2 * DAY);

    let days = build_days(&parsed.records, &TradingCalendarConfig::default()).unwrap();
    assert_eq!(days.day_count(), 2);
    assert_eq!(days.report.days_without_anchor, 1);
    let rv = daily_realized_series(&days, 48, RealizedNormalization::Sum).unwrap();
    assert_eq!(rv.day_count(), 2);
    assert!(rv.values.iter().all(|v| *v > 0.0));

    let strict = parse_bars(text.as_bytes(), &BarSchema::default()).unwrap_err();
    assert!(matches!(strict, Error::Data(_)), "{strict}");
}

#[test]
fn realized_series_requires_divisor_of_a_day() {
    let records: Vec<_> = (0..DAY)
        .map(|m| volscale_core::MinuteBarRecord {
            timestamp: chrono::DateTime::from_timestamp(1_704_153_600 + 60 * m as i64, 0).unwrap(),
            price: 1.0 + 1e-5 * (m % 7) as f64,
        })
        .collect();
    let days = build_days(&records, &TradingCalendarConfig::default()).unwrap();
    assert!(daily_realized_series(&days, 7, RealizedNormalization::Sum).is_err());
    assert!(daily_realized_series(&days, 1440, RealizedNormalization::Average).is_ok());
}
