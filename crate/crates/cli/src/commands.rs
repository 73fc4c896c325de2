use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Parser;
use serde::Serialize;
use serde_json::json;

use volscale_core::experiments::{self, FilterStudyConfig, PipelineConfig, SyntheticBarsSpec};
use volscale_core::filters::{default_hurst_input, filter_curve, write_filtered_csv};
use volscale_core::fractional::{fbm_abs_moment, simulate_fbm, simulate_fou};
use volscale_core::ingest::{self, build_days, daily_realized_series, parse_bars, IntradayDays};
use volscale_core::moments::{
    build_loglog, convexity_stat, default_tau_grid, max_scale, regress_hurst,
};
use volscale_core::noisecal::{bias_table, write_bias_csv};
use volscale_core::proxies::{convert, fill_zero_proxies, realized_variance};
use volscale_core::volmodels::{
    add_observation_noise, simulate_gbm_variance, simulate_price_path, simulate_rfsv_variance,
};
use volscale_core::{
    DailyProxySeries, FbmParams, FilterConfig, FouParams, GbmVarianceParams, HurstEstimate,
    LogLogCurve, NoiseSpec, PathSeries, ProxyKind, RfsvParams, ScaleWindow,
};

use crate::manifest::{digest_outputs, FileDigest, RunManifest};
use crate::{
    BarArgs, BiasTableArgs, Cli, Command, DataError, ExperimentCommand, FilterArgs, IngestArgs,
    LoglogArgs, Model, Outcome, PipelineArgs, RerunArgs, SimulateArgs, StepArgs, SynthBarsArgs,
    UsageError, WindowArgs,
};

/// Output directory plus the bookkeeping that ends up in the manifest.
struct Run {
    out_dir: PathBuf,
    outputs: Vec<String>,
    inputs: Vec<FileDigest>,
    seeds: Vec<u64>,
}

impl Run {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.out_dir.join(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        if !self.outputs.iter().any(|o| o == name) {
            self.outputs.push(name.to_string());
        }
        Ok(BufWriter::new(file))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    fn input(&mut self, path: &Path) -> Result<File> {
        self.inputs.push(FileDigest::of(path)?);
        File::open(path).with_context(|| format!("opening {}", path.display()))
    }
}

pub(crate) fn dispatch(cli: Cli, argv: Vec<String>) -> Result<Outcome> {
    fs::create_dir_all(&cli.out_dir)
        .with_context(|| format!("creating {}", cli.out_dir.display()))?;
    let mut run = Run {
        out_dir: cli.out_dir.clone(),
        outputs: Vec::new(),
        inputs: Vec::new(),
        seeds: Vec::new(),
    };
    let (name, params) = match &cli.command {
        Command::Rerun(args) => return rerun(args, &cli.out_dir),
        Command::Simulate(a) => (
            cli.command.name().to_string(),
            simulate(&mut run, a).and(Ok(json!(a)))?,
        ),
        Command::Loglog(a) => ("loglog".into(), loglog(&mut run, a).and(Ok(json!(a)))?),
        Command::Filter(a) => ("filter".into(), filter(&mut run, a).and(Ok(json!(a)))?),
        Command::BiasTable(a) => ("bias-table".into(), bias(&mut run, a).and(Ok(json!(a)))?),
        Command::StepSensitivity(a) => (
            "step-sensitivity".into(),
            steps(&mut run, a).and(Ok(json!(a)))?,
        ),
        Command::Ingest(a) => ("ingest".into(), ingest_cmd(&mut run, a).and(Ok(json!(a)))?),
        Command::Pipeline(a) => ("pipeline".into(), pipeline(&mut run, a).and(Ok(json!(a)))?),
        Command::SynthBars(a) => (
            "synth-bars".into(),
            synth_bars(&mut run, a).and(Ok(json!(a)))?,
        ),
        Command::Experiment(e) => (format!("experiment {}", e.name()), experiment(&mut run, e)?),
    };
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: name,
        argv,
        params,
        seeds: run.seeds.clone(),
        inputs: run.inputs.clone(),
        outputs: digest_outputs(&run.out_dir, &run.outputs)?,
    };
    let path = manifest.write(&run.out_dir)?;
    Ok(Outcome {
        out_dir: run.out_dir,
        outputs: run.outputs,
        manifest: Some(path),
    })
}

fn rerun(args: &RerunArgs, out_dir: &Path) -> Result<Outcome> {
    let manifest = RunManifest::read(&args.manifest)?;
    if manifest.argv.first().map(String::as_str) == Some("rerun") {
        return Err(UsageError("a manifest cannot replay another rerun".into()).into());
    }
    for input in &manifest.inputs {
        let now = FileDigest::of(Path::new(&input.path))
            .map_err(|e| DataError(format!("input {} unavailable: {e:#}", input.path)))?;
        if now.sha256 != input.sha256 {
            return Err(DataError(format!(
                "input {} changed since the manifest was written",
                input.path
            ))
            .into());
        }
    }
    let mut argv = vec![
        "volscale".to_string(),
        "--out-dir".into(),
        out_dir.display().to_string(),
    ];
    argv.extend(manifest.argv.iter().cloned());
    let cli = Cli::try_parse_from(&argv)?;
    let outcome = dispatch(cli, manifest.argv.clone())?;
    if args.verify {
        let now = digest_outputs(&outcome.out_dir, &outcome.outputs)?;
        for expected in &manifest.outputs {
            match now.iter().find(|d| d.path == expected.path) {
                Some(d) if d.sha256 == expected.sha256 => {}
                Some(_) => {
                    return Err(DataError(format!(
                        "output {} differs from the manifest",
                        expected.path
                    ))
                    .into())
                }
                None => {
                    return Err(
                        DataError(format!("output {} was not produced", expected.path)).into(),
                    )
                }
            }
        }
        log::info!("{} outputs reproduced", manifest.outputs.len());
    }
    Ok(outcome)
}

fn write_path_csv(w: impl Write, path: &PathSeries) -> Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "t,value")?;
    for (i, v) in path.values.iter().enumerate() {
        writeln!(w, "{},{}", i as f64 * path.step, v)?;
    }
    w.flush()?;
    Ok(())
}

fn daily_from_path(
    path: &PathSeries,
    steps_per_day: u32,
    kind: ProxyKind,
) -> Result<DailyProxySeries> {
    let daily = path.subsample(steps_per_day as usize);
    Ok(DailyProxySeries::new(daily.values, kind, 1)?)
}

fn simulate(run: &mut Run, a: &SimulateArgs) -> Result<()> {
    run.seeds.push(a.seed);
    let spd = a.steps_per_day;
    if spd == 0 {
        return Err(UsageError("--n must be positive".into()).into());
    }
    let fbm = FbmParams {
        hurst: a.hurst,
        scale: a.xi,
        step: 1.0 / spd as f64,
        length: a.days * spd as usize,
        seed: a.seed,
    };
    let gbm = GbmVarianceParams {
        sigma0: a.sigma0,
        beta: a.beta,
        days: a.days,
        steps_per_day: spd,
        seed: a.seed,
    };
    let (path, series) = match a.model {
        Model::Fbm => {
            let path = simulate_fbm(&fbm)?;
            let series = daily_from_path(&path, spd, ProxyKind::LogVolatility)?;
            (path, series)
        }
        Model::Fou => {
            let path = simulate_fou(&FouParams {
                base: fbm,
                reversion_rate: a.reversion_rate,
                long_mean: a.long_mean,
            })?;
            let series = daily_from_path(&path, spd, ProxyKind::LogVolatility)?;
            (path, series)
        }
        Model::Rfsv => {
            let params = RfsvParams {
                sigma_base: a.sigma_base,
                vol_of_vol: a.xi,
                hurst: a.hurst,
                days: a.days,
                steps_per_day: spd,
                seed: a.seed,
            };
            let var = simulate_rfsv_variance(&params)?;
            let prices = simulate_price_path(&var, a.substeps, a.seed)?;
            let series = realized_variance(&prices, spd * a.substeps)?;
            (var, series)
        }
        Model::GbmVar => {
            let var = simulate_gbm_variance(&gbm)?;
            let series = daily_from_path(&var, spd, ProxyKind::Variance)?;
            (var, series)
        }
        Model::NoisyGbmVar => {
            let var = simulate_gbm_variance(&gbm)?;
            let daily = var.subsample(spd as usize);
            let noisy = add_observation_noise(
                &daily,
                &NoiseSpec {
                    relative_sd: a.noise_rel_sd,
                    seed: a.seed,
                },
            )?;
            if noisy.floored > 0 {
                log::warn!("{} noisy variances floored", noisy.floored);
            }
            (var, noisy.series)
        }
    };
    ingest::write_series_csv(&series, None, run.create("series.csv")?)?;
    if a.spot_path {
        write_path_csv(run.create("path.csv")?, &path)?;
    }
    Ok(())
}

fn grid_with_windows(day_count: usize, windows: &WindowArgs) -> Vec<u32> {
    let cap = max_scale(day_count);
    let mut grid = default_tau_grid(day_count);
    for w in [windows.small, windows.large] {
        grid.extend([w.min, w.max].into_iter().filter(|&t| t <= cap));
    }
    grid.sort_unstable();
    grid.dedup();
    grid
}

#[derive(Debug, Serialize)]
struct WindowFit {
    window: ScaleWindow,
    estimate: Option<HurstEstimate>,
}

fn fit(curve: &LogLogCurve, window: ScaleWindow) -> WindowFit {
    let estimate = match regress_hurst(curve, window.min, window.max) {
        Ok(e) => Some(e),
        Err(e) => {
            log::warn!("no fit on scales {}:{}: {e}", window.min, window.max);
            None
        }
    };
    WindowFit { window, estimate }
}

fn curve_summary(curve: &LogLogCurve, windows: &WindowArgs) -> serde_json::Value {
    let small = fit(curve, windows.small);
    let large = fit(curve, windows.large);
    json!({
        "k": curve.k,
        "proxy": curve.source_kind,
        "day_count": curve.day_count,
        "points": curve.points.len(),
        "small_scale_h": small.estimate.map(|e| e.hurst),
        "large_scale_h": large.estimate.map(|e| e.hurst),
        "convexity": convexity_stat(curve, windows.small, windows.large).ok(),
        "small": small,
        "large": large,
    })
}

fn load_days(run: &mut Run, bars: &BarArgs) -> Result<IntradayDays> {
    let file = run.input(&bars.bars)?;
    let parsed = parse_bars(std::io::BufReader::new(file), &bars.schema())?;
    let mut days = build_days(&parsed.records, &bars.calendar())?;
    days.report.parse = parsed.stats;
    Ok(days)
}

fn proxy_series(rv: &DailyProxySeries, proxy: ProxyKind) -> Result<DailyProxySeries> {
    let (filled, zeros) = fill_zero_proxies(rv)?;
    if zeros > 0 && proxy.is_log() {
        log::warn!("{zeros} zero proxies replaced by the previous day before taking logs");
        return Ok(convert(&filled, proxy)?);
    }
    Ok(convert(rv, proxy)?)
}

fn loglog(run: &mut Run, a: &LoglogArgs) -> Result<()> {
    if a.k.is_nan() || a.k <= 0.0 {
        return Err(UsageError(format!("--k must be positive, got {}", a.k)).into());
    }
    let series = if let Some(path) = &a.series {
        let (series, _) =
            ingest::read_series_csv(std::io::BufReader::new(run.input(path)?), a.kind)?;
        Some(proxy_series(&series, a.proxy)?)
    } else if let Some(path) = &a.bars {
        let bars = BarArgs::parse_default(path.clone());
        let days = load_days(run, &bars)?;
        let rv = daily_realized_series(&days, a.n_per_day, a.normalization.into())?;
        Some(proxy_series(&rv, a.proxy)?)
    } else {
        None
    };
    let day_count = series.as_ref().map_or(a.days, |s| s.day_count());
    let cap = max_scale(day_count);
    if let Some(t) = a.tau_max {
        if t > cap {
            return Err(UsageError(format!(
                "--tau-max {t} exceeds a third of the {day_count}-day series ({cap}); \
                 moments at larger scales average fewer than three disjoint increments"
            ))
            .into());
        }
    }
    let mut grid = match &a.taus {
        Some(t) => t.clone(),
        None => grid_with_windows(day_count, &a.windows),
    };
    if let Some(max) = a.tau_max {
        grid.retain(|&t| t <= max);
    }
    if let Some(t) = grid.iter().find(|&&t| t == 0 || t > cap) {
        return Err(
            UsageError(format!("scale {t} outside [1, {cap}] for {day_count} days")).into(),
        );
    }
    let curve = match &series {
        Some(s) => build_loglog(s, a.k, &grid)?,
        None => {
            let params = FbmParams {
                hurst: a.hurst,
                scale: a.xi,
                step: 1.0,
                length: a.days,
                seed: 0,
            };
            params.validate()?;
            let points = grid
                .iter()
                .map(|&tau| volscale_core::CurvePoint {
                    tau,
                    moment: fbm_abs_moment(tau as f64, a.k, &params),
                })
                .collect();
            LogLogCurve::new(points, a.k, a.proxy, a.days)?
        }
    };
    curve.write_csv(run.create("curve.csv")?)?;
    let summary = curve_summary(&curve, &a.windows);
    run.json("summary.json", &summary)
}

impl BarArgs {
    fn parse_default(bars: PathBuf) -> Self {
        #[derive(Parser)]
        struct Wrapper {
            #[command(flatten)]
            bars: BarArgs,
        }
        let mut w = Wrapper::parse_from(["bars", "--bars", "-"]);
        w.bars.bars = bars;
        w.bars
    }
}

fn filter(run: &mut Run, a: &FilterArgs) -> Result<()> {
    if a.n == 0 {
        return Err(UsageError("--n must be positive".into()).into());
    }
    let file = run.input(&a.curve)?;
    let raw = LogLogCurve::read_csv(
        std::io::BufReader::new(file),
        2.0,
        a.variant.expected_kind(),
    )?;
    let hurst_input = match a.hurst_input {
        Some(h) => h,
        // unused without the smoothing correction
        None if a.no_smoothing => 0.5,
        None => default_hurst_input(&raw, a.windows.large)?,
    };
    let cfg = FilterConfig {
        n_intraday: a.n,
        hurst_input,
        variant: a.variant,
        apply_measurement: !a.no_measurement,
        apply_smoothing: !a.no_smoothing,
    };
    let filtered = filter_curve(&raw, &cfg)?;
    write_filtered_csv(&filtered, run.create("filtered.csv")?)?;
    if let Some(inputs) = &a.hurst_input_sweep {
        let rows =
            experiments::hurst_input_sweep(&raw, &cfg, inputs, a.windows.small, a.windows.large)?;
        let mut w = run.create("hurst_input_sweep.csv")?;
        writeln!(
            w,
            "hurst_input,convexity,small_scale_h,large_scale_h,dropped"
        )?;
        for r in rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.hurst_input, r.convexity, r.small_scale_h, r.large_scale_h, r.dropped
            )?;
        }
        w.flush()?;
    }
    let summary = json!({
        "config": cfg,
        "dropped": filtered.dropped,
        "smoothing_assumption": filtered.smoothing_assumption,
        "raw": curve_summary(&raw, &a.windows),
        "filtered": curve_summary(&filtered.curve, &a.windows),
    });
    run.json("filter_summary.json", &summary)
}

fn bias(run: &mut Run, a: &BiasTableArgs) -> Result<()> {
    let h_grid = a
        .h_in
        .clone()
        .unwrap_or_else(|| (1..=19).map(|i| i as f64 / 20.0).collect());
    let rows = bias_table(&h_grid, &a.n, a.d, &a.pairs)?;
    write_bias_csv(&rows, run.create("bias_table.csv")?)?;
    Ok(())
}

fn steps(run: &mut Run, a: &StepArgs) -> Result<()> {
    if let Some(s) = a
        .steps
        .iter()
        .find(|&&s| s == 0 || !ingest::MINUTES_PER_DAY.is_multiple_of(s))
    {
        return Err(UsageError(format!(
            "step of {s} minutes does not divide the 1440-minute day"
        ))
        .into());
    }
    let days = load_days(run, &a.bars)?;
    let rows = experiments::step_sensitivity(&days, &a.steps, a.windows.small, a.windows.large)?;
    let mut w = run.create("step_sensitivity.csv")?;
    writeln!(w, "step_minutes,n_intraday,small_scale_h,large_scale_h")?;
    for r in rows {
        let large = r.large_scale_h.map(|h| h.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{}",
            r.step_minutes, r.n_intraday, r.small_scale_h, large
        )?;
    }
    w.flush()?;
    Ok(())
}

fn ingest_cmd(run: &mut Run, a: &IngestArgs) -> Result<()> {
    let days = load_days(run, &a.bars)?;
    let series = daily_realized_series(&days, a.n_per_day, a.normalization.into())?;
    ingest::write_series_csv(&series, Some(&days.dates), run.create("series.csv")?)?;
    run.json("ingest_report.json", &days.report)
}

fn pipeline(run: &mut Run, a: &PipelineArgs) -> Result<()> {
    let days = load_days(run, &a.bars)?;
    let symbol = a.symbol.clone().unwrap_or_else(|| {
        a.bars
            .bars
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "series".into())
    });
    let cfg = PipelineConfig {
        n_per_day: a.n_per_day,
        normalization: a.normalization.into(),
        small: a.windows.small,
        large: a.windows.large,
        variant: a.variant,
        hurst_input: a.hurst_input,
    };
    let out = experiments::run_pipeline(&symbol, &days, &cfg)?;
    ingest::write_series_csv(&out.series, Some(&days.dates), run.create("series.csv")?)?;
    out.raw.write_csv(run.create("raw_curve.csv")?)?;
    if let Some(f) = &out.filtered {
        write_filtered_csv(f, run.create("filtered_curve.csv")?)?;
    }
    run.json("ingest_report.json", &days.report)?;
    run.json("hurst_table.json", &vec![out.row])
}

fn synth_bars(run: &mut Run, a: &SynthBarsArgs) -> Result<()> {
    run.seeds.push(a.seed);
    let start = chrono::NaiveDate::parse_from_str(&a.start, "%Y-%m-%d")
        .map_err(|e| UsageError(format!("--start '{}': {e}", a.start)))?;
    let rfsv = RfsvParams {
        sigma_base: a.sigma_base,
        vol_of_vol: a.xi,
        hurst: a.hurst,
        days: a.days,
        steps_per_day: ingest::MINUTES_PER_DAY,
        seed: a.seed,
    };
    let spec = SyntheticBarsSpec {
        initial_price: a.initial_price,
        missing_fraction: a.missing_fraction,
        duplicate_fraction: a.duplicate_fraction,
        swap_fraction: a.swap_fraction,
        ..SyntheticBarsSpec::new(rfsv, start)
    };
    let rows = experiments::synthetic_minute_bars(&spec)?;
    ingest::write_bars_csv(&rows, run.create("bars.csv")?)?;
    let grid = grid_with_windows(a.days, &a.windows);
    let expected =
        experiments::expected_log_vol_curve(a.hurst, a.xi, ingest::MINUTES_PER_DAY, &grid, a.days)?;
    let model = json!({
        "spec": spec,
        "expected_raw": curve_summary(&expected, &a.windows),
    });
    run.json("model.json", &model)
}

fn experiment(run: &mut Run, cmd: &ExperimentCommand) -> Result<serde_json::Value> {
    match cmd {
        ExperimentCommand::FilterStudy(a) => {
            let cfg = FilterStudyConfig {
                rfsv: RfsvParams {
                    sigma_base: a.sigma_base,
                    vol_of_vol: a.xi,
                    hurst: a.hurst,
                    days: a.days,
                    steps_per_day: a.n,
                    seed: a.seed,
                },
                substeps: a.substeps,
                n_seeds: a.seeds,
                hurst_input: a.hurst_input,
                window: a.window,
            };
            let study = experiments::rfsv_filter_study(&cfg)?;
            run.seeds = study.seeds.clone();
            study.raw.write_csv(run.create("raw_curve.csv")?)?;
            write_filtered_csv(&study.filtered, run.create("filtered_curve.csv")?)?;
            run.json(
                "filter_study.json",
                &json!({
                    "raw_fit": study.raw_fit,
                    "filtered_fit": study.filtered_fit,
                    "dropped": study.filtered.dropped,
                    "seeds": study.seeds.len(),
                }),
            )?;
            Ok(json!(a))
        }
        ExperimentCommand::NoisyGbm(a) => {
            let base = GbmVarianceParams {
                sigma0: a.sigma0,
                beta: a
                    .betas
                    .as_ref()
                    .and_then(|b| b.first().copied())
                    .unwrap_or(0.038),
                days: a.days,
                steps_per_day: 1,
                seed: a.seed,
            };
            let betas = a
                .betas
                .clone()
                .unwrap_or_else(|| experiments::log_grid(0.001, 0.2, 12));
            let rows =
                experiments::noisy_gbm_sweep(&base, a.noise_rel_sd, &betas, a.seeds, a.window)?;
            run.seeds = experiments::seeds(a.seed, a.seeds);
            let mut w = run.create("noisy_gbm.csv")?;
            writeln!(w, "beta,noisy_h,noisy_se,clean_h,clean_se")?;
            for r in rows {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    r.beta, r.noisy.mean, r.noisy.se, r.clean.mean, r.clean.se
                )?;
            }
            w.flush()?;
            Ok(json!(a))
        }
        ExperimentCommand::FouConvexity(a) => {
            let params = FouParams {
                base: FbmParams {
                    hurst: a.hurst,
                    scale: a.xi,
                    step: 1.0,
                    length: a.days,
                    seed: a.seed,
                },
                reversion_rate: a.reversion_rate,
                long_mean: 0.0,
            };
            let study = experiments::fou_convexity(&params, a.seeds, a.small, a.large)?;
            run.seeds = experiments::seeds(a.seed, a.seeds);
            run.json("fou_convexity.json", &study)?;
            Ok(json!(a))
        }
        ExperimentCommand::SmoothingMc(a) => {
            let rows =
                experiments::smoothing_monte_carlo(a.hurst, a.n, a.days, &a.taus, a.seeds, a.seed)?;
            run.seeds = experiments::seeds(a.seed, a.seeds);
            let mut w = run.create("smoothing_mc.csv")?;
            writeln!(w, "tau,empirical,se,theoretical,z")?;
            for r in rows {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    r.tau,
                    r.empirical,
                    r.se,
                    r.theoretical,
                    r.z_score()
                )?;
            }
            w.flush()?;
            Ok(json!(a))
        }
    }
}
