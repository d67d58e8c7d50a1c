use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use svofuse::baselines::equal_weights;
use svofuse::inference::BootstrapConfig;
use svofuse::models::{gmwm_fit_from_wv, ModelDescription, ModelSpec, ScalarWnRwFit};
use svofuse::study::{self, median, CompareConfig, CoverageConfig};
use svofuse::svo::WeightPreset;
use svofuse::wavelet::{default_labels, default_levels, demean, max_level};
use svofuse::{
    adapt_preset, infer, make_weights, min_norm_coefficients, modwt, optimal_coefficients, virtual_wv, wccv_matrices,
    CoefficientVector, SignalArray, SvoError, WeightSpec, WeightVector,
};

use crate::error::{CliError, CliResult};
use crate::io::{self, fmt_f64, SignalMeta};
use crate::{CiArgs, CompareArgs, CoverageArgs, FitArgs, InputArgs, SimulateArgs, WeightArgs};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
struct Tool {
    name: &'static str,
    version: &'static str,
}

const TOOL: Tool = Tool {
    name: "svofuse",
    version: env!("CARGO_PKG_VERSION"),
};

#[derive(Debug, Serialize)]
struct Scale {
    level: usize,
    tau_samples: usize,
    tau_seconds: f64,
}

fn scales(levels: usize, sample_rate_hz: f64) -> Vec<Scale> {
    (1..=levels)
        .map(|j| Scale {
            level: j,
            tau_samples: 1 << j,
            tau_seconds: (1u64 << j) as f64 / sample_rate_hz,
        })
        .collect()
}

/// Wall-clock stage timings, kept out of the reports so those stay
/// byte-reproducible.
struct Timings {
    command: &'static str,
    start: Instant,
    last: Instant,
    stages: Vec<(String, f64)>,
}

#[derive(Serialize)]
struct TimingsOut<'a> {
    command: &'a str,
    stages: Vec<Stage<'a>>,
    total_seconds: f64,
}

#[derive(Serialize)]
struct Stage<'a> {
    stage: &'a str,
    seconds: f64,
}

impl Timings {
    fn new(command: &'static str) -> Self {
        let now = Instant::now();
        Self {
            command,
            start: now,
            last: now,
            stages: Vec::new(),
        }
    }

    fn mark(&mut self, stage: &str) {
        let now = Instant::now();
        self.stages.push((stage.to_string(), (now - self.last).as_secs_f64()));
        self.last = now;
    }

    fn write(&self, out_dir: &Path) -> CliResult<()> {
        let out = TimingsOut {
            command: self.command,
            stages: self
                .stages
                .iter()
                .map(|(s, t)| Stage { stage: s, seconds: *t })
                .collect(),
            total_seconds: self.start.elapsed().as_secs_f64(),
        };
        io::write_json(&out_dir.join("timings.json"), &out)
    }
}

fn resolve_weights(omega: &str, levels: usize, adapt: bool) -> CliResult<WeightVector> {
    let spec: WeightSpec = omega.parse()?;
    Ok(match spec {
        WeightSpec::Preset(p) if adapt => adapt_preset(p, levels)?,
        spec => make_weights(&spec, levels)?,
    })
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

// ---------------------------------------------------------------- simulate

pub fn simulate(args: SimulateArgs) -> CliResult<()> {
    let mut timings = Timings::new("simulate");
    let (model, preset) = io::load_model(args.model.preset.as_deref(), args.model.model.as_deref(), args.model.delta)?;
    if args.n_samples < 2 {
        return Err(CliError::input("--T must be at least 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let signals = model.simulate(args.n_samples, &mut rng)?.with_sample_rate(args.sample_rate)?;
    timings.mark("simulate");

    io::create_dir(&args.out_dir)?;
    let csv_path = args.out_dir.join("signals.csv");
    io::write_signals(&csv_path, &signals)?;
    let meta = SignalMeta {
        schema_version: SCHEMA_VERSION,
        model: model.describe(),
        preset,
        seed: args.seed,
        n_samples: args.n_samples,
        sample_rate_hz: args.sample_rate,
    };
    io::write_json(&io::meta_path(&csv_path), &meta)?;
    if args.export_model {
        io::write_json(&args.out_dir.join("model.json"), &model.describe())?;
        let labels = default_labels(model.n_sensors());
        for (name, m) in model.matrices() {
            let rows: Vec<Vec<String>> = (0..m.nrows())
                .map(|i| m.row(i).iter().map(|v| fmt_f64(*v)).collect())
                .collect();
            io::write_table(&args.out_dir.join(format!("model_{name}.csv")), &labels, &rows)?;
        }
    }
    timings.mark("write");
    timings.write(&args.out_dir)?;
    println!(
        "wrote {} ({} sensors, {} samples)",
        csv_path.display(),
        signals.n_sensors(),
        signals.len()
    );
    Ok(())
}

// ---------------------------------------------------------------- fit / ci

#[derive(Debug, Serialize)]
struct InputConfig {
    input: String,
    sample_rate_hz: f64,
    demean: bool,
    split_halves: bool,
}

#[derive(Debug, Serialize)]
struct WeightConfig {
    levels: usize,
    omega: String,
    adapt_omega: bool,
}

#[derive(Debug, Serialize)]
struct DataSummary {
    labels: Vec<String>,
    n_sensors: usize,
    n_samples: usize,
}

#[derive(Debug, Serialize)]
struct MethodFit {
    method: &'static str,
    coefficients: Vec<f64>,
    fused_wv: Vec<f64>,
    wv_ratio_to_equal: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gmwm: Option<ScalarWnRwFit>,
}

#[derive(Debug, Serialize)]
struct SensorWv {
    label: String,
    wv: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct Analysis {
    data: DataSummary,
    scales: Vec<Scale>,
    weights: Vec<f64>,
    /// The aggregate matrix was singular and the minimum-norm minimizer was
    /// reported.
    degenerate: bool,
    methods: Vec<MethodFit>,
    sensor_wv: Vec<SensorWv>,
}

fn load_input(args: &InputArgs) -> CliResult<(SignalArray, InputConfig)> {
    let rate = args
        .sample_rate
        .or_else(|| io::read_meta(&args.input).map(|m| m.sample_rate_hz))
        .unwrap_or(1.0);
    if !(rate.is_finite() && rate > 0.0) {
        return Err(CliError::input(format!("--sample-rate must be positive, got {rate}")));
    }
    let mut signals = io::read_signals(&args.input, rate)?;
    if args.split_halves {
        signals = signals.split_halves()?;
    }
    if args.demean {
        signals = demean(&signals);
    }
    let config = InputConfig {
        input: args.input.display().to_string(),
        sample_rate_hz: rate,
        demean: args.demean,
        split_halves: args.split_halves,
    };
    Ok((signals, config))
}

fn check_levels(levels: usize, n_samples: usize) -> CliResult<()> {
    let max = max_level(n_samples);
    if levels == 0 || levels > max {
        return Err(SvoError::LevelTooLarge {
            requested: levels,
            max,
            samples: n_samples,
        }
        .into());
    }
    Ok(())
}

fn analyze(signals: &SignalArray, weights: &WeightArgs, gmwm: bool, allow_degenerate: bool) -> CliResult<(Analysis, WeightConfig, svofuse::WaveletPyramid, WeightVector)> {
    let levels = weights.levels.unwrap_or_else(|| default_levels(signals.len()));
    check_levels(levels, signals.len())?;
    let w = resolve_weights(&weights.omega, levels, weights.adapt_omega)?;
    let pyramid = modwt(signals, levels)?;
    let sc = wccv_matrices(&pyramid, &w)?;
    let (c, degenerate) = match optimal_coefficients(&sc.weighted) {
        Ok(c) => (c, false),
        Err(SvoError::DegenerateCovariance { .. }) if allow_degenerate => (min_norm_coefficients(&sc.weighted)?, true),
        Err(e) => return Err(e.into()),
    };
    let eq = equal_weights(signals.n_sensors());
    let eq_wv = virtual_wv(&sc.per_level, &eq)?;
    let method = |name: &'static str, c: &CoefficientVector| -> CliResult<MethodFit> {
        let wv = virtual_wv(&sc.per_level, c)?;
        Ok(MethodFit {
            method: name,
            coefficients: c.as_slice().to_vec(),
            wv_ratio_to_equal: wv.iter().zip(&eq_wv).map(|(a, b)| a / b).collect(),
            gmwm: gmwm.then(|| gmwm_fit_from_wv(&wv)),
            fused_wv: wv,
        })
    };
    let methods = vec![method("svo", &c)?, method("equal", &eq)?];
    let sensor_wv = signals
        .labels()
        .iter()
        .enumerate()
        .map(|(i, label)| SensorWv {
            label: label.clone(),
            wv: sc.per_level.iter().map(|a| a[(i, i)]).collect(),
        })
        .collect();
    let analysis = Analysis {
        data: DataSummary {
            labels: signals.labels().to_vec(),
            n_sensors: signals.n_sensors(),
            n_samples: signals.len(),
        },
        scales: scales(levels, signals.sample_rate_hz()),
        weights: w.as_slice().to_vec(),
        degenerate,
        methods,
        sensor_wv,
    };
    let config = WeightConfig {
        levels,
        omega: weights.omega.clone(),
        adapt_omega: weights.adapt_omega,
    };
    Ok((analysis, config, pyramid, w))
}

fn write_analysis_tables(out_dir: &Path, a: &Analysis) -> CliResult<()> {
    let mut header = vec!["sensor".to_string()];
    header.extend(a.methods.iter().map(|m| m.method.to_string()));
    let rows: Vec<Vec<String>> = a
        .data
        .labels
        .iter()
        .enumerate()
        .map(|(i, label)| {
            let mut row = vec![label.clone()];
            row.extend(a.methods.iter().map(|m| fmt_f64(m.coefficients[i])));
            row
        })
        .collect();
    io::write_table(&out_dir.join("coefficients.csv"), &header, &rows)?;

    let mut header: Vec<String> = vec!["level".into(), "tau_samples".into(), "tau_seconds".into()];
    header.extend(a.sensor_wv.iter().map(|s| s.label.clone()));
    header.extend(a.methods.iter().map(|m| format!("fused_{}", m.method)));
    header.extend(a.methods.iter().map(|m| format!("ratio_{}_to_equal", m.method)));
    let rows: Vec<Vec<String>> = a
        .scales
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let mut row = vec![s.level.to_string(), s.tau_samples.to_string(), fmt_f64(s.tau_seconds)];
            row.extend(a.sensor_wv.iter().map(|w| fmt_f64(w.wv[j])));
            row.extend(a.methods.iter().map(|m| fmt_f64(m.fused_wv[j])));
            row.extend(a.methods.iter().map(|m| fmt_f64(m.wv_ratio_to_equal[j])));
            row
        })
        .collect();
    io::write_table(&out_dir.join("wavelet_variance.csv"), &header, &rows)
}

#[derive(Debug, Serialize)]
struct FitConfig {
    #[serde(flatten)]
    input: InputConfig,
    #[serde(flatten)]
    weights: WeightConfig,
    gmwm: bool,
}

#[derive(Debug, Serialize)]
struct FitReport {
    schema_version: u32,
    tool: Tool,
    command: &'static str,
    config: FitConfig,
    #[serde(flatten)]
    analysis: Analysis,
}

pub fn fit(args: FitArgs) -> CliResult<()> {
    let mut timings = Timings::new("fit");
    let (signals, input) = load_input(&args.input)?;
    timings.mark("read");
    let (analysis, weights, _, _) = analyze(&signals, &args.weights, args.gmwm, true)?;
    timings.mark("fit");
    io::create_dir(&args.out_dir)?;
    write_analysis_tables(&args.out_dir, &analysis)?;
    let c = analysis.methods[0].coefficients.clone();
    let report = FitReport {
        schema_version: SCHEMA_VERSION,
        tool: TOOL,
        command: "fit",
        config: FitConfig {
            input,
            weights,
            gmwm: args.gmwm,
        },
        analysis,
    };
    io::write_json(&args.out_dir.join("report.json"), &report)?;
    timings.mark("write");
    timings.write(&args.out_dir)?;
    if report.analysis.degenerate {
        eprintln!("warning: singular aggregate matrix; reporting the minimum-norm coefficients");
    }
    println!("c = {c:?}");
    Ok(())
}

#[derive(Debug, Serialize)]
struct CiConfig {
    #[serde(flatten)]
    input: InputConfig,
    #[serde(flatten)]
    weights: WeightConfig,
    alpha: f64,
    block_size: usize,
    replicates: usize,
    seed: u64,
}

#[derive(Debug, Serialize)]
struct IntervalRow {
    sensor: String,
    estimate: f64,
    lower: f64,
    upper: f64,
    half_width: f64,
    /// Diagonal of the sandwich covariance; the half-width is
    /// `z · sqrt(sigma_ii / n_samples)`.
    sigma_ii: f64,
}

#[derive(Debug, Serialize)]
struct CiReport {
    schema_version: u32,
    tool: Tool,
    command: &'static str,
    config: CiConfig,
    #[serde(flatten)]
    analysis: Analysis,
    z: f64,
    intervals: Vec<IntervalRow>,
}

#[derive(Debug, Serialize)]
struct Diagnostics {
    v_star: Vec<Vec<f64>>,
    g_hat: Vec<Vec<f64>>,
    sigma_star: Vec<Vec<f64>>,
}

pub fn ci(args: CiArgs) -> CliResult<()> {
    let mut timings = Timings::new("ci");
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(CliError::input(format!("--alpha must lie in (0, 1), got {}", args.alpha)));
    }
    let (signals, input) = load_input(&args.input)?;
    timings.mark("read");
    let (analysis, weights, pyramid, w) = analyze(&signals, &args.weights, false, false)?;
    timings.mark("fit");
    let mut config = BootstrapConfig::for_pyramid(&pyramid, args.seed);
    config.replicates = args.replicates;
    if let Some(l) = args.block_size {
        config.block_size = l;
    }
    let fit = infer(&pyramid, &w, &config, args.alpha)?;
    timings.mark("bootstrap");

    let z = svofuse::inference::normal_quantile(1.0 - args.alpha / 2.0);
    let intervals: Vec<IntervalRow> = fit
        .intervals
        .intervals
        .iter()
        .enumerate()
        .map(|(i, iv)| IntervalRow {
            sensor: signals.labels()[i].clone(),
            estimate: iv.point,
            lower: iv.lower,
            upper: iv.upper,
            half_width: iv.half_width(),
            sigma_ii: fit.covariance.sigma_star[(i, i)],
        })
        .collect();

    io::create_dir(&args.out_dir)?;
    write_analysis_tables(&args.out_dir, &analysis)?;
    let rows: Vec<Vec<String>> = intervals
        .iter()
        .map(|r| {
            vec![
                r.sensor.clone(),
                fmt_f64(r.estimate),
                fmt_f64(r.lower),
                fmt_f64(r.upper),
                fmt_f64(r.half_width),
                fmt_f64(r.sigma_ii),
            ]
        })
        .collect();
    io::write_table(
        &args.out_dir.join("intervals.csv"),
        &["sensor", "estimate", "lower", "upper", "half_width", "sigma_ii"],
        &rows,
    )?;
    if args.diagnostics {
        let d = Diagnostics {
            v_star: matrix_rows(&fit.covariance.v_star),
            g_hat: matrix_rows(&fit.covariance.g_hat),
            sigma_star: matrix_rows(&fit.covariance.sigma_star),
        };
        io::write_json(&args.out_dir.join("diagnostics.json"), &d)?;
    }
    let report = CiReport {
        schema_version: SCHEMA_VERSION,
        tool: TOOL,
        command: "ci",
        config: CiConfig {
            input,
            weights,
            alpha: args.alpha,
            block_size: config.block_size,
            replicates: config.replicates,
            seed: args.seed,
        },
        analysis,
        z,
        intervals,
    };
    io::write_json(&args.out_dir.join("report.json"), &report)?;
    timings.mark("write");
    timings.write(&args.out_dir)?;
    for r in &report.intervals {
        println!("{}: {:.6} [{:.6}, {:.6}]", r.sensor, r.estimate, r.lower, r.upper);
    }
    Ok(())
}

// ---------------------------------------------------------------- compare

#[derive(Debug, Serialize)]
struct ModelConfig {
    preset: Option<String>,
    model: ModelDescription,
    n_samples: usize,
    seed: u64,
    sample_rate_hz: f64,
}

#[derive(Debug, Serialize)]
struct CompareSettings {
    #[serde(flatten)]
    model: ModelConfig,
    levels: usize,
    n_fit: usize,
    n_eval: usize,
    long_weights: Vec<f64>,
    short_weights: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct CoefficientSummary {
    sensor: String,
    mean: f64,
    sd: f64,
    min: f64,
    median: f64,
    max: f64,
}

#[derive(Debug, Serialize)]
struct CompareMethod {
    method: study::Method,
    coefficients: Vec<Vec<f64>>,
    coefficient_summary: Vec<CoefficientSummary>,
    wv_curves: Vec<Vec<f64>>,
    wv_mean: Vec<f64>,
    wv_se: Vec<f64>,
    wv_ratio_to_equal: Vec<f64>,
    fits: Vec<ScalarWnRwFit>,
    median_sigma2: f64,
    median_gamma2: f64,
}

#[derive(Debug, Serialize)]
struct CompareOut {
    schema_version: u32,
    tool: Tool,
    command: &'static str,
    config: CompareSettings,
    scales: Vec<Scale>,
    methods: Vec<CompareMethod>,
    sensor_wv_mean: Vec<SensorWv>,
}

fn summarize(coefficients: &[Vec<f64>], labels: &[String]) -> Vec<CoefficientSummary> {
    labels
        .iter()
        .enumerate()
        .map(|(i, label)| {
            let v: Vec<f64> = coefficients.iter().map(|c| c[i]).collect();
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let sd = if v.len() > 1 {
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            CoefficientSummary {
                sensor: label.clone(),
                mean,
                sd,
                min: v.iter().copied().fold(f64::INFINITY, f64::min),
                median: median(v.clone()),
                max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect()
}

fn model_config(model: &ModelSpec, preset: Option<String>, n_samples: usize, seed: u64, rate: f64) -> ModelConfig {
    ModelConfig {
        preset,
        model: model.describe(),
        n_samples,
        seed,
        sample_rate_hz: rate,
    }
}

pub fn compare(args: CompareArgs) -> CliResult<()> {
    let mut timings = Timings::new("compare");
    let (model, preset) = io::load_model(args.model.preset.as_deref(), args.model.model.as_deref(), args.model.delta)?;
    let levels = args.levels.unwrap_or_else(|| max_level(args.n_samples));
    check_levels(levels, args.n_samples)?;
    let config = CompareConfig {
        n_fit: args.n_fit,
        n_eval: args.n_eval,
        n_samples: args.n_samples,
        levels,
        long_weights: adapt_preset(WeightPreset::LongScale, levels)?,
        short_weights: adapt_preset(WeightPreset::ShortScale, levels)?,
        seed: args.seed,
    };
    let report = study::compare(&model, &config)?;
    timings.mark("monte carlo");

    let labels = default_labels(model.n_sensors());
    let methods: Vec<CompareMethod> = report
        .methods
        .iter()
        .map(|r| CompareMethod {
            method: r.method,
            coefficient_summary: summarize(&r.coefficients, &labels),
            coefficients: r.coefficients.clone(),
            wv_curves: r.wv_curves.clone(),
            wv_mean: r.wv_mean.clone(),
            wv_se: r.wv_se.clone(),
            wv_ratio_to_equal: report.ratio_to_equal(r.method).unwrap_or_default(),
            fits: r.fits.clone(),
            median_sigma2: r.median_sigma2(),
            median_gamma2: r.median_gamma2(),
        })
        .collect();
    let out = CompareOut {
        schema_version: SCHEMA_VERSION,
        tool: TOOL,
        command: "compare",
        config: CompareSettings {
            model: model_config(&model, preset, args.n_samples, args.seed, args.sample_rate),
            levels,
            n_fit: args.n_fit,
            n_eval: args.n_eval,
            long_weights: config.long_weights.as_slice().to_vec(),
            short_weights: config.short_weights.as_slice().to_vec(),
        },
        scales: scales(levels, args.sample_rate),
        methods,
        sensor_wv_mean: labels
            .iter()
            .zip(&report.sensor_wv_mean)
            .map(|(l, wv)| SensorWv {
                label: l.clone(),
                wv: wv.clone(),
            })
            .collect(),
    };

    io::create_dir(&args.out_dir)?;
    io::write_json(&args.out_dir.join("report.json"), &out)?;
    write_compare_tables(&args.out_dir, &out, &labels)?;
    timings.mark("write");
    timings.write(&args.out_dir)?;
    for m in &out.methods {
        println!(
            "{:<15} median sigma2 {:.4e}  median gamma2 {:.4e}",
            m.method.to_string(),
            m.median_sigma2,
            m.median_gamma2
        );
    }
    Ok(())
}

fn write_compare_tables(out_dir: &Path, out: &CompareOut, labels: &[String]) -> CliResult<()> {
    let mut header: Vec<String> = vec!["level".into(), "tau_samples".into(), "tau_seconds".into()];
    for m in &out.methods {
        header.push(format!("{}_mean", m.method));
        header.push(format!("{}_se", m.method));
        header.push(format!("{}_ratio_to_equal", m.method));
    }
    let rows: Vec<Vec<String>> = out
        .scales
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let mut row = vec![s.level.to_string(), s.tau_samples.to_string(), fmt_f64(s.tau_seconds)];
            for m in &out.methods {
                row.push(fmt_f64(m.wv_mean[j]));
                row.push(fmt_f64(m.wv_se[j]));
                row.push(fmt_f64(m.wv_ratio_to_equal[j]));
            }
            row
        })
        .collect();
    io::write_table(&out_dir.join("compare_wv.csv"), &header, &rows)?;

    let mut header = vec!["method".to_string(), "fit".to_string()];
    header.extend(labels.iter().cloned());
    let rows: Vec<Vec<String>> = out
        .methods
        .iter()
        .flat_map(|m| {
            m.coefficients.iter().enumerate().map(move |(f, c)| {
                let mut row = vec![m.method.to_string(), f.to_string()];
                row.extend(c.iter().map(|v| fmt_f64(*v)));
                row
            })
        })
        .collect();
    io::write_table(&out_dir.join("compare_coefficients.csv"), &header, &rows)?;

    let n_eval = out.config.n_eval;
    let rows: Vec<Vec<String>> = out
        .methods
        .iter()
        .flat_map(|m| {
            m.fits.iter().enumerate().map(move |(k, f)| {
                vec![
                    m.method.to_string(),
                    (k / n_eval).to_string(),
                    (k % n_eval).to_string(),
                    fmt_f64(f.sigma2),
                    fmt_f64(f.gamma2),
                ]
            })
        })
        .collect();
    io::write_table(&out_dir.join("compare_fits.csv"), &["method", "fit", "eval", "sigma2", "gamma2"], &rows)
}

// ---------------------------------------------------------------- coverage

#[derive(Debug, Serialize)]
struct CoverageSettings {
    #[serde(flatten)]
    model: ModelConfig,
    levels: usize,
    omega: String,
    weights: Vec<f64>,
    alpha: f64,
    block_size: usize,
    replicates: usize,
    mc_reps: usize,
}

#[derive(Debug, Serialize)]
struct CoverageRow {
    sensor: String,
    target: f64,
    coverage: f64,
    mean_half_width: f64,
    empirical_sd: f64,
    mean_estimated_sd: f64,
}

#[derive(Debug, Serialize)]
struct CoverageOut {
    schema_version: u32,
    tool: Tool,
    command: &'static str,
    config: CoverageSettings,
    nominal: f64,
    mc_error: f64,
    coefficients: Vec<CoverageRow>,
    estimates: Vec<Vec<f64>>,
}

pub fn coverage(args: CoverageArgs) -> CliResult<()> {
    let mut timings = Timings::new("coverage");
    let (model, preset) = io::load_model(args.model.preset.as_deref(), args.model.model.as_deref(), args.model.delta)?;
    let ModelSpec::WnRw(wn_rw) = &model else {
        return Err(CliError::input("coverage needs a white-noise plus random-walk model (closed-form target)"));
    };
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(CliError::input(format!("--alpha must lie in (0, 1), got {}", args.alpha)));
    }
    check_levels(args.levels, args.n_samples)?;
    let weights = resolve_weights(&args.omega, args.levels, true)?;
    let config = CoverageConfig {
        n_samples: args.n_samples,
        levels: args.levels,
        weights: weights.clone(),
        replicates: args.replicates,
        block_size: args.block_size,
        mc_reps: args.mc_reps,
        alpha: args.alpha,
        seed: args.seed,
    };
    let report = study::coverage(wn_rw, &config)?;
    timings.mark("monte carlo");

    let labels = default_labels(model.n_sensors());
    let rows: Vec<CoverageRow> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| CoverageRow {
            sensor: l.clone(),
            target: report.target[i],
            coverage: report.coverage[i],
            mean_half_width: report.mean_half_width[i],
            empirical_sd: report.empirical_sd[i],
            mean_estimated_sd: report.mean_estimated_sd[i],
        })
        .collect();
    let out = CoverageOut {
        schema_version: SCHEMA_VERSION,
        tool: TOOL,
        command: "coverage",
        config: CoverageSettings {
            model: model_config(&model, preset, args.n_samples, args.seed, svofuse::models::presets::SAMPLE_RATE_HZ),
            levels: args.levels,
            omega: args.omega.clone(),
            weights: weights.as_slice().to_vec(),
            alpha: args.alpha,
            block_size: report.block_size,
            replicates: args.replicates,
            mc_reps: args.mc_reps,
        },
        nominal: 1.0 - args.alpha,
        mc_error: report.mc_error(),
        coefficients: rows,
        estimates: report.estimates.clone(),
    };
    io::create_dir(&args.out_dir)?;
    io::write_json(&args.out_dir.join("report.json"), &out)?;
    let table: Vec<Vec<String>> = out
        .coefficients
        .iter()
        .map(|r| {
            vec![
                r.sensor.clone(),
                fmt_f64(r.target),
                fmt_f64(r.coverage),
                fmt_f64(r.mean_half_width),
                fmt_f64(r.empirical_sd),
                fmt_f64(r.mean_estimated_sd),
            ]
        })
        .collect();
    io::write_table(
        &args.out_dir.join("coverage.csv"),
        &["sensor", "target", "coverage", "mean_half_width", "empirical_sd", "mean_estimated_sd"],
        &table,
    )?;
    timings.mark("write");
    timings.write(&args.out_dir)?;
    for r in &out.coefficients {
        println!("{}: coverage {:.3} (target {:.6})", r.sensor, r.coverage, r.target);
    }
    Ok(())
}
