//! `seqnet` command-line front end.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime error.

mod recipes;
mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use serde::Serialize;

use seqnet::analytics::{self, RefinedConstants, StoppingTimes};
use seqnet::config::{DetectorKind, ExperimentConfig, DEFAULT_MC_SAMPLES};
use seqnet::montecarlo::{
    operating_point, run_experiment, threshold_sweep, with_operating_point, Experiment, MonteCarloError,
    OperatingPointOptions, SummaryTable,
};
use seqnet::weights::{validate_condition1, SpectralReport};
use seqnet::{Hypothesis, Matrix, Scalar, Thresholds, WeightMatrix};

use recipes::Recipe;
use report::{AnalyticRow, ConsensusRefs, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "seqnet", version, about = "Distributed sequential hypothesis testing on sensor networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment description (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed; overrides the config's seed.
    #[arg(long, global = true, env = "SEQNET_SEED")]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Trials per (threshold, hypothesis) cell; overrides the config.
    #[arg(long, global = true)]
    trials: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Spectral report for the consensus weights.
    ValidateWeights,
    /// Threshold sweep with analytic reference columns.
    Sweep,
    /// Thresholds from error targets, then a simulation at those thresholds.
    OperatingPoint,
    /// Refined error-probability constants for the consensus test.
    Constants,
    /// Closed-form stopping-time and error predictions.
    Predict,
    /// Run a built-in sweep for one of the ring networks.
    Reproduce {
        #[arg(value_enum)]
        recipe: Recipe,
    },
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn config(e: impl Into<anyhow::Error>) -> Self {
        Failure::Config(e.into())
    }

    fn runtime(e: impl Into<anyhow::Error>) -> Self {
        Failure::Runtime(e.into())
    }
}

impl From<MonteCarloError> for Failure {
    fn from(e: MonteCarloError) -> Self {
        match e {
            MonteCarloError::Config(_) | MonteCarloError::SweepTooShort(_) | MonteCarloError::MissingTargets => {
                Failure::config(e)
            }
            other => Failure::runtime(other),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.workers {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(|| dispatch(&cli)),
            Err(e) => Err(Failure::runtime(e)),
        },
        None => dispatch(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::ValidateWeights => validate_weights(cli),
        Command::Sweep => {
            let config = load_config(cli)?;
            sweep(cli, config, "sweep", cli.out.clone())
        }
        Command::Reproduce { recipe } => {
            let mut config = recipe.config();
            apply_overrides(cli, &mut config);
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(format!("{}.csv", recipe.name())));
            sweep(cli, config, &format!("reproduce {}", recipe.name()), Some(out))
        }
        Command::OperatingPoint => run_operating_point(cli),
        Command::Constants => constants(cli),
        Command::Predict => predict(cli),
    }
}

fn apply_overrides(cli: &Cli, config: &mut ExperimentConfig) {
    if let Some(t) = cli.trials {
        config.trials = t;
    }
    if let Some(s) = cli.seed {
        config.seed = Some(s);
    }
}

fn load_config(cli: &Cli) -> CliResult<ExperimentConfig> {
    let path = cli.config.as_ref().ok_or_else(|| Failure::config(anyhow!("--config is required")))?;
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::config)?;
    let mut config = ExperimentConfig::from_json(&text).map_err(Failure::config)?;
    apply_overrides(cli, &mut config);
    config.validate().map_err(Failure::config)?;
    Ok(config)
}

fn experiment(config: &ExperimentConfig) -> CliResult<Experiment> {
    Experiment::from_config(config, None).map_err(Failure::config)
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

/// Writes the main output plus, with `--out`, a JSON mirror and a manifest.
#[allow(clippy::too_many_arguments)]
fn finish_run(
    cli: &Cli,
    out: Option<&Path>,
    command: &str,
    config: &ExperimentConfig,
    seed: u64,
    main: &[u8],
    mirror: Option<&[u8]>,
    started: (u128, Instant),
) -> CliResult<()> {
    let mut outputs = Vec::new();
    report::emit(out, main).map_err(Failure::runtime)?;
    if let Some(out) = out {
        outputs.push(out.display().to_string());
        if let Some(bytes) = mirror {
            let path = report::sibling(out, ".json");
            if path != out {
                report::emit(Some(&path), bytes).map_err(Failure::runtime)?;
                outputs.push(path.display().to_string());
            }
        }
    }
    let mut effective = config.clone();
    effective.seed = Some(seed);
    let canonical = effective.canonical_json();
    let manifest = RunManifest {
        tool: "seqnet",
        version: env!("CARGO_PKG_VERSION"),
        command: command.to_string(),
        config_sha256: report::digest(&canonical),
        config: serde_json::from_str(&canonical).map_err(Failure::runtime)?,
        seed,
        trials: config.trials,
        workers: cli.workers,
        started_unix_ms: started.0,
        wall_seconds: started.1.elapsed().as_secs_f64(),
        outputs,
    };
    let bytes = report::json_bytes(&manifest).map_err(Failure::runtime)?;
    match out {
        Some(out) => report::emit(Some(&report::sibling(out, ".manifest.json")), &bytes).map_err(Failure::runtime),
        None => {
            eprint!("{}", String::from_utf8_lossy(&bytes));
            Ok(())
        }
    }
}

fn consensus_rounds(exp: &Experiment) -> Vec<u32> {
    let mut qs: Vec<u32> = exp.detectors.iter().filter_map(|d| d.rounds()).collect();
    qs.sort_unstable();
    qs.dedup();
    qs
}

fn t0_for(config: &ExperimentConfig, w: &WeightMatrix<f64>, q: u32) -> u32 {
    config.t0.unwrap_or_else(|| analytics::default_t0(w.sigma2(), q))
}

fn refs_for(config: &ExperimentConfig, exp: &Experiment, sensors: &[usize]) -> CliResult<Vec<ConsensusRefs>> {
    let Some(w) = exp.weights.as_ref() else { return Ok(Vec::new()) };
    let samples = config.mc_samples.unwrap_or(DEFAULT_MC_SAMPLES);
    let mut out = Vec::new();
    for q in consensus_rounds(exp) {
        for &sensor in sensors {
            let constants = analytics::refined_constants(w, q, t0_for(config, w, q), &exp.models, sensor, samples, exp.seed)
                .map_err(Failure::runtime)?;
            out.push(ConsensusRefs { rounds: q, constants });
        }
    }
    Ok(out)
}

fn sweep(cli: &Cli, config: ExperimentConfig, command: &str, out: Option<PathBuf>) -> CliResult<()> {
    let started = (now_ms(), Instant::now());
    config.validate().map_err(Failure::config)?;
    let exp = experiment(&config)?;
    let table = threshold_sweep(&exp)?;
    let refs = refs_for(&config, &exp, &[config.sensor.unwrap_or(0)])?;
    let analytic: Vec<AnalyticRow> = table.rows.iter().map(|r| report::analytic_row(&exp, r, &refs)).collect();
    let csv = report::csv_bytes(&table, Some(&analytic)).map_err(Failure::runtime)?;
    #[derive(Serialize)]
    struct Mirror<'a> {
        #[serde(flatten)]
        table: &'a SummaryTable,
        analytic: &'a [AnalyticRow],
        constants: Vec<&'a RefinedConstants>,
    }
    let mirror = report::json_bytes(&Mirror {
        table: &table,
        analytic: &analytic,
        constants: refs.iter().map(|r| &r.constants).collect(),
    })
    .map_err(Failure::runtime)?;
    finish_run(cli, out.as_deref(), command, &config, exp.seed, &csv, Some(&mirror), started)
}

fn run_operating_point(cli: &Cli) -> CliResult<()> {
    let started = (now_ms(), Instant::now());
    let config = load_config(cli)?;
    let targets = config.targets.ok_or(MonteCarloError::MissingTargets)?;
    let exp = experiment(&config)?;
    let opts = OperatingPointOptions {
        t0: config.t0,
        mc_samples: config.mc_samples.unwrap_or(DEFAULT_MC_SAMPLES),
        sensor: config.sensor.unwrap_or(0),
    };
    let op = operating_point(&exp, &targets, &opts).map_err(|e| match e {
        MonteCarloError::Analytics(_) => Failure::config(e),
        other => other.into(),
    })?;
    let table = run_experiment(&with_operating_point(&exp, &op))?;
    let csv = report::csv_bytes(&table, None).map_err(Failure::runtime)?;
    #[derive(Serialize)]
    struct Mirror<'a> {
        operating_point: &'a seqnet::montecarlo::OperatingPoint,
        detectors: Vec<String>,
        #[serde(flatten)]
        table: &'a SummaryTable,
    }
    let mirror = report::json_bytes(&Mirror {
        operating_point: &op,
        detectors: exp.detectors.iter().map(|d| d.detector.label().to_string()).collect(),
        table: &table,
    })
    .map_err(Failure::runtime)?;
    finish_run(cli, cli.out.as_deref(), "operating-point", &config, exp.seed, &csv, Some(&mirror), started)
}

/// Weights named by the config, validated or not.
fn configured_matrix(config: &ExperimentConfig) -> CliResult<(Matrix<f64>, &'static str, Option<f64>)> {
    let topology = config.topology().map_err(Failure::config)?;
    match &config.weights {
        Some(rows) => {
            let m = Matrix::from_rows(rows).map_err(Failure::config)?;
            Ok((m, "explicit", None))
        }
        None => {
            let w = WeightMatrix::<f64>::equal_weight(&topology).map_err(Failure::config)?;
            Ok((w.matrix().clone(), "equal_weight", w.delta()))
        }
    }
}

fn validate_weights(cli: &Cli) -> CliResult<()> {
    let path = cli.config.as_ref().ok_or_else(|| Failure::config(anyhow!("--config is required")))?;
    let text = fs::read_to_string(path).map_err(Failure::config)?;
    let config = ExperimentConfig::from_json(&text).map_err(Failure::config)?;
    let k = config.topology().map_err(Failure::config)?.n_sensors();
    let models = config.models(k).map_err(Failure::config)?;
    let (matrix, source, delta) = configured_matrix(&config)?;
    if matrix.rows() != k || !matrix.is_square() {
        return Err(Failure::config(anyhow!("weights must be {k}x{k}")));
    }
    let report = validate_condition1(&matrix).map_err(Failure::config)?;
    #[derive(Serialize)]
    struct Doc<'a> {
        n_sensors: usize,
        source: &'a str,
        delta: Option<f64>,
        report: &'a SpectralReport<f64>,
        condition2_log_margin: Vec<f64>,
        default_t0: Vec<(u32, u32)>,
    }
    let doc = Doc {
        n_sensors: k,
        source,
        delta,
        report: &report,
        condition2_log_margin: models.iter().map(|m| m.condition2_log_margin(k)).collect(),
        default_t0: if report.usable { (1..=3).map(|q| (q, analytics::default_t0(report.sigma2, q))).collect() } else { Vec::new() },
    };
    report::emit(cli.out.as_deref(), &report::json_bytes(&doc).map_err(Failure::runtime)?).map_err(Failure::runtime)?;
    if report.usable {
        Ok(())
    } else {
        Err(Failure::config(anyhow!("weights violate the consensus condition: {}", report.warnings.join("; "))))
    }
}

fn constants(cli: &Cli) -> CliResult<()> {
    let config = load_config(cli)?;
    let topology = config.topology().map_err(Failure::config)?;
    let k = topology.n_sensors();
    let models = config.models(k).map_err(Failure::config)?;
    let w = config.weight_matrix(&topology).map_err(Failure::config)?;
    let seed = cli.seed.or(config.seed).unwrap_or(0);
    let sensors: Vec<usize> = match config.sensor {
        Some(s) => vec![s],
        None => (0..k).collect(),
    };
    let mut rounds: Vec<u32> = config
        .detector_specs()
        .map(|ds| ds.iter().filter_map(|d| d.rounds()).collect())
        .unwrap_or_default();
    if rounds.is_empty() {
        rounds.push(config.q.unwrap_or(1));
    }
    rounds.sort_unstable();
    rounds.dedup();
    let samples = config.mc_samples.unwrap_or(DEFAULT_MC_SAMPLES);
    let mut all = Vec::new();
    for &q in &rounds {
        for &s in &sensors {
            all.push(
                analytics::refined_constants(&w, q, t0_for(&config, &w, q), &models, s, samples, seed)
                    .map_err(Failure::runtime)?,
            );
        }
    }
    #[derive(Serialize)]
    struct Doc {
        sigma2: f64,
        t0_override: Option<u32>,
        constants: Vec<RefinedConstants>,
        thresholds: Option<Vec<Option<Thresholds<f64>>>>,
    }
    let thresholds = config
        .targets
        .map(|t| all.iter().map(|c| analytics::ca_thresholds(&t, c, k).ok()).collect());
    let doc = Doc { sigma2: w.sigma2(), t0_override: config.t0, constants: all, thresholds };
    report::emit(cli.out.as_deref(), &report::json_bytes(&doc).map_err(Failure::runtime)?).map_err(Failure::runtime)
}

#[derive(Serialize)]
struct DetectorPrediction {
    detector: &'static str,
    q: Option<u32>,
    a: f64,
    b: f64,
    /// Leading-order stopping times per sensor.
    et: Vec<StoppingTimes>,
    /// Error bounds `(α, β)` where rigorous, else approximations.
    error: (f64, f64),
    #[serde(skip_serializing_if = "Option::is_none")]
    sd_delay_gap: Option<Vec<(f64, f64)>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sahu_alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sahu_et_factor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gap_scale: Option<f64>,
}

fn predict(cli: &Cli) -> CliResult<()> {
    let config = load_config(cli)?;
    let exp = experiment(&config)?;
    let k = exp.n_sensors();
    let kf = k as f64;
    let run = || -> Result<Vec<Vec<DetectorPrediction>>, analytics::AnalyticsError> {
        let mut points = Vec::new();
        for point in &exp.points {
            let mut dets = Vec::new();
            for (spec, th) in exp.detectors.iter().zip(point) {
                let targets = analytics::ErrorTargets::new((-th.b()).exp(), (-th.a()).exp());
                let mut p = DetectorPrediction {
                    detector: spec.detector.label(),
                    q: spec.rounds(),
                    a: th.a(),
                    b: th.b(),
                    et: Vec::new(),
                    error: analytics::sd_error_bound(th),
                    sd_delay_gap: None,
                    sahu_alpha: None,
                    sahu_et_factor: None,
                    gap_scale: None,
                };
                match spec.detector {
                    DetectorKind::Cs => p.et = vec![analytics::centralized_asymptotic_et(&exp.models, &targets?)?; k],
                    DetectorKind::Local => {
                        let t = targets?;
                        p.et = (0..k)
                            .map(|s| analytics::local_asymptotic_et(&exp.topology, &exp.models, &t, s))
                            .collect::<Result<_, _>>()?;
                    }
                    DetectorKind::Sd | DetectorKind::SdExplicit => {
                        p.et = vec![analytics::centralized_asymptotic_et(&exp.models, &targets?)?; k];
                        let nu = exp.topology.delay_matrix();
                        p.sd_delay_gap = Some(
                            (0..k)
                                .map(|s| {
                                    Ok((
                                        analytics::sd_delay_constant(&nu, &exp.models, s, Hypothesis::H0)?,
                                        analytics::sd_delay_constant(&nu, &exp.models, s, Hypothesis::H1)?,
                                    ))
                                })
                                .collect::<Result<_, analytics::AnalyticsError>>()?,
                        );
                    }
                    DetectorKind::Ca => {
                        let w = exp.weights.as_ref().expect("consensus weights resolved");
                        let q = spec.rounds().unwrap_or(1);
                        let pred = analytics::lemma1_et_prediction(&exp.models, th, w.sigma2(), q)?;
                        let d0 = exp.models.kld_sum(Hypothesis::H0).as_f64();
                        p.et = vec![StoppingTimes { et1: pred.et1_center, et0: kf * th.a() / d0 }; k];
                        let (e1, e0) = analytics::ca_error_exponent(k, th);
                        p.error = (e1.exp(), e0.exp());
                        p.gap_scale = Some(pred.gap_scale);
                        let sigma = w.sigma2().powi(q as i32);
                        p.sahu_alpha = analytics::homogeneous_kld(&exp.models, Hypothesis::H1)
                            .and_then(|d| analytics::sahu_alpha_bound(k, sigma, th.b(), d))
                            .ok();
                        p.sahu_et_factor = Some(analytics::sahu_et_factor(k, sigma));
                    }
                }
                dets.push(p);
            }
            points.push(dets);
        }
        Ok(points)
    };
    let points = run().map_err(Failure::config)?;
    #[derive(Serialize)]
    struct Doc {
        n_sensors: usize,
        kld_sum: (f64, f64),
        sigma2: Option<f64>,
        points: Vec<Vec<DetectorPrediction>>,
    }
    let doc = Doc {
        n_sensors: k,
        kld_sum: (exp.models.kld_sum(Hypothesis::H0).as_f64(), exp.models.kld_sum(Hypothesis::H1).as_f64()),
        sigma2: exp.weights.as_ref().map(|w| w.sigma2()),
        points,
    };
    report::emit(cli.out.as_deref(), &report::json_bytes(&doc).map_err(Failure::runtime)?).map_err(Failure::runtime)
}
