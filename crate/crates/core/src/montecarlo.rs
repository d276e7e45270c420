//! Repeated network trials and their per-sensor summaries.
//!
//! A cell is one (threshold point, hypothesis) pair. Trial `i` of cell `c`
//! draws from `rng::stream(seed, Domain::Trial, c, i)`, and every detector
//! in the experiment consumes that same LLR stream. Trials run in fixed
//! blocks of [`BLOCK_TRIALS`]; block tallies are merged in block order, so
//! summaries are bit-identical for any number of workers.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::analytics::{self, AnalyticsError, ErrorTargets, RefinedConstants};
use crate::config::{ConfigError, DetectorKind, DetectorSpec, ExperimentConfig, ThresholdScale};
use crate::detectors::{
    run_trial, CentralizedStatistic, ConsensusStatistic, DetectorError, DisseminationClosedForm,
    DisseminationExplicit, LocalStatistic, NetworkStatistic, SensorVerdict, Thresholds,
};
use crate::models::{Hypothesis, SensorModels};
use crate::rng::{self, Domain};
use crate::stats::{proportion_ci, Interval};
use crate::topology::Topology;
use crate::weights::WeightMatrix;

pub const BLOCK_TRIALS: u64 = 1024;
/// Error cells with fewer observed errors than this are flagged.
pub const UNDER_RESOLVED_COUNT: u64 = 10;

#[derive(Debug, Error)]
pub enum MonteCarloError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error("a threshold sweep needs at least 2 threshold points, got {0}")]
    SweepTooShort(usize),
    #[error("operating point needs error targets")]
    MissingTargets,
    #[error("point {point} has {got} threshold pairs for {detectors} detectors")]
    PointShape { point: usize, got: usize, detectors: usize },
    #[error("no threshold points")]
    NoPoints,
    #[error("trial index {trial} out of range for {trials} trials")]
    TrialIndex { trial: u64, trials: u64 },
}

/// A fully resolved experiment: `points[p][d]` are the thresholds detector
/// `d` compares its own statistic against at point `p`.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub topology: Topology,
    pub models: SensorModels<f64>,
    pub weights: Option<WeightMatrix<f64>>,
    pub detectors: Vec<DetectorSpec>,
    pub points: Vec<Vec<Thresholds<f64>>>,
    pub hypotheses: Vec<Hypothesis>,
    pub trials: u64,
    pub seed: u64,
    pub max_steps: u64,
}

impl Experiment {
    /// Resolves a config. `seed` overrides the config's seed; with neither
    /// the seed is 0.
    pub fn from_config(config: &ExperimentConfig, seed: Option<u64>) -> Result<Self, ConfigError> {
        config.validate()?;
        let topology = config.topology()?;
        let k = topology.n_sensors();
        let models = config.models(k)?;
        let detectors = config.detector_specs()?;
        let needs_weights = detectors.iter().any(|d| d.detector == DetectorKind::Ca);
        let weights = if needs_weights { Some(config.weight_matrix(&topology)?) } else { None };
        let points = config
            .threshold_specs()?
            .iter()
            .map(|t| {
                let base = Thresholds::new(t.a, t.b)?;
                detectors
                    .iter()
                    .map(|d| match config.threshold_scale {
                        ThresholdScale::Average if d.detector.is_llr_sum() => base.scaled(k as f64),
                        _ => Ok(base),
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, DetectorError>>()?;
        Ok(Self {
            topology,
            models,
            weights,
            detectors,
            points,
            hypotheses: config.hypotheses.clone(),
            trials: config.trials,
            seed: seed.or(config.seed).unwrap_or(0),
            max_steps: config.max_steps,
        })
    }

    pub fn n_sensors(&self) -> usize {
        self.topology.n_sensors()
    }

    fn check(&self) -> Result<(), MonteCarloError> {
        if self.points.is_empty() {
            return Err(MonteCarloError::NoPoints);
        }
        for (p, point) in self.points.iter().enumerate() {
            if point.len() != self.detectors.len() {
                return Err(MonteCarloError::PointShape { point: p, got: point.len(), detectors: self.detectors.len() });
            }
        }
        if self.trials == 0 {
            return Err(ConfigError::Invalid("trials must be at least 1".into()).into());
        }
        Ok(())
    }

    fn engines(&self) -> Result<Vec<Box<dyn NetworkStatistic<f64>>>, MonteCarloError> {
        self.detectors
            .iter()
            .map(|d| -> Result<Box<dyn NetworkStatistic<f64>>, MonteCarloError> {
                Ok(match d.detector {
                    DetectorKind::Cs => Box::new(CentralizedStatistic::new(self.n_sensors())),
                    DetectorKind::Local => Box::new(LocalStatistic::new(&self.topology)),
                    DetectorKind::Sd => Box::new(DisseminationClosedForm::new(&self.topology)),
                    DetectorKind::SdExplicit => Box::new(DisseminationExplicit::new(&self.topology)),
                    DetectorKind::Ca => {
                        let w = self
                            .weights
                            .as_ref()
                            .ok_or_else(|| ConfigError::Invalid("consensus detector without weights".into()))?;
                        Box::new(ConsensusStatistic::new(w, d.rounds().unwrap_or(1))?)
                    }
                })
            })
            .collect()
    }

    fn run_one(
        &self,
        engines: &mut [Box<dyn NetworkStatistic<f64>>],
        point: usize,
        hypothesis: Hypothesis,
        trial: u64,
    ) -> Result<Vec<Vec<SensorVerdict<f64>>>, MonteCarloError> {
        let mut rng = rng::stream(self.seed, Domain::Trial, cell_index(point, hypothesis), trial);
        let mut refs: Vec<&mut dyn NetworkStatistic<f64>> = engines.iter_mut().map(|e| &mut **e as &mut dyn NetworkStatistic<f64>).collect();
        Ok(run_trial(&mut refs, &self.points[point], &self.models, hypothesis, &mut rng, self.max_steps)?)
    }
}

/// Stream cell for a (threshold point, hypothesis) pair.
pub fn cell_index(point: usize, hypothesis: Hypothesis) -> u64 {
    ((point as u64) << 1) | hypothesis.index() as u64
}

/// Per-sensor tallies for one cell. Stopping-time sums are exact integers.
#[derive(Debug, Clone, Default, PartialEq)]
struct Tally {
    decided0: u64,
    decided1: u64,
    censored: u64,
    t_sum: u64,
    t_sq: u128,
    overshoot_sum: f64,
}

impl Tally {
    fn record(&mut self, v: &SensorVerdict<f64>, th: &Thresholds<f64>) {
        match v.decision {
            None => self.censored += 1,
            Some(h) => {
                match h {
                    Hypothesis::H0 => self.decided0 += 1,
                    Hypothesis::H1 => self.decided1 += 1,
                }
                self.t_sum += v.stopping_time;
                self.t_sq += u128::from(v.stopping_time) * u128::from(v.stopping_time);
                self.overshoot_sum += v.overshoot(th).unwrap_or(0.0);
            }
        }
    }

    fn merge(&mut self, other: &Tally) {
        self.decided0 += other.decided0;
        self.decided1 += other.decided1;
        self.censored += other.censored;
        self.t_sum += other.t_sum;
        self.t_sq += other.t_sq;
        self.overshoot_sum += other.overshoot_sum;
    }

    fn decided(&self) -> u64 {
        self.decided0 + self.decided1
    }

    /// Mean and standard error of the stopping time over decided trials.
    fn stopping_time(&self) -> Option<(f64, f64)> {
        let n = self.decided();
        if n == 0 {
            return None;
        }
        let mean = self.t_sum as f64 / n as f64;
        if n == 1 {
            return Some((mean, 0.0));
        }
        let n128 = u128::from(n);
        let s = u128::from(self.t_sum);
        let numerator = n128 * self.t_sq - s * s;
        let var = numerator as f64 / (n as f64 * (n - 1) as f64);
        Some((mean, (var / n as f64).sqrt()))
    }
}

/// One output row: detector × sensor × hypothesis × threshold point.
/// Fields that do not apply to the row's hypothesis are `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub detector: String,
    pub sensor: usize,
    pub hyp: u8,
    /// Thresholds this detector compared its own statistic against.
    pub a: f64,
    pub b: f64,
    pub q: Option<u32>,
    pub trials: u64,
    /// `P̂₀(decide 1)` among decided trials.
    pub alpha_hat: Option<f64>,
    /// `P̂₁(decide 0)` among decided trials.
    pub beta_hat: Option<f64>,
    pub alpha_lo: Option<f64>,
    pub alpha_hi: Option<f64>,
    pub et0: Option<f64>,
    pub et0_se: Option<f64>,
    pub et1: Option<f64>,
    pub et1_se: Option<f64>,
    /// Mean excess beyond the crossed boundary over decided trials.
    pub overshoot1: Option<f64>,
    pub censored: u64,
    pub beta_lo: Option<f64>,
    pub beta_hi: Option<f64>,
    /// Fewer than [`UNDER_RESOLVED_COUNT`] errors observed.
    pub under_resolved: bool,
    pub all_censored: bool,
    /// Index into the experiment's threshold points.
    pub point: usize,
}

pub const CSV_COLUMNS: [&str; 17] = [
    "detector", "sensor", "hyp", "a", "b", "q", "trials", "alpha_hat", "beta_hat", "alpha_lo", "alpha_hi", "et0",
    "et0_se", "et1", "et1_se", "overshoot1", "censored",
];

pub const CSV_EXTRA_COLUMNS: [&str; 5] = ["beta_lo", "beta_hi", "under_resolved", "all_censored", "point"];

impl SummaryRow {
    fn from_tally(
        spec: &DetectorSpec,
        sensor: usize,
        hypothesis: Hypothesis,
        th: &Thresholds<f64>,
        point: usize,
        trials: u64,
        tally: &Tally,
    ) -> Self {
        let decided = tally.decided();
        let errors = match hypothesis {
            Hypothesis::H0 => tally.decided1,
            Hypothesis::H1 => tally.decided0,
        };
        let ci: Option<Interval> = (decided > 0).then(|| proportion_ci(errors, decided));
        let p_hat = (decided > 0).then(|| errors as f64 / decided as f64);
        let st = tally.stopping_time();
        let h0 = hypothesis == Hypothesis::H0;
        let pick = |cond: bool, v: Option<f64>| if cond { v } else { None };
        SummaryRow {
            detector: spec.detector.label().to_string(),
            sensor,
            hyp: hypothesis.index() as u8,
            a: th.a(),
            b: th.b(),
            q: spec.rounds(),
            trials,
            alpha_hat: pick(h0, p_hat),
            beta_hat: pick(!h0, p_hat),
            alpha_lo: pick(h0, ci.map(|c| c.lo)),
            alpha_hi: pick(h0, ci.map(|c| c.hi)),
            et0: pick(h0, st.map(|s| s.0)),
            et0_se: pick(h0, st.map(|s| s.1)),
            et1: pick(!h0, st.map(|s| s.0)),
            et1_se: pick(!h0, st.map(|s| s.1)),
            overshoot1: (decided > 0).then(|| tally.overshoot_sum / decided as f64),
            censored: tally.censored,
            beta_lo: pick(!h0, ci.map(|c| c.lo)),
            beta_hi: pick(!h0, ci.map(|c| c.hi)),
            under_resolved: errors < UNDER_RESOLVED_COUNT,
            all_censored: tally.censored == trials,
            point,
        }
    }

    /// Error rate of the row's hypothesis.
    pub fn error_rate(&self) -> Option<f64> {
        self.alpha_hat.or(self.beta_hat)
    }

    /// Mean stopping time of the row's hypothesis.
    pub fn mean_stopping_time(&self) -> Option<(f64, f64)> {
        match (self.et0, self.et0_se, self.et1, self.et1_se) {
            (Some(m), Some(s), _, _) | (_, _, Some(m), Some(s)) => Some((m, s)),
            _ => None,
        }
    }

    /// Values in [`CSV_COLUMNS`] then [`CSV_EXTRA_COLUMNS`] order; `None`
    /// becomes an empty field.
    pub fn csv_fields(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        vec![
            self.detector.clone(),
            self.sensor.to_string(),
            self.hyp.to_string(),
            fmt_f64(self.a),
            fmt_f64(self.b),
            self.q.map(|q| q.to_string()).unwrap_or_default(),
            self.trials.to_string(),
            opt(self.alpha_hat),
            opt(self.beta_hat),
            opt(self.alpha_lo),
            opt(self.alpha_hi),
            opt(self.et0),
            opt(self.et0_se),
            opt(self.et1),
            opt(self.et1_se),
            opt(self.overshoot1),
            self.censored.to_string(),
            opt(self.beta_lo),
            opt(self.beta_hi),
            self.under_resolved.to_string(),
            self.all_censored.to_string(),
            self.point.to_string(),
        ]
    }
}

/// Shortest text that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Summary table plus the experiment shape that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryTable {
    pub seed: u64,
    pub trials: u64,
    pub n_sensors: usize,
    pub rows: Vec<SummaryRow>,
}

impl SummaryTable {
    pub fn find(&self, detector: &str, q: Option<u32>, point: usize, hyp: Hypothesis, sensor: usize) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| {
            r.detector == detector && r.q == q && r.point == point && r.hyp == hyp.index() as u8 && r.sensor == sensor
        })
    }

    /// Rows for one detector at one point and hypothesis, in sensor order.
    pub fn select(&self, detector: &str, q: Option<u32>, point: usize, hyp: Hypothesis) -> Vec<&SummaryRow> {
        self.rows
            .iter()
            .filter(|r| r.detector == detector && r.q == q && r.point == point && r.hyp == hyp.index() as u8)
            .collect()
    }
}

/// Runs every cell. Rows are ordered by point, detector, hypothesis, sensor.
pub fn run_experiment(exp: &Experiment) -> Result<SummaryTable, MonteCarloError> {
    exp.check()?;
    let k = exp.n_sensors();
    let n_det = exp.detectors.len();
    let blocks = exp.trials.div_ceil(BLOCK_TRIALS);
    let cells: Vec<(usize, Hypothesis)> =
        (0..exp.points.len()).flat_map(|p| exp.hypotheses.iter().map(move |&h| (p, h))).collect();
    let jobs: Vec<(usize, u64)> = (0..cells.len()).flat_map(|c| (0..blocks).map(move |b| (c, b))).collect();

    let partials: Vec<Vec<Vec<Tally>>> = jobs
        .par_iter()
        .map(|&(c, block)| -> Result<Vec<Vec<Tally>>, MonteCarloError> {
            let (point, hypothesis) = cells[c];
            let mut engines = exp.engines()?;
            let mut tallies = vec![vec![Tally::default(); k]; n_det];
            let start = block * BLOCK_TRIALS;
            let end = (start + BLOCK_TRIALS).min(exp.trials);
            for trial in start..end {
                let verdicts = exp.run_one(&mut engines, point, hypothesis, trial)?;
                for (d, per_sensor) in verdicts.iter().enumerate() {
                    let th = &exp.points[point][d];
                    for (s, v) in per_sensor.iter().enumerate() {
                        tallies[d][s].record(v, th);
                    }
                }
            }
            Ok(tallies)
        })
        .collect::<Result<_, _>>()?;

    let mut merged = vec![vec![vec![Tally::default(); k]; n_det]; cells.len()];
    for (&(c, _), part) in jobs.iter().zip(&partials) {
        for (d, per_sensor) in part.iter().enumerate() {
            for (s, t) in per_sensor.iter().enumerate() {
                merged[c][d][s].merge(t);
            }
        }
    }

    let mut rows = Vec::with_capacity(cells.len() * n_det * k);
    for point in 0..exp.points.len() {
        for (d, spec) in exp.detectors.iter().enumerate() {
            for &hypothesis in &exp.hypotheses {
                let c = cells.iter().position(|&x| x == (point, hypothesis)).expect("cell exists");
                for s in 0..k {
                    rows.push(SummaryRow::from_tally(
                        spec,
                        s,
                        hypothesis,
                        &exp.points[point][d],
                        point,
                        exp.trials,
                        &merged[c][d][s],
                    ));
                }
            }
        }
    }
    Ok(SummaryTable { seed: exp.seed, trials: exp.trials, n_sensors: k, rows })
}

/// `run_experiment` restricted to configs with at least two points.
pub fn threshold_sweep(exp: &Experiment) -> Result<SummaryTable, MonteCarloError> {
    if exp.points.len() < 2 {
        return Err(MonteCarloError::SweepTooShort(exp.points.len()));
    }
    run_experiment(exp)
}

/// Every verdict of one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub point: usize,
    pub hyp: u8,
    pub trial: u64,
    /// `verdicts[detector][sensor]`
    pub verdicts: Vec<Vec<SensorVerdict<f64>>>,
}

pub fn run_single_trial(
    exp: &Experiment,
    point: usize,
    hypothesis: Hypothesis,
    trial: u64,
) -> Result<TrialRecord, MonteCarloError> {
    exp.check()?;
    if trial >= exp.trials {
        return Err(MonteCarloError::TrialIndex { trial, trials: exp.trials });
    }
    let mut engines = exp.engines()?;
    let verdicts = exp.run_one(&mut engines, point, hypothesis, trial)?;
    Ok(TrialRecord { point, hyp: hypothesis.index() as u8, trial, verdicts })
}

/// Thresholds chosen from error targets: `(−log β, −log α)` for the
/// LLR-sum detectors and refined-constant thresholds for consensus.
#[derive(Debug, Clone, Serialize)]
pub struct OperatingPoint {
    pub targets: ErrorTargets,
    pub thresholds: Vec<Thresholds<f64>>,
    pub constants: Vec<Option<RefinedConstants>>,
}

pub struct OperatingPointOptions {
    pub t0: Option<u32>,
    pub mc_samples: u64,
    pub sensor: usize,
}

pub fn operating_point(
    exp: &Experiment,
    targets: &ErrorTargets,
    opts: &OperatingPointOptions,
) -> Result<OperatingPoint, MonteCarloError> {
    let k = exp.n_sensors();
    let simple = analytics::simple_thresholds(targets)?;
    let mut thresholds = Vec::with_capacity(exp.detectors.len());
    let mut constants = Vec::with_capacity(exp.detectors.len());
    for d in &exp.detectors {
        match d.rounds() {
            None => {
                thresholds.push(simple);
                constants.push(None);
            }
            Some(q) => {
                let w = exp
                    .weights
                    .as_ref()
                    .ok_or_else(|| ConfigError::Invalid("consensus detector without weights".into()))?;
                let t0 = opts.t0.unwrap_or_else(|| analytics::default_t0(w.sigma2(), q));
                let c = analytics::refined_constants(w, q, t0, &exp.models, opts.sensor, opts.mc_samples, exp.seed)?;
                thresholds.push(analytics::ca_thresholds(targets, &c, k)?);
                constants.push(Some(c));
            }
        }
    }
    Ok(OperatingPoint { targets: *targets, thresholds, constants })
}

/// Replaces the experiment's points with a single operating point.
pub fn with_operating_point(exp: &Experiment, op: &OperatingPoint) -> Experiment {
    Experiment { points: vec![op.thresholds.clone()], ..exp.clone() }
}
