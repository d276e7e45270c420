//! Sequential tests run as per-slot state machines over a shared trial
//! driver.
//!
//! Within a slot every sensor samples, the engine performs its message
//! passing, and then each sensor that has not yet stopped compares its
//! statistic with `(-a, b)`. Stopped sensors keep sampling and relaying;
//! a trial ends once every sensor of every engine has stopped, or at
//! `max_steps`.

mod centralized;
mod consensus;
mod dissemination;
mod local;

pub use centralized::{centralized_trial, CentralizedStatistic};
pub use consensus::{ca_statistic_direct, ca_trial, ConsensusStatistic};
pub use dissemination::{
    sd_trial_closed_form, sd_trial_explicit, DisseminationClosedForm, DisseminationExplicit,
};
pub use local::{local_trial, LocalStatistic};

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::models::{Hypothesis, SensorModels};
use crate::scalar::Scalar;
use crate::weights::WeightError;

pub const DEFAULT_MAX_STEPS: u64 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectorError {
    #[error("thresholds must be finite and positive (a = {a}, b = {b})")]
    Thresholds { a: f64, b: f64 },
    #[error("statistic is NaN")]
    NanStatistic,
    #[error("engine covers {engine} sensors but the models cover {models}")]
    SensorCount { engine: usize, models: usize },
    #[error("{engines} engines but {thresholds} threshold pairs")]
    ThresholdCount { engines: usize, thresholds: usize },
    #[error("consensus rounds per slot must be at least 1")]
    ZeroRounds,
    #[error(transparent)]
    Weights(#[from] WeightError),
}

/// Continuation region `(-a, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds<T> {
    a: T,
    b: T,
}

impl<T: Scalar> Thresholds<T> {
    pub fn new(a: T, b: T) -> Result<Self, DetectorError> {
        if !(a.is_finite() && b.is_finite() && a > T::zero() && b > T::zero()) {
            return Err(DetectorError::Thresholds { a: a.as_f64(), b: b.as_f64() });
        }
        Ok(Self { a, b })
    }

    pub fn symmetric(b: T) -> Result<Self, DetectorError> {
        Self::new(b, b)
    }

    pub fn a(&self) -> T {
        self.a
    }

    pub fn b(&self) -> T {
        self.b
    }

    pub fn scaled(&self, factor: T) -> Result<Self, DetectorError> {
        Self::new(self.a * factor, self.b * factor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Continue,
    Decide1,
    Decide0,
}

/// Closed boundaries: `>= b` decides 1, `<= -a` decides 0.
pub fn sprt_decide<T: Scalar>(statistic: T, th: &Thresholds<T>) -> Result<Decision, DetectorError> {
    if statistic.is_nan() {
        return Err(DetectorError::NanStatistic);
    }
    Ok(if statistic >= th.b {
        Decision::Decide1
    } else if statistic <= -th.a {
        Decision::Decide0
    } else {
        Decision::Continue
    })
}

/// Outcome of one sensor in one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensorVerdict<T> {
    /// Stopping slot, or `max_steps` when censored.
    pub stopping_time: u64,
    /// `None` iff censored.
    pub decision: Option<Hypothesis>,
    pub terminal_statistic: T,
}

impl<T: Scalar> SensorVerdict<T> {
    pub fn censored(&self) -> bool {
        self.decision.is_none()
    }

    /// Excess of the terminal statistic beyond the boundary it crossed.
    pub fn overshoot(&self, th: &Thresholds<T>) -> Option<T> {
        match self.decision? {
            Hypothesis::H1 => Some(self.terminal_statistic - th.b),
            Hypothesis::H0 => Some(-th.a - self.terminal_statistic),
        }
    }
}

/// A network-wide decision statistic advanced one slot at a time.
pub trait NetworkStatistic<T> {
    fn n_sensors(&self) -> usize;

    /// Absorbs the slot's LLRs (one per sensor) and runs the slot's
    /// message passing.
    fn advance(&mut self, llrs: &[T]);

    /// Per-sensor decision statistics after the latest slot.
    fn statistics(&self) -> &[T];

    /// Back to the state before slot 1.
    fn reset(&mut self);
}

/// Records first exits for each sensor of one engine.
#[derive(Debug, Clone)]
pub struct StopTracker<T> {
    thresholds: Thresholds<T>,
    verdicts: Vec<Option<SensorVerdict<T>>>,
    pending: usize,
}

impl<T: Scalar> StopTracker<T> {
    pub fn new(n_sensors: usize, thresholds: Thresholds<T>) -> Self {
        Self { thresholds, verdicts: vec![None; n_sensors], pending: n_sensors }
    }

    pub fn all_stopped(&self) -> bool {
        self.pending == 0
    }

    pub fn observe(&mut self, t: u64, statistics: &[T]) -> Result<(), DetectorError> {
        for (slot, &stat) in self.verdicts.iter_mut().zip(statistics) {
            if slot.is_some() {
                continue;
            }
            let decision = match sprt_decide(stat, &self.thresholds)? {
                Decision::Continue => continue,
                Decision::Decide1 => Hypothesis::H1,
                Decision::Decide0 => Hypothesis::H0,
            };
            *slot = Some(SensorVerdict { stopping_time: t, decision: Some(decision), terminal_statistic: stat });
            self.pending -= 1;
        }
        Ok(())
    }

    /// Final verdicts; sensors still running are censored at `t`.
    pub fn finish(self, t: u64, statistics: &[T]) -> Vec<SensorVerdict<T>> {
        self.verdicts
            .into_iter()
            .zip(statistics)
            .map(|(v, &stat)| {
                v.unwrap_or(SensorVerdict { stopping_time: t, decision: None, terminal_statistic: stat })
            })
            .collect()
    }
}

/// Runs several engines on one shared LLR stream: slot `t` draws one LLR
/// per sensor in sensor order and feeds the same vector to every engine.
/// Returns `verdicts[engine][sensor]`. Engines are reset first.
pub fn run_trial<T, R>(
    engines: &mut [&mut dyn NetworkStatistic<T>],
    thresholds: &[Thresholds<T>],
    models: &SensorModels<T>,
    hypothesis: Hypothesis,
    rng: &mut R,
    max_steps: u64,
) -> Result<Vec<Vec<SensorVerdict<T>>>, DetectorError>
where
    T: Scalar,
    R: Rng + ?Sized,
{
    if engines.len() != thresholds.len() {
        return Err(DetectorError::ThresholdCount { engines: engines.len(), thresholds: thresholds.len() });
    }
    let k = models.n_sensors();
    for e in engines.iter() {
        if e.n_sensors() != k {
            return Err(DetectorError::SensorCount { engine: e.n_sensors(), models: k });
        }
    }
    let mut trackers: Vec<StopTracker<T>> =
        thresholds.iter().map(|&th| StopTracker::new(k, th)).collect();
    for e in engines.iter_mut() {
        e.reset();
    }
    let mut llrs = vec![T::zero(); k];
    let mut t = 0;
    while t < max_steps && !trackers.iter().all(StopTracker::all_stopped) {
        t += 1;
        models.fill_llr_vector(hypothesis, rng, &mut llrs);
        for (engine, tracker) in engines.iter_mut().zip(trackers.iter_mut()) {
            engine.advance(&llrs);
            tracker.observe(t, engine.statistics())?;
        }
    }
    Ok(engines
        .iter()
        .zip(trackers)
        .map(|(e, tr)| tr.finish(t, e.statistics()))
        .collect())
}

pub(crate) fn single_engine_trial<T, R>(
    engine: &mut dyn NetworkStatistic<T>,
    thresholds: Thresholds<T>,
    models: &SensorModels<T>,
    hypothesis: Hypothesis,
    rng: &mut R,
    max_steps: u64,
) -> Result<Vec<SensorVerdict<T>>, DetectorError>
where
    T: Scalar,
    R: Rng + ?Sized,
{
    let mut out = run_trial(&mut [engine], &[thresholds], models, hypothesis, rng, max_steps)?;
    Ok(out.pop().expect("one engine in, one verdict list out"))
}
