//! Closed-form predictions, error bounds and threshold rules.
//!
//! Everything here is a pure function except [`refined_constants`], which
//! estimates two expectations by simulation on keyed random streams.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::detectors::{DetectorError, Thresholds};
use crate::models::{Hypothesis, SensorModels};
use crate::rng::{self, Domain};
use crate::scalar::Scalar;
use crate::topology::{DelayMatrix, Topology};
use crate::weights::{WeightError, WeightMatrix};

/// Monte Carlo samples per keyed stream in [`refined_constants`].
const REFINED_BLOCK: u64 = 1024;
/// Default truncation: smallest `t0` with `σ₂^{q·t0}` below this.
pub const DEFAULT_T0_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("error targets must lie strictly inside (0, 1): alpha = {alpha}, beta = {beta}")]
    Targets { alpha: f64, beta: f64 },
    #[error("KL divergence sum is zero; hypotheses are indistinguishable")]
    ZeroKld,
    #[error("sensor {sensor} out of range for {n} sensors")]
    Sensor { sensor: usize, n: usize },
    #[error("sensor models are heterogeneous; this comparison assumes a common KLD")]
    Heterogeneous,
    #[error("sigma2^q = {0} is not below 1")]
    NoContraction(f64),
    #[error("bound denominator vanishes (K·D1 / (4(Kσ₂² + 1)) = {0:e})")]
    DegenerateDenominator(f64),
    #[error("target {target} is not below the refined constant {constant}; threshold would be non-positive")]
    TargetAboveConstant { target: f64, constant: f64 },
    #[error("t0 and mc_samples must be positive")]
    EmptyEstimate,
    #[error("Monte Carlo estimate is not finite")]
    NonFinite,
    #[error("model list covers {models} sensors, weights cover {weights}")]
    SensorCount { models: usize, weights: usize },
    #[error(transparent)]
    Weights(#[from] WeightError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
}

/// Type-I / type-II error constraints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct ErrorTargets {
    pub alpha: f64,
    pub beta: f64,
}

impl ErrorTargets {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, AnalyticsError> {
        let inside = |p: f64| p > 0.0 && p < 1.0;
        if !(inside(alpha) && inside(beta)) {
            return Err(AnalyticsError::Targets { alpha, beta });
        }
        Ok(Self { alpha, beta })
    }
}

/// Expected stopping times `(E_1[T], E_0[T])` to leading order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StoppingTimes {
    pub et1: f64,
    pub et0: f64,
}

fn wald_times<T: Scalar>(d1: T, d0: T, targets: &ErrorTargets) -> Result<StoppingTimes, AnalyticsError> {
    let (d1, d0) = (d1.as_f64(), d0.as_f64());
    if d1 <= 0.0 || d0 <= 0.0 {
        return Err(AnalyticsError::ZeroKld);
    }
    Ok(StoppingTimes { et1: -targets.alpha.ln() / d1, et0: -targets.beta.ln() / d0 })
}

/// Centralized SPRT: `E_1[T] ≈ −log α / Σ_k D_1^{(k)}`, likewise under H0.
pub fn centralized_asymptotic_et<T: Scalar>(
    models: &SensorModels<T>,
    targets: &ErrorTargets,
) -> Result<StoppingTimes, AnalyticsError> {
    wald_times(models.kld_sum(Hypothesis::H1), models.kld_sum(Hypothesis::H0), targets)
}

/// Local test at sensor `k`: the KLD sum runs over `{k} ∪ N_k` only.
pub fn local_asymptotic_et<T: Scalar>(
    topology: &Topology,
    models: &SensorModels<T>,
    targets: &ErrorTargets,
    k: usize,
) -> Result<StoppingTimes, AnalyticsError> {
    let n = topology.n_sensors();
    if k >= n {
        return Err(AnalyticsError::Sensor { sensor: k, n });
    }
    let hood = topology.closed_neighborhood(k);
    wald_times(
        models.kld_sum_over(&hood, Hypothesis::H1),
        models.kld_sum_over(&hood, Hypothesis::H0),
        targets,
    )
}

/// Dissemination latency penalty at sensor `k`:
/// `Σ_ℓ (ν_{ℓ→k} − 1) D_i^{(ℓ)} / Σ_ℓ D_i^{(ℓ)}` (slots, overshoot excluded).
pub fn sd_delay_constant<T: Scalar>(
    delays: &DelayMatrix,
    models: &SensorModels<T>,
    k: usize,
    hypothesis: Hypothesis,
) -> Result<f64, AnalyticsError> {
    let n = delays.n_sensors();
    if k >= n {
        return Err(AnalyticsError::Sensor { sensor: k, n });
    }
    let mut weighted = 0.0;
    let mut total = 0.0;
    for l in 0..n {
        let d = models.get(l).kld(hypothesis).as_f64();
        weighted += (delays.get(l, k) - 1) as f64 * d;
        total += d;
    }
    if total <= 0.0 {
        return Err(AnalyticsError::ZeroKld);
    }
    Ok(weighted / total)
}

/// `a = −log β`, `b = −log α`, for statistics that are true LLR sums.
pub fn simple_thresholds(targets: &ErrorTargets) -> Result<Thresholds<f64>, AnalyticsError> {
    Ok(Thresholds::new(-targets.beta.ln(), -targets.alpha.ln())?)
}

/// Martingale bounds `(α ≤ e^{−b}, β ≤ e^{−a})` for a statistic that is a
/// true network LLR sum compared against `(−a, b)`.
pub fn sd_error_bound<T: Scalar>(th: &Thresholds<T>) -> (f64, f64) {
    ((-th.b().as_f64()).exp(), (-th.a().as_f64()).exp())
}

/// Log error-probability exponents `(−K b, −K a)` of the consensus test.
pub fn ca_error_exponent<T: Scalar>(n_sensors: usize, th: &Thresholds<T>) -> (f64, f64) {
    let k = n_sensors as f64;
    (-k * th.b().as_f64(), -k * th.a().as_f64())
}

/// The common KLD of a homogeneous network.
pub fn homogeneous_kld<T: Scalar>(models: &SensorModels<T>, hypothesis: Hypothesis) -> Result<f64, AnalyticsError> {
    if !models.is_homogeneous() {
        return Err(AnalyticsError::Heterogeneous);
    }
    Ok(models.get(0).kld(hypothesis).as_f64())
}

/// Earlier consensus-SPRT false-alarm bound (single message per slot):
/// `2 exp(−σ₂ K b / (8(Kσ₂² + 1))) / (1 − exp(−K D₁ / (4(Kσ₂² + 1))))`.
pub fn sahu_alpha_bound(n_sensors: usize, sigma2: f64, b: f64, kld1: f64) -> Result<f64, AnalyticsError> {
    let k = n_sensors as f64;
    let spread = k * sigma2 * sigma2 + 1.0;
    let rate = k * kld1 / (4.0 * spread);
    let denom = -(-rate).exp_m1();
    if !(denom > 1e-300) {
        return Err(AnalyticsError::DegenerateDenominator(rate));
    }
    Ok(2.0 * (-sigma2 * k * b / (8.0 * spread)).exp() / denom)
}

/// Earlier stopping-time inflation factor `10(Kσ₂² + 1)/7` over the
/// centralized test.
pub fn sahu_et_factor(n_sensors: usize, sigma2: f64) -> f64 {
    10.0 * (n_sensors as f64 * sigma2 * sigma2 + 1.0) / 7.0
}

/// Consensus test stopping-time prediction: the centre `K b / Σ D_1` and
/// the `σ₂^q / (1 − σ₂^q)` factor multiplying the unspecified constant gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConsensusPrediction {
    pub et1_center: f64,
    pub gap_scale: f64,
}

pub fn lemma1_et_prediction<T: Scalar>(
    models: &SensorModels<T>,
    th: &Thresholds<T>,
    sigma2: f64,
    rounds: u32,
) -> Result<ConsensusPrediction, AnalyticsError> {
    let contraction = sigma2.powi(rounds as i32);
    if contraction >= 1.0 {
        return Err(AnalyticsError::NoContraction(contraction));
    }
    let d1 = models.kld_sum(Hypothesis::H1).as_f64();
    if d1 <= 0.0 {
        return Err(AnalyticsError::ZeroKld);
    }
    let k = models.n_sensors() as f64;
    Ok(ConsensusPrediction {
        et1_center: k * th.b().as_f64() / d1,
        gap_scale: contraction / (1.0 - contraction),
    })
}

/// Smallest `t0 >= 1` with `σ₂^{q t0} < 1e−3`.
pub fn default_t0(sigma2: f64, rounds: u32) -> u32 {
    if sigma2 <= 0.0 {
        return 1;
    }
    let per_slot = sigma2.powi(rounds as i32);
    if per_slot >= 1.0 {
        return u32::MAX;
    }
    let t = (DEFAULT_T0_TOLERANCE.ln() / per_slot.ln()).floor() as u32 + 1;
    t.max(1)
}

/// Simulated correction factors for the consensus test's error
/// probabilities, `α ≈ C_α e^{−K b}` and `β ≈ C_β e^{−K a}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RefinedConstants {
    pub c_alpha: f64,
    pub c_beta: f64,
    pub c_alpha_se: f64,
    pub c_beta_se: f64,
    pub sensor: usize,
    pub rounds: u32,
    pub t0: u32,
    pub mc_samples: u64,
    pub seed: u64,
}

/// `C_α = E_1[exp(K e_kᵀ Σ_{j=1}^{t0} Δ_{qj} s_j)]` and `C_β` the same
/// expectation under H0, with `Δ_t = W^t − J`.
pub fn refined_constants<T: Scalar>(
    weights: &WeightMatrix<T>,
    rounds: u32,
    t0: u32,
    models: &SensorModels<T>,
    sensor: usize,
    mc_samples: u64,
    seed: u64,
) -> Result<RefinedConstants, AnalyticsError> {
    let n = weights.n_sensors();
    if models.n_sensors() != n {
        return Err(AnalyticsError::SensorCount { models: models.n_sensors(), weights: n });
    }
    if sensor >= n {
        return Err(AnalyticsError::Sensor { sensor, n });
    }
    if t0 == 0 || mc_samples == 0 || rounds == 0 {
        return Err(AnalyticsError::EmptyEstimate);
    }
    let k = T::of_usize(n);
    // K e_kᵀ Δ_{qj}, j = 1..=t0
    let rows: Vec<Vec<T>> = (1..=t0)
        .map(|j| {
            let delta = weights.delta_matrix(u64::from(rounds) * u64::from(j))?;
            Ok(delta.row(sensor).iter().map(|&x| x * k).collect())
        })
        .collect::<Result<_, AnalyticsError>>()?;

    let estimate = |hypothesis: Hypothesis| -> Result<(f64, f64), AnalyticsError> {
        let blocks = mc_samples.div_ceil(REFINED_BLOCK);
        let partial: Vec<(f64, f64)> = (0..blocks)
            .into_par_iter()
            .map(|block| {
                let mut rng = rng::stream(seed, Domain::RefinedConstants, hypothesis.index() as u64, block);
                let count = REFINED_BLOCK.min(mc_samples - block * REFINED_BLOCK);
                let mut llrs = vec![T::zero(); n];
                let (mut sum, mut sum_sq) = (0.0, 0.0);
                for _ in 0..count {
                    let mut exponent = T::zero();
                    for row in &rows {
                        models.fill_llr_vector(hypothesis, &mut rng, &mut llrs);
                        exponent = row.iter().zip(&llrs).fold(exponent, |acc, (&r, &s)| acc + r * s);
                    }
                    let v = exponent.as_f64().exp();
                    sum += v;
                    sum_sq += v * v;
                }
                (sum, sum_sq)
            })
            .collect();
        let (sum, sum_sq) = partial.iter().fold((0.0, 0.0), |(a, b), &(s, q)| (a + s, b + q));
        let m = mc_samples as f64;
        let mean = sum / m;
        let var = if mc_samples > 1 { ((sum_sq - m * mean * mean) / (m - 1.0)).max(0.0) } else { 0.0 };
        if !(mean.is_finite() && var.is_finite()) {
            return Err(AnalyticsError::NonFinite);
        }
        Ok((mean, (var / m).sqrt()))
    };

    let (c_alpha, c_alpha_se) = estimate(Hypothesis::H1)?;
    let (c_beta, c_beta_se) = estimate(Hypothesis::H0)?;
    Ok(RefinedConstants { c_alpha, c_beta, c_alpha_se, c_beta_se, sensor, rounds, t0, mc_samples, seed })
}

/// `a = −(1/K) log(β / C_β)`, `b = −(1/K) log(α / C_α)`.
pub fn ca_thresholds(
    targets: &ErrorTargets,
    constants: &RefinedConstants,
    n_sensors: usize,
) -> Result<Thresholds<f64>, AnalyticsError> {
    for (target, constant) in [(targets.alpha, constants.c_alpha), (targets.beta, constants.c_beta)] {
        if target >= constant {
            return Err(AnalyticsError::TargetAboveConstant { target, constant });
        }
    }
    let k = n_sensors as f64;
    Ok(Thresholds::new(
        -(targets.beta / constants.c_beta).ln() / k,
        -(targets.alpha / constants.c_alpha).ln() / k,
    )?)
}
