//! Per-sensor binary hypothesis pairs and their log-likelihood ratios.
//!
//! Both families are unit-scale mean shifts: `H0: X ~ F(0, 1)` against
//! `H1: X ~ F(mu, 1)`. Observations are drawn in `f64` and the LLR is
//! converted to the working scalar, so a given rng stream yields the same
//! sample path for every scalar type up to rounding.

use rand::Rng;
use rand_distr::{Open01, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("mean shift must be finite, got {0}")]
    NonFiniteMu(f64),
    #[error("per-sensor model list has {got} entries for {expected} sensors")]
    Length { got: usize, expected: usize },
    #[error("need at least one sensor model")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Hypothesis {
    H0,
    H1,
}

impl Hypothesis {
    pub const BOTH: [Hypothesis; 2] = [Hypothesis::H0, Hypothesis::H1];

    pub fn index(self) -> usize {
        match self {
            Hypothesis::H0 => 0,
            Hypothesis::H1 => 1,
        }
    }
}

impl TryFrom<u8> for Hypothesis {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(Hypothesis::H0),
            1 => Ok(Hypothesis::H1),
            other => Err(format!("hypothesis must be 0 or 1, got {other}")),
        }
    }
}

impl From<Hypothesis> for u8 {
    fn from(h: Hypothesis) -> u8 {
        h.index() as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Laplace,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypothesisModel<T> {
    family: Family,
    mu: T,
}

impl<T: Scalar> HypothesisModel<T> {
    pub fn new(family: Family, mu: T) -> Result<Self, ModelError> {
        if !mu.is_finite() {
            return Err(ModelError::NonFiniteMu(mu.as_f64()));
        }
        Ok(Self { family, mu })
    }

    pub fn gaussian(mu: T) -> Result<Self, ModelError> {
        Self::new(Family::Gaussian, mu)
    }

    pub fn laplace(mu: T) -> Result<Self, ModelError> {
        Self::new(Family::Laplace, mu)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn mu(&self) -> T {
        self.mu
    }

    /// `log f1(x) / f0(x)`.
    pub fn llr_of_observation(&self, x: T) -> T {
        let mu = self.mu;
        match self.family {
            Family::Gaussian => x * mu - mu * mu / T::of(2.0),
            // |x| - |x - mu|: -mu below 0, 2x - mu on [0, mu], +mu above mu
            Family::Laplace => x.abs() - (x - mu).abs(),
        }
    }

    /// One observation under `hypothesis`, in `f64`.
    pub fn draw_observation<R: Rng + ?Sized>(&self, hypothesis: Hypothesis, rng: &mut R) -> f64 {
        let loc = match hypothesis {
            Hypothesis::H0 => 0.0,
            Hypothesis::H1 => self.mu.as_f64(),
        };
        match self.family {
            Family::Gaussian => {
                let z: f64 = rng.sample(StandardNormal);
                loc + z
            }
            Family::Laplace => {
                let u: f64 = rng.sample(Open01);
                let v = u - 0.5;
                loc - v.signum() * (1.0 - 2.0 * v.abs()).ln()
            }
        }
    }

    pub fn draw_llr<R: Rng + ?Sized>(&self, hypothesis: Hypothesis, rng: &mut R) -> T {
        let x = self.draw_observation(hypothesis, rng);
        self.llr_of_observation(T::of(x))
    }

    /// Kullback-Leibler divergence `D_i`; both families are symmetric so
    /// `D_0 = D_1`.
    pub fn kld(&self, _hypothesis: Hypothesis) -> T {
        let mu = self.mu.abs();
        match self.family {
            Family::Gaussian => mu * mu / T::of(2.0),
            Family::Laplace => (-mu).exp_m1() + mu,
        }
    }

    /// `log E_i[exp(K√K |s|)]`, exact for Gaussian LLRs and the bound
    /// `K√K |mu|` for Laplace LLRs (`|s| <= |mu|`).
    pub fn condition2_log_margin(&self, n_sensors: usize) -> f64 {
        let k = n_sensors as f64;
        let c = k * k.sqrt();
        let mu = self.mu.as_f64().abs();
        match self.family {
            Family::Laplace => c * mu,
            Family::Gaussian => {
                let t1 = (c + 1.0) * c * mu * mu / 2.0 + log_normal_cdf((c + 0.5) * mu);
                let t2 = (c - 1.0) * c * mu * mu / 2.0 + log_normal_cdf((c - 0.5) * mu);
                log_add_exp(t1, t2)
            }
        }
    }
}

/// `log Φ(x)`, accurate in both tails.
pub fn log_normal_cdf(x: f64) -> f64 {
    if x > -30.0 {
        (0.5 * erfc(-x / std::f64::consts::SQRT_2)).ln()
    } else {
        // Mills ratio asymptotics: Φ(x) ≈ φ(x)/|x| (1 − 1/x² + 3/x⁴)
        let x2 = x * x;
        -0.5 * x2 - (-x).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            + (1.0 - 1.0 / x2 + 3.0 / (x2 * x2)).ln()
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Per-sensor models for a whole network, sensor `k` at index `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorModels<T> {
    models: Vec<HypothesisModel<T>>,
}

impl<T: Scalar> SensorModels<T> {
    pub fn homogeneous(model: HypothesisModel<T>, n_sensors: usize) -> Result<Self, ModelError> {
        if n_sensors == 0 {
            return Err(ModelError::Empty);
        }
        Ok(Self { models: vec![model; n_sensors] })
    }

    pub fn new(models: Vec<HypothesisModel<T>>) -> Result<Self, ModelError> {
        if models.is_empty() {
            return Err(ModelError::Empty);
        }
        Ok(Self { models })
    }

    pub fn n_sensors(&self) -> usize {
        self.models.len()
    }

    pub fn get(&self, k: usize) -> &HypothesisModel<T> {
        &self.models[k]
    }

    pub fn iter(&self) -> impl Iterator<Item = &HypothesisModel<T>> {
        self.models.iter()
    }

    pub fn is_homogeneous(&self) -> bool {
        self.models.windows(2).all(|w| w[0] == w[1])
    }

    /// `Σ_k D_i^{(k)}` over the listed sensors.
    pub fn kld_sum_over(&self, sensors: &[usize], hypothesis: Hypothesis) -> T {
        sensors.iter().fold(T::zero(), |acc, &k| acc + self.models[k].kld(hypothesis))
    }

    pub fn kld_sum(&self, hypothesis: Hypothesis) -> T {
        self.models.iter().fold(T::zero(), |acc, m| acc + m.kld(hypothesis))
    }

    /// One slot of LLRs, drawn in sensor order.
    pub fn draw_llr_vector<R: Rng + ?Sized>(&self, hypothesis: Hypothesis, rng: &mut R) -> Vec<T> {
        let mut out = vec![T::zero(); self.models.len()];
        self.fill_llr_vector(hypothesis, rng, &mut out);
        out
    }

    pub fn fill_llr_vector<R: Rng + ?Sized>(&self, hypothesis: Hypothesis, rng: &mut R, out: &mut [T]) {
        assert_eq!(out.len(), self.models.len(), "LLR buffer length");
        for (slot, model) in out.iter_mut().zip(&self.models) {
            *slot = model.draw_llr(hypothesis, rng);
        }
    }
}
