use rand::Rng;

use super::{single_engine_trial, DetectorError, NetworkStatistic, SensorVerdict, Thresholds};
use crate::linalg::Matrix;
use crate::models::{Hypothesis, SensorModels};
use crate::scalar::Scalar;
use crate::weights::WeightMatrix;

/// Consensus recursion `η_t = W^q (η_{t−1} + s_t)`, `η_0 = 0`, applied as
/// `q` successive neighbor-weighted averages.
#[derive(Debug, Clone)]
pub struct ConsensusStatistic<T> {
    w: Matrix<T>,
    rounds: u32,
    eta: Vec<T>,
    scratch: Vec<T>,
}

impl<T: Scalar> ConsensusStatistic<T> {
    pub fn new(weights: &WeightMatrix<T>, rounds: u32) -> Result<Self, DetectorError> {
        if rounds == 0 {
            return Err(DetectorError::ZeroRounds);
        }
        let k = weights.n_sensors();
        Ok(Self { w: weights.matrix().clone(), rounds, eta: vec![T::zero(); k], scratch: vec![T::zero(); k] })
    }

    pub fn rounds(&self) -> u32 {
        self.rounds
    }
}

impl<T: Scalar> NetworkStatistic<T> for ConsensusStatistic<T> {
    fn n_sensors(&self) -> usize {
        self.eta.len()
    }

    fn advance(&mut self, llrs: &[T]) {
        for (e, &s) in self.eta.iter_mut().zip(llrs) {
            *e = *e + s;
        }
        for _ in 0..self.rounds {
            self.w.matvec_into(&self.eta, &mut self.scratch);
            std::mem::swap(&mut self.eta, &mut self.scratch);
        }
    }

    fn statistics(&self) -> &[T] {
        &self.eta
    }

    fn reset(&mut self) {
        self.eta.iter_mut().for_each(|v| *v = T::zero());
    }
}

/// `η_t = Σ_{j=1}^t W^{q(t−j+1)} s_j` evaluated directly from the LLR
/// history; an independent route to the recursive statistic.
pub fn ca_statistic_direct<T: Scalar>(weights: &WeightMatrix<T>, rounds: u32, history: &[Vec<T>]) -> Vec<T> {
    let k = weights.n_sensors();
    let step = weights.power(u64::from(rounds));
    let mut power = step.clone();
    let mut eta = vec![T::zero(); k];
    for s in history.iter().rev() {
        for (e, v) in eta.iter_mut().zip(power.matvec(s)) {
            *e = *e + v;
        }
        power = &power * &step;
    }
    eta
}

pub fn ca_trial<T, R>(
    weights: &WeightMatrix<T>,
    rounds: u32,
    models: &SensorModels<T>,
    thresholds: Thresholds<T>,
    hypothesis: Hypothesis,
    rng: &mut R,
    max_steps: u64,
) -> Result<Vec<SensorVerdict<T>>, DetectorError>
where
    T: Scalar,
    R: Rng + ?Sized,
{
    let mut engine = ConsensusStatistic::new(weights, rounds)?;
    single_engine_trial(&mut engine, thresholds, models, hypothesis, rng, max_steps)
}
