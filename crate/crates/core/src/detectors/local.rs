use rand::Rng;

use super::{single_engine_trial, DetectorError, NetworkStatistic, SensorVerdict, Thresholds};
use crate::models::{Hypothesis, SensorModels};
use crate::scalar::Scalar;
use crate::topology::Topology;

/// Sensor `k` tests `Σ_{ℓ ∈ {k} ∪ N_k} S_t^{(ℓ)}` using only its
/// neighbors' raw samples.
#[derive(Debug, Clone)]
pub struct LocalStatistic<T> {
    neighborhoods: Vec<Vec<usize>>,
    cumulative: Vec<T>,
    out: Vec<T>,
}

impl<T: Scalar> LocalStatistic<T> {
    pub fn new(topology: &Topology) -> Self {
        let k = topology.n_sensors();
        Self {
            neighborhoods: (0..k).map(|i| topology.closed_neighborhood(i)).collect(),
            cumulative: vec![T::zero(); k],
            out: vec![T::zero(); k],
        }
    }
}

impl<T: Scalar> NetworkStatistic<T> for LocalStatistic<T> {
    fn n_sensors(&self) -> usize {
        self.out.len()
    }

    fn advance(&mut self, llrs: &[T]) {
        for (c, &s) in self.cumulative.iter_mut().zip(llrs) {
            *c = *c + s;
        }
        for (o, hood) in self.out.iter_mut().zip(&self.neighborhoods) {
            *o = hood.iter().fold(T::zero(), |acc, &l| acc + self.cumulative[l]);
        }
    }

    fn statistics(&self) -> &[T] {
        &self.out
    }

    fn reset(&mut self) {
        self.cumulative.iter_mut().for_each(|v| *v = T::zero());
        self.out.iter_mut().for_each(|v| *v = T::zero());
    }
}

pub fn local_trial<T, R>(
    topology: &Topology,
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
    let mut engine = LocalStatistic::new(topology);
    single_engine_trial(&mut engine, thresholds, models, hypothesis, rng, max_steps)
}
