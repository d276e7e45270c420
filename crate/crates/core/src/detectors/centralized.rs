use rand::Rng;

use super::{single_engine_trial, DetectorError, NetworkStatistic, SensorVerdict, Thresholds};
use crate::models::{Hypothesis, SensorModels};
use crate::scalar::Scalar;

/// Fusion-center statistic `S_t = Σ_k S_t^{(k)}`, reported to every sensor.
#[derive(Debug, Clone)]
pub struct CentralizedStatistic<T> {
    out: Vec<T>,
}

impl<T: Scalar> CentralizedStatistic<T> {
    pub fn new(n_sensors: usize) -> Self {
        Self { out: vec![T::zero(); n_sensors] }
    }
}

impl<T: Scalar> NetworkStatistic<T> for CentralizedStatistic<T> {
    fn n_sensors(&self) -> usize {
        self.out.len()
    }

    fn advance(&mut self, llrs: &[T]) {
        let total = self.out[0] + crate::scalar::ordered_sum(llrs.iter().copied());
        self.out.iter_mut().for_each(|v| *v = total);
    }

    fn statistics(&self) -> &[T] {
        &self.out
    }

    fn reset(&mut self) {
        self.out.iter_mut().for_each(|v| *v = T::zero());
    }
}

/// Centralized SPRT on the network-wide LLR sum.
pub fn centralized_trial<T, R>(
    models: &SensorModels<T>,
    thresholds: Thresholds<T>,
    hypothesis: Hypothesis,
    rng: &mut R,
    max_steps: u64,
) -> Result<SensorVerdict<T>, DetectorError>
where
    T: Scalar,
    R: Rng + ?Sized,
{
    let mut engine = CentralizedStatistic::new(models.n_sensors());
    let verdicts = single_engine_trial(&mut engine, thresholds, models, hypothesis, rng, max_steps)?;
    Ok(verdicts[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::HypothesisModel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn stops_outside_region() {
        let models = SensorModels::homogeneous(HypothesisModel::gaussian(0.3).unwrap(), 1).unwrap();
        let th = Thresholds::symmetric(2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let v = centralized_trial(&models, th, Hypothesis::H1, &mut rng, 100_000).unwrap();
            match v.decision {
                Some(Hypothesis::H1) => assert!(v.terminal_statistic >= 2.0),
                Some(Hypothesis::H0) => assert!(v.terminal_statistic <= -2.0),
                None => panic!("censored"),
            }
        }
    }

    #[test]
    fn strong_signal_stops_fast() {
        let models = SensorModels::homogeneous(HypothesisModel::gaussian(3.0).unwrap(), 1).unwrap();
        let th = Thresholds::symmetric(2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 2000;
        let total: u64 = (0..n)
            .map(|_| centralized_trial(&models, th, Hypothesis::H1, &mut rng, 1000).unwrap().stopping_time)
            .sum();
        let mean = total as f64 / n as f64;
        assert!(mean < 1.5, "mean stopping time {mean}");
    }

    #[test]
    fn censoring_at_max_steps() {
        let models = SensorModels::homogeneous(HypothesisModel::gaussian(0.0).unwrap(), 2).unwrap();
        let th = Thresholds::symmetric(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = centralized_trial(&models, th, Hypothesis::H1, &mut rng, 25).unwrap();
        assert!(v.censored());
        assert_eq!(v.stopping_time, 25);
    }
}
