//! Sample dissemination: every indexed LLR is relayed hop by hop until it
//! has reached every sensor, and each sensor tests the sum of everything
//! it holds.
//!
//! Two engines compute the same statistic. [`DisseminationExplicit`] runs
//! the message-set protocol literally. [`DisseminationClosedForm`] uses the
//! fact that after slot `t` sensor `k` holds exactly the first
//! `t − ν_{ℓ→k} + 1` samples of every sensor `ℓ`, so the statistic is a sum
//! of delayed cumulative sums. Both add per-sensor partial sums in time
//! order and then combine sensors in index order, so they agree bit for bit.

use std::collections::BTreeSet;

use rand::Rng;

use super::{single_engine_trial, DetectorError, NetworkStatistic, SensorVerdict, Thresholds};
use crate::models::{Hypothesis, SensorModels};
use crate::scalar::Scalar;
use crate::topology::Topology;

/// Sample identifier: (collecting sensor, slot), slots starting at 1.
pub type SampleId = (usize, u64);

#[derive(Debug, Clone)]
pub struct DisseminationExplicit<T> {
    neighbors: Vec<Vec<usize>>,
    samples: Vec<Vec<T>>,
    info: Vec<BTreeSet<SampleId>>,
    fresh: Vec<BTreeSet<SampleId>>,
    messages: Vec<BTreeSet<SampleId>>,
    t: u64,
    out: Vec<T>,
}

impl<T: Scalar> DisseminationExplicit<T> {
    pub fn new(topology: &Topology) -> Self {
        let k = topology.n_sensors();
        Self {
            neighbors: (0..k).map(|i| topology.neighbors(i).to_vec()).collect(),
            samples: vec![Vec::new(); k],
            info: vec![BTreeSet::new(); k],
            fresh: vec![BTreeSet::new(); k],
            messages: vec![BTreeSet::new(); k],
            t: 0,
            out: vec![T::zero(); k],
        }
    }

    /// `M_t^{(k)}` after the latest slot.
    pub fn information_set(&self, k: usize) -> &BTreeSet<SampleId> {
        &self.info[k]
    }

    /// `V_t^{(k)}` broadcast during the latest slot.
    pub fn message_set(&self, k: usize) -> &BTreeSet<SampleId> {
        &self.messages[k]
    }

    fn sample(&self, (sensor, slot): SampleId) -> T {
        self.samples[sensor][(slot - 1) as usize]
    }

    fn set_sum(&self, k: usize) -> T {
        let mut total = T::zero();
        let mut current: Option<(usize, T)> = None;
        for &id in &self.info[k] {
            current = match current {
                Some((sensor, partial)) if sensor == id.0 => Some((sensor, partial + self.sample(id))),
                Some((_, partial)) => {
                    total = total + partial;
                    Some((id.0, T::zero() + self.sample(id)))
                }
                None => Some((id.0, T::zero() + self.sample(id))),
            };
        }
        if let Some((_, partial)) = current {
            total = total + partial;
        }
        total
    }
}

impl<T: Scalar> NetworkStatistic<T> for DisseminationExplicit<T> {
    fn n_sensors(&self) -> usize {
        self.out.len()
    }

    fn advance(&mut self, llrs: &[T]) {
        self.t += 1;
        let t = self.t;
        for (store, &s) in self.samples.iter_mut().zip(llrs) {
            store.push(s);
        }
        // V_t = {s_t} ∪ (M_{t-1} − M_{t-2} − {s_{t-1}})
        for k in 0..self.out.len() {
            let mut v: BTreeSet<SampleId> = self.fresh[k].iter().copied().filter(|&id| id != (k, t - 1)).collect();
            v.insert((k, t));
            self.messages[k] = v;
        }
        // M_t = M_{t-1} ∪ {s_t} ∪ ⋃_{ℓ ∈ N_k} V_t^{(ℓ)}
        for k in 0..self.out.len() {
            let mut added = BTreeSet::new();
            let incoming = std::iter::once((k, t))
                .chain(self.neighbors[k].iter().flat_map(|&l| self.messages[l].iter().copied()));
            for id in incoming {
                if !self.info[k].contains(&id) {
                    added.insert(id);
                }
            }
            self.info[k].extend(added.iter().copied());
            self.fresh[k] = added;
        }
        for k in 0..self.out.len() {
            self.out[k] = self.set_sum(k);
        }
    }

    fn statistics(&self) -> &[T] {
        &self.out
    }

    fn reset(&mut self) {
        self.samples.iter_mut().for_each(Vec::clear);
        self.info.iter_mut().for_each(BTreeSet::clear);
        self.fresh.iter_mut().for_each(BTreeSet::clear);
        self.messages.iter_mut().for_each(BTreeSet::clear);
        self.out.iter_mut().for_each(|v| *v = T::zero());
        self.t = 0;
    }
}

/// `ζ_t^{(k)} = Σ_ℓ S^{(ℓ)}_{(t − ν_{ℓ→k} + 1)⁺}` from a ring buffer of
/// cumulative sums `max ν` slots deep.
#[derive(Debug, Clone)]
pub struct DisseminationClosedForm<T> {
    /// `delays[k][ℓ] = ν_{ℓ→k}`
    delays: Vec<Vec<usize>>,
    depth: usize,
    history: Vec<Vec<T>>,
    cumulative: Vec<T>,
    t: u64,
    out: Vec<T>,
}

impl<T: Scalar> DisseminationClosedForm<T> {
    pub fn new(topology: &Topology) -> Self {
        let nu = topology.delay_matrix();
        let k = topology.n_sensors();
        let depth = nu.max_delay();
        Self {
            delays: (0..k).map(|i| nu.column(i)).collect(),
            depth,
            history: vec![vec![T::zero(); depth]; k],
            cumulative: vec![T::zero(); k],
            t: 0,
            out: vec![T::zero(); k],
        }
    }

    /// `S^{(ℓ)}_{(t − ν + 1)⁺}` as seen by a sensor `ν` hops away.
    pub fn delayed_cumulative(&self, from: usize, delay: usize) -> T {
        let slot = self.t as i64 - delay as i64 + 1;
        if slot <= 0 {
            T::zero()
        } else {
            self.history[from][slot as usize % self.depth]
        }
    }
}

impl<T: Scalar> NetworkStatistic<T> for DisseminationClosedForm<T> {
    fn n_sensors(&self) -> usize {
        self.out.len()
    }

    fn advance(&mut self, llrs: &[T]) {
        self.t += 1;
        let slot = self.t as usize % self.depth;
        for (l, &s) in llrs.iter().enumerate() {
            self.cumulative[l] = self.cumulative[l] + s;
            self.history[l][slot] = self.cumulative[l];
        }
        for k in 0..self.out.len() {
            self.out[k] = self.delays[k]
                .iter()
                .enumerate()
                .fold(T::zero(), |acc, (l, &nu)| acc + self.delayed_cumulative(l, nu));
        }
    }

    fn statistics(&self) -> &[T] {
        &self.out
    }

    fn reset(&mut self) {
        self.history.iter_mut().flatten().for_each(|v| *v = T::zero());
        self.cumulative.iter_mut().for_each(|v| *v = T::zero());
        self.out.iter_mut().for_each(|v| *v = T::zero());
        self.t = 0;
    }
}

pub fn sd_trial_explicit<T, R>(
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
    let mut engine = DisseminationExplicit::new(topology);
    single_engine_trial(&mut engine, thresholds, models, hypothesis, rng, max_steps)
}

pub fn sd_trial_closed_form<T, R>(
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
    let mut engine = DisseminationClosedForm::new(topology);
    single_engine_trial(&mut engine, thresholds, models, hypothesis, rng, max_steps)
}
