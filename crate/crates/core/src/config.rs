//! JSON experiment descriptions and their resolution into runnable parts.
//!
//! ```json
//! {
//!   "topology": {"kind": "ring", "n": 12, "m": 2},
//!   "model": {"family": "gaussian", "mu": 0.3},
//!   "detectors": [{"detector": "sd"}, {"detector": "ca", "q": 1}],
//!   "b_values": [0.4, 0.5, 0.6],
//!   "threshold_scale": "average",
//!   "trials": 100000,
//!   "seed": 7
//! }
//! ```
//!
//! A single detector may be given inline instead:
//! `{"detector": "ca", "q": 1, "thresholds": {"a": 0.5, "b": 0.5}, ...}`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{AnalyticsError, ErrorTargets};
use crate::detectors::{DetectorError, Thresholds, DEFAULT_MAX_STEPS};
use crate::linalg::Matrix;
use crate::models::{Family, Hypothesis, HypothesisModel, ModelError, SensorModels};
use crate::topology::{Topology, TopologyError};
use crate::weights::{WeightError, WeightMatrix};

pub const DEFAULT_TRIALS: u64 = 100_000;
pub const DEFAULT_MC_SAMPLES: u64 = 100_000;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("topology: {0}")]
    Topology(#[from] TopologyError),
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("weights: {0}")]
    Weights(#[from] WeightError),
    #[error("thresholds: {0}")]
    Thresholds(#[from] DetectorError),
    #[error("targets: {0}")]
    Targets(#[from] AnalyticsError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TopologySpec {
    Ring { n: usize, m: usize },
    Edges { n: usize, edges: Vec<[usize; 2]> },
    Complete { n: usize },
}

impl TopologySpec {
    pub fn build(&self) -> Result<Topology, TopologyError> {
        match self {
            TopologySpec::Ring { n, m } => Topology::ring(*n, *m),
            TopologySpec::Complete { n } => Topology::complete(*n),
            TopologySpec::Edges { n, edges } => {
                let pairs: Vec<(usize, usize)> = edges.iter().map(|&[a, b]| (a, b)).collect();
                Topology::from_edges(*n, &pairs)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MuSpec {
    Shared(f64),
    PerSensor(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub family: Family,
    pub mu: MuSpec,
}

impl ModelSpec {
    pub fn build(&self, n_sensors: usize) -> Result<SensorModels<f64>, ModelError> {
        match &self.mu {
            MuSpec::Shared(mu) => SensorModels::homogeneous(HypothesisModel::new(self.family, *mu)?, n_sensors),
            MuSpec::PerSensor(mus) => {
                if mus.len() != n_sensors {
                    return Err(ModelError::Length { got: mus.len(), expected: n_sensors });
                }
                let models = mus
                    .iter()
                    .map(|&mu| HypothesisModel::new(self.family, mu))
                    .collect::<Result<Vec<_>, _>>()?;
                SensorModels::new(models)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    /// Centralized SPRT.
    Cs,
    /// Closed-neighborhood local test.
    Local,
    /// Sample dissemination, delayed-sum engine.
    Sd,
    /// Sample dissemination, literal message-set engine.
    SdExplicit,
    /// Consensus averaging.
    Ca,
}

impl DetectorKind {
    pub fn label(self) -> &'static str {
        match self {
            DetectorKind::Cs => "cs",
            DetectorKind::Local => "local",
            DetectorKind::Sd => "sd",
            DetectorKind::SdExplicit => "sd_explicit",
            DetectorKind::Ca => "ca",
        }
    }

    /// Detectors whose statistic is a sum of true LLRs (as opposed to the
    /// consensus average).
    pub fn is_llr_sum(self) -> bool {
        !matches!(self, DetectorKind::Ca)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    pub detector: DetectorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<u32>,
}

impl DetectorSpec {
    /// Consensus rounds per slot; `None` for non-consensus detectors.
    pub fn rounds(&self) -> Option<u32> {
        match self.detector {
            DetectorKind::Ca => Some(self.q.unwrap_or(1)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSpec {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThresholdList {
    One(ThresholdSpec),
    Many(Vec<ThresholdSpec>),
}

/// How configured thresholds map onto each detector's own statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdScale {
    /// Every detector compares its statistic with `(−a, b)` as given.
    #[default]
    Raw,
    /// Thresholds are on the per-sensor average scale of the consensus
    /// statistic; LLR-sum detectors use `(−K a, K b)`.
    Average,
}

fn default_hypotheses() -> Vec<Hypothesis> {
    Hypothesis::BOTH.to_vec()
}

fn default_trials() -> u64 {
    DEFAULT_TRIALS
}

fn default_max_steps() -> u64 {
    DEFAULT_MAX_STEPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub topology: TopologySpec,
    pub model: ModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector: Option<DetectorKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detectors: Option<Vec<DetectorSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<ThresholdList>,
    /// Symmetric sweep shorthand: one `(a, b) = (v, v)` per entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_values: Option<Vec<f64>>,
    #[serde(default)]
    pub threshold_scale: ThresholdScale,
    #[serde(default = "default_hypotheses")]
    pub hypotheses: Vec<Hypothesis>,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
    /// Explicit consensus matrix; defaults to equal weights on the topology.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_samples: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensor: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<ErrorTargets>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn detector_specs(&self) -> Result<Vec<DetectorSpec>, ConfigError> {
        match (&self.detectors, self.detector) {
            (Some(_), Some(_)) => Err(ConfigError::Invalid("give either `detector` or `detectors`, not both".into())),
            (Some(list), None) => {
                if list.is_empty() {
                    return Err(ConfigError::Invalid("`detectors` is empty".into()));
                }
                Ok(list.clone())
            }
            (None, Some(kind)) => Ok(vec![DetectorSpec { detector: kind, q: self.q }]),
            (None, None) => Err(ConfigError::Invalid("missing field `detector` (or `detectors`)".into())),
        }
    }

    pub fn threshold_specs(&self) -> Result<Vec<ThresholdSpec>, ConfigError> {
        let mut out = match &self.thresholds {
            Some(ThresholdList::One(t)) => vec![*t],
            Some(ThresholdList::Many(ts)) => ts.clone(),
            None => Vec::new(),
        };
        if let Some(bs) = &self.b_values {
            out.extend(bs.iter().map(|&b| ThresholdSpec { a: b, b }));
        }
        Ok(out)
    }

    pub fn topology(&self) -> Result<Topology, ConfigError> {
        Ok(self.topology.build()?)
    }

    pub fn models(&self, n_sensors: usize) -> Result<SensorModels<f64>, ConfigError> {
        Ok(self.model.build(n_sensors)?)
    }

    pub fn weight_matrix(&self, topology: &Topology) -> Result<WeightMatrix<f64>, ConfigError> {
        match &self.weights {
            Some(rows) => {
                let m = Matrix::from_rows(rows).map_err(WeightError::from)?;
                if m.rows() != topology.n_sensors() || !m.is_square() {
                    return Err(ConfigError::Invalid(format!(
                        "weights must be {k}x{k}",
                        k = topology.n_sensors()
                    )));
                }
                Ok(WeightMatrix::from_matrix(m)?)
            }
            None => Ok(WeightMatrix::equal_weight(topology)?),
        }
    }

    /// Parses every section and checks cross-field consistency.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let topology = self.topology()?;
        self.models(topology.n_sensors())?;
        let detectors = self.detector_specs()?;
        for d in &detectors {
            if d.q == Some(0) {
                return Err(ConfigError::Invalid("q must be at least 1".into()));
            }
            if d.q.is_some() && d.detector != DetectorKind::Ca {
                return Err(ConfigError::Invalid(format!("q only applies to `ca`, not `{}`", d.detector.label())));
            }
        }
        if detectors.iter().any(|d| d.detector == DetectorKind::Ca) || self.weights.is_some() {
            self.weight_matrix(&topology)?;
        }
        for t in self.threshold_specs()? {
            Thresholds::new(t.a, t.b)?;
        }
        if self.trials == 0 {
            return Err(ConfigError::Invalid("trials must be at least 1".into()));
        }
        if self.max_steps == 0 {
            return Err(ConfigError::Invalid("max_steps must be at least 1".into()));
        }
        if self.hypotheses.is_empty() {
            return Err(ConfigError::Invalid("hypotheses list is empty".into()));
        }
        if let Some(t) = &self.targets {
            ErrorTargets::new(t.alpha, t.beta)?;
        }
        if let Some(s) = self.sensor {
            if s >= topology.n_sensors() {
                return Err(ConfigError::Invalid(format!("sensor {s} out of range")));
            }
        }
        Ok(())
    }

    /// Canonical text: keys sorted, numbers in shortest round-trip form.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        // serde_json's default map is ordered by key
        serde_json::to_string(&value).expect("value serializes")
    }
}
