//! Built-in experiment recipes for the three ring networks.
//!
//! Only the network, model and consensus rounds are fixed here, plus
//! `t0 = 10` for the 12-sensor ring; the others use the default truncation
//! rule. Thresholds default to an average-scale grid, and trials and seed
//! come from the command line.

use clap::ValueEnum;
use seqnet::config::{
    DetectorKind, DetectorSpec, ExperimentConfig, ModelSpec, MuSpec, ThresholdScale, TopologySpec, DEFAULT_TRIALS,
};
use seqnet::detectors::DEFAULT_MAX_STEPS;
use seqnet::{Family, Hypothesis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Recipe {
    #[value(name = "fig-12-2")]
    Fig12_2,
    #[value(name = "fig-20-2")]
    Fig20_2,
    #[value(name = "fig-26-2")]
    Fig26_2,
}

/// Average-scale thresholds `a = b` swept by every recipe.
pub const B_GRID: [f64; 6] = [0.2, 0.4, 0.6, 0.8, 1.0, 1.2];
pub const RING12_T0: u32 = 10;

impl Recipe {
    pub fn name(self) -> &'static str {
        match self {
            Recipe::Fig12_2 => "fig-12-2",
            Recipe::Fig20_2 => "fig-20-2",
            Recipe::Fig26_2 => "fig-26-2",
        }
    }

    pub fn config(self) -> ExperimentConfig {
        let (n, family, mu, rounds): (usize, Family, f64, &[u32]) = match self {
            Recipe::Fig12_2 => (12, Family::Gaussian, 0.3, &[1]),
            Recipe::Fig20_2 => (20, Family::Gaussian, 0.3, &[1, 2]),
            Recipe::Fig26_2 => (26, Family::Laplace, 0.2, &[1, 2, 3]),
        };
        let mut detectors = vec![
            DetectorSpec { detector: DetectorKind::Cs, q: None },
            DetectorSpec { detector: DetectorKind::Sd, q: None },
        ];
        detectors.extend(rounds.iter().map(|&q| DetectorSpec { detector: DetectorKind::Ca, q: Some(q) }));
        detectors.push(DetectorSpec { detector: DetectorKind::Local, q: None });
        ExperimentConfig {
            topology: TopologySpec::Ring { n, m: 2 },
            model: ModelSpec { family, mu: MuSpec::Shared(mu) },
            detector: None,
            q: None,
            detectors: Some(detectors),
            thresholds: None,
            b_values: Some(B_GRID.to_vec()),
            threshold_scale: ThresholdScale::Average,
            hypotheses: Hypothesis::BOTH.to_vec(),
            trials: DEFAULT_TRIALS,
            seed: None,
            max_steps: DEFAULT_MAX_STEPS,
            weights: None,
            t0: (self == Recipe::Fig12_2).then_some(RING12_T0),
            mc_samples: None,
            sensor: None,
            targets: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recipes_validate() {
        for r in [Recipe::Fig12_2, Recipe::Fig20_2, Recipe::Fig26_2] {
            r.config().validate().unwrap();
        }
        let q: Vec<_> = Recipe::Fig26_2.config().detectors.unwrap().iter().filter_map(|d| d.q).collect();
        assert_eq!(q, vec![1, 2, 3]);
    }
}
