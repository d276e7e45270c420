//! Fully distributed sequential hypothesis testing on sensor networks.
//!
//! Four detectors share one trial driver: the centralized SPRT, the local
//! test over closed neighborhoods, sample dissemination, and consensus
//! averaging. Around them sit the consensus weight construction, the
//! closed-form predictions and bounds, and a deterministic Monte Carlo
//! harness.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, which is what the Monte Carlo harness
//! and the CLI use.

pub mod analytics;
pub mod config;
pub mod detectors;
pub mod linalg;
pub mod models;
pub mod montecarlo;
pub mod rng;
pub mod scalar;
pub mod stats;
pub mod topology;
pub mod weights;

pub use detectors::{SensorVerdict, Thresholds};
pub use linalg::Matrix;
pub use models::{Family, Hypothesis, HypothesisModel, SensorModels};
pub use scalar::Scalar;
pub use topology::{DelayMatrix, Topology};
pub use weights::{SpectralReport, WeightMatrix};

pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
pub type WeightMatrix64 = WeightMatrix<f64>;
pub type WeightMatrix32 = WeightMatrix<f32>;
pub type SpectralReport64 = SpectralReport<f64>;
pub type HypothesisModel64 = HypothesisModel<f64>;
pub type HypothesisModel32 = HypothesisModel<f32>;
pub type SensorModels64 = SensorModels<f64>;
pub type Thresholds64 = Thresholds<f64>;
pub type SensorVerdict64 = SensorVerdict<f64>;
