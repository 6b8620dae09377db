//! Analytic model, optimizer and Monte Carlo simulator for a wireless system in
//! which a user fetches cachable content from two randomly available caching
//! helpers (S and D) or a data center, while S relays its own queued traffic to D.
//!
//! The analytic modules are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix them to `f64`, which is what the simulator and CLI use.

pub mod cache;
pub mod delay;
pub mod error;
pub mod experiments;
pub mod optimizer;
pub mod phy;
pub mod scalar;
pub mod scenario;
pub mod sim;
pub mod throughput;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use cache::{CacheSizes, CatalogConfig, CmpcPlacement, RequestLocation};
pub use phy::NodeId;
pub use delay::{Unknown, UserDelayEq};
pub use throughput::{MuMode, Regime};
pub use scenario::{load_scenario, ScenarioConfig};
pub use sim::{RequestMode, SimConfig, SimMuMode, SimStats};

pub type PhyConfig = phy::PhyConfig<f64>;
pub type LinkGeometry = phy::LinkGeometry<f64>;
pub type SuccessProbTable = phy::SuccessProbTable<f64>;
pub type HitProfile = cache::HitProfile<f64>;
pub type AccessProbs = throughput::AccessProbs<f64>;
pub type ThroughputReport = throughput::ThroughputReport<f64>;
pub type DelayInputs = delay::DelayInputs<f64>;
pub type DelaySolution = delay::DelaySolution<f64>;
pub type OptimizationProblem = optimizer::OptimizationProblem<f64>;
pub type OptimizationResult = optimizer::OptimizationResult<f64>;
