//! Phase-time-array multistatic OFDM sensing: signal simulation, per-link
//! estimation, and analytical and learned position fusion.
//!
//! The numerical core is generic over [`Scalar`]; the aliases below fix it
//! to `f64`, which is what the harness and CLI use.

pub mod channel;
pub mod config;
pub mod dump;
pub mod error;
pub mod estimation;
pub mod fusion;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod neural;
pub mod pta;
pub mod scalar;
pub mod seeds;
pub mod sensing;

pub use config::ScenarioConfig;
pub use error::{Error, Result};
pub use fusion::{Scheme, SolverSettings};
pub use scalar::Scalar;

pub type Position = geometry::Position2D<f64>;
pub type Link = geometry::LinkGeometry<f64>;
pub type Sigmas = geometry::NoiseSigmas<f64>;
pub type Hexagon = geometry::HexRegion<f64>;
pub type Estimate = estimation::LinkEstimate<f64>;
pub type Fusion = fusion::FusionResult<f64>;
pub type Signal = channel::RxSignal<f64>;
pub type Chain = sensing::SensingChain<f64>;
pub type Pta = pta::PtaConfig<f64>;
