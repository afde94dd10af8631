//! Selection-augmented particle filtering with near-optimality error
//! bounds, a grid-filter oracle, and an information-cost-augmented MPC
//! stack, demonstrated on terrain-aided navigation.
//!
//! Core math is generic over the scalar type through [`scalar::Real`]
//! (f32/f64); the simulation layer and the type aliases below fix f64.

pub mod bounds;
pub mod config;
pub mod dist;
pub mod dual;
pub mod filter;
pub mod linalg;
pub mod model;
pub mod models;
pub mod oracle;
pub mod scalar;
pub mod seed;
pub mod sim;
pub mod tan;
pub mod terrain;

pub use scalar::Real;

/// Default-precision aliases used by the harness and the CLI.
pub type ParticleSet = filter::ParticleSet<f64>;
pub type FilterConfig = filter::FilterConfig<f64>;
pub type GridDistribution = oracle::GridDistribution<f64>;
pub type History = model::History<f64>;
pub type ControlSet = model::ControlSet<f64>;
pub type TruncatedNormal = dist::TruncatedNormal<f64>;
