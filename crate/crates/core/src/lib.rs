//! Asynchronous distributed proximal gradient with adaptive sparsified communications.
//!
//! Everything numerical is generic over [`Scalar`] (`f32` or `f64`); the aliases below fix
//! the scalar to `f64`, with `F32` prefixed variants for single precision.

pub mod data;
pub mod engine;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod problem;
pub mod recondition;
pub mod rng;
pub mod scalar;
pub mod sparsifier;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Problem = problem::CompositeProblem<f64>;
pub type Shard = problem::LossShard<f64>;
pub type Reg = problem::Regularizer<f64>;
pub type Dataset = data::Dataset<f64>;

pub type Distribution = sparsifier::SelectorDistribution<f64>;
pub type Trace = engine::RunTrace<f64>;
pub type Config = engine::EngineConfig<f64>;
pub type Params = recondition::ReconditionParams<f64>;
pub type Outer = recondition::OuterTrace<f64>;
pub type Reference = metrics::ReferenceSolution<f64>;

pub type F32Problem = problem::CompositeProblem<f32>;
pub type F32Dataset = data::Dataset<f32>;
pub type F32Trace = engine::RunTrace<f32>;
