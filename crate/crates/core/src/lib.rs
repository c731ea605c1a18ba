//! Latent-space energy-based prior with symbol-vector coupling.
//!
//! A continuous latent vector `z` and a category `y` share one energy-based
//! prior `p(y, z) ∝ exp(<y, f(z)>) N(z; 0, I)`. Observations are generated
//! from `z` by a decoder, and an amortized Gaussian encoder approximates the
//! posterior. Training alternates persistent-chain Langevin sampling of the
//! prior with variational updates, optionally adding a mutual-information
//! bonus between `z` and `y` (the information-bottleneck variant) and a
//! supervised loss on labeled examples.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`, which is what the CLI uses.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod encoder;
pub mod error;
pub mod formats;
pub mod generator;
pub mod langevin;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod objectives;
pub mod prior;
pub mod scalar;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Real = f64;
pub type Svebm = model::Model<f64>;
pub type SvebmF32 = model::Model<f32>;
pub type Energy = prior::EnergyParams<f64>;
pub type Posterior = encoder::GaussianPosterior<f64>;
pub type Observation = data::Example<f64>;
pub type Chains = langevin::ChainPool<f64>;
