//! Layer-wise feature learning in three-layer networks.
//!
//! The crate covers the full pipeline: seeded sampling on the sphere,
//! Gegenbauer spectra of dot-product kernels, the learned feature produced
//! by one gradient step on the middle layer (at finite or infinite inner
//! width), random-feature ridge regression on that feature, and diagnostics
//! for quadratic features and two-layer lower bounds.

pub mod activation;
pub mod analysis;
pub mod error;
pub mod experiments;
pub mod gegenbauer;
pub mod kernel;
pub mod network;
pub mod quadrature;
pub mod sampling;
pub mod stats;
pub mod targets;
pub mod training;

#[cfg(test)]
mod properties;

pub use activation::{Activation, ActivationKind, Link};
pub use error::{FeatlabError, Result};
pub use gegenbauer::GegenbauerBasis;
pub use network::{NetworkState, Stage};
pub use sampling::{Dataset, Distribution, Seed};

/// Library version, recorded in every result sidecar.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
