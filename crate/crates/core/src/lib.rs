//! Learning mixtures of discrete distributions from few-letter samples.
//!
//! A mixture is a probability measure over the simplex of distributions on an
//! alphabet `[n]`. Each observation (a `K`-snapshot) draws one constituent from
//! the mixture and then `K` letters from that constituent. The modules here
//! recover the mixture, measured in transportation distance.

pub mod coin1d;
pub mod error;
pub mod kdim;
pub mod kspike;
pub mod measures;
pub mod polynomials;
pub mod rng;
pub mod subspace;

pub use error::{Error, Result, StageExt};
pub use measures::{DiscreteMeasure, GroundMetric, MixtureSpec, SnapshotBatch};
pub use rng::RngStream;
