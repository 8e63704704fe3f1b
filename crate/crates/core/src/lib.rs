//! Learning origin-centred halfspaces from examples corrupted by Massart
//! (bounded, instance-dependent) label noise.
//!
//! The learner runs projected stochastic gradient descent on the unit sphere
//! over a sigmoid-smoothed 0-1 loss and then selects, among both signs of
//! every recorded iterate, the direction with the fewest mistakes on a fresh
//! sample. The [`verification`] module estimates surrogate gradient norms at
//! prescribed angles from the target and checks them against the structural
//! lower bounds that make the approach work.
//!
//! Interchangeable pieces (marginal samplers, noise adversaries, surrogates,
//! gradient estimators) sit behind trait objects and are looked up by name in
//! a [`registry::Registry`].

pub mod distributions;
pub mod error;
pub mod geometry;
pub mod learner;
pub mod noise;
pub mod psgd;
pub mod registry;
pub mod rng;
pub mod stats;
pub mod surrogate;
pub mod verification;

pub use error::{Error, Result};
pub use geometry::UnitVector;
