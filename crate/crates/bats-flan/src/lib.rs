//! Exact finite-length analysis and simulation of BATS codes.
//!
//! BATS codes transmit `K` input symbols through a network as batches of `M`
//! coded symbols; LT/Raptor codes are the `M = 1` special case. This crate
//! computes, without simulation, the full stopping-time distribution of the
//! belief-propagation decoder for a fixed or Poisson-distributed number of
//! received batches, the expected number of symbols inactivated by
//! inactivation decoding, and linear-programming degree-distribution designs.
//! A Monte Carlo encoder/decoder over GF(2^m) cross-validates every analytic
//! path.
//!
//! The analysis kernels are generic over the floating-point type through
//! [`Scalar`]; the type aliases below fix the default `f64` instantiation.

// decoding-time and ripple indices are semantic; iterator rewrites of those
// loops hurt readability
#![allow(clippy::needless_range_loop)]

pub mod bp;
pub mod cli;
pub mod combin;
pub mod inact;
pub mod karp;
pub mod model;
pub mod opt;
pub mod poisson;
mod scalar;
pub mod sim;
pub mod simplex;

pub use scalar::{KahanSum, Scalar};

/// Default scalar type for all command-line and convenience entry points.
pub type Real = f64;

/// Analysis model over the default scalar.
pub type ModelF64 = model::Model<Real>;
/// Rank distribution over the default scalar.
pub type RankDistributionF64 = model::RankDistribution<Real>;
/// Degree distribution over the default scalar.
pub type DegreeDistributionF64 = model::DegreeDistribution<Real>;
/// Solvability vectors over the default scalar.
pub type SolvabilityF64 = model::Solvability<Real>;
