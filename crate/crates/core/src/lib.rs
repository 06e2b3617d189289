//! Gradient tracking laboratory for distributed quadratic optimization.
//!
//! The crate covers two views of the same algorithm:
//!
//! * the distributed iteration itself, executed as a synchronous multi-agent
//!   process ([`simulator`]);
//! * its closed-loop linear system interpretation: assembly of the state
//!   matrices, reachability analysis, invariant-subspace stability, the
//!   regulator equations and stepsize thresholds ([`closedloop`]).
//!
//! All numerical code is generic over the scalar type through [`Real`];
//! the `f64` aliases below are what the command-line front end uses.

// `!(x > 0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod closedloop;
mod error;
pub mod io;
pub mod lingebra;
pub mod netgraph;
pub mod quadprob;
pub mod scalar;
pub mod simulator;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Graph = netgraph::Graph;
pub type WeightPair = netgraph::WeightPair<f64>;
pub type LiftedWeights = netgraph::LiftedWeights<f64>;
pub type QuadraticProblem = quadprob::QuadraticProblem<f64>;
pub type Spectrum = lingebra::Spectrum<f64>;
pub type SubspaceBasis = lingebra::SubspaceBasis<f64>;
pub type GainSet = closedloop::GainSet<f64>;
pub type ClosedLoopSystem = closedloop::ClosedLoopSystem<f64>;
pub type StabilityReport = closedloop::StabilityReport<f64>;
pub type RegulatorSolution = closedloop::RegulatorSolution<f64>;
pub type Trajectory = simulator::Trajectory<f64>;
pub type InitSpec = simulator::InitSpec<f64>;
pub type Stepsize = simulator::Stepsize<f64>;
