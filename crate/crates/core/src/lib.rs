//! Detecting truncation of the uniform distribution on the Boolean hypercube
//! by juntas.
//!
//! An unknown distribution over `{0,1}^n` is either uniform or uniform on the
//! satisfying assignments of a `k`-junta whose volume is at most `1 - eps`.
//! This crate provides:
//!
//! - [`f2`]: bit-packed hypercube points, parities, pattern projections,
//!   weight-`k` enumeration, and dual weight counts over F2;
//! - [`distributions`]: junta/parity truncation specs with exact volume
//!   accounting and rejection-free samplers for all source distributions;
//! - [`testers`]: the consistent-hypothesis truncation checker and the
//!   subset-wise collision uniformity test, with sample-budget calculators
//!   and threshold calibration;
//! - [`mle`]: the maximum-likelihood distinguisher against parity
//!   truncations, random dual-subspace trials, and moment estimation for the
//!   weight-`k` dual count;
//! - [`harness`]: a deterministic, seedable experiment runner that emits
//!   machine-readable CSV/JSON trial tables.
//!
//! All randomness flows through caller-supplied seeded generators; rerunning
//! any experiment with the same seed reproduces its output byte for byte.

pub mod distributions;
pub mod f2;
pub mod harness;
pub mod mle;
pub mod rational;
pub mod testers;

pub use distributions::{JuntaSpec, ParitySpec, ProblemParams, SourceDistribution};
pub use f2::{CoordSet, Point, SubspaceTrial};
pub use harness::{run_experiment, split, ExperimentConfig, ExperimentOutput, HarnessError};
pub use mle::{MleInstance, MomentReport};
pub use rational::Rational;
pub use testers::{Amplify, SampleBudget, UniformityParams, Verdict};
