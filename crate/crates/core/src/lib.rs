//! Mirror descent over the unit simplex.
//!
//! The crate provides centralized and synchronous distributed mirror descent
//! with Euclidean and negative-entropy geometries, a robust l1 regression
//! problem family, Metropolis-Hastings mixing matrices, and runtime monitors
//! that evaluate the per-iteration inequalities behind the convergence of the
//! iterates.
//!
//! Module map:
//!
//! - [`geometry`]: mirror maps, Bregman divergences, simplex projection, mirror step
//! - [`problems`]: l1 regression instances, subgradients, grid reference optimum
//! - [`solver_central`]: step schedules, centralized runs, per-step monitor
//! - [`network`]: random connected graphs, mixing matrices, spectral checks
//! - [`solver_dist`]: distributed runs, consensus metrics, contraction monitor
//! - [`experiment`]: config-driven runs, trace files, trace comparison

pub mod error;
pub mod experiment;
pub mod geometry;
mod linalg;
pub mod network;
pub mod problems;
pub mod solver_central;
pub mod solver_dist;
pub mod textio;
pub mod trace;

pub use error::{Error, Result};
pub use geometry::{project_simplex, MirrorMap, Point};
pub use network::{Graph, MixingMatrix};
pub use problems::{reference_optimum, ProblemInstance, ReferenceOptimum};
pub use solver_central::{run_md, RunOptions, RunTrace, StepSchedule};
pub use solver_dist::{run_dmd, DistOptions, DistTrace};

/// Random generator used for every seeded construction in the crate.
///
/// ChaCha8 produces the same stream on every platform for a given `u64` seed.
pub type Rng64 = rand_chacha::ChaCha8Rng;
