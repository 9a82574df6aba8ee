//! Numerical laboratory for branching random walks in i.i.d. random
//! environments: exact annealed analytics, Monte Carlo exponent estimators,
//! particle simulation with barrier pruning, and exact small-scale oracles.

pub mod analytics;
pub mod brw;
pub mod config;
pub mod env;
pub mod error;
pub mod fit;
pub mod gamma;
pub mod maxdist;
pub mod parallel;
pub mod report;
pub mod rng;
pub mod special;
pub mod rwre;
pub mod verify;

pub use error::{Error, Result};
