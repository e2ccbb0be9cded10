//! Freeway traffic-speed reconstruction from sparse, possibly corrupted
//! vehicle trajectories.
//!
//! The pipeline is:
//!
//! 1. [`trajectory`]: ingest (or synthesize) trajectory samples and draw
//!    connected-vehicle subsets.
//! 2. [`grid`]: bin samples into a traffic-state matrix whose time axis is
//!    skewed along the backward-wave direction (or a plain rectangular grid).
//! 3. [`solver`]: complete the matrix with a truncated-nuclear-norm low-rank
//!    term plus an l1 sparse anomaly term, solved by ADMM.
//! 4. [`corruption`] and [`eval`]: inject anomalies, score detection and
//!    reconstruction error, and run the experiment sweeps.

pub mod corruption;
pub mod error;
pub mod eval;
pub mod grid;
pub mod parallel;
pub mod seed;
pub mod solver;
pub mod trajectory;

pub use error::{Error, Result};
