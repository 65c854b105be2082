//! Sparse linear contextual bandits with statistical inference.
//!
//! The library couples an ε-greedy (or pure-greedy) decision policy with an
//! online hard-thresholding estimator of the per-arm coefficients, then
//! corrects the estimator's bias with ℓ1-penalized de-correlation programs
//! under either inverse propensity weighting or average weighting. On top
//! of the debiased points it builds per-coordinate confidence intervals,
//! arm-difference hypothesis tests, and an interval for the optimal
//! policy's value. A replicated-trial harness with deterministic seeding
//! and an offline-replay mode round it out.
//!
//! Modules follow the pipeline: [`env`] generates (or replays) data,
//! [`policy`] chooses actions, [`learner`] maintains sparse estimates,
//! [`debias`] removes their bias, [`inference`] quantifies uncertainty,
//! and [`harness`] orchestrates trials and file output.

pub mod debias;
pub mod env;
pub mod error;
pub mod harness;
pub mod inference;
pub mod learner;
pub mod linalg;
pub mod policy;
pub mod stats;

pub use debias::Method;
pub use error::{Error, Result};
