//! Contextual multi-armed bandits for budgeted customer selection in
//! residential demand response.
//!
//! The crate is organised in three layers:
//!
//! * [`belief`]: per-customer Bayesian logistic models with closed-form
//!   variational posterior updates and Thompson sampling.
//! * [`ocs`]: offline selection oracles (budgeted knapsack, target tracking,
//!   radial-network-constrained selection).
//! * [`sim`]: a synthetic environment, the online learning and selection
//!   loop, baselines and regret metrics.
//!
//! Per-customer work inside a step runs on rayon when the `parallel`
//! feature is enabled (the default); see [`par::Execution`].

// `!(x > 0.0)` style checks are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod belief;
pub mod error;
pub mod ocs;
pub mod par;
pub mod sim;

pub use error::{Error, Result};
