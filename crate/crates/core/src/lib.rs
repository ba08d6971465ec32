//! Optimistic average-reward reinforcement learning with a simulated quantum
//! transition oracle.
//!
//! The crate is organised bottom-up:
//!
//! * [`mdp`]: tabular MDPs, environments and exact policy evaluation.
//! * [`quantum`]: the consume-once transition oracle and the bounded
//!   multivariate mean-estimation contract.
//! * [`model`]: visit counters, running transition estimates and confidence radii.
//! * [`planner`]: the optimistic occupancy-measure LP and the known-model LP.
//! * [`agent`]: the epoch-doubling controller for the quantum and classical agents.
//! * [`harness`]: seeded experiments, regret accounting, slope fits and CSV output.

pub mod agent;
pub mod error;
pub mod harness;
pub mod mdp;
pub mod model;
pub mod planner;
pub mod quantum;

pub use error::{Error, Result};
