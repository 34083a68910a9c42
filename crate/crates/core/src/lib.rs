//! Cold-start recommendation as a bandit problem: ratings from a small set of
//! known rows are used as fixed arm contexts, and policies are compared by
//! replaying held-out ratings.

#![allow(clippy::needless_range_loop)]

pub mod config;
pub mod dataset;
pub mod evaluator;
pub mod imputation;
pub mod linalg;
pub mod policies;
pub mod runner;
pub mod synthetic;
