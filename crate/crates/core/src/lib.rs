//! Deep Q-learning on Mountain Car with a configurable number of replay updates per
//! environment step, seed-matched experiment orchestration, and the statistics used
//! to compare replay frequencies.

pub mod agent;
pub mod cli;
pub mod config;
pub mod env;
pub mod nn;
pub mod optim;
pub mod replay;
pub mod exper;
pub mod stats;
