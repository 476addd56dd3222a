//! Reward-network transmission experiments.
//!
//! - [`network`]: the leveled reward-network task, its generator, validator
//!   and exhaustive best-score oracle.
//! - [`strategies`]: random, myopic and loss-seeking reference players.
//! - [`dqn`]: the recurrent deep-Q machine player and its trainer.
//! - [`abm`]: the strategy-space agent-based simulation and parameter grids.
//! - [`experiment`]: populations, seats, phases, live sessions and scripted
//!   learners.
//! - [`analysis`]: classification, aggregates, lineages and tidy exports.

pub mod abm;
pub mod analysis;
pub mod dqn;
pub mod experiment;
pub mod fsutil;
pub mod network;
pub mod seed;
pub mod strategies;
