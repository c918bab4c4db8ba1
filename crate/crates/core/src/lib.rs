//! Simulation and analysis of single-server queues whose channel fails at
//! renewal epochs, forcing every job in service to restart from scratch.
//!
//! The crate covers distribution sampling and functionals ([`dist`]), the
//! failure process ([`channel`]), arrival and job-size streams
//! ([`workload`]), an event-exact simulator ([`engine`]), closed-form
//! calculators and estimators ([`analytics`]), a scenario catalog with
//! replication ([`experiments`]), and the command-line front end ([`cli`]).

pub mod analytics;
pub mod channel;
pub mod cli;
pub mod config;
pub mod dist;
pub mod engine;
pub mod error;
pub mod experiments;
mod quad;
pub mod rng;
pub mod workload;

pub use error::{Error, Result};
