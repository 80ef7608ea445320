//! Case-study games, experiment configuration, and run orchestration.

pub mod config;
pub mod cournot;
pub mod runner;
