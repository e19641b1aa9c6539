//! Benchmark harness: seeded synthetic scenarios, pruning-strategy
//! baselines, metrics, reports, and mask rendering.

pub mod config;
pub mod error;
pub mod forward;
pub mod masks;
pub mod metrics;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod strategies;

pub use config::Config;
pub use error::{HarnessError, Result};
