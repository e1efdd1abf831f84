//! Experiment harness: versioned run configuration, training runs with
//! their on-disk layout, checkpoint evaluation, parallel grids, summary
//! statistics, the scaling probe and the built-in verification suite.

pub mod config;
pub mod error;
pub mod format;
pub mod grid;
pub mod run;
pub mod scaling;
pub mod selfcheck;
pub mod stats;

pub use config::{Ablation, DemoSettings, RunConfig, CONFIG_VERSION};
pub use error::{HarnessError, Result};
