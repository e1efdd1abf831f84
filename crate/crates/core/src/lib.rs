//! Attention-augmented adversarial reward inference for multi-agent task
//! allocation.
//!
//! - [`env`]: the task-allocation world, episode logs, constraint checks and metrics
//! - [`expert`]: optimal-assignment demonstrations
//! - [`nets`]: trajectory encoder, graph attention, reward head, discriminator, MLPs
//! - [`irl`]: adversarial reward adaptation
//! - [`marl`]: centralized-critic actor-critic training on adapted rewards

pub mod env;
pub mod error;
pub mod expert;
pub mod irl;
pub mod marl;
pub mod nets;
pub mod seeds;

pub use error::{CoreError, Result};
