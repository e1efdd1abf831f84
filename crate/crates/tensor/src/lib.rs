//! Minimal dense tensors with reverse-mode differentiation.
//!
//! Values are `f64` matrices. Forward passes are recorded on a [`Tape`] that
//! is rebuilt for every pass; [`Tape::backward`] walks it in reverse. Named
//! parameters live in a [`ParamStore`] and are updated with [`adam_step`].

pub mod adam;
pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod params;
pub mod tape;
pub mod tensor;

pub use adam::{adam_step, AdamState};
pub use error::{Result, TensorError};
pub use params::ParamStore;
pub use tape::{log_softmax, sigmoid, softmax, Gradients, Tape, Var, LOG_CLAMP};
pub use tensor::{dot, Tensor};
