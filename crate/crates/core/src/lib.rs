//! Auto-regressive action-reaction motion diffusion.
//!
//! Given a streamed actor motion, a transformer denoiser predicts the next
//! window of reactor motion from a short interaction history, optionally
//! steered by a text label through classifier-free guidance.

pub mod data;
pub mod diffusion;
pub mod error;
pub mod exec;
pub mod metrics;
pub mod motion;
pub mod nn;
pub mod planner;
pub mod reward;
pub mod training;

pub use error::{Error, Result};
pub use exec::Execution;
