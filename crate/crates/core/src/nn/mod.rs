//! Dense f64 neural-network pieces for the denoiser.

pub mod checkpoint;
pub mod denoiser;
pub mod mat;
pub mod optim;
pub mod params;
pub mod text;

pub use checkpoint::Checkpoint;
pub use denoiser::{ConditionBundle, Denoiser, DenoiserConfig, Tape};
pub use optim::{Adam, AdamConfig};
pub use params::{ParamId, ParamStore};
pub use text::{embed_text, TextEmbedding};
