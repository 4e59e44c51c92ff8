//! Motion files, the synthetic interaction generator, dataset manifests and
//! training-crop iteration.

pub mod adapter;
pub mod crop;
pub mod manifest;
pub mod mclip;
pub mod synth;

use crate::error::{invalid, Result};
use crate::motion::clip::MotionClip;

pub use adapter::{ClipPairAdapter, DatasetAdapter};
pub use crop::{crop_windows, valid_offsets, CropSample, EncodedRecord};
pub use manifest::{load_dataset, write_dataset, Dataset, DatasetManifest, RecordEntry};
pub use mclip::{load_record, read_clip, save_record, write_clip};
pub use synth::{synth_generate, Scenario};

/// One actor/reactor pair with its text label.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionRecord {
    pub actor: MotionClip,
    pub reactor: MotionClip,
    pub label: String,
    pub scenario: Option<Scenario>,
    pub seed: u64,
}

impl InteractionRecord {
    pub fn len(&self) -> usize {
        self.actor.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actor.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.actor.validate()?;
        self.reactor.validate()?;
        if self.actor.len() != self.reactor.len() {
            return Err(invalid(format!(
                "actor has {} frames but reactor has {}",
                self.actor.len(),
                self.reactor.len()
            )));
        }
        if (self.actor.fps - self.reactor.fps).abs() > 1e-12 {
            return Err(invalid("actor and reactor frame rates differ"));
        }
        Ok(())
    }
}
