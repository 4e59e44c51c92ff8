//! JSON checkpoints: model weights, optimizer moments, feature statistics
//! and the diffusion schedule they were trained with.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::denoiser::{Denoiser, DenoiserConfig};
use super::optim::Adam;
use crate::diffusion::ScheduleKind;
use crate::error::{invalid, Error, Result};
use crate::motion::normalize::FeatureNormalizer;

pub const CHECKPOINT_FORMAT: &str = "duet-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: DenoiserConfig,
    pub schedule_kind: ScheduleKind,
    pub steps: usize,
    pub iteration: u64,
    pub normalizer: FeatureNormalizer,
    pub tensors: Vec<Tensor>,
    pub optimizer: Option<Adam>,
}

impl Checkpoint {
    pub fn capture(
        model: &Denoiser,
        normalizer: &FeatureNormalizer,
        schedule_kind: ScheduleKind,
        steps: usize,
        iteration: u64,
        optimizer: Option<&Adam>,
    ) -> Self {
        let tensors = model
            .params
            .specs
            .iter()
            .map(|s| Tensor { name: s.name.clone(), shape: s.shape.clone(), values: model.params.data[s.range()].to_vec() })
            .collect();
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: model.config,
            schedule_kind,
            steps,
            iteration,
            normalizer: normalizer.clone(),
            tensors,
            optimizer: optimizer.cloned(),
        }
    }

    pub fn model(&self) -> Result<Denoiser> {
        let mut model = Denoiser::zeroed(self.config)?;
        let tensors: Vec<_> = self.tensors.iter().map(|t| (t.name.clone(), t.shape.clone(), t.values.clone())).collect();
        model.params.load_from(&tensors)?;
        if !model.params.is_finite() {
            return Err(invalid("checkpoint contains non-finite weights"));
        }
        if let Some(opt) = &self.optimizer {
            if opt.m.len() != model.params.len() || opt.v.len() != model.params.len() {
                return Err(invalid("optimizer state does not match the model"));
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(invalid(format!("{} is not a checkpoint (format {:?})", path.display(), ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion {
                path: path.to_path_buf(),
                found: ck.version.to_string(),
                expected: CHECKPOINT_VERSION.to_string(),
            });
        }
        ck.normalizer.validate()?;
        Ok(ck)
    }
}
