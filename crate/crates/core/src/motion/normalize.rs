use serde::{Deserialize, Serialize};

use super::features::{layout, InteractionFrame, FRAME_DIM};
use crate::error::{invalid, Result};

pub const STD_FLOOR: f64 = 1e-8;

/// Per-dimension standardization statistics. Binary dimensions keep
/// mean 0 and std 1 so they pass through unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNormalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureNormalizer {
    pub fn identity() -> Self {
        Self { mean: vec![0.0; FRAME_DIM], std: vec![1.0; FRAME_DIM] }
    }

    pub fn fit(frames: &[InteractionFrame]) -> Result<Self> {
        if frames.is_empty() {
            return Err(invalid("cannot fit normalization stats on zero frames"));
        }
        let n = frames.len() as f64;
        let mut mean = vec![0.0; FRAME_DIM];
        for f in frames {
            for (m, v) in mean.iter_mut().zip(f.0.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; FRAME_DIM];
        for f in frames {
            for d in 0..FRAME_DIM {
                let c = f.0[d] - mean[d];
                var[d] += c * c;
            }
        }
        let mut std: Vec<f64> = var.iter().map(|v| (v / n).sqrt().max(STD_FLOOR)).collect();
        for d in (0..FRAME_DIM).filter(|&d| layout::is_binary(d)) {
            mean[d] = 0.0;
            std[d] = 1.0;
        }
        Ok(Self { mean, std })
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != FRAME_DIM || self.std.len() != FRAME_DIM {
            return Err(invalid(format!(
                "normalization stats have dimension {}/{}, expected {FRAME_DIM}",
                self.mean.len(),
                self.std.len()
            )));
        }
        if self.std.iter().any(|&s| !(s >= STD_FLOOR)) {
            return Err(invalid("normalization std below floor"));
        }
        Ok(())
    }

    /// Normalizes a flat row-major buffer of frames in place.
    pub fn normalize_flat(&self, data: &mut [f64]) -> Result<()> {
        self.check(data.len())?;
        for row in data.chunks_exact_mut(FRAME_DIM) {
            for d in 0..FRAME_DIM {
                row[d] = (row[d] - self.mean[d]) / self.std[d];
            }
        }
        Ok(())
    }

    pub fn denormalize_flat(&self, data: &mut [f64]) -> Result<()> {
        self.check(data.len())?;
        for row in data.chunks_exact_mut(FRAME_DIM) {
            for d in 0..FRAME_DIM {
                row[d] = row[d] * self.std[d] + self.mean[d];
            }
        }
        Ok(())
    }

    pub fn normalize_features(&self, frames: &[InteractionFrame]) -> Result<Vec<InteractionFrame>> {
        let mut out = frames.to_vec();
        for f in out.iter_mut() {
            self.normalize_flat(&mut f.0)?;
        }
        Ok(out)
    }

    pub fn denormalize_features(&self, frames: &[InteractionFrame]) -> Result<Vec<InteractionFrame>> {
        let mut out = frames.to_vec();
        for f in out.iter_mut() {
            self.denormalize_flat(&mut f.0)?;
        }
        Ok(out)
    }

    fn check(&self, len: usize) -> Result<()> {
        if self.mean.len() != FRAME_DIM || self.std.len() != FRAME_DIM {
            return Err(invalid(format!(
                "normalization stats dimension {} does not match frame dimension {FRAME_DIM}",
                self.mean.len()
            )));
        }
        if len % FRAME_DIM != 0 {
            return Err(invalid(format!("buffer length {len} is not a multiple of {FRAME_DIM}")));
        }
        Ok(())
    }
}
