use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub trainable: bool,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// All parameter tensors packed into one flat buffer; gradient and optimizer
/// buffers share the same layout.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    pub specs: Vec<ParamSpec>,
    pub data: Vec<f64>,
}

impl ParamStore {
    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], trainable: bool) -> ParamId {
        let spec = ParamSpec { name: name.into(), shape: shape.to_vec(), offset: self.data.len(), trainable };
        self.data.resize(self.data.len() + spec.len(), 0.0);
        self.specs.push(spec);
        ParamId(self.specs.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.data[self.specs[id.0].range()]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        let r = self.specs[id.0].range();
        &mut self.data[r]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.specs.iter().position(|s| s.name == name).map(ParamId)
    }

    /// Per-element trainability flags.
    pub fn trainable_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.data.len()];
        for s in &self.specs {
            mask[s.range()].fill(s.trainable);
        }
        mask
    }

    pub fn zeros_like(&self) -> Vec<f64> {
        vec![0.0; self.data.len()]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copies values from `other` tensor by tensor, checking names and shapes.
    pub fn load_from(&mut self, other: &[(String, Vec<usize>, Vec<f64>)]) -> Result<()> {
        if other.len() != self.specs.len() {
            return Err(invalid(format!(
                "checkpoint has {} tensors, model expects {}",
                other.len(),
                self.specs.len()
            )));
        }
        for (spec, (name, shape, values)) in self.specs.iter().zip(other) {
            if &spec.name != name || &spec.shape != shape || values.len() != spec.len() {
                return Err(invalid(format!(
                    "tensor mismatch: expected {} {:?}, found {name} {shape:?}",
                    spec.name, spec.shape
                )));
            }
        }
        for (i, (_, _, values)) in other.iter().enumerate() {
            let r = self.specs[i].range();
            self.data[r].copy_from_slice(values);
        }
        Ok(())
    }
}
