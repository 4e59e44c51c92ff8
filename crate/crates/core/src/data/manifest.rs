use std::fs;
use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};

use super::mclip::{load_record, save_record};
use super::synth::Scenario;
use super::InteractionRecord;
use crate::error::{invalid, Error, Result};
use crate::motion::features::{canonicalize_clips, InteractionFrame, FRAME_DIM};
use crate::motion::normalize::FeatureNormalizer;
use crate::motion::skeleton::Skeleton;
use crate::nn::text::tokenize;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordEntry {
    pub name: String,
    pub actor_file: String,
    pub reactor_file: String,
    pub label: String,
    pub scenario: Option<Scenario>,
    pub seed: u64,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub records: Vec<RecordEntry>,
    pub stats: FeatureNormalizer,
    pub vocabulary: Vec<String>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        self.stats.validate()?;
        if self.stats.mean.len() != FRAME_DIM {
            return Err(invalid("manifest stats must have 443 dimensions"));
        }
        for r in &self.records {
            if let Some(t) = tokenize(&r.label).into_iter().find(|t| !self.vocabulary.contains(t)) {
                return Err(invalid(format!("label token {t:?} of {} missing from the vocabulary", r.name)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub records: Vec<InteractionRecord>,
}

pub fn vocabulary(records: &[InteractionRecord]) -> Vec<String> {
    let mut v: Vec<String> = records.iter().flat_map(|r| tokenize(&r.label)).collect();
    v.sort();
    v.dedup();
    v
}

/// Canonical features of every frame of every record.
pub fn record_features(records: &[InteractionRecord], skeleton: &Skeleton) -> Result<Vec<Vec<InteractionFrame>>> {
    records.iter().map(|r| canonicalize_clips(&r.reactor, &r.actor, skeleton).map(|(f, _)| f)).collect()
}

pub fn fit_stats(records: &[InteractionRecord], skeleton: &Skeleton) -> Result<FeatureNormalizer> {
    let frames: Vec<InteractionFrame> = record_features(records, skeleton)?.into_iter().flatten().collect();
    FeatureNormalizer::fit(&frames)
}

pub fn write_dataset(dir: &Path, records: &[InteractionRecord]) -> Result<DatasetManifest> {
    if records.is_empty() {
        return Err(invalid("dataset has no records"));
    }
    fs::create_dir_all(dir)?;
    let entries = records
        .iter()
        .enumerate()
        .map(|(i, r)| save_record(dir, &format!("record_{i:04}"), r))
        .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        records: entries,
        stats: fit_stats(records, &Skeleton::smpl22())?,
        vocabulary: vocabulary(records),
    };
    manifest.validate()?;
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    info!("wrote {} records to {}", records.len(), dir.display());
    Ok(manifest)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path)?;
    let raw: serde_json::Value = serde_json::from_str(&text)?;
    let version = raw.get("version").and_then(|v| v.as_u64());
    if version != Some(MANIFEST_VERSION as u64) {
        return Err(Error::UnsupportedVersion {
            path,
            found: raw.get("version").map(|v| v.to_string()).unwrap_or_else(|| "none".into()),
            expected: MANIFEST_VERSION.to_string(),
        });
    }
    let manifest: DatasetManifest = serde_json::from_value(raw)?;
    manifest.validate()?;
    let records = manifest.records.iter().map(|e| load_record(dir, e)).collect::<Result<Vec<_>>>()?;
    Ok(Dataset { manifest, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::synth_generate;

    #[test]
    fn stats_survive_reload() {
        let dir = tempfile::tempdir().unwrap();
        let records: Vec<_> = (0..3).map(|s| synth_generate(Scenario::Mirror, 80, s).unwrap()).collect();
        let m = write_dataset(dir.path(), &records).unwrap();
        let ds = load_dataset(dir.path()).unwrap();
        assert_eq!(ds.records, records);
        let refit = fit_stats(&ds.records, &Skeleton::smpl22()).unwrap();
        for d in 0..FRAME_DIM {
            assert!((refit.mean[d] - m.stats.mean[d]).abs() < 1e-9);
            assert!((refit.std[d] - m.stats.std[d]).abs() < 1e-9);
        }
        assert_eq!(ds.manifest.vocabulary, vec!["mirror", "partner", "the"]);
    }
}
