//! Random N-window crops for training.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::InteractionRecord;
use crate::error::{invalid, Result};
use crate::motion::features::{canonicalize, detect_default_contacts, InteractionFrame, FIELD_THRESH};
use crate::motion::skeleton::Skeleton;

/// A record with its per-frame canonical features and contact labels.
#[derive(Debug, Clone)]
pub struct EncodedRecord {
    pub record: InteractionRecord,
    pub features: Vec<InteractionFrame>,
    pub contacts_reactor: Vec<[f64; 4]>,
    pub contacts_actor: Vec<[f64; 4]>,
}

impl EncodedRecord {
    pub fn encode(record: InteractionRecord, skeleton: &Skeleton) -> Result<Self> {
        record.validate()?;
        let cx = detect_default_contacts(&record.reactor, skeleton)?;
        let cy = detect_default_contacts(&record.actor, skeleton)?;
        let (features, _) =
            canonicalize(&record.reactor, &record.actor, 0..record.len(), 0, &cx, &cy, skeleton, FIELD_THRESH)?;
        Ok(Self { record, features, contacts_reactor: cx, contacts_actor: cy })
    }
}

/// Number of valid crop offsets for a record of `len` frames.
pub fn valid_offsets(len: usize, windows: usize, h: usize, k: usize) -> usize {
    let span = h + windows * k;
    if len < span {
        0
    } else {
        len - span + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CropSample {
    pub record: usize,
    /// First frame of the initial history.
    pub offset: usize,
    pub history: Vec<InteractionFrame>,
    pub windows: Vec<Vec<InteractionFrame>>,
}

impl CropSample {
    /// Frame range of window `i` in record coordinates.
    pub fn window_range(&self, i: usize, h: usize, k: usize) -> std::ops::Range<usize> {
        let start = self.offset + h + i * k;
        start..start + k
    }
}

pub struct CropIter<'a> {
    records: &'a [EncodedRecord],
    cumulative: Vec<(usize, usize)>,
    total: usize,
    windows: usize,
    h: usize,
    k: usize,
    rng: ChaCha8Rng,
}

impl Iterator for CropIter<'_> {
    type Item = CropSample;

    fn next(&mut self) -> Option<CropSample> {
        let pick = self.rng.random_range(0..self.total);
        let pos = self.cumulative.partition_point(|&(_, end)| end <= pick);
        let (record, end) = self.cumulative[pos];
        let count = valid_offsets(self.records[record].features.len(), self.windows, self.h, self.k);
        let offset = pick - (end - count);
        let f = &self.records[record].features;
        let history = f[offset..offset + self.h].to_vec();
        let windows = (0..self.windows)
            .map(|i| {
                let s = offset + self.h + i * self.k;
                f[s..s + self.k].to_vec()
            })
            .collect();
        Some(CropSample { record, offset, history, windows })
    }
}

/// Endless stream of crops, uniform over every valid (record, offset)
/// pair. Records shorter than `h + windows * k` are skipped with a warning.
pub fn crop_windows(records: &[EncodedRecord], windows: usize, h: usize, k: usize, seed: u64) -> Result<CropIter<'_>> {
    if windows == 0 || k == 0 {
        return Err(invalid("window count and window length must be at least 1"));
    }
    let mut cumulative = Vec::new();
    let mut total = 0;
    for (i, r) in records.iter().enumerate() {
        let n = valid_offsets(r.features.len(), windows, h, k);
        if n == 0 {
            warn!("record {i} has {} frames, fewer than the {} a crop needs; skipped", r.features.len(), h + windows * k);
            continue;
        }
        total += n;
        cumulative.push((i, total));
    }
    if total == 0 {
        return Err(invalid("no record is long enough for a single crop"));
    }
    Ok(CropIter { records, cumulative, total, windows, h, k, rng: ChaCha8Rng::seed_from_u64(seed) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{synth_generate, Scenario};

    fn encoded(len: usize, seed: u64) -> EncodedRecord {
        EncodedRecord::encode(synth_generate(Scenario::Mirror, len, seed).unwrap(), &Skeleton::smpl22()).unwrap()
    }

    #[test]
    fn exact_length_has_one_offset() {
        let recs = vec![encoded(20 + 3 * 40, 1)];
        let mut it = crop_windows(&recs, 3, 20, 40, 0).unwrap();
        for _ in 0..20 {
            let s = it.next().unwrap();
            assert_eq!(s.offset, 0);
            assert_eq!(s.windows.len(), 3);
            assert_eq!(s.history, recs[0].features[..20].to_vec());
            assert_eq!(s.windows[2], recs[0].features[100..140].to_vec());
        }
    }

    #[test]
    fn single_window_crops() {
        let recs = vec![encoded(70, 2)];
        let s = crop_windows(&recs, 1, 20, 40, 3).unwrap().next().unwrap();
        assert_eq!(s.windows.len(), 1);
        assert!(s.offset <= 10);
        assert_eq!(s.window_range(0, 20, 40), s.offset + 20..s.offset + 60);
    }

    #[test]
    fn short_records_are_skipped() {
        let recs = vec![encoded(60, 1), encoded(200, 2)];
        let mut it = crop_windows(&recs, 3, 20, 40, 5).unwrap();
        assert!((0..50).all(|_| it.next().unwrap().record == 1));
        let short = vec![encoded(60, 1)];
        assert!(crop_windows(&short, 3, 20, 40, 5).is_err());
    }
}
