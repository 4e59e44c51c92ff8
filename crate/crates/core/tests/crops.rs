use duet_core::data::{crop_windows, synth_generate, valid_offsets, EncodedRecord, Scenario};
use duet_core::motion::features::{HISTORY_LEN, WINDOW_LEN};
use duet_core::motion::Skeleton;

fn encoded(len: usize, seed: u64) -> EncodedRecord {
    EncodedRecord::encode(synth_generate(Scenario::Mirror, len, seed).unwrap(), &Skeleton::smpl22()).unwrap()
}

#[test]
fn crops_are_uniform_over_record_offsets() {
    let records = vec![encoded(75, 1), encoded(90, 2), encoded(70, 3)];
    let cells: Vec<usize> = records.iter().map(|r| valid_offsets(r.features.len(), 1, HISTORY_LEN, WINDOW_LEN)).collect();
    let total: usize = cells.iter().sum();
    let mut counts: Vec<Vec<usize>> = cells.iter().map(|&n| vec![0; n]).collect();
    let draws = 400 * total;
    for c in crop_windows(&records, 1, HISTORY_LEN, WINDOW_LEN, 17).unwrap().take(draws) {
        counts[c.record][c.offset] += 1;
    }
    let expected = draws as f64 / total as f64;
    let chi2: f64 = counts.iter().flatten().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 99.9th percentile of chi-square with total - 1 degrees of freedom,
    // Wilson-Hilferty approximation.
    let dof = (total - 1) as f64;
    let z = 3.090;
    let critical = dof * (1.0 - 2.0 / (9.0 * dof) + z * (2.0 / (9.0 * dof)).sqrt()).powi(3);
    assert!(chi2 < critical, "chi2 {chi2:.1} over {total} cells exceeds {critical:.1}");
}

#[test]
fn crop_windows_are_contiguous() {
    let records = vec![encoded(200, 4)];
    for c in crop_windows(&records, 3, HISTORY_LEN, WINDOW_LEN, 2).unwrap().take(20) {
        let f = &records[0].features;
        assert_eq!(c.history, f[c.offset..c.offset + HISTORY_LEN].to_vec());
        for (i, w) in c.windows.iter().enumerate() {
            let start = c.offset + HISTORY_LEN + i * WINDOW_LEN;
            assert_eq!(*w, f[start..start + WINDOW_LEN].to_vec());
        }
    }
}

#[test]
fn short_records_are_skipped() {
    let records = vec![encoded(60, 1), encoded(150, 2)];
    assert_eq!(valid_offsets(60, 2, HISTORY_LEN, WINDOW_LEN), 0);
    for c in crop_windows(&records, 2, HISTORY_LEN, WINDOW_LEN, 3).unwrap().take(50) {
        assert_eq!(c.record, 1);
    }
    assert!(crop_windows(&records[..1], 2, HISTORY_LEN, WINDOW_LEN, 3).is_err());
}
