//! `.mclip` text format: one JSON header line, then one line per frame with
//! 66 joint coordinates followed by the root yaw.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::manifest::RecordEntry;
use super::InteractionRecord;
use crate::error::{Error, Result};
use crate::motion::clip::{AgentId, GlobalPose, MotionClip};
use crate::motion::skeleton::{JOINT_COUNT, JOINT_NAMES};

pub const MCLIP_VERSION: u32 = 1;
const ROW_LEN: usize = JOINT_COUNT * 3 + 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    fps: f64,
    joint_count: usize,
    joint_names: Vec<String>,
    agent_id: AgentId,
}

pub fn write_clip(path: &Path, clip: &MotionClip) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let header = Header {
        version: MCLIP_VERSION,
        fps: clip.fps,
        joint_count: JOINT_COUNT,
        joint_names: JOINT_NAMES.iter().map(|s| s.to_string()).collect(),
        agent_id: clip.agent,
    };
    serde_json::to_writer(&mut w, &header)?;
    writeln!(w)?;
    for f in &clip.frames {
        let row = f.to_row();
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_clip(path: &Path) -> Result<MotionClip> {
    let parse_err = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let first = lines.next().ok_or_else(|| parse_err(1, "empty file, expected a header".into()))??;
    let raw: serde_json::Value =
        serde_json::from_str(&first).map_err(|e| parse_err(1, format!("bad header: {e}")))?;
    let version = raw.get("version").and_then(|v| v.as_u64());
    if version != Some(MCLIP_VERSION as u64) {
        return Err(Error::UnsupportedVersion {
            path: path.to_path_buf(),
            found: raw.get("version").map(|v| v.to_string()).unwrap_or_else(|| "none".into()),
            expected: MCLIP_VERSION.to_string(),
        });
    }
    let header: Header = serde_json::from_value(raw).map_err(|e| parse_err(1, format!("bad header: {e}")))?;
    if header.joint_count != JOINT_COUNT || header.joint_names.iter().map(String::as_str).ne(JOINT_NAMES) {
        return Err(Error::Validation(format!(
            "skeleton mismatch in {}: expected the {JOINT_COUNT}-joint body, header declares {} joints",
            path.display(),
            header.joint_count
        )));
    }
    if !(header.fps > 0.0) {
        return Err(parse_err(1, format!("fps must be positive, got {}", header.fps)));
    }
    let mut frames = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(lineno, format!("bad number: {e}")))?;
        if values.len() != ROW_LEN {
            return Err(parse_err(lineno, format!("expected {ROW_LEN} numbers, found {}", values.len())));
        }
        let pose = GlobalPose::from_row(&values).map_err(|e| parse_err(lineno, e.to_string()))?;
        if !pose.is_finite() {
            return Err(parse_err(lineno, "non-finite coordinate".into()));
        }
        frames.push(pose);
    }
    Ok(MotionClip::new(header.fps, header.agent_id, frames))
}

/// Writes `<stem>.actor.mclip` and `<stem>.reactor.mclip` into `dir`.
pub fn save_record(dir: &Path, stem: &str, record: &InteractionRecord) -> Result<RecordEntry> {
    record.validate()?;
    let entry = RecordEntry {
        name: stem.to_string(),
        actor_file: format!("{stem}.actor.mclip"),
        reactor_file: format!("{stem}.reactor.mclip"),
        label: record.label.clone(),
        scenario: record.scenario,
        seed: record.seed,
        frames: record.len(),
    };
    write_clip(&dir.join(&entry.actor_file), &record.actor)?;
    write_clip(&dir.join(&entry.reactor_file), &record.reactor)?;
    Ok(entry)
}

pub fn load_record(dir: &Path, entry: &RecordEntry) -> Result<InteractionRecord> {
    let actor = read_clip(&dir.join(&entry.actor_file))?;
    let reactor = read_clip(&dir.join(&entry.reactor_file))?;
    let record = InteractionRecord {
        actor,
        reactor,
        label: entry.label.clone(),
        scenario: entry.scenario,
        seed: entry.seed,
    };
    record.validate()?;
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{synth_generate, Scenario};

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let rec = synth_generate(Scenario::Follow, 70, 2).unwrap();
        let entry = save_record(dir.path(), "r0", &rec).unwrap();
        let back = load_record(dir.path(), &entry).unwrap();
        assert_eq!(back, rec);
    }

    #[test]
    fn truncated_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let rec = synth_generate(Scenario::Follow, 70, 2).unwrap();
        let path = dir.path().join("a.mclip");
        write_clip(&path, &rec.actor).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        let cut = &lines[5][..lines[5].len() / 2];
        lines[5] = cut;
        std::fs::write(&path, lines[..6].join("\n")).unwrap();
        match read_clip(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 6),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn version_mismatch_is_explicit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.mclip");
        std::fs::write(&path, "{\"version\":7,\"fps\":30}\n").unwrap();
        assert!(matches!(read_clip(&path), Err(Error::UnsupportedVersion { .. })));
    }
}
