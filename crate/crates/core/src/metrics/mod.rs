//! Evaluation metrics: distribution distances over fixed feature
//! extractors, physical plausibility and interpenetration.

pub mod extract;
pub mod physics;
pub mod stats;
pub mod volume;

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::exec::Execution;
use crate::motion::clip::MotionClip;
use crate::motion::features::WINDOW_LEN;
use crate::motion::skeleton::Skeleton;

pub use extract::{
    cross_distance_features, cross_window_features, extract_motion_features, motion_descriptor, text_features,
    CROSS_DIM, MOTION_FEATURE_DIM,
};
pub use physics::{physics_metrics, JointRadii, PhysicsMetrics, DEFAULT_JOINT_RADIUS};
pub use stats::{diversity, fid, fid_features, mmdist, FeatureStats, DEFAULT_DIVERSITY_SUBSET};
pub use volume::{intersection_volume, interpenetration_per_frame, interpenetration_volume, Sphere, DEFAULT_VOXEL};

/// One evaluated interaction: a reactor clip, the actor it responds to and
/// the label that conditioned it.
#[derive(Debug, Clone)]
pub struct EvalSample {
    pub reactor: MotionClip,
    pub actor: MotionClip,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    pub window: usize,
    pub diversity_subset: usize,
    pub seed: u64,
    pub radii: JointRadii,
    pub voxel: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            window: WINDOW_LEN,
            diversity_subset: DEFAULT_DIVERSITY_SUBSET,
            seed: 0,
            radii: JointRadii::default(),
            voxel: DEFAULT_VOXEL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub fid: f64,
    pub diversity: f64,
    pub mmdist: f64,
    pub penetration: f64,
    pub floating: f64,
    pub skating: f64,
    pub iv: f64,
    pub fid_cd: f64,
    pub div_cd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRow {
    pub sample: usize,
    pub start: usize,
    pub frames: usize,
    pub physics: PhysicsMetrics,
    pub iv: f64,
}

impl MetricReport {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.fid,
            self.diversity,
            self.mmdist,
            self.penetration,
            self.floating,
            self.skating,
            self.iv,
            self.fid_cd,
            self.div_cd,
        ];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(invalid(format!("metric report has a negative or non-finite entry: {self:?}")));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let rows: [(&str, f64, &str); 9] = [
            ("fid", self.fid, ""),
            ("diversity", self.diversity, ""),
            ("mmdist", self.mmdist, ""),
            ("penetration", self.penetration, "mm"),
            ("floating", self.floating, "mm"),
            ("skating", self.skating, "mm/contact-frame"),
            ("iv", self.iv, "L"),
            ("fid_cd", self.fid_cd, ""),
            ("div_cd", self.div_cd, ""),
        ];
        for (k, v, unit) in rows {
            if unit.is_empty() {
                let _ = writeln!(s, "{k}: {v:.6}");
            } else {
                let _ = writeln!(s, "{k}: {v:.6} {unit}");
            }
        }
        s
    }

    pub fn write_text(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

pub fn write_window_csv(rows: &[WindowRow], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "sample,start,frames,penetration_mm,floating_mm,skating_mm,iv_l")?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{},{},{}",
            r.sample, r.start, r.frames, r.physics.penetration, r.physics.floating, r.physics.skating, r.iv
        )?;
    }
    f.flush()?;
    Ok(())
}

fn window_starts(len: usize, window: usize) -> Vec<usize> {
    if len < window {
        return if len >= 2 { vec![0] } else { Vec::new() };
    }
    (0..=len - window).step_by(window).collect()
}

struct SampleFeatures {
    motion: Vec<Vec<f64>>,
    text: Vec<Vec<f64>>,
    cross: Vec<Vec<f64>>,
    rows: Vec<WindowRow>,
}

fn sample_features(
    index: usize,
    s: &EvalSample,
    skeleton: &Skeleton,
    cfg: &MetricConfig,
    physics: bool,
) -> Result<SampleFeatures> {
    if s.reactor.len() != s.actor.len() {
        return Err(invalid(format!("sample {index}: reactor and actor lengths differ")));
    }
    let mut out = SampleFeatures { motion: Vec::new(), text: Vec::new(), cross: Vec::new(), rows: Vec::new() };
    let text = text_features(&s.label);
    for start in window_starts(s.reactor.len(), cfg.window) {
        let end = (start + cfg.window).min(s.reactor.len());
        let x = s.reactor.slice(start, end);
        let y = s.actor.slice(start, end);
        out.motion.push(extract_motion_features(&x, skeleton)?);
        out.text.push(text.clone());
        out.cross.push(cross_window_features(&x.frames, &y.frames, skeleton)?);
        if physics {
            out.rows.push(WindowRow {
                sample: index,
                start,
                frames: end - start,
                physics: physics_metrics(&x, skeleton, &cfg.radii)?,
                iv: interpenetration_volume(&x, &y, &cfg.radii, cfg.voxel, Execution::Sequential)?,
            });
        }
    }
    Ok(out)
}

fn collect(
    samples: &[EvalSample],
    skeleton: &Skeleton,
    cfg: &MetricConfig,
    physics: bool,
    exec: Execution,
) -> Result<SampleFeatures> {
    let parts = exec.map_range(samples.len(), |i| sample_features(i, &samples[i], skeleton, cfg, physics));
    let mut all = SampleFeatures { motion: Vec::new(), text: Vec::new(), cross: Vec::new(), rows: Vec::new() };
    for p in parts {
        let p = p?;
        all.motion.extend(p.motion);
        all.text.extend(p.text);
        all.cross.extend(p.cross);
        all.rows.extend(p.rows);
    }
    Ok(all)
}

/// Full metric report of `generated` against `reference`, plus the
/// per-window physical rows of the generated set. Physical metrics and IV
/// are averaged over whole samples, IV taking each sample's maximum frame.
pub fn evaluate(
    generated: &[EvalSample],
    reference: &[EvalSample],
    skeleton: &Skeleton,
    cfg: &MetricConfig,
    exec: Execution,
) -> Result<(MetricReport, Vec<WindowRow>)> {
    if generated.is_empty() || reference.is_empty() {
        return Err(invalid("evaluation needs generated and reference samples"));
    }
    if cfg.window < 2 {
        return Err(invalid("metric window must span at least 2 frames"));
    }
    let gen = collect(generated, skeleton, cfg, true, exec)?;
    let refs = collect(reference, skeleton, cfg, false, exec)?;
    if gen.motion.len() < 2 {
        return Err(invalid("evaluation needs at least 2 generated windows"));
    }
    let per_sample = exec.map(generated, |s| -> Result<(PhysicsMetrics, f64)> {
        let p = physics_metrics(&s.reactor, skeleton, &cfg.radii)?;
        let iv = interpenetration_volume(&s.reactor, &s.actor, &cfg.radii, cfg.voxel, Execution::Sequential)?;
        Ok((p, iv))
    });
    let mut report = MetricReport {
        fid: fid_features(&gen.motion, &refs.motion)?,
        diversity: diversity(&gen.motion, cfg.diversity_subset, cfg.seed)?,
        mmdist: mmdist(&gen.motion, &gen.text)?,
        fid_cd: fid_features(&gen.cross, &refs.cross)?,
        div_cd: diversity(&gen.cross, cfg.diversity_subset, cfg.seed)?,
        ..Default::default()
    };
    let n = per_sample.len() as f64;
    for r in per_sample {
        let (p, iv) = r?;
        report.penetration += p.penetration / n;
        report.floating += p.floating / n;
        report.skating += p.skating / n;
        report.iv += iv / n;
    }
    report.validate()?;
    Ok((report, gen.rows))
}
