//! Newline-delimited JSON stream records: `{"t", "pos": [66], "yaw", "text"?}`.

use std::io::{BufRead, Write};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{ActorSource, ReactorSink, StreamFrame};
use crate::error::{invalid, Error, Result};
use crate::motion::clip::GlobalPose;
use crate::motion::skeleton::JOINT_COUNT;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireFrame {
    pub t: u64,
    pub pos: Vec<f64>,
    pub yaw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl WireFrame {
    pub fn from_frame(f: &StreamFrame) -> Self {
        let pos = f.pose.joints.iter().flat_map(|p| [p.x, p.y, p.z]).collect();
        Self { t: f.t, pos, yaw: f.pose.root_yaw, text: f.text.clone() }
    }

    pub fn into_frame(self) -> Result<StreamFrame> {
        if self.pos.len() != JOINT_COUNT * 3 {
            return Err(invalid(format!("expected {} position numbers, got {}", JOINT_COUNT * 3, self.pos.len())));
        }
        let joints: Vec<Vector3<f64>> = self.pos.chunks_exact(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect();
        let pose = GlobalPose::from_slice(&joints, self.yaw)?;
        if !pose.is_finite() {
            return Err(invalid("non-finite coordinates"));
        }
        Ok(StreamFrame { t: self.t, pose, text: self.text })
    }
}

pub struct LineSource<R> {
    reader: R,
    line: usize,
    buf: String,
}

impl<R: BufRead> LineSource<R> {
    pub fn new(reader: R) -> Self {
        Self { reader, line: 0, buf: String::new() }
    }
}

impl<R: BufRead> ActorSource for LineSource<R> {
    fn next_frame(&mut self) -> Result<Option<StreamFrame>> {
        loop {
            self.buf.clear();
            if self.reader.read_line(&mut self.buf)? == 0 {
                return Ok(None);
            }
            self.line += 1;
            if self.buf.trim().is_empty() {
                continue;
            }
            let wire: WireFrame = serde_json::from_str(self.buf.trim()).map_err(|e| Error::Parse {
                path: "<stream>".into(),
                line: self.line,
                msg: e.to_string(),
            })?;
            return wire
                .into_frame()
                .map(Some)
                .map_err(|e| Error::Parse { path: "<stream>".into(), line: self.line, msg: e.to_string() });
        }
    }
}

pub struct LineSink<W> {
    writer: W,
}

impl<W: Write> LineSink<W> {
    pub fn new(writer: W) -> Self {
        Self { writer }
    }

    pub fn into_inner(self) -> W {
        self.writer
    }
}

impl<W: Write> ReactorSink for LineSink<W> {
    fn emit(&mut self, frame: &StreamFrame) -> Result<()> {
        let line = serde_json::to_string(&WireFrame::from_frame(frame))?;
        writeln!(self.writer, "{line}").map_err(|e| Error::Sink(e.to_string()))
    }

    fn flush(&mut self) -> Result<()> {
        self.writer.flush().map_err(|e| Error::Sink(e.to_string()))
    }
}
