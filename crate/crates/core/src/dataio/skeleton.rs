//! Skeleton recordings as CSV.
//!
//! ```text
//! # posetrack-skeleton v1 fps=30
//! frame,joint,x,y,z
//! 0,head,0.01,-0.5,2.5
//! ...
//! ```
//!
//! Every frame lists all eight joints; frames are numbered from zero.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::bodymodel::Joint;
use crate::error::{Error, Result};
use crate::geometry::Joint3D;

use super::{open_reader, write_atomic};

const MAGIC: &str = "posetrack-skeleton";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonRecording {
    pub fps: f64,
    /// Per frame, joints indexed by `Joint::index`.
    pub frames: Vec<[Joint3D; Joint::COUNT]>,
}

impl SkeletonRecording {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn joint(&self, frame: usize, joint: Joint) -> Joint3D {
        self.frames[frame][joint.index()]
    }

    /// Concatenates recordings; the frame rate of the first is kept.
    pub fn concat(recs: &[SkeletonRecording]) -> Result<Self> {
        let first = recs
            .first()
            .ok_or_else(|| Error::InsufficientData("no recordings to concatenate".into()))?;
        Ok(Self {
            fps: first.fps,
            frames: recs.iter().flat_map(|r| r.frames.iter().copied()).collect(),
        })
    }
}

fn parse_header(line: &str) -> Result<f64> {
    let bad = |m: &str| Error::Parse {
        line: 1,
        message: m.to_string(),
    };
    let rest = line
        .strip_prefix('#')
        .map(str::trim)
        .and_then(|s| s.strip_prefix(MAGIC))
        .ok_or_else(|| bad("missing `# posetrack-skeleton` header"))?;
    let mut fps = None;
    let mut version = None;
    for tok in rest.split_whitespace() {
        if let Some(v) = tok.strip_prefix('v') {
            version = v.parse::<u32>().ok();
        } else if let Some(v) = tok.strip_prefix("fps=") {
            fps = Some(v.parse::<f64>().map_err(|_| bad("fps is not a number"))?);
        }
    }
    match version {
        Some(VERSION) => {}
        Some(v) => return Err(bad(&format!("unsupported skeleton schema version {v}"))),
        None => return Err(bad("missing schema version")),
    }
    let fps = fps.ok_or_else(|| bad("missing fps"))?;
    if !(fps.is_finite() && fps > 0.0) {
        return Err(bad("fps must be positive"));
    }
    Ok(fps)
}

pub fn read_skeleton_csv<R: BufRead>(mut reader: R) -> Result<SkeletonRecording> {
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let fps = parse_header(first.trim_end())?;

    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header_line = 2;
    let headers = csv.headers().map_err(|e| Error::Parse {
        line: header_line,
        message: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>() != ["frame", "joint", "x", "y", "z"] {
        return Err(Error::Parse {
            line: header_line,
            message: "expected columns frame,joint,x,y,z".into(),
        });
    }

    let mut frames: Vec<[Option<Joint3D>; Joint::COUNT]> = Vec::new();
    for record in csv.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() + 1),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() + 1);
        let perr = |message: String| Error::Parse { line, message };
        let frame: usize = record[0]
            .trim()
            .parse()
            .map_err(|_| perr(format!("frame index `{}` is not an integer", &record[0])))?;
        let joint: Joint = record[1].trim().parse()?;
        let mut xyz = [0.0; 3];
        for (k, name) in ["x", "y", "z"].iter().enumerate() {
            let s = record[2 + k].trim();
            xyz[k] = s
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| perr(format!("{name} value `{s}` is not a finite number")))?;
        }
        if frame > frames.len() {
            return Err(perr(format!("frame {frame} skips frame {}", frames.len())));
        }
        if frame == frames.len() {
            frames.push([None; Joint::COUNT]);
        } else if frame + 1 != frames.len() {
            return Err(perr(format!("frame {frame} appears out of order")));
        }
        let slot = &mut frames[frame][joint.index()];
        if slot.is_some() {
            return Err(perr(format!("joint {joint} repeated in frame {frame}")));
        }
        *slot = Some(Joint3D::new(xyz[0], xyz[1], xyz[2]));
    }

    let frames = frames
        .into_iter()
        .enumerate()
        .map(|(f, slots)| {
            let mut out = [Joint3D::new(0.0, 0.0, 0.0); Joint::COUNT];
            for joint in Joint::ALL {
                out[joint.index()] = slots[joint.index()]
                    .ok_or_else(|| Error::MissingJoint(joint.name().to_string()).at_frame(f))?;
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SkeletonRecording { fps, frames })
}

pub fn write_skeleton_csv<W: Write>(rec: &SkeletonRecording, mut w: W) -> Result<()> {
    writeln!(w, "# {MAGIC} v{VERSION} fps={}", rec.fps)?;
    writeln!(w, "frame,joint,x,y,z")?;
    for (f, joints) in rec.frames.iter().enumerate() {
        for joint in Joint::ALL {
            let p = joints[joint.index()];
            writeln!(w, "{f},{joint},{},{},{}", p.x, p.y, p.z)?;
        }
    }
    Ok(())
}

pub fn load_skeleton_csv(path: impl AsRef<Path>) -> Result<SkeletonRecording> {
    read_skeleton_csv(open_reader(path.as_ref())?)
}

pub fn save_skeleton_csv(rec: &SkeletonRecording, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), |w| write_skeleton_csv(rec, w))
}
