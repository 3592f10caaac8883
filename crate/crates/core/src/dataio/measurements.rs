//! 2D measurement sequences as JSON lines.
//!
//! The first line is a header carrying the schema, the camera and free-form
//! provenance; every following line is one frame:
//!
//! ```text
//! {"schema":"posetrack-measurements","version":1,"camera":{...},"provenance":{...}}
//! {"t":0,"joints":[{"joint":"head","u":321.5,"v":110.25,"visible":true},...]}
//! ```

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bodymodel::MeasurementFrame;
use crate::error::{Error, Result};
use crate::geometry::{build_projection, CameraIntrinsics, CameraPose, ProjectionMatrix};

use super::{open_reader, write_atomic};

const SCHEMA: &str = "posetrack-measurements";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Camera {
    pub intrinsics: CameraIntrinsics,
    pub pose: CameraPose,
}

impl Camera {
    pub fn projection(&self) -> ProjectionMatrix {
        build_projection(&self.intrinsics, &self.pose)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeasurementSequence {
    pub camera: Camera,
    pub provenance: BTreeMap<String, String>,
    pub frames: Vec<MeasurementFrame>,
}

impl MeasurementSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    schema: String,
    version: u32,
    camera: Camera,
    #[serde(default)]
    provenance: BTreeMap<String, String>,
}

pub fn read_measurements_jsonl<R: BufRead>(reader: R) -> Result<MeasurementSequence> {
    let mut lines = reader.lines().enumerate();
    let parse_err = |line: usize, e: serde_json::Error| Error::Parse {
        line: line as u64 + 1,
        message: e.to_string(),
    };
    let (_, first) = lines.next().ok_or_else(|| Error::Parse {
        line: 1,
        message: "empty measurement file".into(),
    })?;
    let header: Header = serde_json::from_str(&first?).map_err(|e| parse_err(0, e))?;
    if header.schema != SCHEMA {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected schema `{SCHEMA}`, found `{}`", header.schema),
        });
    }
    if header.version != VERSION {
        return Err(Error::Parse {
            line: 1,
            message: format!("unsupported measurement schema version {}", header.version),
        });
    }
    header.camera.intrinsics.validate()?;

    let mut frames = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let frame: MeasurementFrame = serde_json::from_str(&line).map_err(|e| parse_err(i, e))?;
        if let Some(m) = frame.joints.iter().find(|m| m.visible && !(m.u.is_finite() && m.v.is_finite())) {
            return Err(Error::Parse {
                line: i as u64 + 1,
                message: format!("visible joint {} has non-finite coordinates", m.joint),
            });
        }
        frames.push(frame);
    }
    Ok(MeasurementSequence {
        camera: header.camera,
        provenance: header.provenance,
        frames,
    })
}

pub fn write_measurements_jsonl<W: Write>(seq: &MeasurementSequence, mut w: W) -> Result<()> {
    let header = Header {
        schema: SCHEMA.to_string(),
        version: VERSION,
        camera: seq.camera,
        provenance: seq.provenance.clone(),
    };
    serde_json::to_writer(&mut w, &header)?;
    writeln!(w)?;
    for frame in &seq.frames {
        // non-finite numbers have no JSON encoding
        if let Some(m) = frame.joints.iter().find(|m| !(m.u.is_finite() && m.v.is_finite())) {
            return Err(Error::NonFiniteMeasurement {
                joint: m.joint.name().to_string(),
            }
            .at_frame(frame.t));
        }
        serde_json::to_writer(&mut w, frame)?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn load_measurements(path: impl AsRef<Path>) -> Result<MeasurementSequence> {
    read_measurements_jsonl(open_reader(path.as_ref())?)
}

pub fn save_measurements(seq: &MeasurementSequence, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), |w| write_measurements_jsonl(seq, w))
}
