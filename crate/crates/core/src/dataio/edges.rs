//! Edge maps as CSV, one segment per row.
//!
//! ```text
//! # posetrack-edges v1 frames=200
//! frame,mid_x,mid_y,orientation_radians
//! 0,402.5,188.25,1.1
//! ```
//!
//! Frames without a row have no edges.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::association::EdgeSegment;
use crate::error::{Error, Result};

use super::{open_reader, write_atomic};

const MAGIC: &str = "posetrack-edges";
const VERSION: u32 = 1;

/// Edge segments per frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EdgeFrames {
    pub frames: Vec<Vec<EdgeSegment>>,
}

fn parse_header(line: &str) -> Result<usize> {
    let bad = |m: &str| Error::Parse {
        line: 1,
        message: m.to_string(),
    };
    let rest = line
        .strip_prefix('#')
        .map(str::trim)
        .and_then(|s| s.strip_prefix(MAGIC))
        .ok_or_else(|| bad("missing `# posetrack-edges` header"))?;
    let mut frames = None;
    let mut version = None;
    for tok in rest.split_whitespace() {
        if let Some(v) = tok.strip_prefix("frames=") {
            frames = Some(v.parse::<usize>().map_err(|_| bad("frames is not an integer"))?);
        } else if let Some(v) = tok.strip_prefix('v') {
            version = v.parse::<u32>().ok();
        }
    }
    if version != Some(VERSION) {
        return Err(bad("missing or unsupported edge schema version"));
    }
    frames.ok_or_else(|| bad("missing frame count"))
}

pub fn read_edges_csv<R: BufRead>(mut reader: R) -> Result<EdgeFrames> {
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let n = parse_header(first.trim_end())?;
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = csv.headers().map_err(|e| Error::Parse {
        line: 2,
        message: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>() != ["frame", "mid_x", "mid_y", "orientation_radians"] {
        return Err(Error::Parse {
            line: 2,
            message: "expected columns frame,mid_x,mid_y,orientation_radians".into(),
        });
    }
    let mut frames = vec![Vec::new(); n];
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
        if frame >= n {
            return Err(perr(format!("frame {frame} beyond declared count {n}")));
        }
        let mut vals = [0.0; 3];
        for (k, v) in vals.iter_mut().enumerate() {
            let s = record[1 + k].trim();
            *v = s
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| perr(format!("`{s}` is not a finite number")))?;
        }
        frames[frame].push(EdgeSegment::new(vals[0], vals[1], vals[2]));
    }
    Ok(EdgeFrames { frames })
}

pub fn write_edges_csv<W: Write>(edges: &EdgeFrames, mut w: W) -> Result<()> {
    writeln!(w, "# {MAGIC} v{VERSION} frames={}", edges.frames.len())?;
    writeln!(w, "frame,mid_x,mid_y,orientation_radians")?;
    for (f, segs) in edges.frames.iter().enumerate() {
        for e in segs {
            writeln!(w, "{f},{},{},{}", e.mid_x, e.mid_y, e.orientation)?;
        }
    }
    Ok(())
}

pub fn load_edges_csv(path: impl AsRef<Path>) -> Result<EdgeFrames> {
    read_edges_csv(open_reader(path.as_ref())?)
}

pub fn save_edges_csv(edges: &EdgeFrames, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), |w| write_edges_csv(edges, w))
}
