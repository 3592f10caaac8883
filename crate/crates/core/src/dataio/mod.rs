//! File formats and synthetic data.
//!
//! Every format starts with a schema name and version. Floating-point values
//! are written in shortest round-trip form, so loading a saved file gives
//! back the exact same numbers.

mod edges;
mod measurements;
mod prior;
mod skeleton;
mod synth;

pub use edges::{load_edges_csv, read_edges_csv, save_edges_csv, write_edges_csv, EdgeFrames};
pub use measurements::{
    load_measurements, read_measurements_jsonl, save_measurements, write_measurements_jsonl, Camera,
    MeasurementSequence,
};
pub use prior::PriorFile;
pub use skeleton::{load_skeleton_csv, read_skeleton_csv, save_skeleton_csv, write_skeleton_csv, SkeletonRecording};
pub use synth::{make_measurements, synth_skeleton, MotionPrimitive, MotionSpec, SYNTH_VERSION};

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::Result;

pub(crate) fn open_reader(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<&mut File>) -> Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        write(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
