//! Reads back the per-frame estimates written by `track`.

use std::path::Path;

use posetrack::bodymodel::{FullBodyEstimate, Joint};
use posetrack::geometry::JointImage;

use crate::error::{CliError, CliResult};

/// Parses the `<joint>_u`, `<joint>_v`, `<joint>_lambda` columns of a track
/// output file. Other columns are ignored.
pub fn load_estimates(path: &Path) -> CliResult<Vec<FullBodyEstimate>> {
    let bad = |line: u64, message: String| CliError::File {
        path: path.to_path_buf(),
        source: posetrack::Error::Parse { line, message },
    };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => bad(1, format!("{other:?}")),
    })?;
    let headers = rdr.headers().map_err(|e| bad(1, e.to_string()))?.clone();
    let column = |name: String| -> CliResult<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| bad(1, format!("missing column `{name}`")))
    };
    let mut cols = Vec::with_capacity(Joint::COUNT);
    for j in Joint::ALL {
        cols.push([
            column(format!("{}_u", j.name()))?,
            column(format!("{}_v", j.name()))?,
            column(format!("{}_lambda", j.name()))?,
        ]);
    }

    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| bad(line, e.to_string()))?;
        let num = |c: usize| -> CliResult<f64> {
            let s = rec.get(c).unwrap_or("");
            s.parse::<f64>()
                .map_err(|_| bad(line, format!("`{s}` in column `{}` is not a number", &headers[c])))
        };
        let mut joints = [JointImage::new(0.0, 0.0, 1.0); Joint::COUNT];
        for (j, [u, v, l]) in Joint::ALL.iter().zip(&cols) {
            joints[j.index()] = JointImage::new(num(*u)?, num(*v)?, num(*l)?);
        }
        out.push(FullBodyEstimate { joints });
    }
    Ok(out)
}
