//! Pose priors as versioned JSON.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bodymodel::StateLayout;
use crate::error::{check_dim, Error, Result};
use crate::gaussian::{Gaussian, GaussianMixture};

use super::{open_reader, write_atomic};

const SCHEMA: &str = "posetrack-prior";
const VERSION: u32 = 1;

/// A mixture prior together with the state layout it was trained on.
#[derive(Debug, Clone)]
pub struct PriorFile {
    pub layout: StateLayout,
    pub mixture: GaussianMixture,
}

#[derive(Serialize, Deserialize)]
struct Schema {
    schema: String,
    version: u32,
    dimension: usize,
    layout: StateLayout,
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    /// Row-major, `dimension * dimension` entries each.
    covariances: Vec<Vec<f64>>,
}

impl PriorFile {
    pub fn new(layout: StateLayout, mixture: GaussianMixture) -> Result<Self> {
        check_dim(layout.dim(), mixture.dim())?;
        Ok(Self { layout, mixture })
    }

    fn to_schema(&self) -> Schema {
        let comps = self.mixture.components();
        Schema {
            schema: SCHEMA.to_string(),
            version: VERSION,
            dimension: self.mixture.dim(),
            layout: self.layout.clone(),
            weights: self.mixture.weights().to_vec(),
            means: comps.iter().map(|g| g.mean().iter().copied().collect()).collect(),
            covariances: comps
                .iter()
                .map(|g| g.cov().transpose().iter().copied().collect())
                .collect(),
        }
    }

    fn from_schema(s: Schema) -> Result<Self> {
        let bad = |m: String| Error::Parse { line: 1, message: m };
        if s.schema != SCHEMA {
            return Err(bad(format!("expected schema `{SCHEMA}`, found `{}`", s.schema)));
        }
        if s.version != VERSION {
            return Err(bad(format!("unsupported prior schema version {}", s.version)));
        }
        let layout = StateLayout::new(s.layout.side, s.layout.joints)?;
        let d = s.dimension;
        check_dim(layout.dim(), d)?;
        if s.means.len() != s.weights.len() || s.covariances.len() != s.weights.len() {
            return Err(bad("weights, means and covariances differ in length".into()));
        }
        let mut comps = Vec::with_capacity(s.weights.len());
        for (mean, cov) in s.means.into_iter().zip(s.covariances) {
            check_dim(d, mean.len())?;
            check_dim(d * d, cov.len())?;
            comps.push(Gaussian::new(
                DVector::from_vec(mean),
                DMatrix::from_row_slice(d, d, &cov),
            )?);
        }
        Self::new(layout, GaussianMixture::new(s.weights, comps)?)
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        Self::from_schema(serde_json::from_reader(r)?)
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, &self.to_schema())?;
        writeln!(w)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_json(open_reader(path.as_ref())?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), |w| self.write_json(w))
    }
}
