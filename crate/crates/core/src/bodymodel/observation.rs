//! Linear Gaussian observation of a joint subset.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{Joint, PoseState, StateLayout};
use crate::error::{check_dim, Error, Result};
use crate::gaussian::LN_2PI;

/// One observed joint in a frame, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointMeasurement {
    pub joint: Joint,
    pub u: f64,
    pub v: f64,
    pub visible: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MeasurementFrame {
    pub t: usize,
    pub joints: Vec<JointMeasurement>,
}

impl MeasurementFrame {
    pub fn new(t: usize, joints: Vec<JointMeasurement>) -> Self {
        Self { t, joints }
    }

    pub fn get(&self, joint: Joint) -> Option<&JointMeasurement> {
        self.joints.iter().find(|m| m.joint == joint)
    }

    pub fn get_mut(&mut self, joint: Joint) -> Option<&mut JointMeasurement> {
        self.joints.iter_mut().find(|m| m.joint == joint)
    }

    /// Position of a visible joint.
    pub fn visible(&self, joint: Joint) -> Option<(f64, f64)> {
        self.get(joint).filter(|m| m.visible).map(|m| (m.u, m.v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct ObservedRow {
    joint: Joint,
    /// 0 for `u/λ`, 1 for `v/λ`.
    axis: usize,
    state_index: usize,
    variance: f64,
}

/// Selection `H` of image coordinates and diagonal noise `R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationParams {
    state_dim: usize,
    rows: Vec<ObservedRow>,
}

impl ObservationParams {
    /// Observes `(u/λ, v/λ)` of each listed joint with noise `pixel_std^2`.
    pub fn new(layout: &StateLayout, joints: &[Joint], pixel_std: f64) -> Result<Self> {
        let variances = vec![pixel_std * pixel_std; 2 * joints.len()];
        Self::with_variances(layout, joints, &variances)
    }

    /// `variances` holds two entries (u then v) per joint.
    pub fn with_variances(layout: &StateLayout, joints: &[Joint], variances: &[f64]) -> Result<Self> {
        if joints.is_empty() {
            return Err(Error::InvalidParameter("observation selects no joints".into()));
        }
        check_dim(2 * joints.len(), variances.len())?;
        if variances.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidParameter(
                "measurement variances must be positive and finite".into(),
            ));
        }
        let mut rows = Vec::with_capacity(variances.len());
        for (i, &joint) in joints.iter().enumerate() {
            if joints[..i].contains(&joint) {
                return Err(Error::InvalidParameter(format!("joint {joint} observed twice")));
            }
            let offset = layout
                .offset(joint)
                .ok_or_else(|| Error::MissingJoint(joint.name().to_string()))?;
            for axis in 0..2 {
                rows.push(ObservedRow {
                    joint,
                    axis,
                    state_index: offset + axis,
                    variance: variances[2 * i + axis],
                });
            }
        }
        Ok(Self {
            state_dim: layout.dim(),
            rows,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// Number of rows when every joint is visible.
    pub fn full_dim(&self) -> usize {
        self.rows.len()
    }

    pub fn joints(&self) -> Vec<Joint> {
        let mut out: Vec<Joint> = self.rows.iter().map(|r| r.joint).collect();
        out.dedup();
        out
    }

    /// Rows of `H`, `R` and `z` for the joints visible in `frame`. Joints
    /// that are absent or flagged invisible are dropped.
    pub fn select(&self, frame: &MeasurementFrame) -> Result<SelectedObservation> {
        let mut state_indices = Vec::with_capacity(self.rows.len());
        let mut z = Vec::with_capacity(self.rows.len());
        let mut r = Vec::with_capacity(self.rows.len());
        for row in &self.rows {
            let Some((u, v)) = frame.visible(row.joint) else {
                continue;
            };
            if !(u.is_finite() && v.is_finite()) {
                return Err(Error::NonFiniteMeasurement {
                    joint: row.joint.name().to_string(),
                });
            }
            state_indices.push(row.state_index);
            z.push(if row.axis == 0 { u } else { v });
            r.push(row.variance);
        }
        if state_indices.is_empty() {
            return Err(Error::NoVisibleJoints);
        }
        let log_norm = -0.5 * (z.len() as f64 * LN_2PI + r.iter().map(|v| v.ln()).sum::<f64>());
        Ok(SelectedObservation {
            state_dim: self.state_dim,
            state_indices,
            z: DVector::from_vec(z),
            r_diag: DVector::from_vec(r),
            log_norm,
        })
    }
}

/// The visible part of one frame, ready for likelihood evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectedObservation {
    pub state_dim: usize,
    /// State index feeding each measurement row.
    pub state_indices: Vec<usize>,
    pub z: DVector<f64>,
    pub r_diag: DVector<f64>,
    log_norm: f64,
}

impl SelectedObservation {
    /// Observation of `z[k]` at state entry `state_indices[k]` with variance `r_diag[k]`.
    pub fn new(state_dim: usize, state_indices: Vec<usize>, z: DVector<f64>, r_diag: DVector<f64>) -> Result<Self> {
        if state_indices.is_empty() {
            return Err(Error::NoVisibleJoints);
        }
        check_dim(state_indices.len(), z.len())?;
        check_dim(state_indices.len(), r_diag.len())?;
        if let Some(&i) = state_indices.iter().find(|&&i| i >= state_dim) {
            return Err(Error::InvalidParameter(format!("state index {i} outside dimension {state_dim}")));
        }
        if r_diag.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidParameter("measurement variances must be positive".into()));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("measurement is not finite".into()));
        }
        let log_norm = -0.5 * (z.len() as f64 * LN_2PI + r_diag.iter().map(|v| v.ln()).sum::<f64>());
        Ok(Self {
            state_dim,
            state_indices,
            z,
            r_diag,
            log_norm,
        })
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }

    /// `log N(z | Hx, R)`; `x` must have `state_dim` entries.
    pub fn logpdf(&self, x: &DVector<f64>) -> f64 {
        let mut q = 0.0;
        for (k, &i) in self.state_indices.iter().enumerate() {
            let d = self.z[k] - x[i];
            q += d * d / self.r_diag[k];
        }
        self.log_norm - 0.5 * q
    }
}

pub fn observation_logpdf(op: &ObservationParams, x: &PoseState, z: &MeasurementFrame) -> Result<f64> {
    check_dim(op.state_dim(), x.values.len())?;
    Ok(op.select(z)?.logpdf(&x.values))
}
