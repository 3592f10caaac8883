//! Accuracy metrics: per-joint pixel error, PCP curves and aligned 3D error.

mod procrustes;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use procrustes::{procrustes_fixed_scale, AlignmentResult};

use crate::bodymodel::{FullBodyEstimate, Joint};
use crate::error::{Error, Result};
use crate::geometry::{backproject, Joint3D, ProjectionMatrix};

/// Per-frame, per-joint error values with their sequence means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointErrors {
    /// `series[f][joint.index()]`
    pub series: Vec<[f64; Joint::COUNT]>,
    pub means: [f64; Joint::COUNT],
}

impl JointErrors {
    fn from_series(series: Vec<[f64; Joint::COUNT]>) -> Self {
        let mut means = [0.0; Joint::COUNT];
        for row in &series {
            for (m, e) in means.iter_mut().zip(row) {
                *m += e;
            }
        }
        let n = series.len().max(1) as f64;
        for m in &mut means {
            *m /= n;
        }
        Self { series, means }
    }

    pub fn mean(&self, joint: Joint) -> f64 {
        self.means[joint.index()]
    }

    /// Mean over the given joints.
    pub fn mean_over(&self, joints: &[Joint]) -> f64 {
        joints.iter().map(|j| self.mean(*j)).sum::<f64>() / joints.len() as f64
    }

    /// `frame` then one column per joint.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["frame".to_string()];
        header.extend(Joint::ALL.iter().map(|j| j.name().to_string()));
        out.write_record(&header).map_err(csv_err)?;
        for (f, row) in self.series.iter().enumerate() {
            let mut rec = vec![f.to_string()];
            rec.extend(row.iter().map(|e| e.to_string()));
            out.write_record(&rec).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidParameter(format!("csv: {other:?}")),
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::LengthMismatch { left: a, right: b })
    }
}

/// Euclidean image distance per joint per frame.
pub fn joint_pixel_error(est: &[FullBodyEstimate], truth: &[FullBodyEstimate]) -> Result<JointErrors> {
    check_lengths(est.len(), truth.len())?;
    let series = est
        .iter()
        .zip(truth)
        .map(|(e, t)| Joint::ALL.map(|j| e.get(j).pixel_distance(&t.get(j))))
        .collect();
    Ok(JointErrors::from_series(series))
}

/// A body part between two joints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limb {
    pub name: &'static str,
    pub a: Joint,
    pub b: Joint,
}

/// Upper arms and forearms.
pub const ARM_LIMBS: [Limb; 4] = [
    Limb {
        name: "left_upper_arm",
        a: Joint::LeftShoulder,
        b: Joint::LeftElbow,
    },
    Limb {
        name: "left_forearm",
        a: Joint::LeftElbow,
        b: Joint::LeftHand,
    },
    Limb {
        name: "right_upper_arm",
        a: Joint::RightShoulder,
        b: Joint::RightElbow,
    },
    Limb {
        name: "right_forearm",
        a: Joint::RightElbow,
        b: Joint::RightHand,
    },
];

/// 0.05, 0.10, ..., 1.00
pub fn default_pcp_thresholds() -> Vec<f64> {
    (1..=20).map(|k| k as f64 * 0.05).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcpCurve {
    pub thresholds: Vec<f64>,
    pub values: Vec<f64>,
}

impl PcpCurve {
    /// Value at the first threshold `>= f`, or `None` beyond the grid.
    pub fn at(&self, f: f64) -> Option<f64> {
        self.thresholds.iter().position(|t| *t >= f - 1e-12).map(|i| self.values[i])
    }

    /// `threshold value` rows, one per line.
    pub fn write_columns<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# threshold pcp")?;
        for (t, v) in self.thresholds.iter().zip(&self.values) {
            writeln!(w, "{t} {v}")?;
        }
        Ok(())
    }
}

/// Fraction of (limb, frame) pairs whose two endpoints both lie within
/// `f` times the true limb length, for each threshold `f`. The boundary
/// counts as correct.
pub fn pcp(est: &[FullBodyEstimate], truth: &[FullBodyEstimate], limbs: &[Limb], thresholds: &[f64]) -> Result<PcpCurve> {
    check_lengths(est.len(), truth.len())?;
    if limbs.is_empty() || est.is_empty() {
        return Err(Error::InsufficientData("PCP needs at least one limb and one frame".into()));
    }
    if thresholds.windows(2).any(|w| w[1] < w[0]) || thresholds.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::InvalidParameter("PCP thresholds must be non-negative and ascending".into()));
    }
    // the smallest threshold at which each (limb, frame) becomes correct
    let mut needed = Vec::with_capacity(est.len() * limbs.len());
    for (f, (e, t)) in est.iter().zip(truth).enumerate() {
        for limb in limbs {
            let len = t.get(limb.a).pixel_distance(&t.get(limb.b));
            if !(len > 0.0) {
                return Err(Error::ZeroLengthLimb {
                    limb: limb.name.to_string(),
                }
                .at_frame(f));
            }
            let worst = e.get(limb.a).pixel_distance(&t.get(limb.a)).max(e.get(limb.b).pixel_distance(&t.get(limb.b)));
            needed.push(worst / len);
        }
    }
    let total = needed.len() as f64;
    let values = thresholds
        .iter()
        .map(|&th| needed.iter().filter(|&&r| r <= th).count() as f64 / total)
        .collect();
    Ok(PcpCurve {
        thresholds: thresholds.to_vec(),
        values,
    })
}

/// Joints aligned before measuring 3D error.
pub const DEFAULT_ALIGN_JOINTS: [Joint; 4] = [Joint::Head, Joint::Neck, Joint::LeftShoulder, Joint::RightShoulder];

/// Back-projects each estimate through `pm`, rigidly aligns it to the truth
/// on `align`, and returns the per-joint distance in metres.
pub fn error_3d(
    est: &[FullBodyEstimate],
    truth: &[[Joint3D; Joint::COUNT]],
    pm: &ProjectionMatrix,
    align: &[Joint],
) -> Result<JointErrors> {
    check_lengths(est.len(), truth.len())?;
    let mut series = Vec::with_capacity(est.len());
    for (f, (e, t)) in est.iter().zip(truth).enumerate() {
        let lifted = lift(e, pm).map_err(|err| err.at_frame(f))?;
        let src: Vec<_> = align.iter().map(|j| lifted[j.index()].to_vector()).collect();
        let dst: Vec<_> = align.iter().map(|j| t[j.index()].to_vector()).collect();
        let a = procrustes_fixed_scale(&src, &dst).map_err(|err| err.at_frame(f))?;
        series.push(Joint::ALL.map(|j| (a.apply(&lifted[j.index()].to_vector()) - t[j.index()].to_vector()).norm()));
    }
    Ok(JointErrors::from_series(series))
}

/// 3D joints of an image-plane estimate.
pub fn lift(est: &FullBodyEstimate, pm: &ProjectionMatrix) -> Result<[Joint3D; Joint::COUNT]> {
    let mut out = [Joint3D::new(0.0, 0.0, 0.0); Joint::COUNT];
    for j in Joint::ALL {
        out[j.index()] = backproject(pm, &est.get(j))?;
    }
    Ok(out)
}

/// Summary written next to per-frame metric files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub frames: usize,
    pub mean_pixel_error: std::collections::BTreeMap<String, f64>,
    pub mean_3d_error: Option<std::collections::BTreeMap<String, f64>>,
    pub pcp: PcpCurve,
}

impl EvalSummary {
    pub fn new(pixel: &JointErrors, error3d: Option<&JointErrors>, pcp: PcpCurve) -> Self {
        let by_name = |e: &JointErrors| Joint::ALL.iter().map(|j| (j.name().to_string(), e.mean(*j))).collect();
        Self {
            frames: pixel.series.len(),
            mean_pixel_error: by_name(pixel),
            mean_3d_error: error3d.map(by_name),
            pcp,
        }
    }
}
