use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{PoseState, Side, StateLayout};
use crate::dataio::SkeletonRecording;
use crate::error::{Error, Result};
use crate::geometry::{build_projection, project, sample_viewpoint_with, CameraIntrinsics, ViewpointLimits};

/// Projected arm-chain states for both sides.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub left: Vec<PoseState>,
    pub right: Vec<PoseState>,
}

impl TrainingSet {
    pub fn side(&self, side: Side) -> &[PoseState] {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    /// State vectors of one side, as fed to EM.
    pub fn vectors(&self, side: Side) -> Vec<DVector<f64>> {
        self.side(side).iter().map(|s| s.values.clone()).collect()
    }
}

/// Projects every frame of `rec` through `n_views` random viewpoints.
///
/// Viewpoints are drawn once up front; states are ordered view-major, so
/// entry `v * frames + f` holds frame `f` seen from view `v`.
pub fn generate_training_set(
    rec: &SkeletonRecording,
    intr: &CameraIntrinsics,
    n_views: usize,
    limits: &ViewpointLimits,
    rng_seed: u64,
) -> Result<TrainingSet> {
    if rec.frames.is_empty() {
        return Err(Error::InsufficientData("skeleton recording has no frames".into()));
    }
    if n_views == 0 {
        return Err(Error::InvalidParameter("n_views must be at least 1".into()));
    }
    intr.validate()?;
    limits.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let poses: Vec<_> = (0..n_views).map(|_| sample_viewpoint_with(&mut rng, limits)).collect();

    let layouts = [StateLayout::arm(Side::Left), StateLayout::arm(Side::Right)];
    let total = n_views * rec.frames.len();
    let mut out = [Vec::with_capacity(total), Vec::with_capacity(total)];
    for (view, pose) in poses.iter().enumerate() {
        let pm = build_projection(intr, pose);
        for (frame, joints) in rec.frames.iter().enumerate() {
            for (layout, states) in layouts.iter().zip(out.iter_mut()) {
                let mut values = DVector::zeros(layout.dim());
                for (k, joint) in layout.joints.iter().enumerate() {
                    let ji = project(&pm, &joints[joint.index()]).map_err(|e| Error::AtView {
                        frame,
                        view,
                        source: Box::new(e),
                    })?;
                    values[3 * k] = ji.u_over_lambda;
                    values[3 * k + 1] = ji.v_over_lambda;
                    values[3 * k + 2] = ji.lambda;
                }
                states.push(PoseState {
                    layout: layout.clone(),
                    values,
                });
            }
        }
    }
    let [left, right] = out;
    Ok(TrainingSet { left, right })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bodymodel::Joint;
    use crate::geometry::Joint3D;

    fn recording(n: usize) -> SkeletonRecording {
        let frames = (0..n)
            .map(|f| {
                let s = 0.01 * f as f64;
                let mut js = [Joint3D::new(0.0, 0.0, 2.5); 8];
                for (i, j) in js.iter_mut().enumerate() {
                    j.x = 0.1 * i as f64 - 0.35 + s;
                    j.y = -0.3 + 0.08 * i as f64;
                    j.z = 2.4 + 0.02 * i as f64;
                }
                js
            })
            .collect();
        SkeletonRecording { fps: 30.0, frames }
    }

    #[test]
    fn identity_camera_matches_raw_projection() {
        let rec = recording(3);
        let ts = generate_training_set(&rec, &CameraIntrinsics::identity(), 1, &ViewpointLimits::zero(), 7).unwrap();
        assert_eq!(ts.left.len(), 3);
        for (f, state) in ts.right.iter().enumerate() {
            for joint in &state.layout.joints {
                let p = rec.frames[f][joint.index()];
                let ji = state.joint_image(*joint).unwrap();
                assert!((ji.u_over_lambda - p.x / p.z).abs() < 1e-12);
                assert!((ji.v_over_lambda - p.y / p.z).abs() < 1e-12);
                assert!((ji.lambda - p.z).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn output_size_is_frames_times_views() {
        let rec = recording(100);
        let ts = generate_training_set(&rec, &CameraIntrinsics::default(), 50, &ViewpointLimits::default(), 1).unwrap();
        assert_eq!(ts.left.len(), 5000);
        assert_eq!(ts.right.len(), 5000);
        assert!(ts.left[0].layout.contains(Joint::LeftHand));
        assert!(ts.right[0].layout.contains(Joint::RightHand));
    }

    #[test]
    fn scales_positive_in_front_of_camera() {
        let rec = recording(20);
        let intr = CameraIntrinsics::default();
        let limits = ViewpointLimits::default();
        let ts = generate_training_set(&rec, &intr, 10, &limits, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for v in 0..10 {
            let pose = sample_viewpoint_with(&mut rng, &limits);
            let row = build_projection(&intr, &pose).p.row(2).into_owned();
            for f in 0..20 {
                let state = &ts.left[v * 20 + f];
                for (k, joint) in state.layout.joints.iter().enumerate() {
                    let p = rec.frames[f][joint.index()];
                    let third = row[0] * p.x + row[1] * p.y + row[2] * p.z + row[3];
                    assert!(third > 0.0);
                    assert!((state.values[3 * k + 2] - third).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn degenerate_projection_reports_frame_and_view() {
        let mut rec = recording(4);
        rec.frames[2][Joint::Head.index()] = Joint3D::new(0.0, 0.0, 0.0);
        let err = generate_training_set(&rec, &CameraIntrinsics::identity(), 1, &ViewpointLimits::zero(), 0)
            .unwrap_err();
        assert!(matches!(err, Error::AtView { frame: 2, view: 0, .. }));
    }

    #[test]
    fn empty_recording_rejected() {
        let rec = SkeletonRecording {
            fps: 30.0,
            frames: vec![],
        };
        assert!(generate_training_set(&rec, &CameraIntrinsics::default(), 1, &ViewpointLimits::zero(), 0).is_err());
    }
}
