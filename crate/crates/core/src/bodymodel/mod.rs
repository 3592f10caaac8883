//! Upper-body state-space model.
//!
//! Each arm is tracked as an independent chain of joints sharing the head
//! and neck. A chain's state stacks `(u/λ, v/λ, λ)` for every joint, so the
//! default five-joint chain is 15-dimensional.

mod observation;
mod training;
mod transition;

pub use observation::{observation_logpdf, JointMeasurement, MeasurementFrame, ObservationParams, SelectedObservation};
pub use training::{generate_training_set, TrainingSet};
pub use transition::{transition_conditional, transition_log_evidence, transition_logpdf, TransitionParams};

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gaussian::GaussianMixture;
use crate::geometry::JointImage;

pub const DIMS_PER_JOINT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Joint {
    Head,
    Neck,
    LeftShoulder,
    LeftElbow,
    LeftHand,
    RightShoulder,
    RightElbow,
    RightHand,
}

impl Joint {
    pub const ALL: [Joint; 8] = [
        Joint::Head,
        Joint::Neck,
        Joint::LeftShoulder,
        Joint::LeftElbow,
        Joint::LeftHand,
        Joint::RightShoulder,
        Joint::RightElbow,
        Joint::RightHand,
    ];

    pub const COUNT: usize = 8;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Joint::Head => "head",
            Joint::Neck => "neck",
            Joint::LeftShoulder => "left_shoulder",
            Joint::LeftElbow => "left_elbow",
            Joint::LeftHand => "left_hand",
            Joint::RightShoulder => "right_shoulder",
            Joint::RightElbow => "right_elbow",
            Joint::RightHand => "right_hand",
        }
    }

    /// The same joint on the other side of the body; trunk joints map to themselves.
    pub fn mirrored(self) -> Joint {
        match self {
            Joint::LeftShoulder => Joint::RightShoulder,
            Joint::LeftElbow => Joint::RightElbow,
            Joint::LeftHand => Joint::RightHand,
            Joint::RightShoulder => Joint::LeftShoulder,
            Joint::RightElbow => Joint::LeftElbow,
            Joint::RightHand => Joint::LeftHand,
            other => other,
        }
    }
}

impl fmt::Display for Joint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Joint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Joint::ALL
            .iter()
            .copied()
            .find(|j| j.name() == s)
            .ok_or_else(|| Error::MissingJoint(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }

    pub fn shoulder(self) -> Joint {
        match self {
            Side::Left => Joint::LeftShoulder,
            Side::Right => Joint::RightShoulder,
        }
    }

    pub fn elbow(self) -> Joint {
        match self {
            Side::Left => Joint::LeftElbow,
            Side::Right => Joint::RightElbow,
        }
    }

    pub fn hand(self) -> Joint {
        match self {
            Side::Left => Joint::LeftHand,
            Side::Right => Joint::RightHand,
        }
    }
}

/// Ordered joints of one state vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateLayout {
    pub side: Side,
    pub joints: Vec<Joint>,
}

impl StateLayout {
    pub fn new(side: Side, joints: Vec<Joint>) -> Result<Self> {
        if joints.is_empty() {
            return Err(Error::InvalidParameter("state layout has no joints".into()));
        }
        for (i, j) in joints.iter().enumerate() {
            if joints[..i].contains(j) {
                return Err(Error::InvalidParameter(format!("joint {j} listed twice in layout")));
            }
        }
        Ok(Self { side, joints })
    }

    /// head, neck, shoulder, elbow, hand for one side.
    pub fn arm(side: Side) -> Self {
        Self {
            side,
            joints: vec![Joint::Head, Joint::Neck, side.shoulder(), side.elbow(), side.hand()],
        }
    }

    pub fn dim(&self) -> usize {
        DIMS_PER_JOINT * self.joints.len()
    }

    /// Offset of the joint's `u/λ` entry in the state vector.
    pub fn offset(&self, joint: Joint) -> Option<usize> {
        self.joints.iter().position(|j| *j == joint).map(|p| p * DIMS_PER_JOINT)
    }

    pub fn contains(&self, joint: Joint) -> bool {
        self.joints.contains(&joint)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseState {
    pub layout: StateLayout,
    pub values: DVector<f64>,
}

impl PoseState {
    pub fn new(layout: StateLayout, values: DVector<f64>) -> Result<Self> {
        check_dim(layout.dim(), values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("pose state is not finite".into()));
        }
        Ok(Self { layout, values })
    }

    pub fn from_images(layout: StateLayout, images: &[JointImage]) -> Result<Self> {
        check_dim(layout.joints.len(), images.len())?;
        let mut values = DVector::zeros(layout.dim());
        for (i, ji) in images.iter().enumerate() {
            values[3 * i] = ji.u_over_lambda;
            values[3 * i + 1] = ji.v_over_lambda;
            values[3 * i + 2] = ji.lambda;
        }
        Self::new(layout, values)
    }

    pub fn joint_image(&self, joint: Joint) -> Option<JointImage> {
        self.layout
            .offset(joint)
            .map(|o| JointImage::new(self.values[o], self.values[o + 1], self.values[o + 2]))
    }
}

/// Image-plane estimate for all eight upper-body joints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullBodyEstimate {
    pub joints: [JointImage; Joint::COUNT],
}

impl FullBodyEstimate {
    pub fn get(&self, joint: Joint) -> JointImage {
        self.joints[joint.index()]
    }

    pub fn set(&mut self, joint: Joint, image: JointImage) {
        self.joints[joint.index()] = image;
    }

    /// Estimate with the two hands exchanged.
    pub fn with_hands_swapped(&self) -> Self {
        let mut out = *self;
        out.set(Joint::LeftHand, self.get(Joint::RightHand));
        out.set(Joint::RightHand, self.get(Joint::LeftHand));
        out
    }
}

/// Combines the two arm chains. Joints present in both chains (head and
/// neck by default) are averaged; every other joint comes from its own chain.
pub fn merge_arm_estimates(left: &PoseState, right: &PoseState) -> Result<FullBodyEstimate> {
    let mut joints = [JointImage::new(0.0, 0.0, 0.0); Joint::COUNT];
    for joint in Joint::ALL {
        let found: Vec<JointImage> = [left, right].iter().filter_map(|s| s.joint_image(joint)).collect();
        joints[joint.index()] = match found.as_slice() {
            [one] => *one,
            [a, b] => JointImage::new(
                0.5 * (a.u_over_lambda + b.u_over_lambda),
                0.5 * (a.v_over_lambda + b.v_over_lambda),
                0.5 * (a.lambda + b.lambda),
            ),
            _ => return Err(Error::MissingJoint(joint.name().to_string())),
        };
    }
    Ok(FullBodyEstimate { joints })
}

/// Everything one arm-chain filter needs.
#[derive(Debug, Clone)]
pub struct ArmModel {
    pub layout: StateLayout,
    pub prior: GaussianMixture,
    pub transition: TransitionParams,
    pub observation: ObservationParams,
}

impl ArmModel {
    pub fn new(
        layout: StateLayout,
        prior: GaussianMixture,
        transition: TransitionParams,
        observation: ObservationParams,
    ) -> Result<Self> {
        check_dim(layout.dim(), prior.dim())?;
        check_dim(layout.dim(), transition.dim())?;
        check_dim(layout.dim(), observation.state_dim())?;
        Ok(Self {
            layout,
            prior,
            transition,
            observation,
        })
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }
}

/// Noise settings used to build default model parameters for a layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Random-walk standard deviation on image coordinates (pixels).
    pub q_pixel_std: f64,
    /// Random-walk standard deviation on the projective scale.
    pub q_lambda_std: f64,
    /// Measurement standard deviation (pixels).
    pub r_pixel_std: f64,
    /// Whether the neck is part of the measured subset.
    pub measure_neck: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            q_pixel_std: 4.0,
            q_lambda_std: 0.02,
            r_pixel_std: 8.0,
            measure_neck: true,
        }
    }
}

impl NoiseConfig {
    pub fn measured_joints(&self, layout: &StateLayout) -> Vec<Joint> {
        let mut out = vec![Joint::Head];
        if self.measure_neck {
            out.push(Joint::Neck);
        }
        out.push(layout.side.hand());
        out.retain(|j| layout.contains(*j));
        out
    }

    pub fn arm_model(&self, layout: StateLayout, prior: GaussianMixture) -> Result<ArmModel> {
        let transition = TransitionParams::for_layout(&layout, self.q_pixel_std, self.q_lambda_std)?;
        let observation = ObservationParams::new(&layout, &self.measured_joints(&layout), self.r_pixel_std)?;
        ArmModel::new(layout, prior, transition, observation)
    }
}
