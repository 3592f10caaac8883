//! Synthetic upper-body motion.
//!
//! The world frame follows a depth-camera convention: the camera sits at the
//! origin looking down `+Z`, `+Y` points down and the person stands about
//! 2.5 m away facing the camera, with their left side towards `+X`.
//!
//! The trunk is rigid (head, neck, shoulders) and may sway and turn. Each arm
//! is a two-link chain solved analytically from a hand target, with the
//! elbow swivel fixed by a pole direction. Hand targets come from motion
//! primitives that are played in segments and cross-faded.

use std::f64::consts::{PI, TAU};

use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::measurements::{Camera, MeasurementSequence};
use super::SkeletonRecording;
use crate::bodymodel::{Joint, JointMeasurement, MeasurementFrame, Side};
use crate::error::{Error, Result};
use crate::geometry::{project, Joint3D};

/// Bumped whenever the generated motion changes for a fixed seed.
pub const SYNTH_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionPrimitive {
    /// Static T-pose.
    Neutral,
    /// Smooth random hand trajectories within reach.
    Random,
    /// One hand raised and waving, the other relaxed.
    Wave,
    /// Repeated forward reaches towards random points.
    Reach,
    /// Both hands held across the body midline.
    HandsCrossed,
    /// Hands brought together in front of the chest.
    Clap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionSpec {
    /// Played in order, cycling.
    pub primitives: Vec<MotionPrimitive>,
    pub segment_frames: usize,
    /// Cross-fade length at the start of each segment.
    pub blend_frames: usize,
    pub fps: f64,
    pub upper_arm: f64,
    pub forearm: f64,
    /// Scales trunk sway and turning; 0 keeps the trunk fixed.
    pub trunk_motion: f64,
    /// Neck position in the world frame when the trunk is at rest.
    pub neck: [f64; 3],
}

impl Default for MotionSpec {
    fn default() -> Self {
        Self {
            primitives: vec![
                MotionPrimitive::Random,
                MotionPrimitive::Wave,
                MotionPrimitive::Reach,
                MotionPrimitive::HandsCrossed,
                MotionPrimitive::Clap,
            ],
            segment_frames: 150,
            blend_frames: 45,
            fps: 30.0,
            upper_arm: 0.30,
            forearm: 0.27,
            trunk_motion: 1.0,
            neck: [0.0, -0.15, 2.5],
        }
    }
}

impl MotionSpec {
    pub fn single(primitive: MotionPrimitive) -> Self {
        Self {
            primitives: vec![primitive],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.primitives.is_empty() {
            return bad("motion spec lists no primitives");
        }
        if self.segment_frames == 0 || self.blend_frames > self.segment_frames {
            return bad("segment_frames must be positive and at least blend_frames");
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return bad("fps must be positive");
        }
        if !(self.upper_arm > 0.0 && self.forearm > 0.0) || (self.upper_arm - self.forearm).abs() < 0.02 {
            return bad("bone lengths must be positive and differ by at least 2 cm");
        }
        if !(self.trunk_motion.is_finite() && self.trunk_motion >= 0.0) {
            return bad("trunk_motion must be non-negative");
        }
        if !(self.neck.iter().all(|v| v.is_finite()) && self.neck[2] > 1.0) {
            return bad("neck must be finite and more than 1 m in front of the camera");
        }
        Ok(())
    }
}

// Rigid trunk offsets from the neck in the body frame.
const HEAD_OFFSET: [f64; 3] = [0.0, -0.25, 0.0];
const SHOULDER_OFFSET: [f64; 3] = [0.19, 0.03, 0.0];

fn side_sign(side: Side) -> f64 {
    match side {
        Side::Left => 1.0,
        Side::Right => -1.0,
    }
}

fn shoulder_offset(side: Side) -> Vector3<f64> {
    Vector3::new(side_sign(side) * SHOULDER_OFFSET[0], SHOULDER_OFFSET[1], SHOULDER_OFFSET[2])
}

/// Bounded smooth signal in `[-1, 1]`: a normalised sum of sinusoids.
#[derive(Debug, Clone)]
struct Wobble {
    terms: Vec<(f64, f64, f64)>,
}

impl Wobble {
    fn new<R: Rng>(rng: &mut R, min_hz: f64, max_hz: f64) -> Self {
        let terms: Vec<_> = (0..3)
            .map(|_| (rng.random_range(0.3..1.0), rng.random_range(min_hz..max_hz), rng.random_range(0.0..TAU)))
            .collect();
        Self { terms }
    }

    fn at(&self, secs: f64) -> f64 {
        let total: f64 = self.terms.iter().map(|t| t.0).sum();
        self.terms.iter().map(|(a, f, p)| a * (TAU * f * secs + p).sin()).sum::<f64>() / total
    }
}

/// Randomised parameters of one played segment.
#[derive(Debug, Clone)]
struct Segment {
    primitive: MotionPrimitive,
    wobbles: Vec<Wobble>,
    waving: Side,
    reach_dirs: [Vector3<f64>; 2],
    period: f64,
}

impl Segment {
    fn draw<R: Rng>(primitive: MotionPrimitive, rng: &mut R) -> Self {
        let wobbles = (0..6).map(|_| Wobble::new(rng, 0.05, 0.45)).collect();
        let waving = if rng.random_bool(0.5) { Side::Left } else { Side::Right };
        let mut dir = |s: f64| {
            // forward-pointing, somewhat outward, anywhere from chest to head height
            let h: f64 = rng.random_range(30f64.to_radians()..95f64.to_radians());
            let e: f64 = rng.random_range(55f64.to_radians()..120f64.to_radians());
            Vector3::new(s * e.sin() * h.cos(), e.cos(), -e.sin() * h.sin())
        };
        let reach_dirs = [dir(1.0), dir(-1.0)];
        let period = rng.random_range(1.2..2.5);
        Self {
            primitive,
            wobbles,
            waving,
            reach_dirs,
            period,
        }
    }

    /// Hand target relative to the shoulder, in the body frame.
    fn hand_target(&self, side: Side, secs: f64, spec: &MotionSpec, neck_to_shoulder: &Vector3<f64>) -> Vector3<f64> {
        let s = side_sign(side);
        let reach = spec.upper_arm + spec.forearm;
        let k = if side == Side::Left { 0 } else { 3 };
        // relative to the neck, then shifted to the shoulder
        let from_neck = |v: Vector3<f64>| v - neck_to_shoulder;
        match self.primitive {
            MotionPrimitive::Neutral => Vector3::new(s * reach, 0.0, 0.0),
            MotionPrimitive::Random => {
                let w = &self.wobbles;
                let e = 85f64.to_radians() + 75f64.to_radians() * w[k].at(secs);
                let h = 50f64.to_radians() + 65f64.to_radians() * w[k + 1].at(secs);
                let r = (0.25 + 0.7 * (0.5 + 0.5 * w[k + 2].at(secs))) * reach;
                r * Vector3::new(s * e.sin() * h.cos(), e.cos(), -e.sin() * h.sin())
            }
            MotionPrimitive::Wave => {
                if side == self.waving {
                    let sway = (TAU * 1.2 * secs).sin();
                    from_neck(Vector3::new(s * (0.28 + 0.12 * sway), -0.42, -0.08))
                } else {
                    let d = 0.03 * self.wobbles[k].at(secs);
                    Vector3::new(s * (0.06 + d), 0.5, -0.12)
                }
            }
            MotionPrimitive::Reach => {
                let phase = 0.5 - 0.5 * (TAU * secs / self.period + if side == Side::Left { 0.0 } else { PI }).cos();
                let r = (0.35 + 0.6 * phase) * reach;
                r * self.reach_dirs[k / 3]
            }
            MotionPrimitive::HandsCrossed => {
                let w = &self.wobbles;
                let depth = if side == Side::Left { -0.32 } else { -0.25 };
                from_neck(Vector3::new(
                    -s * (0.14 + 0.04 * w[k].at(secs)),
                    0.24 + 0.05 * w[k + 1].at(secs),
                    depth,
                ))
            }
            MotionPrimitive::Clap => {
                // hands together at the start of each period
                let gap = 0.02 + 0.28 * (0.5 - 0.5 * (TAU * secs / self.period).cos());
                from_neck(Vector3::new(s * 0.5 * gap, 0.25, -0.35))
            }
        }
    }
}

/// Elbow position solving the two-link chain from shoulder `s` to hand `t`.
/// `t` must lie within reach; `pole` sets the bending direction.
fn solve_elbow(s: &Vector3<f64>, t: &Vector3<f64>, l1: f64, l2: f64, pole: &Vector3<f64>) -> Vector3<f64> {
    let d = t - s;
    let dist = d.norm();
    let u = d / dist;
    let cos_a = ((l1 * l1 + dist * dist - l2 * l2) / (2.0 * l1 * dist)).clamp(-1.0, 1.0);
    let sin_a = (1.0 - cos_a * cos_a).sqrt();
    let mut perp = pole - u * pole.dot(&u);
    if perp.norm() < 1e-6 {
        // pole along the arm: any perpendicular bends consistently
        let alt = if u.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        perp = alt - u * alt.dot(&u);
    }
    s + l1 * (cos_a * u + sin_a * perp.normalize())
}

/// Clamps a shoulder-relative target into the reachable shell.
fn clamp_reach(v: Vector3<f64>, l1: f64, l2: f64) -> Vector3<f64> {
    let lo = (l1 - l2).abs() + 0.02;
    let hi = l1 + l2;
    let n = v.norm();
    if n < 1e-9 {
        return Vector3::new(0.0, lo, 0.0);
    }
    v * (n.clamp(lo, hi) / n)
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

pub fn synth_skeleton(spec: &MotionSpec, n_frames: usize, rng_seed: u64) -> Result<SkeletonRecording> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let n_segments = n_frames.div_ceil(spec.segment_frames).max(1);
    let segments: Vec<Segment> = (0..n_segments)
        .map(|i| Segment::draw(spec.primitives[i % spec.primitives.len()], &mut rng))
        .collect();
    let trunk = [Wobble::new(&mut rng, 0.03, 0.2), Wobble::new(&mut rng, 0.03, 0.2), Wobble::new(&mut rng, 0.03, 0.15)];

    let (l1, l2) = (spec.upper_arm, spec.forearm);
    let neck_rest = Vector3::from(spec.neck);
    let mut frames = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let secs = f as f64 / spec.fps;
        let m = spec.trunk_motion;
        let neck = neck_rest + m * Vector3::new(0.06 * trunk[0].at(secs), 0.0, 0.12 * trunk[1].at(secs));
        let yaw = m * 15f64.to_radians() * trunk[2].at(secs);
        let rot = Rotation3::from_axis_angle(&Vector3::y_axis(), yaw);

        let seg_idx = f / spec.segment_frames;
        let into = f % spec.segment_frames;
        let blend = if seg_idx > 0 && spec.blend_frames > 0 {
            smoothstep(into as f64 / spec.blend_frames as f64)
        } else {
            1.0
        };

        let mut joints = [Joint3D::new(0.0, 0.0, 0.0); Joint::COUNT];
        let place = |v: Vector3<f64>| Joint3D::from_vector(&(neck + rot * v));
        joints[Joint::Neck.index()] = place(Vector3::zeros());
        joints[Joint::Head.index()] = place(Vector3::from(HEAD_OFFSET));
        for side in Side::BOTH {
            let sh = shoulder_offset(side);
            let current = segments[seg_idx].hand_target(side, secs, spec, &sh);
            let target = if blend < 1.0 {
                let prev = segments[seg_idx - 1].hand_target(side, secs, spec, &sh);
                prev * (1.0 - blend) + current * blend
            } else {
                current
            };
            let target = sh + clamp_reach(target, l1, l2);
            let pole = Vector3::new(side_sign(side) * 0.4, 0.7, 0.6);
            let elbow = solve_elbow(&sh, &target, l1, l2, &pole);
            joints[side.shoulder().index()] = place(sh);
            joints[side.elbow().index()] = place(elbow);
            joints[side.hand().index()] = place(target);
        }
        frames.push(joints);
    }
    Ok(SkeletonRecording { fps: spec.fps, frames })
}

/// Projects a recording through `camera`, keeping the joints in `subset`,
/// all marked visible.
pub fn make_measurements(rec: &SkeletonRecording, camera: &Camera, subset: &[Joint]) -> Result<MeasurementSequence> {
    camera.intrinsics.validate()?;
    let pm = camera.projection();
    let frames = rec
        .frames
        .iter()
        .enumerate()
        .map(|(t, joints)| {
            let measured = subset
                .iter()
                .map(|&joint| {
                    let ji = project(&pm, &joints[joint.index()]).map_err(|e| e.at_frame(t))?;
                    Ok(JointMeasurement {
                        joint,
                        u: ji.u_over_lambda,
                        v: ji.v_over_lambda,
                        visible: true,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(MeasurementFrame::new(t, measured))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut provenance = std::collections::BTreeMap::new();
    provenance.insert("generator".to_string(), format!("posetrack-synth v{SYNTH_VERSION}"));
    Ok(MeasurementSequence {
        camera: *camera,
        provenance,
        frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CameraIntrinsics, CameraPose};

    const BONES: [(Joint, Joint); 8] = [
        (Joint::Head, Joint::Neck),
        (Joint::Neck, Joint::LeftShoulder),
        (Joint::Neck, Joint::RightShoulder),
        (Joint::LeftShoulder, Joint::RightShoulder),
        (Joint::LeftShoulder, Joint::LeftElbow),
        (Joint::LeftElbow, Joint::LeftHand),
        (Joint::RightShoulder, Joint::RightElbow),
        (Joint::RightElbow, Joint::RightHand),
    ];

    fn bone(rec: &SkeletonRecording, f: usize, a: Joint, b: Joint) -> f64 {
        rec.joint(f, a).distance(&rec.joint(f, b))
    }

    #[test]
    fn neutral_pose_is_t_pose() {
        let spec = MotionSpec {
            trunk_motion: 0.0,
            ..MotionSpec::single(MotionPrimitive::Neutral)
        };
        let rec = synth_skeleton(&spec, 1, 0).unwrap();
        assert_eq!(rec.len(), 1);
        assert!((bone(&rec, 0, Joint::LeftShoulder, Joint::LeftElbow) - 0.30).abs() < 1e-12);
        assert!((bone(&rec, 0, Joint::LeftElbow, Joint::LeftHand) - 0.27).abs() < 1e-12);
        let ls = rec.joint(0, Joint::LeftShoulder);
        let lh = rec.joint(0, Joint::LeftHand);
        let rh = rec.joint(0, Joint::RightHand);
        assert!((lh.x - ls.x - 0.57).abs() < 1e-12);
        assert!((lh.y - ls.y).abs() < 1e-12 && (lh.z - ls.z).abs() < 1e-12);
        assert!(lh.x > 0.0 && rh.x < 0.0);
        assert!(rec.joint(0, Joint::Head).y < rec.joint(0, Joint::Neck).y);
    }

    #[test]
    fn bone_lengths_constant() {
        let rec = synth_skeleton(&MotionSpec::default(), 1000, 11).unwrap();
        for (a, b) in BONES {
            let lens: Vec<f64> = (0..rec.len()).map(|f| bone(&rec, f, a, b)).collect();
            let mean = lens.iter().sum::<f64>() / lens.len() as f64;
            let var = lens.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / lens.len() as f64;
            assert!(var.sqrt() < 1e-9, "{a}-{b} std {}", var.sqrt());
        }
    }

    #[test]
    fn clap_brings_hands_together() {
        let spec = MotionSpec::single(MotionPrimitive::Clap);
        let rec = synth_skeleton(&spec, 300, 5).unwrap();
        let gaps: Vec<f64> = (0..rec.len()).map(|f| bone(&rec, f, Joint::LeftHand, Joint::RightHand)).collect();
        let min = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = gaps.iter().cloned().fold(0.0, f64::max);
        assert!(min < 0.05, "closest approach {min}");
        assert!(max > 0.2);
        // every period has an apex frame
        assert!(gaps[0] < 0.05);
    }

    #[test]
    fn hands_crossed_swaps_sides() {
        let spec = MotionSpec {
            trunk_motion: 0.0,
            ..MotionSpec::single(MotionPrimitive::HandsCrossed)
        };
        let rec = synth_skeleton(&spec, 60, 2).unwrap();
        for f in 0..rec.len() {
            assert!(rec.joint(f, Joint::LeftHand).x < 0.0);
            assert!(rec.joint(f, Joint::RightHand).x > 0.0);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = MotionSpec::default();
        let a = synth_skeleton(&spec, 400, 9).unwrap();
        let b = synth_skeleton(&spec, 400, 9).unwrap();
        let c = synth_skeleton(&spec, 400, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn motion_is_smooth() {
        for seed in 0..8 {
            let rec = synth_skeleton(&MotionSpec::default(), 1500, seed).unwrap();
            for f in 1..rec.len() {
                for j in Joint::ALL {
                    let step = rec.joint(f, j).distance(&rec.joint(f - 1, j));
                    assert!(step < 0.08, "seed {seed} frame {f} joint {j} jumped {step}");
                }
            }
        }
    }

    #[test]
    fn measurements_match_projection() {
        let rec = synth_skeleton(&MotionSpec::default(), 10, 1).unwrap();
        let camera = Camera {
            intrinsics: CameraIntrinsics::identity(),
            pose: CameraPose::default(),
        };
        let subset = [Joint::Head, Joint::Neck, Joint::LeftHand, Joint::RightHand];
        let seq = make_measurements(&rec, &camera, &subset).unwrap();
        assert_eq!(seq.len(), 10);
        for (f, frame) in seq.frames.iter().enumerate() {
            let joints: Vec<Joint> = frame.joints.iter().map(|m| m.joint).collect();
            assert_eq!(joints, subset);
            let p = rec.joint(f, Joint::LeftHand);
            let m = frame.get(Joint::LeftHand).unwrap();
            assert!((m.u - p.x / p.z).abs() < 1e-12 && (m.v - p.y / p.z).abs() < 1e-12);
            assert!(frame.joints.iter().all(|m| m.visible));
        }
    }

    #[test]
    fn bad_spec_rejected() {
        let spec = MotionSpec {
            primitives: vec![],
            ..MotionSpec::default()
        };
        assert!(synth_skeleton(&spec, 10, 0).is_err());
    }
}
