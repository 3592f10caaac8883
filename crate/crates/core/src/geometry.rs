//! Pinhole camera model.
//!
//! A camera is intrinsics `K` plus a 6-DoF pose. The rotation is composed as
//! `Rz(gamma) * Rx(beta) * Ry(alpha)` and the projection matrix is
//! `K * [R | t]`. Other Euler conventions give different matrices for the
//! same six numbers, so external camera files must use this order.

use nalgebra::{Matrix3, Matrix3x4, Vector3, Vector4};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this `|lambda|` a point is treated as lying on the camera plane.
pub const MIN_ABS_LAMBDA: f64 = 1e-12;

/// Reciprocal condition number below which the left 3x3 block is singular.
const MIN_RCOND: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let intr = Self { fx, fy, cx, cy };
        intr.validate()?;
        Ok(intr)
    }

    pub fn identity() -> Self {
        Self {
            fx: 1.0,
            fy: 1.0,
            cx: 0.0,
            cy: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "camera intrinsics need positive finite focal lengths, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }
}

impl Default for CameraIntrinsics {
    /// A 640x480 sensor with a 500 px focal length.
    fn default() -> Self {
        Self {
            fx: 500.0,
            fy: 500.0,
            cx: 320.0,
            cy: 240.0,
        }
    }
}

/// Camera extrinsics. Translation in metres, angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CameraPose {
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl CameraPose {
    pub fn rotation(&self) -> Matrix3<f64> {
        let (sa, ca) = self.alpha.sin_cos();
        let (sb, cb) = self.beta.sin_cos();
        let (sg, cg) = self.gamma.sin_cos();
        let rz = Matrix3::new(cg, -sg, 0.0, sg, cg, 0.0, 0.0, 0.0, 1.0);
        let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cb, -sb, 0.0, sb, cb);
        let ry = Matrix3::new(ca, 0.0, sa, 0.0, 1.0, 0.0, -sa, 0.0, ca);
        rz * rx * ry
    }

    pub fn translation(&self) -> Vector3<f64> {
        Vector3::new(self.tx, self.ty, self.tz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionMatrix {
    pub p: Matrix3x4<f64>,
}

impl ProjectionMatrix {
    pub fn left_block(&self) -> Matrix3<f64> {
        self.p.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn column4(&self) -> Vector3<f64> {
        self.p.column(3).into_owned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Joint3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Joint3D {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn distance(&self, other: &Joint3D) -> f64 {
        (self.to_vector() - other.to_vector()).norm()
    }
}

/// Image coordinates `(u/lambda, v/lambda)` in pixels plus the projective scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointImage {
    pub u_over_lambda: f64,
    pub v_over_lambda: f64,
    pub lambda: f64,
}

impl JointImage {
    pub fn new(u_over_lambda: f64, v_over_lambda: f64, lambda: f64) -> Self {
        Self {
            u_over_lambda,
            v_over_lambda,
            lambda,
        }
    }

    /// Homogeneous image vector `(u, v, lambda)`.
    pub fn homogeneous(&self) -> Vector3<f64> {
        Vector3::new(
            self.u_over_lambda * self.lambda,
            self.v_over_lambda * self.lambda,
            self.lambda,
        )
    }

    pub fn pixel_distance(&self, other: &JointImage) -> f64 {
        (self.u_over_lambda - other.u_over_lambda).hypot(self.v_over_lambda - other.v_over_lambda)
    }
}

pub fn build_projection(intr: &CameraIntrinsics, pose: &CameraPose) -> ProjectionMatrix {
    let mut rt = Matrix3x4::zeros();
    rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&pose.rotation());
    rt.set_column(3, &pose.translation());
    ProjectionMatrix {
        p: intr.matrix() * rt,
    }
}

pub fn project(pm: &ProjectionMatrix, j: &Joint3D) -> Result<JointImage> {
    let h = pm.p * Vector4::new(j.x, j.y, j.z, 1.0);
    let lambda = h.z;
    if !(lambda.abs() >= MIN_ABS_LAMBDA) {
        return Err(Error::DegenerateProjection { lambda });
    }
    Ok(JointImage::new(h.x / lambda, h.y / lambda, lambda))
}

/// Inverse of `project`: `[p1 p2 p3]^-1 ((u, v, lambda) - p4)`.
pub fn backproject(pm: &ProjectionMatrix, ji: &JointImage) -> Result<Joint3D> {
    let m = pm.left_block();
    let sv = m.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if !(smax > 0.0) || smin / smax < MIN_RCOND {
        return Err(Error::SingularCamera);
    }
    let lu = m.lu();
    let rhs = ji.homogeneous() - pm.column4();
    let x = lu.solve(&rhs).ok_or(Error::SingularCamera)?;
    Ok(Joint3D::from_vector(&x))
}

/// Box constraints for random viewpoints. Angles in radians, translations in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewpointLimits {
    pub max_alpha: f64,
    pub max_beta: f64,
    pub max_gamma: f64,
    pub max_tx: f64,
    pub max_ty: f64,
    pub max_tz: f64,
}

impl ViewpointLimits {
    pub fn zero() -> Self {
        Self {
            max_alpha: 0.0,
            max_beta: 0.0,
            max_gamma: 0.0,
            max_tx: 0.0,
            max_ty: 0.0,
            max_tz: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.max_alpha,
            self.max_beta,
            self.max_gamma,
            self.max_tx,
            self.max_ty,
            self.max_tz,
        ];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter(
                "viewpoint limits must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

impl Default for ViewpointLimits {
    /// 30 degrees on each angle and 0.5 m on each translation.
    fn default() -> Self {
        let a = 30f64.to_radians();
        Self {
            max_alpha: a,
            max_beta: a,
            max_gamma: a,
            max_tx: 0.5,
            max_ty: 0.5,
            max_tz: 0.5,
        }
    }
}

fn symmetric_uniform<R: Rng + ?Sized>(rng: &mut R, half_width: f64) -> f64 {
    if half_width == 0.0 {
        0.0
    } else {
        rng.random_range(-half_width..=half_width)
    }
}

/// Uniform draw inside `limits` from an existing generator.
pub fn sample_viewpoint_with<R: Rng + ?Sized>(rng: &mut R, limits: &ViewpointLimits) -> CameraPose {
    CameraPose {
        tx: symmetric_uniform(rng, limits.max_tx),
        ty: symmetric_uniform(rng, limits.max_ty),
        tz: symmetric_uniform(rng, limits.max_tz),
        alpha: symmetric_uniform(rng, limits.max_alpha),
        beta: symmetric_uniform(rng, limits.max_beta),
        gamma: symmetric_uniform(rng, limits.max_gamma),
    }
}

pub fn sample_viewpoint(rng_seed: u64, limits: &ViewpointLimits) -> Result<CameraPose> {
    limits.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    Ok(sample_viewpoint_with(&mut rng, limits))
}
