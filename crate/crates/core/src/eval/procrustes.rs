//! Rigid (unit-scale) least-squares alignment of paired 3D points.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentResult {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl AlignmentResult {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Root-mean-square distance between aligned `source` and `target`.
    pub fn residual_rms(&self, source: &[Vector3<f64>], target: &[Vector3<f64>]) -> f64 {
        let ss: f64 = source
            .iter()
            .zip(target)
            .map(|(s, t)| (self.apply(s) - t).norm_squared())
            .sum();
        (ss / source.len() as f64).sqrt()
    }
}

fn centroid(points: &[Vector3<f64>]) -> Vector3<f64> {
    points.iter().sum::<Vector3<f64>>() / points.len() as f64
}

/// True when the points span less than a plane.
fn is_degenerate(points: &[Vector3<f64>], c: &Vector3<f64>) -> bool {
    let scatter: Matrix3<f64> = points.iter().map(|p| (p - c) * (p - c).transpose()).sum();
    let mut ev: Vec<f64> = scatter.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev[0] <= 0.0 || ev[1] <= 1e-12 * ev[0]
}

/// Rotation `R` and translation `t` minimising `sum |R s_i + t - t_i|^2`
/// with `det R = +1`.
pub fn procrustes_fixed_scale(source: &[Vector3<f64>], target: &[Vector3<f64>]) -> Result<AlignmentResult> {
    if source.len() != target.len() {
        return Err(Error::LengthMismatch {
            left: source.len(),
            right: target.len(),
        });
    }
    if source.len() < 3 {
        return Err(Error::DegenerateConfiguration);
    }
    let cs = centroid(source);
    let ct = centroid(target);
    if is_degenerate(source, &cs) || is_degenerate(target, &ct) {
        return Err(Error::DegenerateConfiguration);
    }
    let h: Matrix3<f64> = source
        .iter()
        .zip(target)
        .map(|(s, t)| (s - cs) * (t - ct).transpose())
        .sum();
    let svd = h.svd(true, true);
    let u = svd.u.ok_or(Error::DegenerateConfiguration)?;
    let v = svd.v_t.ok_or(Error::DegenerateConfiguration)?.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let fix = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d));
    let rotation = v * fix * u.transpose();
    let translation = ct - rotation * cs;
    Ok(AlignmentResult { rotation, translation })
}
