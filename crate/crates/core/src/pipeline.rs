//! End-to-end helpers shared by the command-line tool and the test suites:
//! prior training from skeletons, model assembly and ground-truth projection.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bodymodel::{generate_training_set, ArmModel, FullBodyEstimate, Joint, NoiseConfig, Side, StateLayout};
use crate::dataio::{PriorFile, SkeletonRecording};
use crate::error::{check_dim, Error, Result};
use crate::gaussian::{em_fit, EmConfig, EmFit, Gaussian, GaussianMixture};
use crate::geometry::{project, CameraIntrinsics, JointImage, ProjectionMatrix, ViewpointLimits};

#[derive(Debug, Clone, PartialEq)]
pub struct PriorTraining {
    pub n_views: usize,
    pub limits: ViewpointLimits,
    pub em: EmConfig,
    /// Fraction of the training-data variance along each coordinate added
    /// to every fitted component covariance. Widens components that are
    /// nearly flat along bone-length constraints.
    pub smoothing: f64,
    pub seed: u64,
}

impl Default for PriorTraining {
    fn default() -> Self {
        Self {
            n_views: 50,
            limits: ViewpointLimits::default(),
            em: EmConfig {
                reg_covar: 1e-6,
                ..EmConfig::default()
            },
            smoothing: 0.0,
            seed: 0,
        }
    }
}

/// A fitted prior for one arm chain with its fit log.
#[derive(Debug, Clone)]
pub struct TrainedPrior {
    pub prior: PriorFile,
    pub fit: EmFit,
}

/// Fit log in a serialisable form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub side: Side,
    pub samples: usize,
    pub components: usize,
    pub iterations: usize,
    pub converged: bool,
    pub final_log_likelihood: f64,
    pub reinitialised: usize,
}

impl TrainedPrior {
    pub fn log(&self, samples: usize) -> TrainingLog {
        TrainingLog {
            side: self.prior.layout.side,
            samples,
            components: self.fit.mixture.len(),
            iterations: self.fit.iterations,
            converged: self.fit.converged,
            final_log_likelihood: self.fit.final_log_likelihood(),
            reinitialised: self.fit.reinitialised.len(),
        }
    }
}

/// Projects the recording through random viewpoints and fits one mixture
/// per arm chain. Left comes first.
pub fn train_arm_priors(rec: &SkeletonRecording, intr: &CameraIntrinsics, cfg: &PriorTraining) -> Result<[TrainedPrior; 2]> {
    let training = generate_training_set(rec, intr, cfg.n_views, &cfg.limits, cfg.seed)?;
    if !(cfg.smoothing.is_finite() && cfg.smoothing >= 0.0) {
        return Err(Error::InvalidParameter("smoothing must be non-negative".into()));
    }
    let fit_side = |side: Side| -> Result<TrainedPrior> {
        let data = training.vectors(side);
        let fit = em_fit(&data, &cfg.em)?;
        let mixture = smooth_mixture(&fit.mixture, &data, cfg.smoothing)?;
        Ok(TrainedPrior {
            prior: PriorFile::new(StateLayout::arm(side), mixture)?,
            fit,
        })
    };
    Ok([fit_side(Side::Left)?, fit_side(Side::Right)?])
}

fn smooth_mixture(m: &GaussianMixture, data: &[DVector<f64>], fraction: f64) -> Result<GaussianMixture> {
    if fraction == 0.0 {
        return Ok(m.clone());
    }
    let n = data.len() as f64;
    let mean = data.iter().sum::<DVector<f64>>() / n;
    let var = data.iter().fold(DVector::zeros(m.dim()), |acc, x| acc + (x - &mean).map(|v| v * v)) / n;
    let add = DMatrix::from_diagonal(&(var * fraction));
    let comps = m
        .components()
        .iter()
        .map(|g| Gaussian::new(g.mean().clone(), g.cov() + &add))
        .collect::<Result<Vec<_>>>()?;
    GaussianMixture::new(m.weights().to_vec(), comps)
}

/// Left and right chain models from their priors.
pub fn arm_models(left: &PriorFile, right: &PriorFile, noise: &NoiseConfig) -> Result<(ArmModel, ArmModel)> {
    if left.layout.side != Side::Left || right.layout.side != Side::Right {
        return Err(Error::InvalidParameter("prior files must be given as left then right".into()));
    }
    check_dim(left.layout.dim(), left.mixture.dim())?;
    check_dim(right.layout.dim(), right.mixture.dim())?;
    Ok((
        noise.arm_model(left.layout.clone(), left.mixture.clone())?,
        noise.arm_model(right.layout.clone(), right.mixture.clone())?,
    ))
}

/// Exact image-plane positions of every joint of every frame.
pub fn project_recording(rec: &SkeletonRecording, pm: &ProjectionMatrix) -> Result<Vec<FullBodyEstimate>> {
    rec.frames
        .iter()
        .enumerate()
        .map(|(f, joints)| {
            let mut out = [JointImage::new(0.0, 0.0, 0.0); Joint::COUNT];
            for j in Joint::ALL {
                out[j.index()] = project(pm, &joints[j.index()]).map_err(|e| e.at_frame(f))?;
            }
            Ok(FullBodyEstimate { joints: out })
        })
        .collect()
}
