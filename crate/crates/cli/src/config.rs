//! Experiment configuration: a TOML file layered over the built-in
//! defaults, then `--set section.key=value` overrides on top.
//!
//! Angles are given in degrees here and converted to radians on the way
//! into the library.

use std::path::Path;

use posetrack::association::{CorruptionModel, EdgeSupportParams, EdgeSynthParams};
use posetrack::bodymodel::{Joint, NoiseConfig};
use posetrack::dataio::{Camera, MotionSpec};
use posetrack::eval::default_pcp_thresholds;
use posetrack::gaussian::EmConfig;
use posetrack::geometry::{CameraIntrinsics, CameraPose, ViewpointLimits};
use posetrack::pipeline::PriorTraining;
use posetrack::trackers::TrackerConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub camera: CameraSection,
    pub synth: MotionSpec,
    pub training: TrainingSection,
    pub noise: NoiseConfig,
    pub tracker: TrackerConfig,
    pub corruption: CorruptionModel,
    pub edges: EdgeSection,
    pub edge_synth: EdgeSynthSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSection {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
    pub alpha_deg: f64,
    pub beta_deg: f64,
    pub gamma_deg: f64,
}

impl Default for CameraSection {
    fn default() -> Self {
        let i = CameraIntrinsics::default();
        let p = CameraPose::default();
        Self {
            fx: i.fx,
            fy: i.fy,
            cx: i.cx,
            cy: i.cy,
            tx: p.tx,
            ty: p.ty,
            tz: p.tz,
            alpha_deg: p.alpha.to_degrees(),
            beta_deg: p.beta.to_degrees(),
            gamma_deg: p.gamma.to_degrees(),
        }
    }
}

impl CameraSection {
    pub fn camera(&self) -> CliResult<Camera> {
        let intrinsics = CameraIntrinsics::new(self.fx, self.fy, self.cx, self.cy)?;
        Ok(Camera {
            intrinsics,
            pose: CameraPose {
                tx: self.tx,
                ty: self.ty,
                tz: self.tz,
                alpha: self.alpha_deg.to_radians(),
                beta: self.beta_deg.to_radians(),
                gamma: self.gamma_deg.to_radians(),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub n_views: usize,
    pub k: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub reg_covar: f64,
    pub smoothing: f64,
    /// Seeds the viewpoints.
    pub seed: u64,
    /// Seeds the EM initialisation.
    pub em_seed: u64,
    pub max_alpha_deg: f64,
    pub max_beta_deg: f64,
    pub max_gamma_deg: f64,
    pub max_tx: f64,
    pub max_ty: f64,
    pub max_tz: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = PriorTraining::default();
        Self {
            n_views: t.n_views,
            k: t.em.k,
            max_iters: t.em.max_iters,
            tol: t.em.tol,
            reg_covar: t.em.reg_covar,
            smoothing: t.smoothing,
            seed: t.seed,
            em_seed: t.em.init_seed,
            max_alpha_deg: t.limits.max_alpha.to_degrees(),
            max_beta_deg: t.limits.max_beta.to_degrees(),
            max_gamma_deg: t.limits.max_gamma.to_degrees(),
            max_tx: t.limits.max_tx,
            max_ty: t.limits.max_ty,
            max_tz: t.limits.max_tz,
        }
    }
}

impl TrainingSection {
    pub fn training(&self) -> PriorTraining {
        PriorTraining {
            n_views: self.n_views,
            limits: ViewpointLimits {
                max_alpha: self.max_alpha_deg.to_radians(),
                max_beta: self.max_beta_deg.to_radians(),
                max_gamma: self.max_gamma_deg.to_radians(),
                max_tx: self.max_tx,
                max_ty: self.max_ty,
                max_tz: self.max_tz,
            },
            em: EmConfig {
                k: self.k,
                init_seed: self.em_seed,
                max_iters: self.max_iters,
                tol: self.tol,
                reg_covar: self.reg_covar,
            },
            smoothing: self.smoothing,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdgeSection {
    pub sigma_theta_deg: f64,
    pub sigma_x_px: f64,
    pub sigma_y_px: f64,
    /// Extra supporting edges a swap must gain.
    pub margin: usize,
}

impl Default for EdgeSection {
    fn default() -> Self {
        let p = EdgeSupportParams::default();
        Self {
            sigma_theta_deg: p.sigma_theta.to_degrees(),
            sigma_x_px: p.sigma_x,
            sigma_y_px: p.sigma_y,
            margin: 2,
        }
    }
}

impl EdgeSection {
    pub fn params(&self) -> CliResult<EdgeSupportParams> {
        Ok(EdgeSupportParams::new(self.sigma_theta_deg.to_radians(), self.sigma_x_px, self.sigma_y_px)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdgeSynthSection {
    pub per_limb: usize,
    pub span: f64,
    pub position_noise_px: f64,
    pub orientation_noise_deg: f64,
    pub clutter: usize,
    pub width: f64,
    pub height: f64,
}

impl Default for EdgeSynthSection {
    fn default() -> Self {
        let p = EdgeSynthParams::default();
        Self {
            per_limb: p.per_limb,
            span: p.span,
            position_noise_px: p.position_noise_px,
            orientation_noise_deg: p.orientation_noise.to_degrees(),
            clutter: p.clutter,
            width: p.width,
            height: p.height,
        }
    }
}

impl EdgeSynthSection {
    pub fn params(&self) -> EdgeSynthParams {
        EdgeSynthParams {
            per_limb: self.per_limb,
            span: self.span,
            position_noise_px: self.position_noise_px,
            orientation_noise: self.orientation_noise_deg.to_radians(),
            clutter: self.clutter,
            width: self.width,
            height: self.height,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Fractions of the true limb length.
    pub pcp_thresholds: Vec<f64>,
    /// Joints used for the rigid alignment before 3D errors.
    pub align_joints: Vec<Joint>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            pcp_thresholds: default_pcp_thresholds(),
            align_joints: posetrack::eval::DEFAULT_ALIGN_JOINTS.to_vec(),
        }
    }
}

impl Config {
    /// Defaults, then the file if given, then each `key=value` override.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> CliResult<Self> {
        let mut doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Io {
                    path: p.to_path_buf(),
                    source: e,
                })?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        Config::deserialize(doc).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Head, optionally neck, and both hands.
    pub fn measured_subset(&self) -> Vec<Joint> {
        let mut joints = vec![Joint::Head];
        if self.noise.measure_neck {
            joints.push(Joint::Neck);
        }
        joints.extend([Joint::LeftHand, Joint::RightHand]);
        joints
    }
}

/// `a.b.c=value`; the value is read as a TOML literal, or as a bare string
/// when it does not parse as one.
fn apply_override(doc: &mut toml::Table, spec: &str) -> CliResult<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{spec}` is not of the form key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("override key `{key}` is malformed")));
    }
    let value = parse_value(raw.trim());
    let (last, parents) = path.split_last().expect("split yields at least one part");
    let mut table = doc;
    for p in parents {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override `{key}`: `{p}` is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
