//! Sequential trackers for one arm chain, and the two-chain driver.

mod kernel;
mod mkf;
mod particle;

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use kernel::{KernelScratch, TransitionKernel};
pub use mkf::{initial_tracks, mkf_point_estimate, mkf_predict, mkf_step, mkf_update, KalmanUpdate, MkfStep, MkfTrack};
pub use particle::{effective_particles, pf_step, resample, systematic_indices, weighted_mean, ParticleSet, PfStep};

use crate::bodymodel::{merge_arm_estimates, ArmModel, FullBodyEstimate, Joint, MeasurementFrame, PoseState};
use crate::dataio::MeasurementSequence;
use crate::error::{Error, Result};
use crate::gaussian::Gaussian;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Particle filter proposing from the full transition mixture.
    PfGmm,
    /// Random-walk proposal, weights corrected by prior over evidence.
    PfSimpleScaled,
    /// Random-walk proposal, weights corrected by the prior only.
    PfSimpleUnscaled,
    /// Mixture Kalman filter with indicators drawn from the mixture weights.
    MkfSampled,
    /// Mixture Kalman filter with one persistent track per component.
    MkfFixed,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::PfGmm,
        Variant::PfSimpleScaled,
        Variant::PfSimpleUnscaled,
        Variant::MkfSampled,
        Variant::MkfFixed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::PfGmm => "pf-gmm",
            Variant::PfSimpleScaled => "pf-simple-scaled",
            Variant::PfSimpleUnscaled => "pf-simple-unscaled",
            Variant::MkfSampled => "mkf-sampled",
            Variant::MkfFixed => "mkf-fixed",
        }
    }

    pub fn is_particle(self) -> bool {
        matches!(self, Variant::PfGmm | Variant::PfSimpleScaled | Variant::PfSimpleUnscaled)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown tracker variant `{s}`")))
    }
}

/// Purpose of a random stream; keeps streams for different uses disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamTag {
    Init = 1,
    Particle = 2,
    Resample = 3,
    Track = 4,
    Chain = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator for one `(seed, tag, frame, index)` cell. Results
/// do not depend on the order in which cells are visited.
pub fn stream_rng(seed: u64, tag: StreamTag, frame: u64, index: u64) -> ChaCha8Rng {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ tag as u64);
    h = splitmix64(h ^ frame);
    h = splitmix64(h ^ index);
    ChaCha8Rng::seed_from_u64(h)
}

/// Linear decay of a multiplier on `Q`, from `inflation` at frame 0 to 1
/// at `burn_in`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnealingSchedule {
    pub inflation: f64,
    pub burn_in: usize,
}

impl Default for AnnealingSchedule {
    fn default() -> Self {
        Self {
            inflation: 100.0,
            burn_in: 50,
        }
    }
}

impl AnnealingSchedule {
    pub fn none() -> Self {
        Self {
            inflation: 1.0,
            burn_in: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.inflation.is_finite() && self.inflation >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "annealing inflation must be at least 1, got {}",
                self.inflation
            )));
        }
        Ok(())
    }

    pub fn factor(&self, t: usize) -> f64 {
        if t >= self.burn_in {
            1.0
        } else {
            1.0 + (self.inflation - 1.0) * (1.0 - t as f64 / self.burn_in as f64)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    pub variant: Variant,
    /// Particles per chain for the particle filters.
    pub n_particles: usize,
    /// Tracks per chain for `mkf-sampled`; `None` means three per component.
    /// `mkf-fixed` always uses one per component.
    pub n_tracks: Option<usize>,
    /// Resample when the effective count drops below this fraction.
    pub resample_threshold: f64,
    /// Uniform floor for `mkf-fixed` weights; `None` means `1e-3 / N`.
    pub epsilon_floor: Option<f64>,
    /// Applied to the particle filters only.
    pub annealing: AnnealingSchedule,
    pub rng_seed: u64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self::new(Variant::MkfFixed)
    }
}

impl TrackerConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            n_particles: 1000,
            n_tracks: None,
            resample_threshold: 0.5,
            epsilon_floor: None,
            annealing: AnnealingSchedule::default(),
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.resample_threshold > 0.0 && self.resample_threshold <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "resample_threshold must lie in (0, 1], got {}",
                self.resample_threshold
            )));
        }
        if let Some(eps) = self.epsilon_floor {
            if !(eps.is_finite() && eps >= 0.0) {
                return Err(Error::InvalidParameter(format!("epsilon_floor must be non-negative, got {eps}")));
            }
        }
        if self.variant.is_particle() && self.n_particles == 0 {
            return Err(Error::InvalidParameter("n_particles must be at least 1".into()));
        }
        if self.n_tracks == Some(0) {
            return Err(Error::InvalidParameter("n_tracks must be at least 1".into()));
        }
        self.annealing.validate()
    }

    /// Floor for `m` tracks.
    pub fn epsilon_for(&self, m: usize) -> f64 {
        self.epsilon_floor.unwrap_or(1e-3 / m as f64)
    }

    fn annealing_factor(&self, t: usize) -> f64 {
        if self.variant.is_particle() {
            self.annealing.factor(t)
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone)]
pub enum ChainState {
    Particles(ParticleSet),
    Tracks(Vec<MkfTrack>),
}

/// Per-frame output of one chain.
#[derive(Debug, Clone)]
pub struct ChainStep {
    pub estimate: PoseState,
    pub n_eff: f64,
    pub resampled: bool,
}

/// Filter state for one arm chain.
#[derive(Debug, Clone)]
pub struct ChainTracker<'a> {
    model: &'a ArmModel,
    cfg: TrackerConfig,
    seed: u64,
    state: ChainState,
    kernel: Option<(f64, TransitionKernel)>,
    t: usize,
}

impl<'a> ChainTracker<'a> {
    /// Starts from the moment-matched prior.
    pub fn new(model: &'a ArmModel, cfg: &TrackerConfig, seed: u64) -> Result<Self> {
        let init = model.prior.moment_match()?;
        Self::with_initial(model, cfg, &init, seed)
    }

    pub fn with_initial(model: &'a ArmModel, cfg: &TrackerConfig, init: &Gaussian, seed: u64) -> Result<Self> {
        cfg.validate()?;
        crate::error::check_dim(model.dim(), init.dim())?;
        let state = if cfg.variant.is_particle() {
            ChainState::Particles(ParticleSet::from_gaussian(model.layout.clone(), init, cfg.n_particles, seed)?)
        } else {
            ChainState::Tracks(initial_tracks(cfg.variant, model.prior.len(), cfg, init)?)
        };
        Ok(Self {
            model,
            cfg: cfg.clone(),
            seed,
            state,
            kernel: None,
            t: 0,
        })
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    /// Frames processed so far.
    pub fn frames(&self) -> usize {
        self.t
    }

    fn kernel(&mut self) -> Result<&TransitionKernel> {
        let factor = self.cfg.annealing_factor(self.t);
        let stale = !matches!(&self.kernel, Some((f, _)) if *f == factor);
        if stale {
            let tp = self.model.transition.inflated(factor)?;
            self.kernel = Some((factor, TransitionKernel::new(&self.model.prior, &tp)?));
        }
        Ok(&self.kernel.as_ref().expect("kernel built above").1)
    }

    /// Predicts and, when any measured joint is visible, updates.
    pub fn step(&mut self, frame: &MeasurementFrame) -> Result<ChainStep> {
        let obs = match self.model.observation.select(frame) {
            Ok(o) => Some(o),
            Err(Error::NoVisibleJoints) => None,
            Err(e) => return Err(e),
        };
        let (t, seed, variant) = (self.t, self.seed, self.cfg.variant);
        self.kernel()?;
        let kernel = &self.kernel.as_ref().expect("kernel built above").1;
        let (estimate, n_eff, resampled) = match &self.state {
            ChainState::Particles(ps) => {
                let out = pf_step(ps, &self.model.prior, kernel, obs.as_ref(), variant, &self.cfg, seed, t)?;
                self.state = ChainState::Particles(out.set);
                (out.estimate, out.n_eff, out.resampled)
            }
            ChainState::Tracks(tracks) => {
                let out = mkf_step(tracks, self.model.prior.weights(), kernel, obs.as_ref(), variant, &self.cfg, seed, t)?;
                self.state = ChainState::Tracks(out.tracks);
                (out.estimate, out.n_eff, out.resampled)
            }
        };
        self.t += 1;
        Ok(ChainStep {
            estimate: PoseState::new(self.model.layout.clone(), estimate)?,
            n_eff,
            resampled,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameDiagnostics {
    pub frame: usize,
    /// Left chain first.
    pub n_eff: [f64; 2],
    pub resampled: [bool; 2],
    /// Wall time of both chain iterations.
    pub iter_time_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrackOutput {
    pub estimates: Vec<FullBodyEstimate>,
    /// Per-chain state estimates, left then right.
    pub chain_estimates: Vec<[PoseState; 2]>,
    pub diagnostics: Vec<FrameDiagnostics>,
}

impl TrackOutput {
    pub fn mean_iter_time(&self) -> f64 {
        if self.diagnostics.is_empty() {
            return 0.0;
        }
        self.diagnostics.iter().map(|d| d.iter_time_seconds).sum::<f64>() / self.diagnostics.len() as f64
    }
}

/// Seed of one chain's streams.
pub fn chain_seed(seed: u64, chain: u64) -> u64 {
    splitmix64(splitmix64(seed ^ StreamTag::Chain as u64) ^ chain)
}

/// Runs the left and right chains over every frame and merges them.
pub fn track_sequence(
    seq: &MeasurementSequence,
    left: &ArmModel,
    right: &ArmModel,
    cfg: &TrackerConfig,
) -> Result<TrackOutput> {
    track_sequence_corrected(seq, left, right, cfg, |_, _, _| Ok(()))
}

/// Same as [`track_sequence`], but `correct` may edit each frame before it
/// is filtered. It receives the frame index, a copy of the frame and the
/// previous merged estimate (none on the first frame).
pub fn track_sequence_corrected<F>(
    seq: &MeasurementSequence,
    left: &ArmModel,
    right: &ArmModel,
    cfg: &TrackerConfig,
    mut correct: F,
) -> Result<TrackOutput>
where
    F: FnMut(usize, &mut MeasurementFrame, Option<&FullBodyEstimate>) -> Result<()>,
{
    if seq.frames.is_empty() {
        return Err(Error::InsufficientData("measurement sequence has no frames".into()));
    }
    let mut chains = [
        ChainTracker::new(left, cfg, chain_seed(cfg.rng_seed, 0))?,
        ChainTracker::new(right, cfg, chain_seed(cfg.rng_seed, 1))?,
    ];
    let mut out = TrackOutput {
        estimates: Vec::with_capacity(seq.frames.len()),
        chain_estimates: Vec::with_capacity(seq.frames.len()),
        diagnostics: Vec::with_capacity(seq.frames.len()),
    };
    for (t, frame) in seq.frames.iter().enumerate() {
        let mut frame = frame.clone();
        correct(t, &mut frame, out.estimates.last()).map_err(|e| e.at_frame(t))?;
        let frame = &frame;
        let start = Instant::now();
        let l = chains[0].step(frame).map_err(|e| e.at_frame(t))?;
        let r = chains[1].step(frame).map_err(|e| e.at_frame(t))?;
        let elapsed = start.elapsed().as_secs_f64();
        out.estimates.push(merge_arm_estimates(&l.estimate, &r.estimate).map_err(|e| e.at_frame(t))?);
        out.diagnostics.push(FrameDiagnostics {
            frame: frame.t,
            n_eff: [l.n_eff, r.n_eff],
            resampled: [l.resampled, r.resampled],
            iter_time_seconds: elapsed,
        });
        out.chain_estimates.push([l.estimate, r.estimate]);
    }
    Ok(out)
}

/// Writes `frame, <joint>_u, <joint>_v, <joint>_lambda..., n_eff_left,
/// n_eff_right, resampled_left, resampled_right, iter_time_seconds`, with
/// `u`, `v` in pixels.
pub fn write_diagnostics_csv<W: Write>(out: &TrackOutput, w: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    let mut header = vec!["frame".to_string()];
    for j in Joint::ALL {
        for suffix in ["u", "v", "lambda"] {
            header.push(format!("{}_{suffix}", j.name()));
        }
    }
    for h in ["n_eff_left", "n_eff_right", "resampled_left", "resampled_right", "iter_time_seconds"] {
        header.push(h.to_string());
    }
    csv.write_record(&header).map_err(csv_err)?;
    for (est, d) in out.estimates.iter().zip(&out.diagnostics) {
        let mut row = vec![d.frame.to_string()];
        for j in Joint::ALL {
            let ji = est.get(j);
            row.extend([ji.u_over_lambda.to_string(), ji.v_over_lambda.to_string(), ji.lambda.to_string()]);
        }
        row.extend([
            d.n_eff[0].to_string(),
            d.n_eff[1].to_string(),
            (d.resampled[0] as u8).to_string(),
            (d.resampled[1] as u8).to_string(),
            d.iter_time_seconds.to_string(),
        ]);
        csv.write_record(&row).map_err(csv_err)?;
    }
    csv.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidParameter(format!("csv: {other:?}")),
    }
}

/// State vector of the merged estimate for a chain layout; useful for
/// comparing against per-chain ground truth.
pub fn chain_vector(est: &FullBodyEstimate, layout: &crate::bodymodel::StateLayout) -> DVector<f64> {
    let mut v = DVector::zeros(layout.dim());
    for (i, j) in layout.joints.iter().enumerate() {
        let ji = est.get(*j);
        v[3 * i] = ji.u_over_lambda;
        v[3 * i + 1] = ji.v_over_lambda;
        v[3 * i + 2] = ji.lambda;
    }
    v
}
