//! Sampling importance resampling with three proposal/weighting schemes.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::kernel::{KernelScratch, TransitionKernel};
use super::{stream_rng, StreamTag, TrackerConfig, Variant};
use crate::bodymodel::{SelectedObservation, StateLayout};
use crate::error::{Error, Result};
use crate::gaussian::{Gaussian, GaussianMixture};
use crate::linalg::normalize_log_weights;

/// Weighted particles for one chain. Weights are normalised.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    pub layout: StateLayout,
    pub particles: Vec<DVector<f64>>,
    pub weights: Vec<f64>,
}

impl ParticleSet {
    pub fn new(layout: StateLayout, particles: Vec<DVector<f64>>, weights: Vec<f64>) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::InvalidParameter("particle set is empty".into()));
        }
        if particles.len() != weights.len() {
            return Err(Error::LengthMismatch {
                left: particles.len(),
                right: weights.len(),
            });
        }
        let d = layout.dim();
        if let Some(p) = particles.iter().find(|p| p.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: p.len(),
            });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidParameter("particle weights must be non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("particle weights sum to {total}, not 1")));
        }
        Ok(Self {
            layout,
            particles,
            weights,
        })
    }

    /// Equally weighted draws from `init`.
    pub fn from_gaussian(layout: StateLayout, init: &Gaussian, n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("particle count must be at least 1".into()));
        }
        let particles = (0..n)
            .map(|k| init.sample(&mut stream_rng(seed, StreamTag::Init, 0, k as u64)))
            .collect();
        Self::new(layout, particles, vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn mean(&self) -> DVector<f64> {
        weighted_mean(&self.particles, &self.weights)
    }
}

/// `sum_k w_k x_k / sum_k w_k`; any positive rescaling of the weights gives the same result.
pub fn weighted_mean(xs: &[DVector<f64>], weights: &[f64]) -> DVector<f64> {
    let mut out = DVector::zeros(xs[0].len());
    let total: f64 = weights.iter().sum();
    for (x, w) in xs.iter().zip(weights) {
        if *w != 0.0 {
            out.axpy(*w / total, x, 1.0);
        }
    }
    out
}

/// `1 / sum w_k^2` for normalised weights.
pub fn effective_particles(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Source indices chosen by systematic resampling.
pub fn systematic_indices<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Vec<usize> {
    let n = weights.len();
    let step = 1.0 / n as f64;
    let mut u = rng.random::<f64>() * step;
    let mut out = Vec::with_capacity(n);
    let mut acc = weights[0];
    let mut i = 0;
    for _ in 0..n {
        while u >= acc && i + 1 < n {
            i += 1;
            acc += weights[i];
        }
        out.push(i);
        u += step;
    }
    out
}

/// Systematic resampling to equal weights.
pub fn resample(ps: &ParticleSet, rng_seed: u64) -> ParticleSet {
    let mut rng = stream_rng(rng_seed, StreamTag::Resample, 0, 0);
    resample_with(ps, &mut rng)
}

fn resample_with<R: Rng + ?Sized>(ps: &ParticleSet, rng: &mut R) -> ParticleSet {
    let idx = systematic_indices(&ps.weights, rng);
    let n = idx.len();
    ParticleSet {
        layout: ps.layout.clone(),
        particles: idx.iter().map(|&i| ps.particles[i].clone()).collect(),
        weights: vec![1.0 / n as f64; n],
    }
}

/// Result of one particle-filter iteration.
#[derive(Debug, Clone)]
pub struct PfStep {
    pub set: ParticleSet,
    /// Weighted mean before any resampling.
    pub estimate: DVector<f64>,
    pub n_eff: f64,
    pub resampled: bool,
}

/// Normalises log-weights into `out`, or fails when all are zero.
pub(crate) fn normalise_log_weights(log_w: &[f64], out: &mut Vec<f64>) -> Result<()> {
    normalize_log_weights(log_w, out).map(|_| ()).ok_or(Error::AllWeightsZero)
}

/// One predict-weight-(maybe)resample iteration.
///
/// `kernel` must be built from `prior` and the (possibly inflated) `Q` of
/// this frame. `obs` is `None` when nothing is visible, in which case only
/// the proposal correction enters the weights.
#[allow(clippy::too_many_arguments)]
pub fn pf_step(
    ps: &ParticleSet,
    prior: &GaussianMixture,
    kernel: &TransitionKernel,
    obs: Option<&SelectedObservation>,
    variant: Variant,
    cfg: &TrackerConfig,
    seed: u64,
    frame: usize,
) -> Result<PfStep> {
    if !variant.is_particle() {
        return Err(Error::InvalidParameter(format!("{variant} is not a particle filter")));
    }
    let d = ps.layout.dim();
    let n = ps.len();
    let q_std: Vec<f64> = kernel.q_diag().iter().map(|v| v.sqrt()).collect();
    let mut scratch = KernelScratch::new(d, kernel.len());
    let mut vec_scratch = DVector::zeros(d);
    let mut particles = Vec::with_capacity(n);
    let mut log_w = Vec::with_capacity(n);

    for (k, (x_prev, w_prev)) in ps.particles.iter().zip(&ps.weights).enumerate() {
        let mut rng = stream_rng(seed, StreamTag::Particle, frame as u64, k as u64);
        let (x, mut lw) = match variant {
            Variant::PfGmm => (kernel.sample(x_prev, &mut rng, &mut scratch), 0.0),
            _ => {
                let mut x = x_prev.clone();
                for (xi, s) in x.iter_mut().zip(&q_std) {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *xi += s * z;
                }
                let mut lw = prior.logpdf_scratch(&x, &mut vec_scratch);
                if variant == Variant::PfSimpleScaled {
                    lw -= kernel.log_evidence(x_prev, &mut scratch);
                }
                (x, lw)
            }
        };
        if let Some(o) = obs {
            lw += o.logpdf(&x);
        }
        lw += w_prev.ln();
        particles.push(x);
        log_w.push(lw);
    }

    let mut weights = Vec::with_capacity(n);
    normalise_log_weights(&log_w, &mut weights)?;
    let estimate = weighted_mean(&particles, &weights);
    let n_eff = effective_particles(&weights);
    let mut set = ParticleSet {
        layout: ps.layout.clone(),
        particles,
        weights,
    };
    let resampled = n_eff < cfg.resample_threshold * n as f64;
    if resampled {
        let mut rng = stream_rng(seed, StreamTag::Resample, frame as u64, 0);
        set = resample_with(&set, &mut rng);
    }
    Ok(PfStep {
        set,
        estimate,
        n_eff,
        resampled,
    })
}
