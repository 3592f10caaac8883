//! Mixture Kalman filter: a Kalman filter per indicator trajectory.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;

use super::kernel::TransitionKernel;
use super::particle::{effective_particles, normalise_log_weights, systematic_indices};
use super::{stream_rng, StreamTag, TrackerConfig, Variant};
use crate::bodymodel::{transition_conditional, SelectedObservation, TransitionParams};
use crate::error::{check_dim, Error, Result};
use crate::gaussian::{sample_categorical, Gaussian, LN_2PI};
use crate::linalg::symmetrize;

#[derive(Debug, Clone, PartialEq)]
pub struct MkfTrack {
    /// Mixture component used at the latest step.
    pub indicator: usize,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub weight: f64,
}

impl MkfTrack {
    pub fn new(indicator: usize, init: &Gaussian, weight: f64) -> Self {
        Self {
            indicator,
            mean: init.mean().clone(),
            cov: init.cov().clone(),
            weight,
        }
    }
}

/// Predicted moments under one component, built directly from the prior
/// component and `Q`:
/// `x = F m + B mu`, `P = F P Fᵀ + (Q^-1 + Sigma^-1)^-1`.
pub fn mkf_predict(track: &MkfTrack, component: &Gaussian, tp: &TransitionParams) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_dim(component.dim(), track.mean.len())?;
    // the conditional at x_prev = 0 has mean B mu
    let zero = DVector::zeros(component.dim());
    let cond = transition_conditional(component, tp, &zero)?;
    let q_inv = DMatrix::from_diagonal(&DVector::from_iterator(tp.dim(), tp.diag().iter().map(|v| 1.0 / v)));
    let f = cond.cov() * &q_inv;
    let mean = &f * &track.mean + cond.mean();
    let cov = symmetrize(&(&f * &track.cov * f.transpose() + cond.cov()));
    Ok((mean, cov))
}

pub(crate) fn predict_with_kernel(
    kernel: &TransitionKernel,
    component: usize,
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let f = kernel.f(component);
    let m = f * mean + kernel.b_mu(component);
    let fp = f * cov;
    let p = symmetrize(&(fp * f.transpose() + kernel.conditional_cov(component)));
    (m, p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanUpdate {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// `log N(z | H x, H P Hᵀ + R)` at the predicted moments.
    pub log_marginal: f64,
}

/// Kalman measurement update on the visible rows.
pub fn mkf_update(mean: &DVector<f64>, cov: &DMatrix<f64>, obs: &SelectedObservation) -> Result<KalmanUpdate> {
    check_dim(obs.state_dim, mean.len())?;
    let idx = &obs.state_indices;
    let m = idx.len();
    let d = mean.len();
    // H P as an m x d block
    let hp = DMatrix::from_fn(m, d, |r, c| cov[(idx[r], c)]);
    let mut s = DMatrix::from_fn(m, m, |r, c| hp[(r, idx[c])]);
    for k in 0..m {
        s[(k, k)] += obs.r_diag[k];
    }
    let s = symmetrize(&s);
    let chol = Cholesky::new(s).ok_or(Error::SingularInnovation)?;
    let y = DVector::from_fn(m, |r, _| obs.z[r] - mean[idx[r]]);
    let s_inv_y = chol.solve(&y);
    let s_inv_hp = chol.solve(&hp);
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    if !log_det.is_finite() {
        return Err(Error::SingularInnovation);
    }
    let new_mean = mean + hp.transpose() * &s_inv_y;
    let new_cov = symmetrize(&(cov - hp.transpose() * s_inv_hp));
    let log_marginal = -0.5 * (m as f64 * LN_2PI + log_det + y.dot(&s_inv_y));
    Ok(KalmanUpdate {
        mean: new_mean,
        cov: new_cov,
        log_marginal,
    })
}

/// Result of one mixture-Kalman iteration.
#[derive(Debug, Clone)]
pub struct MkfStep {
    pub tracks: Vec<MkfTrack>,
    /// Weighted mean of the updated track means, before any resampling.
    pub estimate: DVector<f64>,
    pub n_eff: f64,
    pub resampled: bool,
}

/// Weighted combination of track means.
pub fn mkf_point_estimate(tracks: &[MkfTrack]) -> DVector<f64> {
    let mut out = DVector::zeros(tracks[0].mean.len());
    let total: f64 = tracks.iter().map(|t| t.weight).sum();
    for t in tracks {
        if t.weight != 0.0 {
            out.axpy(t.weight / total, &t.mean, 1.0);
        }
    }
    out
}

/// Initial tracks for a variant: one per component for `mkf-fixed`,
/// `n_tracks` (default three per component) for `mkf-sampled`.
pub fn initial_tracks(variant: Variant, n_components: usize, cfg: &TrackerConfig, init: &Gaussian) -> Result<Vec<MkfTrack>> {
    let m = match variant {
        Variant::MkfFixed => n_components,
        Variant::MkfSampled => cfg.n_tracks.unwrap_or(3 * n_components),
        other => return Err(Error::InvalidParameter(format!("{other} is not a mixture Kalman filter"))),
    };
    if m == 0 {
        return Err(Error::InvalidParameter("track count must be at least 1".into()));
    }
    Ok((0..m)
        .map(|j| MkfTrack::new(if variant == Variant::MkfFixed { j } else { 0 }, init, 1.0 / m as f64))
        .collect())
}

/// One predict-update-reweight iteration over all tracks. `prior_weights`
/// are the mixture weights `pi`; `kernel` must match them.
#[allow(clippy::too_many_arguments)]
pub fn mkf_step(
    tracks: &[MkfTrack],
    prior_weights: &[f64],
    kernel: &TransitionKernel,
    obs: Option<&SelectedObservation>,
    variant: Variant,
    cfg: &TrackerConfig,
    seed: u64,
    frame: usize,
) -> Result<MkfStep> {
    if tracks.is_empty() {
        return Err(Error::InvalidParameter("no tracks".into()));
    }
    check_dim(kernel.len(), prior_weights.len())?;
    if variant == Variant::MkfFixed && tracks.len() != kernel.len() {
        return Err(Error::InvalidParameter(format!(
            "mkf-fixed needs one track per component ({} tracks, {} components)",
            tracks.len(),
            kernel.len()
        )));
    }
    let mut next = Vec::with_capacity(tracks.len());
    let mut log_w = Vec::with_capacity(tracks.len());
    for (j, t) in tracks.iter().enumerate() {
        let indicator = match variant {
            Variant::MkfFixed => j,
            Variant::MkfSampled => {
                let mut rng = stream_rng(seed, StreamTag::Track, frame as u64, j as u64);
                sample_categorical(prior_weights, &mut rng)
            }
            other => return Err(Error::InvalidParameter(format!("{other} is not a mixture Kalman filter"))),
        };
        let (pm, pc) = predict_with_kernel(kernel, indicator, &t.mean, &t.cov);
        let (mean, cov, ll) = match obs {
            Some(o) => {
                let u = mkf_update(&pm, &pc, o)?;
                (u.mean, u.cov, u.log_marginal)
            }
            None => (pm, pc, 0.0),
        };
        let mut lw = t.weight.ln() + ll;
        if variant == Variant::MkfFixed {
            lw += prior_weights[j].ln();
        }
        log_w.push(lw);
        next.push(MkfTrack {
            indicator,
            mean,
            cov,
            weight: 0.0,
        });
    }
    let mut weights = Vec::with_capacity(next.len());
    normalise_log_weights(&log_w, &mut weights)?;
    if variant == Variant::MkfFixed {
        let eps = cfg.epsilon_for(next.len());
        if eps > 0.0 {
            let total = 1.0 + eps * weights.len() as f64;
            for w in &mut weights {
                *w = (*w + eps) / total;
            }
        }
    }
    for (t, w) in next.iter_mut().zip(&weights) {
        t.weight = *w;
    }
    let estimate = mkf_point_estimate(&next);
    let n_eff = effective_particles(&weights);
    let mut resampled = false;
    if variant == Variant::MkfSampled && n_eff < cfg.resample_threshold * next.len() as f64 {
        let mut rng = stream_rng(seed, StreamTag::Resample, frame as u64, 0);
        next = resample_tracks(&next, &mut rng);
        resampled = true;
    }
    Ok(MkfStep {
        tracks: next,
        estimate,
        n_eff,
        resampled,
    })
}

fn resample_tracks<R: Rng + ?Sized>(tracks: &[MkfTrack], rng: &mut R) -> Vec<MkfTrack> {
    let weights: Vec<f64> = tracks.iter().map(|t| t.weight).collect();
    let m = tracks.len();
    systematic_indices(&weights, rng)
        .into_iter()
        .map(|i| MkfTrack {
            weight: 1.0 / m as f64,
            ..tracks[i].clone()
        })
        .collect()
}
