//! Prior-modulated random-walk transition.
//!
//! The random walk `N(x | x_prev, Q)` is multiplied by the pose prior and
//! renormalised, which gives a mixture whose component `i` has weight
//! proportional to `pi_i c_i(x_prev)` and mean pulled from `x_prev` toward
//! `mu_i`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::StateLayout;
use crate::error::{check_dim, Error, Result};
use crate::gaussian::{gaussian_product, Gaussian, GaussianMixture};
use crate::linalg::{self, logsumexp};

/// Diagonal random-walk covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionParams {
    diag: Vec<f64>,
}

impl TransitionParams {
    pub fn new(diag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || diag.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidParameter(
                "transition covariance needs positive finite diagonal entries".into(),
            ));
        }
        Ok(Self { diag })
    }

    /// `pixel_std^2` on image coordinates and `lambda_std^2` on scale entries.
    pub fn for_layout(layout: &StateLayout, pixel_std: f64, lambda_std: f64) -> Result<Self> {
        let diag = (0..layout.dim())
            .map(|i| if i % 3 == 2 { lambda_std * lambda_std } else { pixel_std * pixel_std })
            .collect();
        Self::new(diag)
    }

    pub fn isotropic(dim: usize, variance: f64) -> Result<Self> {
        Self::new(vec![variance; dim])
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn q(&self) -> DMatrix<f64> {
        linalg::diag_matrix(&self.diag)
    }

    /// Every diagonal entry multiplied by `factor`.
    pub fn inflated(&self, factor: f64) -> Result<Self> {
        Self::new(self.diag.iter().map(|v| v * factor).collect())
    }
}

/// `log sum_i pi_i c_i(x_prev)`, the normaliser of the transition density.
pub fn transition_log_evidence(
    prior: &GaussianMixture,
    tp: &TransitionParams,
    x_prev: &DVector<f64>,
) -> Result<f64> {
    check_dim(prior.dim(), tp.dim())?;
    let q = tp.q();
    let mut terms = Vec::with_capacity(prior.len());
    for (w, g) in prior.weights().iter().zip(prior.components()) {
        let p = gaussian_product(g, x_prev, &q)?;
        terms.push(w.ln() + p.log_scale);
    }
    Ok(logsumexp(&terms))
}

/// Log-density of the normalised transition `p(x | x_prev)`.
pub fn transition_logpdf(
    prior: &GaussianMixture,
    tp: &TransitionParams,
    x_prev: &DVector<f64>,
    x: &DVector<f64>,
) -> Result<f64> {
    check_dim(prior.dim(), tp.dim())?;
    check_dim(prior.dim(), x_prev.len())?;
    check_dim(prior.dim(), x.len())?;
    let q = tp.q();
    let mut numer = Vec::with_capacity(prior.len());
    let mut denom = Vec::with_capacity(prior.len());
    for (w, g) in prior.weights().iter().zip(prior.components()) {
        let p = gaussian_product(g, x_prev, &q)?;
        let lw = w.ln() + p.log_scale;
        denom.push(lw);
        numer.push(lw + p.product.logpdf(x)?);
    }
    Ok(logsumexp(&numer) - logsumexp(&denom))
}

/// Transition conditioned on one prior component:
/// `N(x | (S^-1 + Q^-1)^-1 (S^-1 mu + Q^-1 x_prev), (S^-1 + Q^-1)^-1)`.
pub fn transition_conditional(
    prior_component: &Gaussian,
    tp: &TransitionParams,
    x_prev: &DVector<f64>,
) -> Result<Gaussian> {
    check_dim(prior_component.dim(), tp.dim())?;
    check_dim(prior_component.dim(), x_prev.len())?;
    let q_inv = DMatrix::from_diagonal(&DVector::from_iterator(tp.dim(), tp.diag().iter().map(|v| 1.0 / v)));
    let s_inv = prior_component.precision();
    let cov = linalg::spd_inverse(&(&s_inv + &q_inv))?;
    let mean = &cov * (&s_inv * prior_component.mean() + &q_inv * x_prev);
    Gaussian::new(mean, cov)
}
