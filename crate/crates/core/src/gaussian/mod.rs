//! Multivariate Gaussians and Gaussian mixtures.
//!
//! Densities are evaluated in log space through Cholesky factors. The
//! factor is computed once when a [`Gaussian`] is built, which is also
//! where the SPD invariant is enforced.

mod em;

pub use em::{em_fit, responsibilities, EmConfig, EmFit};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, cholesky, is_symmetric, log_det, logsumexp, SYMMETRY_TOL};

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    /// Lower Cholesky factor of `cov` (upper triangle zeroed).
    chol: DMatrix<f64>,
    packed: linalg::PackedLower,
    /// `-0.5 * (d ln 2pi + ln |cov|)`
    log_norm: f64,
}

impl Gaussian {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        check_dim(mean.len(), cov.nrows())?;
        check_dim(mean.len(), cov.ncols())?;
        if mean.is_empty() {
            return Err(Error::InvalidParameter("Gaussian of dimension zero".into()));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("Gaussian mean is not finite".into()));
        }
        if !is_symmetric(&cov, SYMMETRY_TOL) {
            return Err(Error::SingularCovariance);
        }
        let cov = linalg::symmetrize(&cov);
        let factor = cholesky(&cov)?;
        let log_norm = -0.5 * (mean.len() as f64 * LN_2PI + log_det(&factor));
        let chol = factor.l();
        Ok(Self {
            mean,
            cov,
            packed: linalg::PackedLower::from_lower(&chol),
            chol,
            log_norm,
        })
    }

    pub fn isotropic(mean: DVector<f64>, variance: f64) -> Result<Self> {
        let d = mean.len();
        Self::new(mean, DMatrix::identity(d, d) * variance)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn chol_lower(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// Normalising constant of the log-density at the mean.
    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    pub fn precision(&self) -> DMatrix<f64> {
        let l_inv = self
            .chol
            .clone()
            .solve_lower_triangular(&DMatrix::identity(self.dim(), self.dim()))
            .expect("cholesky factor has a positive diagonal");
        linalg::symmetrize(&(l_inv.transpose() * l_inv))
    }

    pub fn logpdf(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(self.logpdf_unchecked(x))
    }

    pub fn pdf(&self, x: &DVector<f64>) -> Result<f64> {
        self.logpdf(x).map(f64::exp)
    }

    pub(crate) fn logpdf_unchecked(&self, x: &DVector<f64>) -> f64 {
        let mut d = x - &self.mean;
        self.log_norm - 0.5 * self.packed.mahalanobis_sq(d.as_mut_slice())
    }

    /// Same as `logpdf_unchecked` but reuses `scratch` to avoid allocating.
    pub(crate) fn logpdf_scratch(&self, x: &DVector<f64>, scratch: &mut DVector<f64>) -> f64 {
        scratch.copy_from(x);
        *scratch -= &self.mean;
        self.log_norm - 0.5 * self.packed.mahalanobis_sq(scratch.as_mut_slice())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let xi = DVector::from_fn(self.dim(), |_, _| StandardNormal.sample(rng));
        &self.mean + &self.chol * xi
    }
}

/// Log-density of `g` at `x`.
pub fn gauss_logpdf(g: &Gaussian, x: &DVector<f64>) -> Result<f64> {
    g.logpdf(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    components: Vec<Gaussian>,
}

pub(crate) const WEIGHT_SUM_TOL: f64 = 1e-12;

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, components: Vec<Gaussian>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidParameter("mixture needs at least one component".into()));
        }
        check_dim(components.len(), weights.len())?;
        let d = components[0].dim();
        for c in &components {
            check_dim(d, c.dim())?;
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParameter("mixture weights must be non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidParameter(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        Ok(Self {
            log_weights: weights.iter().map(|w| w.ln()).collect(),
            weights,
            components,
        })
    }

    /// Like `new`, but rescales the weights to sum to one first.
    pub fn normalized(weights: Vec<f64>, components: Vec<Gaussian>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidParameter("mixture weights sum to zero".into()));
        }
        Self::new(weights.iter().map(|w| w / total).collect(), components)
    }

    pub fn single(g: Gaussian) -> Self {
        Self {
            weights: vec![1.0],
            log_weights: vec![0.0],
            components: vec![g],
        }
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[Gaussian] {
        &self.components
    }

    pub fn logpdf(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let mut scratch = DVector::zeros(self.dim());
        Ok(self.logpdf_scratch(x, &mut scratch))
    }

    pub(crate) fn logpdf_scratch(&self, x: &DVector<f64>, scratch: &mut DVector<f64>) -> f64 {
        // Running logsumexp, no allocation.
        let mut max = f64::NEG_INFINITY;
        let mut acc = 0.0;
        for (lw, g) in self.log_weights.iter().zip(&self.components) {
            if *lw == f64::NEG_INFINITY {
                continue;
            }
            let lp = lw + g.logpdf_scratch(x, scratch);
            if lp > max {
                acc = acc * (max - lp).exp() + 1.0;
                max = lp;
            } else {
                acc += (lp - max).exp();
            }
        }
        if max == f64::NEG_INFINITY {
            max
        } else {
            max + acc.ln()
        }
    }

    pub fn pdf(&self, x: &DVector<f64>) -> Result<f64> {
        self.logpdf(x).map(f64::exp)
    }

    /// Categorical draw on the mixture weights.
    pub fn sample_component<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_categorical(&self.weights, rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let k = self.sample_component(rng);
        self.components[k].sample(rng)
    }

    /// Single Gaussian with the mixture's mean and covariance.
    pub fn moment_match(&self) -> Result<Gaussian> {
        let d = self.dim();
        let mut mean = DVector::zeros(d);
        for (w, g) in self.weights.iter().zip(&self.components) {
            mean += g.mean() * *w;
        }
        let mut cov = DMatrix::zeros(d, d);
        for (w, g) in self.weights.iter().zip(&self.components) {
            let dm = g.mean() - &mean;
            cov += (g.cov() + &dm * dm.transpose()) * *w;
        }
        Gaussian::new(mean, linalg::symmetrize(&cov))
    }
}

pub fn gmm_pdf(m: &GaussianMixture, x: &DVector<f64>) -> Result<f64> {
    m.pdf(x)
}

/// Draws `n` points; the component is picked first, then the Gaussian.
pub fn gmm_sample(m: &GaussianMixture, n: usize, rng_seed: u64) -> Result<Vec<DVector<f64>>> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    Ok((0..n).map(|_| m.sample_with(&mut rng)).collect())
}

/// Index drawn with probability proportional to `weights` (assumed normalised).
pub(crate) fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap above the cumulative sum
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(weights.len() - 1)
}

/// `N(x | a, A) N(x | b, B) = scale * N(x | product)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianProduct {
    pub log_scale: f64,
    pub product: Gaussian,
}

impl GaussianProduct {
    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }
}

/// Product of the random-walk density `N(x | x_prev, q)` with a prior component.
///
/// * scale `c = N(x_prev | mu, q + sigma)`
/// * `sigma_c = (q^-1 + sigma^-1)^-1`
/// * `mu_c = sigma_c (q^-1 x_prev + sigma^-1 mu)`
pub fn gaussian_product(
    g_prior: &Gaussian,
    x_prev: &DVector<f64>,
    q: &DMatrix<f64>,
) -> Result<GaussianProduct> {
    let d = g_prior.dim();
    check_dim(d, x_prev.len())?;
    check_dim(d, q.nrows())?;
    let q_inv = linalg::spd_inverse(q)?;
    let s_inv = g_prior.precision();
    let sigma_c = linalg::spd_inverse(&(&q_inv + &s_inv))?;
    let mu_c = &sigma_c * (&q_inv * x_prev + &s_inv * g_prior.mean());
    let evidence = Gaussian::new(g_prior.mean().clone(), g_prior.cov() + q)?;
    Ok(GaussianProduct {
        log_scale: evidence.logpdf_unchecked(x_prev),
        product: Gaussian::new(mu_c, sigma_c)?,
    })
}

/// Log of `sum_i exp(values_i)` for callers outside the crate.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    logsumexp(values)
}
